from __future__ import annotations

import math

import pytest
import torch
import torch.nn.functional as F

from cbreason.encoder import LossWeights, clip_loss, concept_loss, diag_loss, info_nce, total_loss

from .gradient_oracle import check_gradients


def rand_instance(rng: torch.Generator, b_max: int = 4, d_max: int = 8):
    b = int(torch.randint(1, b_max + 1, (1,), generator=rng))
    d = int(torch.randint(2, d_max + 1, (1,), generator=rng))
    h_v = torch.randn(b, d, generator=rng, dtype=torch.float64, requires_grad=True)
    h_t = torch.randn(b, d, generator=rng, dtype=torch.float64, requires_grad=True)
    return b, d, h_v, h_t


# --- contrastive loss -------------------------------------------------------


def test_single_pair_is_zero():
    h = torch.tensor([[0.6, 0.8]])
    assert float(clip_loss(h, h, 0.07)) == 0.0


def test_identical_embeddings_give_ln2():
    h = torch.tensor([[0.6, 0.8], [0.6, 0.8]], dtype=torch.float64)
    assert float(clip_loss(h, h, 1.0)) == pytest.approx(math.log(2), abs=1e-6)


def test_orthonormal_pair_matches_hand_softmax():
    h_v = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    h_t = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    # similarity matrix [[1,0],[0,1]]: per-row CE of softmax([1,0]) at target 0
    expected = -math.log(math.exp(1.0) / (math.exp(1.0) + math.exp(0.0)))
    assert float(clip_loss(h_v, h_t, 1.0)) == pytest.approx(expected, abs=1e-10)


def test_two_element_permutation_exact():
    rng = torch.Generator().manual_seed(0)
    h_v = torch.randn(2, 4, generator=rng, dtype=torch.float64)
    h_t = torch.randn(2, 4, generator=rng, dtype=torch.float64)
    perm = torch.tensor([1, 0])
    assert float(clip_loss(h_v, h_t, 0.3)) == float(clip_loss(h_v[perm], h_t[perm], 0.3))


def test_permutation_invariance_general():
    rng = torch.Generator().manual_seed(1)
    h_v = torch.randn(4, 6, generator=rng, dtype=torch.float64)
    h_t = torch.randn(4, 6, generator=rng, dtype=torch.float64)
    base = float(clip_loss(h_v, h_t, 0.2))
    for seed in range(5):
        perm = torch.randperm(4, generator=torch.Generator().manual_seed(seed))
        assert float(clip_loss(h_v[perm], h_t[perm], 0.2)) == pytest.approx(base, abs=1e-12)


def test_scale_absorbed_by_normalization():
    rng = torch.Generator().manual_seed(2)
    h_v = torch.randn(3, 5, generator=rng, dtype=torch.float64)
    h_t = torch.randn(3, 5, generator=rng, dtype=torch.float64)
    assert float(clip_loss(3.7 * h_v, 0.2 * h_t, 0.5)) == pytest.approx(float(clip_loss(h_v, h_t, 0.5)), abs=1e-12)


def test_nonpositive_temperature_rejected():
    h = torch.randn(2, 3)
    with pytest.raises(ValueError, match="temperature"):
        clip_loss(h, h, 0.0)
    with pytest.raises(ValueError, match="temperature"):
        clip_loss(h, h, -1.0)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="row-matched"):
        clip_loss(torch.randn(2, 3), torch.randn(3, 3), 1.0)


def test_one_directional_form_differs_when_asymmetric():
    rng = torch.Generator().manual_seed(3)
    h_v = torch.randn(3, 4, generator=rng, dtype=torch.float64)
    h_t = torch.randn(3, 4, generator=rng, dtype=torch.float64)
    sym = float(clip_loss(h_v, h_t, 0.4))
    one = float(info_nce(h_v, h_t, 0.4))
    other = float(info_nce(h_t, h_v, 0.4))
    assert sym == pytest.approx(0.5 * (one + other), abs=1e-12)


# --- diagnostic loss --------------------------------------------------------


def test_confident_correct_logits_vanish():
    logits = torch.tensor([[30.0, -30.0], [-30.0, 30.0]])
    labels = torch.tensor([0, 1])
    assert float(diag_loss(logits, labels)) < 1e-12


def test_uniform_logits_give_ln2():
    logits = torch.zeros(5, 2)
    labels = torch.tensor([0, 1, 0, 1, 1])
    assert float(diag_loss(logits, labels)) == pytest.approx(math.log(2), abs=1e-7)


def test_three_sample_batch_matches_manual_log_softmax():
    logits = torch.tensor([[0.3, -0.7], [1.2, 0.5], [-0.1, 0.9]], dtype=torch.float64)
    labels = torch.tensor([0, 1, 1])
    manual = 0.0
    for row, label in zip(logits, labels):
        log_probs = row - torch.logsumexp(row, dim=0)
        manual -= float(log_probs[label])
    manual /= 3
    assert float(diag_loss(logits, labels)) == pytest.approx(manual, abs=1e-12)


# --- concept loss -----------------------------------------------------------


def test_perfect_concept_logits_vanish():
    logits = torch.tensor([[[30.0, -30.0], [-30.0, 30.0], [30.0, -30.0]]])
    targets = torch.tensor([[0, 1, 0]])
    assert float(concept_loss(logits, targets)) < 1e-12


def test_uniform_concept_logits_give_ln2():
    logits = torch.zeros(4, 6, 2)
    targets = torch.randint(0, 2, (4, 6))
    assert float(concept_loss(logits, targets)) == pytest.approx(math.log(2), abs=1e-7)


def test_three_concepts_equal_mean_of_per_concept_ce():
    rng = torch.Generator().manual_seed(4)
    logits = torch.randn(5, 3, 2, generator=rng, dtype=torch.float64)
    targets = torch.randint(0, 2, (5, 3), generator=rng)
    per_concept = [float(F.cross_entropy(logits[:, i, :], targets[:, i])) for i in range(3)]
    assert float(concept_loss(logits, targets)) == pytest.approx(sum(per_concept) / 3, abs=1e-12)


def test_concept_count_mismatch_rejected():
    with pytest.raises(ValueError, match="do not match"):
        concept_loss(torch.zeros(2, 3, 2), torch.zeros(2, 4))


# --- total loss -------------------------------------------------------------


def test_zero_weights_zero_loss():
    assert total_loss(0.5, 0.4, 0.3, LossWeights(0.0, 0.0, 0.0)) == 0.0


def test_weighted_sum_arithmetic():
    value = total_loss(0.5, 0.2, 0.1, LossWeights(contrastive=1.0, diagnostic=1.0, concept=0.8))
    assert value == pytest.approx(0.78, abs=1e-12)


def test_unit_weights_sum_components():
    assert total_loss(0.5, 0.25, 0.25, LossWeights(1.0, 1.0, 1.0)) == pytest.approx(1.0)


def test_linearity_in_each_component():
    weights = LossWeights(contrastive=0.7, diagnostic=1.3, concept=0.4)
    base = total_loss(0.5, 0.2, 0.1, weights)
    delta = 0.37
    assert total_loss(0.5 + delta, 0.2, 0.1, weights) - base == pytest.approx(0.7 * delta, abs=1e-12)
    assert total_loss(0.5, 0.2 + delta, 0.1, weights) - base == pytest.approx(1.3 * delta, abs=1e-12)
    assert total_loss(0.5, 0.2, 0.1 + delta, weights) - base == pytest.approx(0.4 * delta, abs=1e-12)


def test_negative_weight_rejected():
    with pytest.raises(ValueError, match="weight"):
        LossWeights(contrastive=-0.1)


# --- gradient correctness ---------------------------------------------------


def test_clip_loss_gradients_match_finite_differences():
    rng = torch.Generator().manual_seed(10)
    for i in range(20):
        b, d, h_v, h_t = rand_instance(rng)
        tau = 0.05 + 0.95 * float(torch.rand(1, generator=rng))
        if b == 1:
            continue  # constant zero; gradient identically zero on both sides
        check_gradients(lambda: clip_loss(h_v, h_t, tau), [h_v, h_t])


def test_diag_loss_gradients_match_finite_differences():
    rng = torch.Generator().manual_seed(11)
    for _ in range(20):
        b = int(torch.randint(1, 5, (1,), generator=rng))
        logits = torch.randn(b, 2, generator=rng, dtype=torch.float64, requires_grad=True)
        labels = torch.randint(0, 2, (b,), generator=rng)
        check_gradients(lambda: diag_loss(logits, labels), [logits])


def test_concept_loss_gradients_match_finite_differences():
    rng = torch.Generator().manual_seed(12)
    for _ in range(20):
        b = int(torch.randint(1, 5, (1,), generator=rng))
        n_c = int(torch.randint(1, 7, (1,), generator=rng))
        logits = torch.randn(b, n_c, 2, generator=rng, dtype=torch.float64, requires_grad=True)
        targets = torch.randint(0, 2, (b, n_c), generator=rng)
        check_gradients(lambda: concept_loss(logits, targets), [logits])
