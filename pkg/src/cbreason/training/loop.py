"""The optimization loop: per-fold training with warmup+cosine schedule and early stopping.

Validation loss is the supervised part of the objective (diagnostic + concept
terms): enriched reports are only required for training samples, so the
early-stopping metric must be computable without them.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from ..corpus.records import DatasetManifest, SampleRecord
from ..corpus.splits import SplitPlan, fold_members
from ..encoder.config import EncoderConfig
from ..encoder.losses import clip_loss, concept_loss, diag_loss
from ..encoder.model import ConceptModel, load_image_batch, save_checkpoint
from .schedule import lr_schedule
from .variants import VariantSpec, build_variant, caption_for_label

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 150
    warmup_epochs: int = 10
    batch_size: int = 32
    weight_decay: float = 0.01
    early_stop_patience: Optional[int] = None  # None disables early stopping
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError(
                f"warmup_epochs must satisfy 0 <= warmup < epochs, got {self.warmup_epochs}/{self.epochs}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class FoldResult:
    fold: int
    checkpoint_path: Path
    best_epoch: int
    best_val_loss: float
    val_auroc: Optional[float]
    epochs_run: int
    stopped_early: bool


def _report_text(reports: Mapping[str, object], sample_id: str) -> str:
    entry = reports[sample_id]
    return entry if isinstance(entry, str) else entry.text  # EnrichedReport or plain text


def _texts_for(records: Sequence[SampleRecord], spec: VariantSpec, reports: Mapping[str, object]) -> list[str]:
    if not spec.uses_text:
        return []
    if spec.use_guideline_text:
        missing = [r.sample_id for r in records if r.sample_id not in reports]
        if missing:
            raise TrainingError(f"missing enriched report for sample '{missing[0]}'")
        return [_report_text(reports, r.sample_id) for r in records]
    return [caption_for_label(r.label) for r in records]


def _simple_auroc(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return None
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (len(pos) * len(neg)))


def fit(
    variant: VariantSpec,
    enc_config: EncoderConfig,
    manifest: DatasetManifest,
    reports: Mapping[str, object],
    folds: SplitPlan,
    config: TrainConfig,
    run_dir: Path | str,
    fold_indices: Optional[Sequence[int]] = None,
) -> list[FoldResult]:
    """Train one model per requested fold; persist checkpoints, curves, and a summary.

    Deterministic for a fixed seed modulo backend nondeterminism. The split
    contract is enforced: no evaluation sample ever enters a training batch.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "fit_config.json").write_text(
        json.dumps(
            {
                "variant": {
                    "kind": variant.kind.value,
                    "use_guideline_text": variant.use_guideline_text,
                    "loss_weights": asdict(variant.loss_weights),
                },
                "encoder": asdict(enc_config),
                "train": asdict(config),
                "folds": {"k": folds.k, "seed": folds.seed},
                "corpus": manifest.corpus_name,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    by_id = manifest.by_sample_id()
    metrics_path = run_dir / "metrics.jsonl"
    results: list[FoldResult] = []
    weights = variant.loss_weights

    for fold in fold_indices if fold_indices is not None else range(folds.k):
        train_ids, eval_ids = fold_members(manifest, folds, fold)
        if not train_ids or not eval_ids:
            raise TrainingError(f"fold {fold} has an empty train or eval split")
        eval_id_set = set(eval_ids)

        train_records = [by_id[s] for s in train_ids]
        eval_records = [by_id[s] for s in eval_ids]
        train_texts = _texts_for(train_records, variant, reports)

        channels = enc_config.image_channels
        train_images = load_image_batch([r.image_path for r in train_records], channels)
        eval_images = load_image_batch([r.image_path for r in eval_records], channels)
        train_labels = torch.tensor([manifest.label_index(r.label) for r in train_records])
        eval_labels = torch.tensor([manifest.label_index(r.label) for r in eval_records])
        train_concepts = torch.tensor([r.concepts for r in train_records], dtype=torch.long)
        eval_concepts = torch.tensor([r.concepts for r in eval_records], dtype=torch.long)

        torch.manual_seed(config.seed * 1009 + fold)
        model = build_variant(variant, enc_config)
        optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
        shuffler = torch.Generator().manual_seed(config.seed * 9973 + fold)

        n_train = len(train_records)
        steps_per_epoch = math.ceil(n_train / config.batch_size)
        total_steps = steps_per_epoch * config.epochs
        warmup_steps = steps_per_epoch * config.warmup_epochs

        fold_dir = run_dir / f"fold_{fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = fold_dir / "checkpoint.pt"

        best_val = float("inf")
        best_epoch = -1
        strikes = 0
        global_step = 0
        stopped_early = False
        epochs_run = 0

        for epoch in range(config.epochs):
            model.train()
            perm = torch.randperm(n_train, generator=shuffler)
            epoch_loss = 0.0
            for start in range(0, n_train, config.batch_size):
                idx = perm[start : start + config.batch_size]
                batch_ids = {train_records[i].sample_id for i in idx.tolist()}
                assert not (batch_ids & eval_id_set), "evaluation sample leaked into a training batch"
                lr = lr_schedule(global_step, total_steps, warmup_steps, config.lr)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                images = train_images[idx]
                h_v = model.encode_image(images)
                loss = weights.diagnostic * diag_loss(model.diag_logits(h_v), train_labels[idx])
                loss = loss + weights.concept * concept_loss(model.concept_logits(h_v), train_concepts[idx])
                if variant.uses_text and weights.contrastive > 0:
                    texts = [train_texts[i] for i in idx.tolist()]
                    h_t = model.encode_text(texts)
                    loss = loss + weights.contrastive * clip_loss(h_v, h_t, model.temperature)
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                epoch_loss += float(loss.detach())
                global_step += 1
            epoch_loss /= steps_per_epoch

            model.eval()
            with torch.no_grad():
                h_v = model.encode_image(eval_images)
                val_loss = float(
                    weights.diagnostic * diag_loss(model.diag_logits(h_v), eval_labels)
                    + weights.concept * concept_loss(model.concept_logits(h_v), eval_concepts)
                )
                y_score = torch.softmax(model.diag_logits(h_v), dim=-1)[:, 1].numpy()
            val_auroc = _simple_auroc(y_score, eval_labels.numpy())
            epochs_run = epoch + 1

            with metrics_path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "fold": fold,
                            "epoch": epoch,
                            "train_loss": epoch_loss,
                            "val_loss": val_loss,
                            "val_auroc": val_auroc,
                            "lr": lr_schedule(min(global_step, total_steps), total_steps, warmup_steps, config.lr),
                        }
                    )
                    + "\n"
                )

            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                strikes = 0
                save_checkpoint(
                    model,
                    checkpoint_path,
                    metadata={
                        "fold": fold,
                        "epoch": epoch,
                        "val_loss": val_loss,
                        "val_auroc": val_auroc,
                        "seed": config.seed,
                    },
                )
            else:
                strikes += 1
                if config.early_stop_patience is not None and strikes >= config.early_stop_patience:
                    stopped_early = True
                    logger.info("fold %d: early stop at epoch %d (patience %d)", fold, epoch, config.early_stop_patience)
                    break

        final_auroc = _final_auroc(checkpoint_path, eval_images, eval_labels)
        results.append(
            FoldResult(
                fold=fold,
                checkpoint_path=checkpoint_path,
                best_epoch=best_epoch,
                best_val_loss=best_val,
                val_auroc=final_auroc,
                epochs_run=epochs_run,
                stopped_early=stopped_early,
            )
        )

    summary = [
        {
            "fold": r.fold,
            "checkpoint": str(r.checkpoint_path),
            "best_epoch": r.best_epoch,
            "best_val_loss": r.best_val_loss,
            "val_auroc": r.val_auroc,
            "epochs_run": r.epochs_run,
            "stopped_early": r.stopped_early,
        }
        for r in results
    ]
    (run_dir / "fold_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return results


def _final_auroc(checkpoint_path: Path, eval_images: torch.Tensor, eval_labels: torch.Tensor) -> Optional[float]:
    from ..encoder.model import load_checkpoint

    model, _ = load_checkpoint(checkpoint_path)
    preds = model.predict(eval_images)
    return _simple_auroc(preds.y_hat, eval_labels.numpy())


def predict_samples(
    model: ConceptModel,
    manifest: DatasetManifest,
    sample_ids: Sequence[str],
    batch_size: int = 64,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run prediction over named samples: (y_true, y_score, c_true, c_score)."""
    by_id = manifest.by_sample_id()
    records = [by_id[s] for s in sample_ids]
    y_true = np.array([manifest.label_index(r.label) for r in records])
    c_true = np.array([r.concepts for r in records])
    y_scores = []
    c_scores = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        images = load_image_batch([r.image_path for r in chunk], model.config.image_channels)
        preds = model.predict(images)
        y_scores.append(preds.y_hat)
        c_scores.append(preds.c_hat)
    return y_true, np.concatenate(y_scores), c_true, np.concatenate(c_scores)
