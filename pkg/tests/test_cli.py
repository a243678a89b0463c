from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from cbreason.cli import main


@pytest.fixture(scope="module")
def mini_workdir(tmp_path_factory, cli_runner) -> Path:
    """A tiny but complete pipeline: synth -> train (all folds) -> eval."""
    workdir = tmp_path_factory.mktemp("mini")
    config = workdir / "run.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "corpus": {"k": 3, "seed": 0},
                "model": {
                    "embed_dim": 16,
                    "train": {"epochs": 2, "warmup_epochs": 1, "lr": 1e-3, "batch_size": 16, "seed": 0},
                },
            }
        ),
        encoding="utf-8",
    )
    for args in (
        ["synth", "--workdir", str(workdir), "--n", "60", "--concepts", "4", "--seed", "1"],
        ["train", "--workdir", str(workdir), "--config", str(config)],
        ["eval", "--workdir", str(workdir), "--config", str(config)],
    ):
        result = cli_runner.invoke(main, args)
        assert result.exit_code == 0, f"{args}: {result.output}"
    return workdir


def test_pipeline_artifacts_exist(mini_workdir):
    run_dir = mini_workdir / "runs" / "clip_mtl+guideline"
    assert (run_dir / "fit_config.json").exists()
    assert (run_dir / "config_snapshot.yaml").exists()
    assert (run_dir / "config_effective.yaml").exists()
    assert (run_dir / "run_summary.json").exists()
    assert (run_dir / "metrics.jsonl").exists()
    for fold in range(3):
        assert (run_dir / f"fold_{fold}" / "checkpoint.pt").exists()
        assert (mini_workdir / "eval" / "clip_mtl+guideline" / f"predictions_fold_{fold}.csv").exists()
    assert (mini_workdir / "eval" / "clip_mtl+guideline" / "metrics_summary.json").exists()
    assert (mini_workdir / "folds.json").exists()


def test_run_summary_is_self_describing(mini_workdir):
    summary = json.loads((mini_workdir / "runs" / "clip_mtl+guideline" / "run_summary.json").read_text())
    assert set(summary["digests"]) == {"manifest", "bank", "guidelines"}
    assert len(summary["digests"]["manifest"]) == 64
    assert any(a.startswith("fold_0") for a in summary["artifacts"])


def test_enrich_second_run_hits_cache(mini_workdir, cli_runner):
    first = cli_runner.invoke(main, ["enrich", "--workdir", str(mini_workdir)])
    assert first.exit_code == 0, first.output
    second = cli_runner.invoke(main, ["enrich", "--workdir", str(mini_workdir)])
    assert second.exit_code == 0
    assert "(100% hits)" in second.output
    assert "0 generated" in second.output


def test_prepare_reports_counts_and_digests(mini_workdir, cli_runner):
    result = cli_runner.invoke(
        main, ["prepare", "--workdir", str(mini_workdir), "--k", "3", "--seed", "0"]
    )
    assert result.exit_code == 0, result.output
    assert "60 records" in result.output
    assert "manifest sha256" in result.output
    assert "guideline ultrasound_diagnostic sha256" in result.output


def test_reason_and_review_round_trip(mini_workdir, cli_runner, tmp_path):
    result = cli_runner.invoke(
        main, ["reason", "--workdir", str(mini_workdir), "--run", "clip_mtl+guideline", "--fold", "0"]
    )
    assert result.exit_code == 0, result.output
    transcripts = list((mini_workdir / "explanations" / "clip_mtl+guideline").glob("*.json"))
    assert transcripts

    result = cli_runner.invoke(
        main,
        ["review-export", "--workdir", str(mini_workdir), "--run", "clip_mtl+guideline", "--n", "5", "--seed", "3"],
    )
    assert result.exit_code == 0, result.output

    premature = cli_runner.invoke(main, ["review-unseal", "--workdir", str(mini_workdir)])
    assert premature.exit_code != 0
    assert "refusing to unseal" in premature.output

    from cbreason.metrics import exported_case_ids

    cases = exported_case_ids(mini_workdir / "review")
    scores = tmp_path / "scores.csv"
    scores.write_text(
        "case_id,reviewer_id,cints,cigs,bas\n" + "\n".join(f"{c},rev1,0.9,0.75,0.8" for c in cases) + "\n",
        encoding="utf-8",
    )
    imported = cli_runner.invoke(main, ["review-import", "--workdir", str(mini_workdir), "--scores", str(scores)])
    assert imported.exit_code == 0, imported.output
    assert "CIntS 90.0" in imported.output

    unsealed = cli_runner.invoke(main, ["review-unseal", "--workdir", str(mini_workdir)])
    assert unsealed.exit_code == 0, unsealed.output
    assert (mini_workdir / "review" / "scores_with_truth.csv").exists()


def test_report_renders_tables_and_figures(mini_workdir, cli_runner):
    result = cli_runner.invoke(main, ["report", "--workdir", str(mini_workdir)])
    assert result.exit_code == 0, result.output
    report_dir = mini_workdir / "report"
    assert (report_dir / "classification_summary.csv").exists()
    assert (report_dir / "classification_summary.txt").exists()
    assert (report_dir / "clinical_utility.csv").exists()
    assert (report_dir / "metrics.json").exists()
    assert (report_dir / "per_concept_auroc.png").stat().st_size > 0
    assert (report_dir / "training_curves.png").stat().st_size > 0


def test_unknown_command_prints_usage_nonzero(cli_runner):
    result = cli_runner.invoke(main, ["frobnicate"])
    assert result.exit_code != 0
    assert "Usage" in result.output


def test_config_validation_names_field(tmp_path, cli_runner):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  train:\n    lr: -1\n", encoding="utf-8")
    result = cli_runner.invoke(main, ["train", "--workdir", str(tmp_path), "--config", str(bad)])
    assert result.exit_code != 0
    assert "model.train.lr" in result.output


def test_unknown_config_field_rejected(tmp_path, cli_runner):
    bad = tmp_path / "bad.yaml"
    bad.write_text("modle: {}\n", encoding="utf-8")
    result = cli_runner.invoke(main, ["train", "--workdir", str(tmp_path), "--config", str(bad)])
    assert result.exit_code != 0
    assert "unknown config field 'modle'" in result.output


def test_cbm_variant_trains_without_text(mini_workdir, cli_runner):
    result = cli_runner.invoke(
        main,
        [
            "train",
            "--workdir",
            str(mini_workdir),
            "--config",
            str(mini_workdir / "run.yaml"),
            "--variant",
            "cbm_sequential",
            "--fold",
            "0",
            "--run-name",
            "cbm",
        ],
    )
    assert result.exit_code == 0, result.output
    assert (mini_workdir / "runs" / "cbm" / "fold_0" / "checkpoint.pt").exists()

def test_eval_can_export_embeddings(mini_workdir, cli_runner):
    result = cli_runner.invoke(
        main,
        ["eval", "--workdir", str(mini_workdir), "--config", str(mini_workdir / "run.yaml"),
         "--run", "clip_mtl+guideline", "--export-embeddings"],
    )
    assert result.exit_code == 0, result.output
    emb = mini_workdir / "eval" / "clip_mtl+guideline" / "embeddings_fold_0.csv"
    assert emb.exists()
    header = emb.read_text().splitlines()[0]
    assert header.startswith("sample_id,h_v_0")
