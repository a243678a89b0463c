"""Aggregate run reports: delimited tables plus matplotlib figures on disk."""

from __future__ import annotations

import csv
import json
import statistics
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics.classification import (
    PredictionSet,
    auroc,
    balanced_accuracy,
    confusion_stats,
    load_predictions,
    per_concept_auroc,
)
from .metrics.rubric import aggregate_rubric, import_rubric_scores


def _fold_predictions(eval_dir: Path) -> dict[int, PredictionSet]:
    out: dict[int, PredictionSet] = {}
    for path in sorted(eval_dir.glob("predictions_fold_*.csv")):
        fold = int(path.stem.rsplit("_", 1)[1])
        out[fold] = load_predictions(path)
    return out


def summarize_eval(eval_dir: Path | str, threshold: float = 0.5) -> dict:
    """Fold-level and aggregate classification metrics for one evaluated run."""
    eval_dir = Path(eval_dir)
    folds = _fold_predictions(eval_dir)
    if not folds:
        raise FileNotFoundError(f"no predictions under {eval_dir}")
    per_fold = {}
    for fold, predset in folds.items():
        stats = confusion_stats(predset.y_score, predset.y_true, threshold)
        concept_values = [v for v in per_concept_auroc(predset) if v is not None]
        per_fold[fold] = {
            "auroc": auroc(predset.y_score, predset.y_true),
            "balanced_accuracy": balanced_accuracy(predset.y_score, predset.y_true, threshold),
            "sensitivity": stats.sensitivity,
            "specificity": stats.specificity,
            "f1": stats.f1,
            "mean_present_concept_auroc": statistics.mean(concept_values) if concept_values else None,
            "n": len(predset.sample_ids),
        }

    def agg(metric: str) -> dict:
        values = [m[metric] for m in per_fold.values() if m[metric] is not None]
        return {
            "mean": statistics.mean(values) if values else None,
            "std": statistics.stdev(values) if len(values) > 1 else 0.0,
        }

    return {
        "folds": per_fold,
        "aggregate": {
            metric: agg(metric)
            for metric in (
                "auroc",
                "balanced_accuracy",
                "sensitivity",
                "specificity",
                "f1",
                "mean_present_concept_auroc",
            )
        },
    }


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{100 * value:.1f}"


def _write_table(path_base: Path, header: list[str], rows: list[list[str]]) -> None:
    with path_base.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(str(cell).ljust(widths[i]) for i, cell in enumerate(row)) for row in [header] + rows]
    lines.insert(1, "-" * len(lines[0]))
    path_base.with_suffix(".txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _concept_auroc_figure(run_names: list[str], eval_root: Path, bank_names: list[str], out_path: Path) -> None:
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(bank_names)), 4))
    width = 0.8 / max(len(run_names), 1)
    for r, run in enumerate(run_names):
        folds = _fold_predictions(eval_root / run)
        per_fold_values = [per_concept_auroc(p) for p in folds.values()]
        means = []
        for i in range(len(bank_names)):
            vals = [pf[i] for pf in per_fold_values if pf[i] is not None]
            means.append(statistics.mean(vals) if vals else 0.0)
        positions = [i + r * width for i in range(len(bank_names))]
        ax.bar(positions, means, width=width, label=run)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(bank_names))])
    ax.set_xticklabels(bank_names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("concept AUROC")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _training_curves_figure(run_names: list[str], runs_root: Path, out_path: Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for run in run_names:
        metrics_path = runs_root / run / "metrics.jsonl"
        if not metrics_path.exists():
            continue
        by_fold: dict[int, list[dict]] = {}
        for line in metrics_path.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            by_fold.setdefault(rec["fold"], []).append(rec)
        for fold, records in sorted(by_fold.items()):
            records.sort(key=lambda r: r["epoch"])
            epochs = [r["epoch"] for r in records]
            axes[0].plot(epochs, [r["val_loss"] for r in records], label=f"{run} f{fold}", alpha=0.8)
            aurocs = [(r["epoch"], r["val_auroc"]) for r in records if r["val_auroc"] is not None]
            if aurocs:
                axes[1].plot([e for e, _ in aurocs], [a for _, a in aurocs], label=f"{run} f{fold}", alpha=0.8)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("validation loss")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("validation AUROC")
    axes[1].set_ylim(0, 1.05)
    for ax in axes:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def build_report(
    workdir: Path | str,
    bank_display_names: list[str],
    threshold: float = 0.5,
) -> Path:
    """Render every available result under a workdir into report tables and figures.

    Emits a classification table (one row per evaluated run), a clinical-utility
    table when rubric scores are present, per-metric machine-readable records,
    and PNG figures alongside the delimited output.
    """
    workdir = Path(workdir)
    eval_root = workdir / "eval"
    runs_root = workdir / "runs"
    report_dir = workdir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    run_names = sorted(p.name for p in eval_root.glob("*") if p.is_dir()) if eval_root.exists() else []
    if not run_names:
        raise FileNotFoundError(f"nothing evaluated under {eval_root}; run the eval stage first")

    machine: dict[str, dict] = {}
    rows = []
    for run in run_names:
        summary = summarize_eval(eval_root / run, threshold)
        machine[run] = summary
        agg = summary["aggregate"]
        rows.append(
            [
                run,
                f"{_fmt(agg['auroc']['mean'])} ± {100 * agg['auroc']['std']:.1f}",
                f"{_fmt(agg['balanced_accuracy']['mean'])} ± {100 * agg['balanced_accuracy']['std']:.1f}",
                _fmt(agg["mean_present_concept_auroc"]["mean"]),
            ]
        )
    _write_table(
        report_dir / "classification_summary",
        ["run", "auroc_pct", "balanced_accuracy_pct", "mean_concept_auroc_pct"],
        rows,
    )

    utility_rows = []
    rubric_block = None
    scores_file = workdir / "review" / "scores.csv"
    if scores_file.exists():
        rubric_block = aggregate_rubric(import_rubric_scores(scores_file))
    for run in run_names:
        agg = machine[run]["aggregate"]
        row = [
            run,
            _fmt(agg["sensitivity"]["mean"]),
            _fmt(agg["specificity"]["mean"]),
            _fmt(agg["f1"]["mean"]),
        ]
        if rubric_block:
            row += [
                f"{rubric_block['mean_cints']:.1f}",
                f"{rubric_block['mean_cigs']:.1f}",
                f"{rubric_block['mean_bas']:.1f}",
            ]
        else:
            row += ["-", "-", "-"]
        utility_rows.append(row)
    _write_table(
        report_dir / "clinical_utility",
        ["run", "sensitivity_pct", "specificity_pct", "f1_pct", "cints_pct", "cigs_pct", "bas_pct"],
        utility_rows,
    )

    if rubric_block:
        machine["rubric"] = rubric_block
    (report_dir / "metrics.json").write_text(json.dumps(machine, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    _concept_auroc_figure(run_names, eval_root, bank_display_names, report_dir / "per_concept_auroc.png")
    _training_curves_figure(run_names, runs_root, report_dir / "training_curves.png")
    return report_dir
