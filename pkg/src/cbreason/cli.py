"""Command-line surface: reproducible runs over a self-describing work directory.

Layout under --workdir:
    corpus/                 manifest.csv, bank.csv, images/, sidecar.json
    folds.json              patient-level fold assignment
    reports/                enrichment cache (one report + metadata per key)
    runs/<run>/             training outputs, config snapshots, run summary
    eval/<run>/             per-fold predictions and metric summaries
    explanations/<run>/     reasoning transcripts
    review/                 blinded bundles, sealed key, imported scores
    report/                 aggregate tables and figures

Client credentials, when a remote generation client is configured, are read
from the CBREASON_CLIENT_TOKEN environment variable only; they never appear in
config files or run snapshots.
"""

from __future__ import annotations

import functools
import hashlib
import json
from pathlib import Path
from typing import Optional

import click

from . import reporting
from .clients import ClientError, build_client
from .config import ConfigError, load_run_config, snapshot_config
from .corpus.records import BankError, ManifestError, load_bank, load_manifest
from .corpus.splits import SplitError, fold_members, load_split_plan, make_patient_folds, save_split_plan
from .corpus.synthetic import default_bank, synth_generate
from .encoder.config import EncoderConfig, LossWeights
from .encoder.model import load_checkpoint
from .enrichment import EnrichmentRequest, ReportCache, enrich
from .guidelines import GuidelineKind, GuidelineLookupError, Modality, default_registry, get_guideline
from .metrics.classification import PredictionSet, load_predictions, save_predictions
from .metrics.review import (
    ReviewProtocolError,
    export_case_bundles,
    import_scores,
    unseal,
)
from .metrics.rubric import RubricSchemaError, aggregate_rubric
from .reasoning import build_reasoning_prompt, generate_explanation, load_transcript, write_transcript
from .training.loop import TrainConfig, TrainingError, fit, predict_samples
from .training.variants import VariantKind, VariantSpec

_FRIENDLY = (
    BankError,
    ClientError,
    ConfigError,
    FileNotFoundError,
    GuidelineLookupError,
    ManifestError,
    ReviewProtocolError,
    RubricSchemaError,
    SplitError,
    TrainingError,
    ValueError,
)


def _friendly_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _FRIENDLY as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _corpus_paths(cfg: dict, workdir: Path) -> tuple[Path, Path]:
    manifest = Path(cfg["corpus"]["manifest"] or workdir / "corpus" / "manifest.csv")
    bank = Path(cfg["corpus"]["bank"] or workdir / "corpus" / "bank.csv")
    return manifest, bank


def _load_corpus(cfg: dict, workdir: Path):
    manifest_path, bank_path = _corpus_paths(cfg, workdir)
    bank = load_bank(bank_path)
    manifest = load_manifest(
        manifest_path,
        bank,
        corpus_name=cfg["corpus"]["corpus_name"] or None,
        label_set=cfg["corpus"]["label_set"],
    )
    return bank, manifest, manifest_path, bank_path


def _folds_for(cfg: dict, workdir: Path, manifest):
    folds_path = workdir / "folds.json"
    if folds_path.exists():
        return load_split_plan(folds_path)
    plan = make_patient_folds(manifest, k=cfg["corpus"]["k"], seed=cfg["corpus"]["seed"])
    save_split_plan(plan, folds_path)
    click.echo(f"wrote fold plan (k={plan.k}, seed={plan.seed}) to {folds_path}")
    return plan


def _run_name(cfg: dict) -> str:
    suffix = "+guideline" if cfg["model"]["use_guideline_text"] else ""
    return f"{cfg['model']['variant']}{suffix}"


def _variant_spec(cfg: dict) -> VariantSpec:
    kind = VariantKind(cfg["model"]["variant"])
    weights = dict(cfg["model"]["weights"])
    use_guideline = cfg["model"]["use_guideline_text"]
    if kind is VariantKind.CBM_SEQUENTIAL:
        # no text branch: the contrastive term and guideline text are moot
        weights["contrastive"] = 0.0
        use_guideline = False
    return VariantSpec(
        kind=kind,
        use_guideline_text=use_guideline,
        loss_weights=LossWeights(**weights),
    )


def _encoder_config(cfg: dict, n_concepts: int) -> EncoderConfig:
    model = cfg["model"]
    return EncoderConfig(
        n_concepts=n_concepts,
        embed_dim=model["embed_dim"],
        vision_backbone_id=model["vision_backbone"],
        text_backbone_id=model["text_backbone"],
        temperature_init=model["temperature_init"],
        temperature_learnable=model["temperature_learnable"],
        image_channels=model["image_channels"],
    )


def _ensure_reports(cfg: dict, workdir: Path, manifest, bank) -> dict:
    """Enrich any missing reports with the configured client; return id -> text."""
    registry = default_registry()
    guideline = get_guideline(
        registry, GuidelineKind.REPORTING, Modality(cfg["enrichment"]["guideline_modality"])
    )
    cache_dir = Path(cfg["enrichment"]["cache_dir"] or workdir / "reports")
    cache = ReportCache(cache_dir)
    client = build_client(cfg["enrichment"]["client_id"])
    reports = {}
    for record in manifest.records:
        aux = cfg["enrichment"]["auxiliary_template"]
        request = EnrichmentRequest(
            sample=record,
            bank=bank,
            guideline=guideline,
            label_text=record.label,
            modality_text=cfg["enrichment"]["modality_text"],
            type_of_guideline=cfg["enrichment"]["type_of_guideline"],
            auxiliary_text=aux.format(label=record.label) if aux else None,
        )
        reports[record.sample_id] = enrich(client, request, cache)
    return cache, reports


@click.group()
@click.version_option(package_name="cbreason", prog_name="cbreason")
def main() -> None:
    """Concept-based reasoning pipeline: corpora, enrichment, training, evaluation, review."""


@main.command()
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--n", default=400, show_default=True, help="Number of samples to generate.")
@click.option("--concepts", default=6, show_default=True, help="Concept bank size (>= 4).")
@click.option("--seed", default=0, show_default=True)
@_friendly_errors
def synth(workdir: Path, n: int, concepts: int, seed: int) -> None:
    """Generate the synthetic concept-encoded corpus under WORKDIR/corpus."""
    bank = default_bank(concepts)
    manifest = synth_generate(n, bank, seed, workdir / "corpus")
    click.echo(
        f"generated {len(manifest)} samples over {len(manifest.patient_ids)} patients "
        f"({bank.size} concepts) in {workdir / 'corpus'}"
    )


@main.command()
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--manifest", type=click.Path(path_type=Path), default=None)
@click.option("--bank", type=click.Path(path_type=Path), default=None)
@click.option("--k", default=None, type=int, help="Fold count override.")
@click.option("--seed", default=None, type=int, help="Fold seed override.")
@_friendly_errors
def prepare(workdir: Path, config_path, manifest, bank, k, seed) -> None:
    """Validate the manifest against its bank and build patient-level folds."""
    overrides: dict = {"corpus": {}}
    if manifest:
        overrides["corpus"]["manifest"] = str(manifest)
    if bank:
        overrides["corpus"]["bank"] = str(bank)
    if k is not None:
        overrides["corpus"]["k"] = k
    if seed is not None:
        overrides["corpus"]["seed"] = seed
    cfg = load_run_config(config_path, overrides)
    bank_obj, manifest_obj, manifest_path, bank_path = _load_corpus(cfg, workdir)
    plan = make_patient_folds(manifest_obj, k=cfg["corpus"]["k"], seed=cfg["corpus"]["seed"])
    save_split_plan(plan, workdir / "folds.json")
    click.echo(
        f"manifest ok: {len(manifest_obj)} records, {len(manifest_obj.patient_ids)} patients, "
        f"bank '{bank_obj.bank_id}' ({bank_obj.size} concepts)"
    )
    click.echo(f"manifest sha256 {_sha256_file(manifest_path)}")
    click.echo(f"bank     sha256 {_sha256_file(bank_path)}")
    for gid, digest in sorted(default_registry().digests().items()):
        click.echo(f"guideline {gid} sha256 {digest}")
    sizes = {f: len(plan.patients_in_fold(f)) for f in range(plan.k)}
    click.echo(f"folds written: {sizes}")


@main.command(name="enrich")
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--client", "client_id", default=None, help="Generation client override.")
@_friendly_errors
def enrich_cmd(workdir: Path, config_path, client_id) -> None:
    """Generate (or fetch cached) guideline-conditioned reports for every sample."""
    overrides = {"enrichment": {"client_id": client_id}} if client_id else None
    cfg = load_run_config(config_path, overrides)
    bank, manifest, _, _ = _load_corpus(cfg, workdir)
    cache, reports = _ensure_reports(cfg, workdir, manifest, bank)
    total = cache.hits + cache.misses
    rate = 100.0 * cache.hits / total if total else 0.0
    click.echo(f"reports: {total} requested, {cache.hits} cache hits, {cache.misses} generated ({rate:.0f}% hits)")


@main.command()
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--variant", type=click.Choice(["clip_mtl", "clip_cbl", "cbm_sequential"]), default=None)
@click.option("--guideline-text/--no-guideline-text", "guideline_text", default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--fold", "folds_selected", type=int, multiple=True, help="Train only these folds.")
@click.option("--run-name", default=None)
@_friendly_errors
def train(workdir: Path, config_path, variant, guideline_text, epochs, lr, seed, folds_selected, run_name) -> None:
    """Fit the configured variant per fold; writes checkpoints, curves, and a summary."""
    overrides: dict = {"model": {"train": {}}}
    if variant:
        overrides["model"]["variant"] = variant
    if guideline_text is not None:
        overrides["model"]["use_guideline_text"] = guideline_text
    if epochs is not None:
        overrides["model"]["train"]["epochs"] = epochs
    if lr is not None:
        overrides["model"]["train"]["lr"] = lr
    if seed is not None:
        overrides["model"]["train"]["seed"] = seed
    cfg = load_run_config(config_path, overrides)
    bank, manifest, manifest_path, bank_path = _load_corpus(cfg, workdir)
    plan = _folds_for(cfg, workdir, manifest)
    spec = _variant_spec(cfg)
    enc_config = _encoder_config(cfg, bank.size)

    reports: dict = {}
    if spec.uses_text and spec.use_guideline_text:
        _, reports = _ensure_reports(cfg, workdir, manifest, bank)

    train_block = cfg["model"]["train"]
    train_config = TrainConfig(
        lr=train_block["lr"],
        epochs=train_block["epochs"],
        warmup_epochs=train_block["warmup_epochs"],
        batch_size=train_block["batch_size"],
        weight_decay=train_block["weight_decay"],
        early_stop_patience=train_block["early_stop_patience"],
        seed=train_block["seed"],
    )
    name = run_name or _run_name(cfg)
    run_dir = workdir / "runs" / name
    results = fit(
        spec,
        enc_config,
        manifest,
        reports,
        plan,
        train_config,
        run_dir,
        fold_indices=list(folds_selected) or None,
    )
    snapshot_config(cfg, config_path, run_dir)
    summary = {
        "run": name,
        "digests": {
            "manifest": _sha256_file(manifest_path),
            "bank": _sha256_file(bank_path),
            "guidelines": default_registry().digests(),
        },
        "artifacts": sorted(str(p.relative_to(run_dir)) for p in run_dir.rglob("*") if p.is_file()),
        "folds": [r.fold for r in results],
    }
    (run_dir / "run_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for r in results:
        auroc_text = "n/a" if r.val_auroc is None else f"{r.val_auroc:.4f}"
        click.echo(
            f"fold {r.fold}: best epoch {r.best_epoch} val_loss {r.best_val_loss:.4f} "
            f"val_auroc {auroc_text}{' (early stop)' if r.stopped_early else ''}"
        )
    click.echo(f"run '{name}' written to {run_dir}")


def _eval_run(cfg: dict, workdir: Path, run: str, export_embeddings_flag: bool = False) -> dict:
    bank, manifest, _, _ = _load_corpus(cfg, workdir)
    plan = _folds_for(cfg, workdir, manifest)
    run_dir = workdir / "runs" / run
    if not run_dir.exists():
        raise FileNotFoundError(f"no trained run at {run_dir}")
    eval_dir = workdir / "eval" / run
    eval_dir.mkdir(parents=True, exist_ok=True)
    by_id = manifest.by_sample_id()
    for fold_dir in sorted(p for p in run_dir.glob("fold_*") if p.is_dir()):
        fold = int(fold_dir.name.split("_")[1])
        model, _ = load_checkpoint(fold_dir / "checkpoint.pt")
        _, eval_ids = fold_members(manifest, plan, fold)
        y_true, y_score, c_true, c_score = predict_samples(model, manifest, eval_ids)
        predset = PredictionSet(
            sample_ids=list(eval_ids), y_true=y_true, y_score=y_score, c_true=c_true, c_score=c_score
        )
        save_predictions(predset, eval_dir / f"predictions_fold_{fold}.csv")
        if export_embeddings_flag:
            from .encoder.model import export_embeddings, load_image_batch

            images = load_image_batch([by_id[s].image_path for s in eval_ids], model.config.image_channels)
            export_embeddings(model, images, eval_ids, eval_dir / f"embeddings_fold_{fold}.csv")
    summary = reporting.summarize_eval(eval_dir, threshold=cfg["reasoning"]["threshold"])
    (eval_dir / "metrics_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


@main.command(name="eval")
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--run", "runs", multiple=True, help="Run name(s); default: every trained run.")
@click.option("--export-embeddings", is_flag=True, help="Also write per-sample visual embeddings.")
@_friendly_errors
def eval_cmd(workdir: Path, config_path, runs, export_embeddings) -> None:
    """Predict on each held-out fold and write the metrics report."""
    cfg = load_run_config(config_path)
    names = list(runs) or sorted(p.name for p in (workdir / "runs").glob("*") if p.is_dir())
    if not names:
        raise FileNotFoundError(f"no trained runs under {workdir / 'runs'}")
    for name in names:
        summary = _eval_run(cfg, workdir, name, export_embeddings_flag=export_embeddings)
        agg = summary["aggregate"]
        concept_mean = agg["mean_present_concept_auroc"]["mean"]
        concept_text = "n/a" if concept_mean is None else f"{concept_mean:.4f}"
        click.echo(
            f"{name}: AUROC {agg['auroc']['mean']:.4f} ± {agg['auroc']['std']:.4f}, "
            f"bal.acc {agg['balanced_accuracy']['mean']:.4f}, "
            f"mean concept AUROC {concept_text}"
        )


@main.command()
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--run", required=True, help="Trained run to explain.")
@click.option("--fold", "folds_selected", type=int, multiple=True, help="Folds to cover (default all).")
@_friendly_errors
def reason(workdir: Path, config_path, run: str, folds_selected) -> None:
    """Build reasoning prompts from held-out predictions and generate explanations."""
    cfg = load_run_config(config_path)
    bank, manifest, _, _ = _load_corpus(cfg, workdir)
    plan = _folds_for(cfg, workdir, manifest)
    registry = default_registry()
    guideline = get_guideline(
        registry, GuidelineKind.DIAGNOSTIC, Modality(cfg["reasoning"]["guideline_modality"])
    )
    client = build_client(cfg["reasoning"]["client_id"])
    out_dir = workdir / "explanations" / run
    run_dir = workdir / "runs" / run
    by_id = manifest.by_sample_id()
    count = 0
    for fold_dir in sorted(p for p in run_dir.glob("fold_*") if p.is_dir()):
        fold = int(fold_dir.name.split("_")[1])
        if folds_selected and fold not in folds_selected:
            continue
        model, _ = load_checkpoint(fold_dir / "checkpoint.pt")
        _, eval_ids = fold_members(manifest, plan, fold)
        _, y_score, _, c_score = predict_samples(model, manifest, eval_ids)
        for i, sample_id in enumerate(eval_ids):
            prompt = build_reasoning_prompt(
                (float(y_score[i]), c_score[i]),
                bank,
                guideline,
                manifest.corpus_name,
                label_names=manifest.label_set,
                threshold=cfg["reasoning"]["threshold"],
                guideline_phrase=cfg["reasoning"]["guideline_phrase"],
            )
            explanation = generate_explanation(client, prompt)
            write_transcript(out_dir, sample_id, prompt, explanation, image_ref=str(by_id[sample_id].image_path))
            count += 1
    click.echo(f"wrote {count} explanation transcripts to {out_dir}")


@main.command(name="review-export")
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--run", required=True)
@click.option("--n", default=20, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None, help="Defaults to WORKDIR/review.")
@_friendly_errors
def review_export(workdir: Path, config_path, run: str, n: int, seed: int, out_dir) -> None:
    """Export blinded case bundles and a sealed truth key for independent review."""
    cfg = load_run_config(config_path)
    eval_dir = workdir / "eval" / run
    predictions = sorted(eval_dir.glob("predictions_fold_*.csv"))
    if not predictions:
        raise FileNotFoundError(f"no predictions under {eval_dir}; run eval first")
    sets = [load_predictions(p) for p in predictions]
    merged = PredictionSet(
        sample_ids=[sid for s in sets for sid in s.sample_ids],
        y_true=[v for s in sets for v in s.y_true],
        y_score=[v for s in sets for v in s.y_score],
        c_true=[row for s in sets for row in s.c_true],
        c_score=[row for s in sets for row in s.c_score],
    )
    transcripts = {}
    for path in (workdir / "explanations" / run).glob("*.json"):
        t = load_transcript(path)
        transcripts[t["case_id"]] = t
    if not transcripts:
        raise FileNotFoundError(f"no transcripts under {workdir / 'explanations' / run}; run reason first")
    out = export_case_bundles(
        merged, transcripts, n, seed, out_dir or workdir / "review", label_names=cfg["corpus"]["label_set"]
    )
    click.echo(f"exported {n} blinded bundles to {out / 'bundles'} (sealed key alongside)")


@main.command(name="review-import")
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--scores", type=click.Path(path_type=Path), required=True)
@_friendly_errors
def review_import(workdir: Path, scores: Path) -> None:
    """Validate and record reviewer rubric scores for the exported bundles."""
    imported = import_scores(workdir / "review", scores)
    agg = aggregate_rubric(imported)
    click.echo(
        f"imported {len(imported)} scores: CIntS {agg['mean_cints']:.1f} "
        f"CIgS {agg['mean_cigs']:.1f} BAS {agg['mean_bas']:.1f}"
    )


@main.command(name="review-unseal")
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@_friendly_errors
def review_unseal(workdir: Path) -> None:
    """Unlock the truth key and join it to the imported scores (import must precede)."""
    joined = unseal(workdir / "review")
    click.echo(f"unsealed; joined scores at {joined}")


@main.command()
@click.option("--workdir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@_friendly_errors
def report(workdir: Path, config_path) -> None:
    """Aggregate every evaluated run into tables and figures under WORKDIR/report."""
    cfg = load_run_config(config_path)
    bank, _, _, _ = _load_corpus(cfg, workdir)
    report_dir = reporting.build_report(workdir, list(bank.display_names), threshold=cfg["reasoning"]["threshold"])
    for artifact in sorted(report_dir.iterdir()):
        click.echo(f"report: {artifact}")


if __name__ == "__main__":
    main()
