"""Command-line interface for ligspace.

Every command takes ``--config``, ``--seed``, ``--threads`` and
``--precision``, writes its outputs plus a ``.manifest.json`` sibling, and
reports failures through :func:`handle_errors`, which prints
``Error [<category>]: <message>`` and exits with the category's code.
"""

import csv
import functools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Annotated, Optional

import numpy as np
import typer

from ligspace import __version__
from ligspace.ablation import steer_ablation, write_ablation
from ligspace.config import RunConfig, load_config, write_manifest
from ligspace.contrastive import train_contrastive, write_history_csv
from ligspace.encoder import SetConfig, SetModel, embed_clouds, init_encoder, load_encoder, pretrain_encoder, save_encoder
from ligspace.errors import ConfigError, InvariantError, LigspaceError, MissingInputError, RecordError
from ligspace.fingerprint import morgan_fingerprint
from ligspace.geom import load_conformers, load_pairs, save_conformers, save_pairs
from ligspace.gradcheck import DEFAULT_TRIALS, run_suite
from ligspace.mclm import NONE_LABEL, GenRequest, generate_batch, load_mclm, save_mclm, train_mclm
from ligspace.metrics import DEFAULT_ALPHA, RankedScreen, screen_report, write_screen_report
from ligspace.retrieval import morgan_baseline_search
from ligspace.smiles import is_valid_smiles, parse_smiles
from ligspace.store import build_store, load_store, topk_search
from ligspace.synth import planted_pairs, random_screen, steering_corpus

app = typer.Typer(help="Ligand/pocket embedding, retrieval, screening and steered generation.")
logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"

# -------------------------------
# Shared options
# -------------------------------

ConfigOption = Annotated[Optional[Path], typer.Option("--config", help="YAML/JSON run configuration")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", min=0, help="Random seed (overrides config)")]
ThreadsOption = Annotated[Optional[int], typer.Option("--threads", min=1, help="Worker threads")]
PrecisionOption = Annotated[Optional[str], typer.Option("--precision", help="Float precision (f32|f64)")]


def _run_config(config: Optional[Path], seed: Optional[int], threads: Optional[int],
                precision: Optional[str]) -> RunConfig:
    if precision is not None and precision.lower() not in ("f32", "f64"):
        raise ConfigError("Precision must be 'f32' or 'f64'")
    return load_config(config).with_overrides(
        seed=seed, threads=threads, precision=precision.lower() if precision else None
    )


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingInputError(f"input not found: {path}")
    return path


def _write_jsonl(path: Path, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, separators=(",", ":"), sort_keys=True) + "\n")
    return path


def _ligand_config(cfg: RunConfig) -> SetConfig:
    return replace(cfg.encoder, modality="ligand")


def _pocket_config(cfg: RunConfig) -> SetConfig:
    return replace(cfg.encoder, modality="pocket")


def _encoder_or_init(path: Optional[Path], config, cfg: RunConfig) -> SetModel:
    if path is not None:
        return load_encoder(_require(path), dtype=cfg.dtype)
    model = init_encoder(config, cfg.seed)
    return SetModel(config, model.params.astype(cfg.dtype))


def _query_clouds(path: Path, kind: str) -> tuple[list[str], list]:
    if kind == "ligand":
        records = load_conformers(_require(path))
        return [r.id for r in records], [r.cloud for r in records]
    if kind == "pocket":
        pairs = load_pairs(_require(path))
        seen: dict[str, object] = {}
        for p in pairs:
            seen.setdefault(p.pocket_id, p.pocket)
        return list(seen), list(seen.values())
    raise ConfigError("Kind must be 'ligand' or 'pocket'")


# -------------------------------
# Centralised error handling decorator
# -------------------------------

def handle_errors(func):
    """Print categorized errors to stderr and exit with the category's code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except LigspaceError as exc:
            typer.echo(f"Error [{exc.category}]: {exc}", err=True)
            sys.exit(exc.exit_code)
        except Exception as exc:  # noqa: BLE001 - last-resort CLI report
            typer.echo(f"Error [error]: {exc}", err=True)
            sys.exit(1)

    return wrapper


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level"),
):
    """Configure logging once for every command."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)


# -------------------------------
# Commands
# -------------------------------

@app.command("synth-data")
@handle_errors
def synth_data(
    kind: str = typer.Option(..., "--kind", help="pairs|steering|screen"),
    output: Path = typer.Option(..., "--output", "-o", help="Output file"),
    clusters: int = typer.Option(16, "--clusters", help="Planted clusters (pairs)"),
    pairs: int = typer.Option(512, "--pairs", help="Number of pairs (pairs)"),
    per_label: int = typer.Option(200, "--per-label", help="Molecules per label (steering)"),
    items: int = typer.Option(1000, "--items", help="Screen size (screen)"),
    actives: int = typer.Option(20, "--actives", help="Actives in the screen (screen)"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Write a synthetic corpus: planted pairs, a steering corpus or a ranked screen."""
    cfg = _run_config(config, seed, threads, precision)
    if kind == "pairs":
        save_pairs(output, planted_pairs(clusters, pairs, seed=cfg.seed))
    elif kind == "steering":
        labels = cfg.labels if len(cfg.labels) == 2 else ("A", "B")
        save_conformers(output, steering_corpus(per_label, seed=cfg.seed, labels=labels))
    elif kind == "screen":
        screen = random_screen(items, actives, seed=cfg.seed)
        output.parent.mkdir(parents=True, exist_ok=True)
        with output.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["target", "id", "score", "label"])
            for i, s, l in zip(screen.ids, screen.scores, screen.labels):
                writer.writerow(["synthetic", i, repr(float(s)), int(l)])
    else:
        raise ConfigError("Kind must be 'pairs', 'steering' or 'screen'")
    write_manifest(output, cfg, "synth-data", extra={"kind": kind})
    typer.echo(f"Wrote {output}")


@app.command("pretrain-encoder")
@handle_errors
def pretrain_encoder_cmd(
    input_path: Path = typer.Option(..., "--input", "-i", help="Conformer JSONL (ligand) or pair JSONL (pocket)"),
    output: Path = typer.Option(..., "--output", "-o", help="Checkpoint path"),
    modality: str = typer.Option("ligand", "--modality", help="ligand|pocket"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Pretrain an encoder with the masked-atom objective."""
    cfg = _run_config(config, seed, threads, precision)
    _, clouds = _query_clouds(input_path, modality)
    enc_config = _ligand_config(cfg) if modality == "ligand" else _pocket_config(cfg)
    result = pretrain_encoder(clouds, enc_config, cfg.seed, cfg.pretrain, dtype=cfg.dtype)
    save_encoder(output, result.model)
    history = output.with_name(output.name + ".history.csv")
    with history.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["step", "loss"])
        writer.writerows([step, repr(loss)] for step, loss in enumerate(result.history))
    write_manifest(output, cfg, "pretrain-encoder", inputs={"input": str(input_path)})
    typer.echo(f"Final loss {result.history[-1]:.4f}; wrote {output}")


@app.command("train-contrastive")
@handle_errors
def train_contrastive_cmd(
    pairs: Path = typer.Option(..., "--pairs", help="Pair JSONL"),
    output: Path = typer.Option(..., "--output", "-o", help="Output directory"),
    ligand_encoder: Optional[Path] = typer.Option(None, "--ligand-encoder", help="Pretrained ligand checkpoint"),
    pocket_encoder: Optional[Path] = typer.Option(None, "--pocket-encoder", help="Pretrained pocket checkpoint"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Jointly train ligand and pocket encoders with the collision-free loss."""
    cfg = _run_config(config, seed, threads, precision)
    corpus = load_pairs(_require(pairs))
    ligand = _encoder_or_init(ligand_encoder, _ligand_config(cfg), cfg)
    pocket = _encoder_or_init(pocket_encoder, _pocket_config(cfg), cfg)
    result = train_contrastive(corpus, ligand, pocket, cfg.contrastive, seed=cfg.seed)
    output.mkdir(parents=True, exist_ok=True)
    save_encoder(output / "ligand.ckpt", result.ligand_model)
    save_encoder(output / "pocket.ckpt", result.pocket_model)
    history = write_history_csv(output / "history.csv", result.history)
    write_manifest(history, cfg, "train-contrastive", inputs={"pairs": str(pairs)},
                   extra={"tau": result.tau})
    typer.echo(f"Final loss {result.history[-1][1]:.4f}, tau {result.tau:.4f}; wrote {output}")


@app.command("train-mclm")
@handle_errors
def train_mclm_cmd(
    conformers: Path = typer.Option(..., "--conformers", help="Conformer JSONL with dataset labels"),
    encoder: Path = typer.Option(..., "--encoder", help="Frozen ligand encoder checkpoint"),
    output: Path = typer.Option(..., "--output", "-o", help="Decoder checkpoint path"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Train the dataset-token conditioned decoder."""
    cfg = _run_config(config, seed, threads, precision)
    records = load_conformers(_require(conformers), labels=cfg.labels or None)
    model = load_encoder(_require(encoder), dtype=cfg.dtype)
    result = train_mclm(records, model, cfg.mclm, cfg.mclm_training, seed=cfg.seed, threads=cfg.threads)
    save_mclm(output, result.model)
    write_manifest(output, cfg, "train-mclm", inputs={"conformers": str(conformers), "encoder": str(encoder)},
                   extra={"skipped": result.skipped})
    typer.echo(f"Final loss {result.history[-1]:.4f}; skipped {result.skipped}; wrote {output}")


@app.command()
@handle_errors
def embed(
    encoder: Path = typer.Option(..., "--encoder", help="Encoder checkpoint"),
    input_path: Path = typer.Option(..., "--input", "-i", help="Conformer JSONL (ligand) or pair JSONL (pocket)"),
    output: Path = typer.Option(..., "--output", "-o", help="Store directory"),
    kind: str = typer.Option("ligand", "--kind", help="ligand|pocket"),
    shard_size: int = typer.Option(100_000, "--shard-size", min=1, help="Vectors per shard"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Embed structures and write them as a sharded store."""
    cfg = _run_config(config, seed, threads, precision)
    model = load_encoder(_require(encoder), dtype=cfg.dtype)
    ids, clouds = _query_clouds(input_path, kind)
    store = build_store(embed_clouds(model, clouds, threads=cfg.threads), ids, shard_size, output)
    write_manifest(output / "store", cfg, "embed", inputs={"encoder": str(encoder), "input": str(input_path)})
    typer.echo(f"Stored {store.count} vectors in {len(store.shards)} shards under {output}")


@app.command()
@handle_errors
def search(
    query: Path = typer.Option(..., "--query", "-q", help="Query conformer JSONL or pair JSONL"),
    output: Path = typer.Option(..., "--output", "-o", help="Hits JSONL"),
    store: Optional[Path] = typer.Option(None, "--store", help="Store directory (embedding method)"),
    encoder: Optional[Path] = typer.Option(None, "--encoder", help="Query encoder (embedding method)"),
    library: Optional[Path] = typer.Option(None, "--library", help="Conformer JSONL (morgan method)"),
    kind: str = typer.Option("ligand", "--kind", help="Query kind: ligand|pocket"),
    method: str = typer.Option("embedding", "--method", help="embedding|morgan"),
    k: int = typer.Option(10, "--k", "-k", min=1, help="Hits per query"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Top-k search by embedding cosine or by fingerprint Tanimoto."""
    cfg = _run_config(config, seed, threads, precision)
    rows = []
    if method == "embedding":
        if store is None or encoder is None:
            raise ConfigError("--store and --encoder are required for the embedding method")
        index = load_store(_require(store))
        ids, clouds = _query_clouds(query, kind)
        vectors = embed_clouds(load_encoder(_require(encoder), dtype=cfg.dtype), clouds, threads=cfg.threads)
        for qid, vec in zip(ids, vectors):
            for rank, hit in enumerate(topk_search(index, vec, k, threads=cfg.threads), start=1):
                rows.append({"query": qid, "rank": rank, "id": hit.id, "score": hit.score})
    elif method == "morgan":
        if library is None:
            raise ConfigError("--library is required for the morgan method")
        lib = [(r.id, morgan_fingerprint(parse_smiles(r.smiles))) for r in load_conformers(_require(library))]
        for record in load_conformers(_require(query)):
            fp = morgan_fingerprint(parse_smiles(record.smiles))
            for rank, hit in enumerate(morgan_baseline_search(fp, lib, k), start=1):
                rows.append({"query": record.id, "rank": rank, "id": hit.id, "score": hit.score})
    else:
        raise ConfigError("Method must be 'embedding' or 'morgan'")
    _write_jsonl(output, rows)
    write_manifest(output, cfg, "search", inputs={"query": str(query)})
    typer.echo(f"Wrote {len(rows)} hits to {output}")


@app.command()
@handle_errors
def screen(
    input_path: Path = typer.Option(..., "--input", "-i", help="CSV with target,id,score,label"),
    output: Path = typer.Option(..., "--output", "-o", help="Report CSV"),
    alpha: float = typer.Option(DEFAULT_ALPHA, "--alpha", help="BEDROC early-recognition weight"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Compute AUROC, BEDROC and enrichment factors per target."""
    cfg = _run_config(config, seed, threads, precision)
    groups: dict[str, list[tuple[str, float, bool]]] = {}
    with _require(input_path).open("r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(reader.fieldnames) != {"target", "id", "score", "label"}:
            raise RecordError(input_path, 1, "header must be target,id,score,label")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = {"0": False, "1": True}[row["label"]]
                groups.setdefault(row["target"], []).append((row["id"], float(row["score"]), label))
            except (KeyError, ValueError) as exc:
                raise RecordError(input_path, lineno, f"bad row: {exc}") from exc
    rows = [screen_report(target, RankedScreen.from_items(items), alpha) for target, items in sorted(groups.items())]
    write_screen_report(output, rows)
    write_manifest(output, cfg, "screen", inputs={"input": str(input_path)}, extra={"alpha": alpha})
    typer.echo(f"Wrote {len(rows)} targets to {output}")


@app.command()
@handle_errors
def generate(
    model: Path = typer.Option(..., "--model", help="Decoder checkpoint"),
    encoder: Path = typer.Option(..., "--encoder", help="Encoder for the conditioning structures"),
    query: Path = typer.Option(..., "--query", "-q", help="Conformer JSONL (ligand) or pair JSONL (pocket)"),
    output: Path = typer.Option(..., "--output", "-o", help="Generation JSONL"),
    kind: str = typer.Option("ligand", "--kind", help="ligand|pocket"),
    dataset: str = typer.Option(NONE_LABEL, "--dataset", help="Dataset label to steer with"),
    samples: int = typer.Option(1, "--samples", min=1, help="Samples per query"),
    temperature: float = typer.Option(1.0, "--temperature", min=0.0, help="Sampling temperature (0 = argmax)"),
    max_len: int = typer.Option(64, "--max-len", min=1, help="Token limit"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Generate SMILES conditioned on structure embeddings and a dataset token."""
    cfg = _run_config(config, seed, threads, precision)
    decoder = load_mclm(_require(model))
    if cfg.precision == "f32":
        decoder.params = decoder.params.astype(np.float32)
    ids, clouds = _query_clouds(query, kind)
    vectors = embed_clouds(load_encoder(_require(encoder), dtype=cfg.dtype), clouds, threads=cfg.threads)
    label = None if dataset == NONE_LABEL else dataset
    requests, names = [], []
    for qid, vec in zip(ids, vectors):
        for i in range(samples):
            requests.append(GenRequest(vec, label, temperature, max_len, cfg.seed + i))
            names.append(f"{qid}-{i}")
    results = generate_batch(decoder, requests, threads=cfg.threads)
    rows = [{"id": name, "smiles": g.smiles, "dataset_token": dataset, "seed": r.seed, "valid": is_valid_smiles(g.smiles)}
            for name, r, g in zip(names, requests, results)]
    _write_jsonl(output, rows)
    write_manifest(output, cfg, "generate", inputs={"model": str(model), "query": str(query)})
    valid = sum(r["valid"] for r in rows)
    typer.echo(f"Generated {len(rows)} molecules ({valid} valid) to {output}")


@app.command("steer-ablation")
@handle_errors
def steer_ablation_cmd(
    conformers: Path = typer.Option(..., "--conformers", help="Labelled conformer JSONL"),
    model: Path = typer.Option(..., "--model", help="Decoder checkpoint"),
    encoder: Path = typer.Option(..., "--encoder", help="Encoder used to train the decoder"),
    catalog_label: str = typer.Option(..., "--catalog-label", help="Label whose molecules form the catalog"),
    output: Path = typer.Option(..., "--output", "-o", help="Summary CSV"),
    tokens: str = typer.Option("", "--tokens", help="Comma-separated labels (default: all labels plus <none>)"),
    samples: int = typer.Option(100, "--samples", min=1, help="Samples per token"),
    temperature: float = typer.Option(1.0, "--temperature", min=0.0, help="Sampling temperature"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Compare generations under different dataset tokens from one shared query."""
    cfg = _run_config(config, seed, threads, precision)
    records = load_conformers(_require(conformers))
    decoder = load_mclm(_require(model))
    catalog = [r.smiles for r in records if r.dataset == catalog_label]
    if not catalog:
        raise InvariantError("cli.catalog-label", f"no records carry label '{catalog_label}'")
    vectors = embed_clouds(load_encoder(_require(encoder), dtype=cfg.dtype), [r.cloud for r in records],
                           threads=cfg.threads)
    names = [t.strip() for t in tokens.split(",") if t.strip()] or [*decoder.vocab.labels, NONE_LABEL]
    chosen = [None if t in (NONE_LABEL, "none") else t for t in names]
    rows, details = steer_ablation(decoder, vectors.mean(axis=0), catalog, chosen, samples=samples,
                                   temperature=temperature, seed=cfg.seed, threads=cfg.threads)
    summary, sample_path = write_ablation(output, rows, details)
    write_manifest(summary, cfg, "steer-ablation", inputs={"conformers": str(conformers), "model": str(model)})
    for row in rows:
        typer.echo(f"{row.token}: validity {row.validity:.2f} aromatic {row.aromatic_fraction:.2f} "
                   f"nn-mean {row.nn_mean:.3f}")


@app.command()
@handle_errors
def gradcheck(
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Optional CSV of per-check errors"),
    trials: int = typer.Option(DEFAULT_TRIALS, "--trials", min=1, help="Random draws per check"),
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    precision: PrecisionOption = None,
):
    """Run the finite-difference gradient suite (always float64)."""
    cfg = _run_config(config, seed, threads, precision)
    reports = run_suite(seed=cfg.seed, trials=trials)
    if output is not None:
        output.parent.mkdir(parents=True, exist_ok=True)
        with output.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["check", "trials", "max_relative_error", "passed"])
            for r in reports:
                writer.writerow([r.name, r.trials, repr(r.worst), int(r.passed)])
        write_manifest(output, cfg, "gradcheck")
    failed = [r.name for r in reports if not r.passed]
    for r in reports:
        typer.echo(f"{r.name:<18} {r.worst:.2e} {'ok' if r.passed else 'FAIL'}")
    if failed:
        raise InvariantError("gradcheck.tolerance", f"gradient check failed for {', '.join(failed)}")


@app.command()
def info():
    """Show package information."""
    typer.echo(f"ligspace v{__version__}")
    typer.echo()
    typer.echo("Commands:")
    for name in ("synth-data", "pretrain-encoder", "train-contrastive", "train-mclm", "embed",
                 "search", "screen", "generate", "steer-ablation", "gradcheck"):
        typer.echo(f"  - {name}")


if __name__ == "__main__":
    app()
