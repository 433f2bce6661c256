import csv
import json

import pytest
from typer.testing import CliRunner

from ligspace import __version__
from ligspace.cli import app
from ligspace.metrics import auroc, bedroc, enrichment_factor
from ligspace.synth import random_screen

runner = CliRunner()

SMALL_CONFIG = """\
seed: 0
labels: [A, B]
encoder: {layers: 1, heads: 1, dim: 8, vector_channels: 2, proj_dim: 4}
pretrain: {steps: 2, batch_size: 4}
contrastive: {steps: 2, batch_size: 4}
mclm: {layers: 1, heads: 1, hidden: 8, cond_dim: 4, max_len: 64, mlp_ratio: 2}
mclm_training: {steps: 2, batch_size: 4}
"""


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Run the small pipeline once and share its outputs."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "small.yaml"
    cfg.write_text(SMALL_CONFIG, encoding="utf-8")
    steps = [
        ("synth-data", "--kind", "steering", "--per-label", 6, "-o", root / "steer.jsonl", "--config", cfg),
        ("synth-data", "--kind", "pairs", "--clusters", 2, "--pairs", 8, "-o", root / "pairs.jsonl", "--config", cfg),
        ("pretrain-encoder", "-i", root / "steer.jsonl", "-o", root / "ligand.ckpt", "--config", cfg),
        ("train-contrastive", "--pairs", root / "pairs.jsonl", "-o", root / "contrastive", "--config", cfg),
        ("embed", "--encoder", root / "ligand.ckpt", "-i", root / "steer.jsonl", "-o", root / "store",
         "--shard-size", 5, "--config", cfg),
        ("train-mclm", "--conformers", root / "steer.jsonl", "--encoder", root / "ligand.ckpt",
         "-o", root / "decoder.ckpt", "--config", cfg),
    ]
    for args in steps:
        result = invoke(*args)
        assert result.exit_code == 0, result.output
    return root, cfg


def test_info():
    """Info lists the version and commands."""
    result = invoke("info")
    assert result.exit_code == 0
    assert f"ligspace v{__version__}" in result.output
    assert "steer-ablation" in result.output


def test_screen_report_matches_metrics(tmp_path):
    """The screen command reproduces the library metrics for a synthetic screen."""
    scores = tmp_path / "screen.csv"
    assert invoke("synth-data", "--kind", "screen", "--items", 200, "--actives", 10, "--seed", 4,
                  "-o", scores).exit_code == 0
    report = tmp_path / "report.csv"
    result = invoke("screen", "-i", scores, "-o", report)
    assert result.exit_code == 0, result.output
    with report.open(encoding="utf-8") as handle:
        (row,) = list(csv.DictReader(handle))
    expected = random_screen(200, 10, seed=4)
    assert row["target"] == "synthetic"
    assert float(row["auroc"]) == auroc(expected)
    assert float(row["bedroc"]) == bedroc(expected)
    assert float(row["ef_1"]) == enrichment_factor(expected, 0.01)
    assert float(row["ef_5"]) == enrichment_factor(expected, 0.05)
    manifest = json.loads((tmp_path / "report.csv.manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "screen"


def test_missing_input_is_usage_error(tmp_path):
    """A missing input file exits with code 2."""
    result = invoke("screen", "-i", tmp_path / "absent.csv", "-o", tmp_path / "r.csv")
    assert result.exit_code == 2
    assert "Error [usage]" in result.output


def test_bad_screen_header_is_schema_error(tmp_path):
    """A malformed screen file exits with code 3."""
    scores = tmp_path / "screen.csv"
    scores.write_text("id,score\na,1.0\n", encoding="utf-8")
    result = invoke("screen", "-i", scores, "-o", tmp_path / "r.csv")
    assert result.exit_code == 3
    assert "Error [schema]" in result.output


def test_bad_config_and_flags(tmp_path):
    """Unknown config keys and bad precision values are usage errors."""
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("encoder: {depth: 3}\n", encoding="utf-8")
    result = invoke("synth-data", "--kind", "screen", "-o", tmp_path / "s.csv", "--config", cfg)
    assert result.exit_code == 2
    assert "unknown keys" in result.output
    result = invoke("synth-data", "--kind", "screen", "-o", tmp_path / "s.csv", "--precision", "f16")
    assert result.exit_code == 2
    result = invoke("synth-data", "--kind", "bogus", "-o", tmp_path / "s.csv")
    assert result.exit_code == 2


def test_invariant_error_exit_code(tmp_path):
    """A corpus with one pocket is an invariant violation."""
    pairs = tmp_path / "pairs.jsonl"
    assert invoke("synth-data", "--kind", "pairs", "--clusters", 2, "--pairs", 1, "-o", pairs).exit_code == 0
    result = invoke("train-contrastive", "--pairs", pairs, "-o", tmp_path / "out")
    assert result.exit_code == 4
    assert "distinct pockets" in result.output


def test_pipeline_outputs(workspace):
    """Every training step leaves a checkpoint and a manifest."""
    root, _ = workspace
    for name in ("ligand.ckpt", "decoder.ckpt", "contrastive/ligand.ckpt", "contrastive/pocket.ckpt"):
        assert (root / name).exists()
    assert (root / "ligand.ckpt.manifest.json").exists()
    assert (root / "contrastive" / "history.csv.manifest.json").exists()
    assert len(list((root / "store").glob("shard-*.cse"))) == 3


def test_embedding_search_finds_itself(workspace, tmp_path):
    """Searching the store with its own molecules puts each at score one."""
    root, cfg = workspace
    hits = tmp_path / "hits.jsonl"
    result = invoke("search", "-q", root / "steer.jsonl", "--store", root / "store", "--encoder",
                    root / "ligand.ckpt", "-k", 3, "-o", hits, "--config", cfg)
    assert result.exit_code == 0, result.output
    rows = read_jsonl(hits)
    assert len(rows) == 36
    for row in rows:
        if row["rank"] == 1:
            assert row["score"] == pytest.approx(1.0, abs=1e-5)


def test_morgan_search(workspace, tmp_path):
    """The fingerprint baseline ranks an identical molecule first."""
    root, cfg = workspace
    hits = tmp_path / "morgan.jsonl"
    result = invoke("search", "--method", "morgan", "-q", root / "steer.jsonl", "--library", root / "steer.jsonl",
                    "-k", 2, "-o", hits, "--config", cfg)
    assert result.exit_code == 0, result.output
    assert all(r["score"] == 1.0 for r in read_jsonl(hits) if r["rank"] == 1)


def test_greedy_generation_is_reproducible(workspace, tmp_path):
    """Temperature zero writes byte-identical output on every run."""
    root, cfg = workspace
    outputs = []
    for name in ("g1.jsonl", "g2.jsonl"):
        out = tmp_path / name
        result = invoke("generate", "--model", root / "decoder.ckpt", "--encoder", root / "ligand.ckpt",
                        "-q", root / "steer.jsonl", "--dataset", "A", "--temperature", 0, "-o", out,
                        "--config", cfg)
        assert result.exit_code == 0, result.output
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    rows = read_jsonl(tmp_path / "g1.jsonl")
    assert len(rows) == 12
    assert set(rows[0]) == {"id", "smiles", "dataset_token", "seed", "valid"}


def test_unknown_dataset_label(workspace, tmp_path):
    """Steering with an unseen label fails cleanly."""
    root, cfg = workspace
    result = invoke("generate", "--model", root / "decoder.ckpt", "--encoder", root / "ligand.ckpt",
                    "-q", root / "steer.jsonl", "--dataset", "Z", "-o", tmp_path / "g.jsonl", "--config", cfg)
    assert result.exit_code != 0
    assert "Unknown dataset label" in result.output


def test_steer_ablation_command(workspace, tmp_path):
    """The ablation writes one row per token and a per-sample file."""
    root, cfg = workspace
    out = tmp_path / "ablation.csv"
    result = invoke("steer-ablation", "--conformers", root / "steer.jsonl", "--model", root / "decoder.ckpt",
                    "--encoder", root / "ligand.ckpt", "--catalog-label", "A", "--samples", 2, "-o", out,
                    "--config", cfg)
    assert result.exit_code == 0, result.output
    with out.open(encoding="utf-8") as handle:
        tokens = [row["token"] for row in csv.DictReader(handle)]
    assert tokens == ["A", "B", "<none>"]
    assert (tmp_path / "ablation.samples.csv").exists()


@pytest.mark.slow
def test_gradcheck_command(tmp_path):
    """The gradient suite passes from the command line."""
    out = tmp_path / "grad.csv"
    result = invoke("gradcheck", "--trials", "2", "-o", out)
    assert result.exit_code == 0, result.output
    with out.open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert all(row["passed"] == "1" and row["trials"] == "2" for row in rows)
