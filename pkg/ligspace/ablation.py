"""Dataset-token steering ablation.

Every token is sampled with the same conditioning embedding and the same
seeds, so the rows differ only in the dataset token.  Valid samples are
compared to a reference catalog by nearest-neighbour Tanimoto.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ligspace.fingerprint import morgan_fingerprint
from ligspace.mclm import NONE_LABEL, GenRequest, MclmModel, generate_batch, uniqueness, validity
from ligspace.retrieval import nearest_neighbor_similarity
from ligspace.smiles import has_aromatic_token, parse_smiles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationSample:
    token: str
    seed: int
    smiles: str
    valid: bool
    nn_similarity: float | None


@dataclass(frozen=True)
class AblationRow:
    token: str
    samples: int
    validity: float
    uniqueness: float
    aromatic_fraction: float
    nn_mean: float
    nn_median: float
    exact_fraction: float


def steer_ablation(model: MclmModel, condition, catalog_smiles: Sequence[str],
                   tokens: Sequence[str | None], samples: int = 100, temperature: float = 1.0,
                   seed: int = 0, max_len: int = 64, threads: int = 1) -> tuple[list[AblationRow], list[AblationSample]]:
    """Sample *samples* molecules per dataset token and summarise them.

    Args:
        model: Trained decoder
        condition: Conditioning embedding shared by every request
        catalog_smiles: Reference molecules for nearest-neighbour similarity
        tokens: Dataset labels to compare; ``None`` selects ``<none>``
        samples: Molecules per token
        temperature: Sampling temperature
        seed: Request ``i`` uses seed ``seed + i`` for every token
        max_len: Token limit per sample
        threads: Parallel generation workers
    """
    catalog = [morgan_fingerprint(parse_smiles(s)) for s in catalog_smiles]
    condition = np.asarray(condition, dtype=np.float64)
    rows, details = [], []
    for token in tokens:
        name = NONE_LABEL if token is None else token
        requests = [GenRequest(condition, token, temperature, max_len, seed + i) for i in range(samples)]
        generated = [g.smiles for g in generate_batch(model, requests, threads=threads)]
        fps, valid_flags = [], []
        for text in generated:
            try:
                fps.append(morgan_fingerprint(parse_smiles(text)))
                valid_flags.append(True)
            except ValueError:
                valid_flags.append(False)
        summary = nearest_neighbor_similarity(fps, catalog)
        values = iter(summary.values)
        for i, (text, ok) in enumerate(zip(generated, valid_flags)):
            details.append(AblationSample(name, seed + i, text, ok, float(next(values)) if ok else None))
        rows.append(AblationRow(
            token=name,
            samples=samples,
            validity=validity(generated),
            uniqueness=uniqueness(generated),
            aromatic_fraction=float(np.mean([has_aromatic_token(s) for s in generated])) if generated else 0.0,
            nn_mean=summary.mean,
            nn_median=summary.median,
            exact_fraction=summary.exact_fraction,
        ))
        logger.info("token %s: validity %.2f aromatic %.2f nn mean %.3f",
                    name, rows[-1].validity, rows[-1].aromatic_fraction, rows[-1].nn_mean)
    return rows, details


ROW_COLUMNS = ("token", "samples", "validity", "uniqueness", "aromatic_fraction", "nn_mean", "nn_median",
               "exact_fraction")
SAMPLE_COLUMNS = ("token", "seed", "smiles", "valid", "nn_similarity")


def write_ablation(path: str | Path, rows: Sequence[AblationRow], details: Sequence[AblationSample]) -> tuple[Path, Path]:
    """Write the per-token summary CSV and a ``.samples.csv`` distribution file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sample_path = path.with_name(path.stem + ".samples.csv")
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ROW_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, c) for c in ROW_COLUMNS])
    with sample_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SAMPLE_COLUMNS)
        for s in details:
            writer.writerow([s.token, s.seed, s.smiles, int(s.valid), "" if s.nn_similarity is None else s.nn_similarity])
    return path, sample_path


__all__ = ["AblationSample", "AblationRow", "steer_ablation", "write_ablation", "ROW_COLUMNS", "SAMPLE_COLUMNS"]
