"""Screening helpers on top of the store: multi-conformer scores, the
fingerprint baseline and nearest-neighbour similarity to a catalog."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ligspace.fingerprint import Fingerprint, tanimoto, tanimoto_matrix
from ligspace.store import SearchHit


def multi_conformer_score(pocket_embedding, conformer_embeddings) -> float:
    """Best cosine similarity between a pocket and any conformer of one molecule.

    Raises:
        ValueError: If no conformer is given, on a dim mismatch or zero vectors
    """
    confs = np.asarray(conformer_embeddings, dtype=np.float64)
    if confs.ndim == 1:
        confs = confs[None, :]
    if confs.shape[0] == 0:
        raise ValueError("At least one conformer embedding is required")
    pocket = np.asarray(pocket_embedding, dtype=np.float64).reshape(-1)
    if confs.shape[1] != pocket.size:
        raise ValueError(f"Dimension mismatch: {confs.shape[1]} vs {pocket.size}")
    norms = np.linalg.norm(confs, axis=1)
    pnorm = np.linalg.norm(pocket)
    if pnorm == 0 or np.any(norms == 0):
        raise ValueError("Cosine similarity of a zero vector is undefined")
    return float(np.max(confs @ pocket / (norms * pnorm)))


def score_conformer_library(pocket_embedding, library: Mapping[str, np.ndarray]) -> list[SearchHit]:
    """Score every molecule of ``{id: conformer embeddings}``, best first (id ascending on ties)."""
    hits = [SearchHit(mid, multi_conformer_score(pocket_embedding, confs)) for mid, confs in library.items()]
    hits.sort(key=lambda h: (-h.score, h.id))
    return hits


def morgan_baseline_search(query: Fingerprint, library: Sequence[tuple[str, Fingerprint]], k: int) -> list[SearchHit]:
    """Top-*k* library entries by Tanimoto to *query*, id ascending on ties.

    Raises:
        ValueError: If widths differ or ``k < 1``
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not library:
        return []
    sims = tanimoto_matrix([query], [fp for _, fp in library])[0]
    order = sorted(range(len(library)), key=lambda i: (-sims[i], library[i][0]))[:k]
    return [SearchHit(library[i][0], float(sims[i])) for i in order]


@dataclass(frozen=True)
class NeighborSummary:
    values: np.ndarray
    mean: float
    median: float
    exact_fraction: float


def nearest_neighbor_similarity(generated: Sequence[Fingerprint], catalog: Sequence[Fingerprint]) -> NeighborSummary:
    """Per generated molecule, the highest Tanimoto to any catalog entry.

    Raises:
        ValueError: If the catalog is empty
    """
    if not catalog:
        raise ValueError("Catalog is empty")
    if not generated:
        return NeighborSummary(np.zeros(0), 0.0, 0.0, 0.0)
    best = tanimoto_matrix(generated, catalog).max(axis=1)
    return NeighborSummary(best, float(best.mean()), float(np.median(best)), float(np.mean(best == 1.0)))


def chemical_similarity(hits: Sequence[Fingerprint], reference: Fingerprint) -> float:
    """Mean Tanimoto of a hit list to a reference ligand.

    Raises:
        ValueError: If *hits* is empty
    """
    if not hits:
        raise ValueError("No hits to compare")
    return float(np.mean([tanimoto(h, reference) for h in hits]))


__all__ = [
    "multi_conformer_score",
    "score_conformer_library",
    "morgan_baseline_search",
    "NeighborSummary",
    "nearest_neighbor_similarity",
    "chemical_similarity",
]
