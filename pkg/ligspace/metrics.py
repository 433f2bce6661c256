"""Virtual-screening metrics: AUROC, BEDROC and enrichment factor.

Rankings are deterministic: score descending, then id ascending.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ALPHA = 80.5
REPORT_FRACTIONS = (0.005, 0.01, 0.05)


@dataclass(frozen=True)
class RankedScreen:
    """Scored library items with activity labels.

    Raises:
        ValueError: If lengths differ, ids repeat or a score is not finite
    """

    ids: tuple[str, ...]
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels, dtype=bool).reshape(-1)
        ids = tuple(str(i) for i in self.ids)
        if not (len(ids) == scores.size == labels.size):
            raise ValueError("ids, scores and labels differ in length")
        if not np.all(np.isfinite(scores)):
            raise ValueError("Scores must be finite")
        if len(set(ids)) != len(ids):
            raise ValueError("Screen ids must be unique")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, float, bool]]) -> "RankedScreen":
        items = list(items)
        return cls(tuple(i for i, _, _ in items), np.array([s for _, s, _ in items], dtype=np.float64),
                   np.array([bool(l) for _, _, l in items], dtype=bool))

    @property
    def total(self) -> int:
        return len(self.ids)

    @property
    def actives(self) -> int:
        return int(self.labels.sum())

    def order(self) -> list[int]:
        """Item indices from best to worst."""
        return sorted(range(self.total), key=lambda i: (-self.scores[i], self.ids[i]))

    def active_ranks(self) -> np.ndarray:
        """1-based ranks of the actives in :meth:`order`."""
        ranked = self.labels[self.order()]
        return np.flatnonzero(ranked) + 1


def _check_two_classes(screen: RankedScreen) -> tuple[int, int]:
    n_act = screen.actives
    n_inact = screen.total - n_act
    if n_act == 0 or n_inact == 0:
        raise ValueError("Screen needs at least one active and one inactive")
    return n_act, n_inact


def auroc(screen: RankedScreen, ties: str = "half") -> float:
    """Probability that a random active outranks a random inactive.

    Args:
        screen: Scored items
        ties: ``"half"`` counts tied active/inactive pairs as 1/2; ``"ordered"``
            uses the deterministic ranking instead

    Raises:
        ValueError: For single-class screens or an unknown tie mode
    """
    n_act, n_inact = _check_two_classes(screen)
    if ties == "ordered":
        ranked = screen.labels[screen.order()]
        inactive_below = np.cumsum((~ranked)[::-1])[::-1]
        wins = int(inactive_below[ranked].sum())
        return wins / (n_act * n_inact)
    if ties != "half":
        raise ValueError(f"Unknown tie mode '{ties}'")
    inactive = np.sort(screen.scores[~screen.labels])
    active = screen.scores[screen.labels]
    below = np.searchsorted(inactive, active, side="left")
    tied = np.searchsorted(inactive, active, side="right") - below
    doubled = int(2 * below.sum() + tied.sum())
    return doubled / (2 * n_act * n_inact)


def _log_sinh(x: float) -> float:
    return x - math.log(2.0) + math.log(-math.expm1(-2.0 * x))


def _log_expm1(x: float) -> float:
    return x + math.log(-math.expm1(-x))


def bedroc(screen: RankedScreen, alpha: float = DEFAULT_ALPHA) -> float:
    """Boltzmann-enhanced discrimination of ROC with early-recognition weight *alpha*.

    Evaluated in log space, so any finite positive *alpha* is accepted.

    Raises:
        ValueError: If *alpha* is not a finite positive number, there are no
            actives, or every item is active
    """
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("alpha must be positive and finite")
    n_total, n_act = screen.total, screen.actives
    if n_act == 0 or n_act >= n_total:
        raise ValueError("BEDROC needs 1 <= actives < total")
    ranks = screen.active_ranks()
    ra = n_act / n_total
    exponents = -alpha * ranks / n_total
    top = float(exponents.max())
    log_rie = top + math.log(float(np.exp(exponents - top).sum())) - math.log(n_act)
    log_rie += math.log(n_total) + _log_expm1(alpha / n_total) - math.log(-math.expm1(-alpha))
    log_factor = (math.log(ra) + _log_sinh(alpha / 2.0) - math.log(2.0)
                  - _log_sinh(alpha * (1.0 - ra) / 2.0) - _log_sinh(alpha * ra / 2.0))
    shift = alpha * (1.0 - ra)
    return float(math.exp(log_rie + log_factor) + math.exp(-shift) / math.expm1(-shift))


def enrichment_factor(screen: RankedScreen, fraction: float) -> float:
    """Active rate in the top ``floor(fraction * N)`` items over the overall rate.

    Raises:
        ValueError: If *fraction* is outside ``(0, 1]``, the bucket is empty or no item is active
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    n_total, n_act = screen.total, screen.actives
    bucket = math.floor(fraction * n_total + 1e-9)
    if bucket < 1:
        raise ValueError(f"top {fraction:g} of {n_total} items is empty")
    if n_act == 0:
        raise ValueError("Enrichment needs at least one active")
    hits = int(np.sum(screen.active_ranks() <= bucket))
    return (hits * n_total) / (bucket * n_act)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("target", "auroc", "bedroc", "ef_0.5", "ef_1", "ef_5")


def screen_report(target: str, screen: RankedScreen, alpha: float = DEFAULT_ALPHA) -> dict[str, object]:
    """One report row; an enrichment whose bucket is empty is reported as NaN."""
    row: dict[str, object] = {"target": target, "auroc": auroc(screen), "bedroc": bedroc(screen, alpha)}
    for column, fraction in zip(REPORT_COLUMNS[3:], REPORT_FRACTIONS):
        try:
            row[column] = enrichment_factor(screen, fraction)
        except ValueError:
            row[column] = float("nan")
    return row


def write_screen_report(path: str | Path, rows: Sequence[dict[str, object]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if k != "target" else v) for k, v in row.items()})
    return path


__all__ = [
    "DEFAULT_ALPHA",
    "RankedScreen",
    "auroc",
    "bedroc",
    "enrichment_factor",
    "REPORT_COLUMNS",
    "screen_report",
    "write_screen_report",
]
