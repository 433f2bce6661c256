"""Collision-free InfoNCE between ligand and pocket embeddings.

When several pairs in a batch share a pocket, the pocket-to-ligand
direction uses the strongest binder among them as the positive instead of
penalising the model for ranking an equally valid ligand first.  The
ligand-to-pocket direction keeps the diagonal positives.  With no
collisions the loss is the usual symmetric InfoNCE, computed along the very
same arithmetic path.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ligspace.encoder import SetModel, encode
from ligspace.errors import InvariantError
from ligspace.geom import LigandPocketPair
from ligspace.nn import ParamDict
from ligspace.optim import Adam
from ligspace.tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    div,
    exp,
    l2_normalize,
    matmul,
    mul,
    reset_tape,
    sum_,
    transpose,
)

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.07


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors.

    Raises:
        ValueError: On a dimension mismatch or a zero vector
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"Dimension mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("Cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def collision_sets(pocket_ids: Sequence[str]) -> list[frozenset[int]]:
    """For each index, the set of batch indices sharing its pocket (itself included)."""
    groups: dict[str, set[int]] = {}
    for idx, pid in enumerate(pocket_ids):
        groups.setdefault(pid, set()).add(idx)
    frozen = {pid: frozenset(members) for pid, members in groups.items()}
    return [frozen[pid] for pid in pocket_ids]


def positive_targets(pocket_ids: Sequence[str], affinities: Sequence[float]) -> np.ndarray:
    """Pocket-direction positive per row: highest affinity in the collision set, lowest index on ties."""
    if len(pocket_ids) != len(affinities):
        raise ValueError("pocket_ids and affinities differ in length")
    targets = np.empty(len(pocket_ids), dtype=np.int64)
    for i, members in enumerate(collision_sets(pocket_ids)):
        targets[i] = min(members, key=lambda j: (-affinities[j], j))
    return targets


@dataclass
class ContrastiveBatch:
    """Paired embeddings, row ``i`` of each belonging to pair ``i``."""

    ligand: Tensor
    pocket: Tensor
    ligand_ids: list[str]
    pocket_ids: list[str]
    affinities: list[float]

    def __post_init__(self) -> None:
        self.ligand = as_tensor(self.ligand)
        self.pocket = as_tensor(self.pocket)
        n = self.ligand.shape[0]
        if self.ligand.ndim != 2 or self.pocket.shape != self.ligand.shape:
            raise ValueError(f"Embedding shapes differ: {self.ligand.shape} vs {self.pocket.shape}")
        if not (len(self.ligand_ids) == len(self.pocket_ids) == len(self.affinities) == n):
            raise ValueError("Batch fields differ in length")

    def __len__(self) -> int:
        return self.ligand.shape[0]


@dataclass
class ContrastiveLoss:
    total: Tensor
    pocket: Tensor
    ligand: Tensor


def _as_tau(tau) -> Tensor:
    tau = as_tensor(tau)
    if tau.size != 1:
        raise ValueError("Temperature must be a scalar")
    if not float(tau.data.reshape(-1)[0]) > 0.0:
        raise ValueError(f"Temperature must be positive, got {float(tau.data.reshape(-1)[0])}")
    return tau.reshape(()) if tau.ndim else tau


def similarity_matrix(ligand: Tensor, pocket: Tensor, tau) -> Tensor:
    """``S[i, j] = cos(pocket_i, ligand_j) / tau``."""
    return div(matmul(l2_normalize(pocket), transpose(l2_normalize(ligand))), _as_tau(tau))


def _infonce(ligand: Tensor, pocket: Tensor, tau, pocket_targets: np.ndarray) -> ContrastiveLoss:
    n = ligand.shape[0]
    if n < 2:
        raise ValueError(f"Contrastive loss needs at least 2 pairs, got {n}")
    logits = similarity_matrix(ligand, pocket, tau)
    per_pocket = cross_entropy(logits, pocket_targets, reduction="none")
    per_ligand = cross_entropy(transpose(logits), np.arange(n), reduction="none")
    total = mul(add(sum_(per_pocket), sum_(per_ligand)), 0.5)
    return ContrastiveLoss(total, per_pocket, per_ligand)


def cf_infonce(batch: ContrastiveBatch, tau) -> ContrastiveLoss:
    """Collision-aware loss, summed over the batch and halved.

    Raises:
        ValueError: If the batch has fewer than 2 pairs or ``tau <= 0``
    """
    return _infonce(batch.ligand, batch.pocket, tau, positive_targets(batch.pocket_ids, batch.affinities))


def symmetric_infonce(ligand, pocket, tau) -> ContrastiveLoss:
    """Plain symmetric InfoNCE with diagonal positives in both directions."""
    ligand, pocket = as_tensor(ligand), as_tensor(pocket)
    return _infonce(ligand, pocket, tau, np.arange(ligand.shape[0]))


def retrieval_accuracy(ligand_emb: np.ndarray, pocket_emb: np.ndarray,
                       ligand_labels: Sequence[str], pocket_labels: Sequence[str]) -> float:
    """Fraction of pockets whose most similar ligand carries the pocket's label."""
    lig = ligand_emb / np.linalg.norm(ligand_emb, axis=1, keepdims=True)
    poc = pocket_emb / np.linalg.norm(pocket_emb, axis=1, keepdims=True)
    best = np.argmax(poc @ lig.T, axis=1)
    hits = sum(ligand_labels[j] == label for j, label in zip(best, pocket_labels))
    return hits / len(pocket_labels)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContrastiveConfig:
    steps: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    init_tau: float = DEFAULT_TAU
    log_every: int = 25

    def __post_init__(self) -> None:
        if self.init_tau <= 0:
            raise ValueError("Initial temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("Batch size must be at least 2")


@dataclass
class ContrastiveResult:
    ligand_model: SetModel
    pocket_model: SetModel
    log_tau: float
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)


def _encode_rows(model: SetModel, clouds) -> Tensor:
    return concat([encode(model, cloud).x for cloud in clouds], axis=0)


def train_contrastive(pairs: Sequence[LigandPocketPair], ligand_model: SetModel, pocket_model: SetModel,
                      config: ContrastiveConfig = ContrastiveConfig(), seed: int = 0) -> ContrastiveResult:
    """Jointly train both encoders and the temperature; inputs are not modified.

    One conformer per pair is drawn uniformly at random at every step.

    Raises:
        InvariantError: If the corpus holds fewer than two distinct pockets
    """
    if len({p.pocket_id for p in pairs}) < 2:
        raise InvariantError("contrastive.distinct-pockets", "corpus needs at least two distinct pockets")
    ligand_model, pocket_model = ligand_model.copy(), pocket_model.copy()
    log_tau = Tensor(np.array(math.log(config.init_tau)), requires_grad=True,
                     dtype=ligand_model.params["cls"].dtype)
    params = ParamDict()
    for name, p in ligand_model.params.items():
        params["ligand." + name] = p
    for name, p in pocket_model.params.items():
        params["pocket." + name] = p
    params["log_tau"] = log_tau
    optimizer = Adam(params, lr=config.lr)
    rng = np.random.default_rng(seed)
    batch_size = min(config.batch_size, len(pairs))
    history: list[tuple[int, float, float]] = []

    for step in range(config.steps):
        reset_tape()
        optimizer.zero_grad()
        picks = [pairs[int(i)] for i in rng.choice(len(pairs), size=batch_size, replace=False)]
        conformers = [p.ligands[int(rng.integers(len(p.ligands)))] for p in picks]
        batch = ContrastiveBatch(
            ligand=_encode_rows(ligand_model, conformers),
            pocket=_encode_rows(pocket_model, [p.pocket for p in picks]),
            ligand_ids=[p.ligand_id for p in picks],
            pocket_ids=[p.pocket_id for p in picks],
            affinities=[p.affinity_value for p in picks],
        )
        loss = cf_infonce(batch, exp(log_tau)).total
        backward(loss)
        optimizer.step()
        tau = math.exp(float(log_tau.data))
        history.append((step, loss.item(), tau))
        logger.debug("contrastive step %d loss %.6f tau %.5f", step, history[-1][1], tau)
        if config.log_every and (step % config.log_every == 0 or step == config.steps - 1):
            logger.info("contrastive step %d/%d loss %.4f tau %.4f", step + 1, config.steps, history[-1][1], tau)

    return ContrastiveResult(ligand_model, pocket_model, float(log_tau.data), history)


def write_history_csv(path: str | Path, history: Sequence[tuple[int, float, float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["step", "loss", "tau"])
        for step, loss, tau in history:
            writer.writerow([step, repr(float(loss)), repr(float(tau))])
    return path


__all__ = [
    "DEFAULT_TAU",
    "cosine_similarity",
    "collision_sets",
    "positive_targets",
    "ContrastiveBatch",
    "ContrastiveLoss",
    "similarity_matrix",
    "cf_infonce",
    "symmetric_infonce",
    "retrieval_accuracy",
    "ContrastiveConfig",
    "ContrastiveResult",
    "train_contrastive",
    "write_history_csv",
]
