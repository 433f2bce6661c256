"""Scalable equivariant transformer over atomic point clouds.

A virtual class atom is placed at the coordinate mean; its final scalar
state is the structure embedding ``h`` and the projection head maps it to
``x``.  Geometry enters only through squared distances and relative
positions, and vector features only through channel mixing, invariant
gates and invariant dot products, so ``h``/``x`` are invariant and the
vector stream is equivariant under rotations, reflections and translations.

Vector features are laid out component-major, shape ``(3, N + 1, c)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ligspace.checkpoint import load_checkpoint, load_sidecar, save_checkpoint
from ligspace.errors import InvariantError, ShapeError
from ligspace.geom import AtomicPointCloud, pairwise_sq_distances
from ligspace.nn import ParamDict, affine_layernorm, glorot, linear, mlp
from ligspace.optim import Adam
from ligspace.tensor import (
    Tensor,
    add,
    backward,
    concat,
    cross_entropy,
    div,
    embedding_lookup,
    exp,
    matmul,
    mean,
    mul,
    no_grad,
    reset_tape,
    scale_rows,
    sigmoid,
    softmax_lastdim,
    sqrt,
    sub,
    sum_,
    transpose,
)

logger = logging.getLogger(__name__)

MASK_ID = 0
N_ATOM_TYPES = 119
DEFAULT_ALPHABET = (5, 6, 7, 8, 9, 15, 16, 17, 35, 53)


@dataclass(frozen=True)
class SetConfig:
    layers: int = 4
    heads: int = 4
    dim: int = 128
    vector_channels: int = 8
    proj_dim: int = 256
    max_atoms: int = 256
    modality: str = "ligand"
    alphabet: tuple[int, ...] = DEFAULT_ALPHABET
    mlp_ratio: int = 2
    init_length_scale: float = 0.3

    def __post_init__(self) -> None:
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.modality not in ("ligand", "pocket"):
            raise ValueError("Modality must be 'ligand' or 'pocket'")
        if min(self.layers, self.heads, self.vector_channels, self.proj_dim, self.max_atoms) < 1:
            raise ValueError("Encoder sizes must be positive")
        if not self.alphabet or len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("Alphabet must be a non-empty set of atomic numbers")
        object.__setattr__(self, "alphabet", tuple(int(z) for z in self.alphabet))

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["alphabet"] = list(self.alphabet)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SetConfig":
        data = dict(data)
        if "alphabet" in data:
            data["alphabet"] = tuple(data["alphabet"])
        return cls(**data)


@dataclass
class SetModel:
    """Configuration plus parameters of one encoder branch."""

    config: SetConfig
    params: ParamDict

    def copy(self) -> "SetModel":
        return SetModel(self.config, self.params.copy())


@dataclass
class EncoderOutput:
    """Class embedding ``h`` (1 x d), projection ``x`` (1 x d'), per-atom states."""

    h: Tensor
    x: Tensor
    scalars: Tensor
    vectors: Tensor
    attention: list[np.ndarray] = field(default_factory=list)

    @property
    def embedding(self) -> np.ndarray:
        return self.x.data[0].copy()

    def vector_array(self) -> np.ndarray:
        """Per-atom vectors as ``(N + 1, c, 3)``."""
        return np.transpose(self.vectors.data, (1, 2, 0)).copy()


@dataclass(frozen=True)
class MlmSample:
    """A cloud with 20% of its atoms selected for prediction."""

    cloud: AtomicPointCloud
    selected: np.ndarray
    kinds: tuple[str, ...]
    targets: np.ndarray
    corrupted: np.ndarray

    def counts(self) -> dict[str, int]:
        return {kind: self.kinds.count(kind) for kind in ("masked", "random", "unchanged")}


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def init_encoder(config: SetConfig, seed: int = 0) -> SetModel:
    rng = np.random.default_rng(seed)
    d, c, heads = config.dim, config.vector_channels, config.heads
    p = ParamDict()
    p.add("atom_embedding", rng.normal(0.0, 1.0, size=(N_ATOM_TYPES, d)))
    p.add("cls", rng.normal(0.0, 1.0, size=(1, d)))
    for layer in range(config.layers):
        pre = f"layer{layer}."
        p.add(pre + "wq", glorot(rng, d, d))
        p.add(pre + "wk", glorot(rng, d, d))
        p.add(pre + "wv", glorot(rng, d, d))
        p.add(pre + "wv_vec", glorot(rng, c, heads * c))
        p.add(pre + "rho", np.full(heads, math.log(config.init_length_scale)))
        p.add(pre + "w_vec", np.full(heads, 0.1))
        p.add(pre + "u", rng.normal(0.0, 1.0, size=(heads, c)))
        p.add(pre + "wo", glorot(rng, d, d))
        p.add(pre + "bo", np.zeros(d))
        p.add(pre + "ln1_g", np.ones(d))
        p.add(pre + "ln1_b", np.zeros(d))
        p.add(pre + "mlp_w1", glorot(rng, d, config.mlp_ratio * d))
        p.add(pre + "mlp_b1", np.zeros(config.mlp_ratio * d))
        p.add(pre + "mlp_w2", glorot(rng, config.mlp_ratio * d, d))
        p.add(pre + "mlp_b2", np.zeros(d))
        p.add(pre + "ln2_g", np.ones(d))
        p.add(pre + "ln2_b", np.zeros(d))
        p.add(pre + "wo_vec", glorot(rng, heads * c, c))
        p.add(pre + "wmix_vec", glorot(rng, c, c))
        p.add(pre + "wgate", glorot(rng, d, c))
        p.add(pre + "bgate", np.zeros(c))
    p.add("mlm_w", glorot(rng, d, len(config.alphabet)))
    p.add("mlm_b", np.zeros(len(config.alphabet)))
    p.add("proj_w1", glorot(rng, d, d))
    p.add("proj_b1", np.zeros(d))
    p.add("proj_w2", glorot(rng, d, config.proj_dim))
    p.add("proj_b2", np.zeros(config.proj_dim))
    return SetModel(config, p)


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def _attention_block(
    params: ParamDict,
    config: SetConfig,
    layer: int,
    s: Tensor,
    v: Tensor,
    sq_dist: Tensor,
    pos: Tensor,
    trace: list[np.ndarray] | None,
) -> tuple[Tensor, Tensor]:
    pre = f"layer{layer}."
    dh, c = config.head_dim, config.vector_channels
    q = matmul(s, params[pre + "wq"])
    k = matmul(s, params[pre + "wk"])
    val = matmul(s, params[pre + "wv"])
    val_vec = matmul(v, params[pre + "wv_vec"])
    vec_dots = sum_(matmul(v, transpose(v)), axis=0)
    length2 = exp(mul(params[pre + "rho"], 2.0))
    scale = 1.0 / math.sqrt(dh)

    heads_s, heads_v = [], []
    for h in range(config.heads):
        cols = slice(h * dh, (h + 1) * dh)
        logits = mul(matmul(q[:, cols], transpose(k[:, cols])), scale)
        logits = sub(logits, mul(sq_dist, length2[h]))
        logits = add(logits, mul(vec_dots, params[pre + "w_vec"][h]))
        attn = softmax_lastdim(logits)
        if trace is not None:
            trace.append(attn.data.copy())
        heads_s.append(matmul(attn, val[:, cols]))
        mixed = matmul(attn, val_vec[:, :, h * c:(h + 1) * c])
        rel = sub(matmul(attn, pos), pos)
        heads_v.append(add(mixed, matmul(rel, params[pre + "u"][h:h + 1])))

    attn_s = linear(concat(heads_s, axis=1), params[pre + "wo"], params[pre + "bo"])
    s = affine_layernorm(add(s, attn_s), params[pre + "ln1_g"], params[pre + "ln1_b"])
    ff = mlp(s, params[pre + "mlp_w1"], params[pre + "mlp_b1"], params[pre + "mlp_w2"], params[pre + "mlp_b2"])
    s = affine_layernorm(add(s, ff), params[pre + "ln2_g"], params[pre + "ln2_b"])

    v = add(v, matmul(concat(heads_v, axis=2), params[pre + "wo_vec"]))
    gate = sigmoid(linear(s, params[pre + "wgate"], params[pre + "bgate"]))
    u = mul(matmul(v, params[pre + "wmix_vec"]), gate)
    norms = sqrt(add(sum_(mul(u, u), axis=0), 1e-12))
    inv = div(1.0, add(mean(norms, axis=-1), 1e-6))
    return s, scale_rows(u, inv)


def _forward(model: SetModel, atom_ids: np.ndarray, positions: np.ndarray,
             trace: list[np.ndarray] | None = None) -> EncoderOutput:
    config, params = model.config, model.params
    n = int(atom_ids.size)
    if n > config.max_atoms:
        raise InvariantError("encoder.max-atoms", f"cloud has {n} atoms, limit is {config.max_atoms}")
    dtype = params["cls"].dtype
    centered = positions - positions.mean(axis=0)
    coords = np.vstack([np.zeros((1, 3)), centered])
    sq_dist = Tensor._wrap(pairwise_sq_distances(coords).astype(dtype))
    pos = Tensor._wrap(np.ascontiguousarray(coords.T[:, :, None], dtype=dtype))

    s = concat([params["cls"], embedding_lookup(params["atom_embedding"], atom_ids)], axis=0)
    v = Tensor._wrap(np.zeros((3, n + 1, config.vector_channels), dtype=dtype))
    for layer in range(config.layers):
        s, v = _attention_block(params, config, layer, s, v, sq_dist, pos, trace)

    h = s[0:1]
    x = project(params, h)
    return EncoderOutput(h=h, x=x, scalars=s, vectors=v, attention=trace if trace is not None else [])


def encode(model: SetModel, cloud: AtomicPointCloud, trace: bool = False) -> EncoderOutput:
    """Encode *cloud*; ``h`` is the class-atom state and ``x = g(h)``.

    Raises:
        InvariantError: If the cloud exceeds ``max_atoms``
        NonFiniteError: If any activation is NaN or Inf
    """
    return _forward(model, cloud.atomic_numbers, cloud.positions, [] if trace else None)


def project(params: ParamDict, h: Tensor) -> Tensor:
    """One-hidden-layer projection head ``g``."""
    if h.shape[-1] != params["proj_w1"].shape[0]:
        raise ShapeError(f"projection expects dim {params['proj_w1'].shape[0]}, got {h.shape[-1]}")
    return mlp(h, params["proj_w1"], params["proj_b1"], params["proj_w2"], params["proj_b2"])


def embed_clouds(model: SetModel, clouds: Sequence[AtomicPointCloud], threads: int = 1) -> np.ndarray:
    """Projections of *clouds* as an ``(n, d')`` array, in input order."""

    def one(cloud: AtomicPointCloud) -> np.ndarray:
        with no_grad():
            return encode(model, cloud).embedding

    if not clouds:
        return np.zeros((0, model.config.proj_dim))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, clouds))
    else:
        rows = [one(c) for c in clouds]
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Masked-atom pretraining
# ---------------------------------------------------------------------------

def _split_counts(k: int) -> tuple[int, int, int]:
    """80/10/10 split of *k* by largest remainder; ties favour masked, random."""
    shares = (8, 1, 1)
    floors = [k * s // 10 for s in shares]
    remainders = [k * s % 10 for s in shares]
    left = k - sum(floors)
    for idx in sorted(range(3), key=lambda i: (-remainders[i], i))[:left]:
        floors[idx] += 1
    return floors[0], floors[1], floors[2]


def mlm_corrupt(cloud: AtomicPointCloud, seed: int,
                alphabet: Sequence[int] = DEFAULT_ALPHABET) -> MlmSample:
    """Select ``round(0.2 N)`` atoms (at least one) and corrupt them 80/10/10."""
    n = len(cloud)
    rng = np.random.default_rng(seed)
    k = max(1, (n * 2 + 5) // 10)
    selected = np.sort(rng.choice(n, size=k, replace=False))
    n_mask, n_random, _ = _split_counts(k)
    order = rng.permutation(k)
    kinds = ["unchanged"] * k
    for rank, pos in enumerate(order):
        if rank < n_mask:
            kinds[pos] = "masked"
        elif rank < n_mask + n_random:
            kinds[pos] = "random"
    corrupted = cloud.atomic_numbers.copy()
    for pos, atom in enumerate(selected):
        if kinds[pos] == "masked":
            corrupted[atom] = MASK_ID
        elif kinds[pos] == "random":
            corrupted[atom] = int(rng.choice(np.asarray(alphabet)))
    targets = cloud.atomic_numbers[selected].copy()
    return MlmSample(cloud, selected, tuple(kinds), targets, corrupted)


def mlm_loss(model: SetModel, sample: MlmSample) -> Tensor:
    """Mean cross-entropy of the masked-atom head over the selected atoms.

    Raises:
        ValueError: If nothing is selected
        InvariantError: If a target atom type is outside the model alphabet
    """
    if sample.selected.size == 0:
        raise ValueError("MLM sample has no selected atoms")
    lookup = {z: i for i, z in enumerate(model.config.alphabet)}
    try:
        target_ids = np.array([lookup[int(z)] for z in sample.targets], dtype=np.int64)
    except KeyError as exc:
        raise InvariantError("encoder.alphabet", f"atom type {exc.args[0]} not in alphabet") from exc
    out = _forward(model, sample.corrupted, sample.cloud.positions)
    rows = out.scalars[sample.selected + 1]
    logits = linear(rows, model.params["mlm_w"], model.params["mlm_b"])
    return cross_entropy(logits, target_ids)


@dataclass(frozen=True)
class PretrainSettings:
    steps: int = 500
    batch_size: int = 8
    lr: float = 1e-3
    log_every: int = 50


@dataclass
class PretrainResult:
    model: SetModel
    history: list[float]


def pretrain_encoder(clouds: Sequence[AtomicPointCloud], config: SetConfig, seed: int,
                     settings: PretrainSettings = PretrainSettings(), dtype=np.float64) -> PretrainResult:
    """Train a fresh encoder with the masked-atom objective.

    Raises:
        ValueError: If the corpus is empty
        InvariantError: If a cloud holds an atom type outside ``config.alphabet``
    """
    if not clouds:
        raise ValueError("Pretraining corpus is empty")
    known = np.asarray(config.alphabet)
    for index, cloud in enumerate(clouds):
        unknown = np.setdiff1d(cloud.atomic_numbers, known)
        if unknown.size:
            raise InvariantError(
                "encoder.alphabet", f"cloud {index} has atom type {int(unknown[0])} not in alphabet"
            )
    model = init_encoder(config, seed)
    if dtype != np.float64:
        model = SetModel(config, model.params.astype(dtype))
    optimizer = Adam(model.params, lr=settings.lr)
    rng = np.random.default_rng(seed)
    history: list[float] = []
    for step in range(settings.steps):
        reset_tape()
        optimizer.zero_grad()
        picks = rng.choice(len(clouds), size=settings.batch_size, replace=len(clouds) < settings.batch_size)
        total = None
        for idx in picks:
            sample = mlm_corrupt(clouds[int(idx)], int(rng.integers(2**62)), config.alphabet)
            term = mlm_loss(model, sample)
            total = term if total is None else add(total, term)
        loss = mul(total, 1.0 / len(picks))
        backward(loss)
        optimizer.step()
        history.append(loss.item())
        logger.debug("pretrain step %d loss %.6f", step, history[-1])
        if settings.log_every and (step % settings.log_every == 0 or step == settings.steps - 1):
            logger.info("pretrain step %d/%d loss %.4f", step + 1, settings.steps, history[-1])
    return PretrainResult(model, history)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_encoder(path: str | Path, model: SetModel) -> Path:
    return save_checkpoint(path, model.params, {"kind": "set-encoder", **model.config.to_dict()})


def load_encoder(path: str | Path, dtype=np.float64) -> SetModel:
    meta = load_sidecar(path)
    meta.pop("kind", None)
    params = load_checkpoint(path)
    if dtype != np.float64:
        params = params.astype(dtype)
    return SetModel(SetConfig.from_dict(meta), params)


__all__ = [
    "MASK_ID",
    "DEFAULT_ALPHABET",
    "SetConfig",
    "SetModel",
    "EncoderOutput",
    "MlmSample",
    "init_encoder",
    "encode",
    "project",
    "embed_clouds",
    "mlm_corrupt",
    "mlm_loss",
    "PretrainSettings",
    "PretrainResult",
    "pretrain_encoder",
    "save_encoder",
    "load_encoder",
]
