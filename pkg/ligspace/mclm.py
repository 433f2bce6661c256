"""Dataset-token conditioned SMILES decoder.

The input sequence is ``[dataset token, x W_P + b_P, s_1, ..., s_{m-1}]``
and the model predicts ``s_1 ... s_m`` (``s_m`` is EOS).  The dataset token
sits at position 0 and doubles as the start of sequence.  A reserved
``<none>`` dataset token, trained by token dropout, gives the unconditioned
mode used when comparing generation with and without a dataset token.
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
from ligspace.encoder import SetModel, embed_clouds
from ligspace.errors import ShapeError, SmilesError
from ligspace.geom import ConformerRecord
from ligspace.nn import ParamDict, affine_layernorm, glorot, linear, mlp
from ligspace.optim import Adam
from ligspace.smiles import detokenize, is_valid_smiles, tokenize_smiles
from ligspace.tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    embedding_lookup,
    matmul,
    mul,
    no_grad,
    reset_tape,
    softmax_lastdim,
    transpose,
)

logger = logging.getLogger(__name__)

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
NONE_LABEL = "<none>"
_MASK_VALUE = -1e9


def dataset_token(label: str) -> str:
    return f"[ds:{label}]"


class Vocab:
    """Dense token ids: specials, then dataset tokens, then SMILES tokens."""

    def __init__(self, labels: Sequence[str], smiles_tokens: Sequence[str]) -> None:
        labels = [label for label in dict.fromkeys(labels) if label != NONE_LABEL]
        self.labels = tuple(labels)
        self.tokens: tuple[str, ...] = (
            (PAD, BOS, EOS)
            + tuple(dataset_token(label) for label in (*labels, NONE_LABEL))
            + tuple(sorted(set(smiles_tokens)))
        )
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("Dataset tokens collide with SMILES tokens")
        self.pad_id, self.bos_id, self.eos_id = 0, 1, 2

    @classmethod
    def build(cls, smiles: Sequence[str], labels: Sequence[str]) -> "Vocab":
        """Collect tokens from every SMILES that tokenizes; others are ignored."""
        found: set[str] = set()
        for text in smiles:
            try:
                found.update(tokenize_smiles(text))
            except SmilesError:
                continue
        return cls(labels, sorted(found))

    def __len__(self) -> int:
        return len(self.tokens)

    def dataset_id(self, label: str | None) -> int:
        label = NONE_LABEL if label is None else label
        try:
            return self.index[dataset_token(label)]
        except KeyError:
            raise ValueError(f"Unknown dataset label '{label}'") from None

    @property
    def special_ids(self) -> list[int]:
        """Ids that may never be generated: PAD, BOS and every dataset token."""
        return [i for i, tok in enumerate(self.tokens) if tok in (PAD, BOS) or tok.startswith("[ds:")]

    def encode(self, smiles: str) -> list[int]:
        """Token ids of *smiles* followed by EOS.

        Raises:
            SmilesError: If a token is not in the vocabulary
        """
        ids = []
        offset = 0
        for tok in tokenize_smiles(smiles):
            if tok not in self.index:
                raise SmilesError(f"token '{tok}' not in vocabulary", offset)
            ids.append(self.index[tok])
            offset += len(tok)
        return ids + [self.eos_id]

    def decode(self, ids: Sequence[int]) -> str:
        return detokenize([self.tokens[i] for i in ids if i != self.eos_id])

    def to_dict(self) -> dict[str, Any]:
        return {"labels": list(self.labels), "tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Vocab":
        n_special = 3 + len(data["labels"]) + 1
        vocab = cls(data["labels"], data["tokens"][n_special:])
        if list(vocab.tokens) != list(data["tokens"]):
            raise ValueError("Stored vocabulary does not match its labels")
        return vocab


@dataclass(frozen=True)
class MclmConfig:
    layers: int = 4
    heads: int = 4
    hidden: int = 256
    cond_dim: int = 256
    max_len: int = 96
    mlp_ratio: int = 4
    token_dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} is not divisible by heads {self.heads}")
        if not 0.0 <= self.token_dropout < 1.0:
            raise ValueError("token_dropout must lie in [0, 1)")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")


@dataclass
class MclmModel:
    config: MclmConfig
    vocab: Vocab
    params: ParamDict


@dataclass(frozen=True)
class GenRequest:
    """One generation job; ``dataset=None`` selects the ``<none>`` token."""

    x: np.ndarray
    dataset: str | None
    temperature: float = 1.0
    max_len: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class Generation:
    smiles: str
    tokens: tuple[str, ...]
    token_ids: tuple[int, ...]
    finished: bool

    @property
    def valid(self) -> bool:
        return is_valid_smiles(self.smiles)


def init_mclm(config: MclmConfig, vocab: Vocab, seed: int = 0) -> MclmModel:
    rng = np.random.default_rng(seed)
    d, v = config.hidden, len(vocab)
    p = ParamDict()
    p.add("tok_emb", rng.normal(0.0, 0.02, size=(v, d)))
    p.add("pos_emb", rng.normal(0.0, 0.02, size=(config.max_len + 2, d)))
    p.add("w_p", glorot(rng, config.cond_dim, d))
    p.add("b_p", np.zeros(d))
    for layer in range(config.layers):
        pre = f"block{layer}."
        p.add(pre + "ln1_g", np.ones(d))
        p.add(pre + "ln1_b", np.zeros(d))
        for name in ("wq", "wk", "wv", "wo"):
            p.add(pre + name, glorot(rng, d, d))
        p.add(pre + "bo", np.zeros(d))
        p.add(pre + "ln2_g", np.ones(d))
        p.add(pre + "ln2_b", np.zeros(d))
        p.add(pre + "mlp_w1", glorot(rng, d, config.mlp_ratio * d))
        p.add(pre + "mlp_b1", np.zeros(config.mlp_ratio * d))
        p.add(pre + "mlp_w2", glorot(rng, config.mlp_ratio * d, d))
        p.add(pre + "mlp_b2", np.zeros(d))
    p.add("lnf_g", np.ones(d))
    p.add("lnf_b", np.zeros(d))
    p.add("head_w", glorot(rng, d, v))
    p.add("head_b", np.zeros(v))
    return MclmModel(config, vocab, p)


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def assemble_input(model: MclmModel, dataset: str | None, x, token_ids: Sequence[int]) -> Tensor:
    """``[emb(ds), x W_P + b_P, emb(s_1), ..., emb(s_n)]``, shape ``(n + 2, hidden)``.

    Raises:
        ValueError: For an unknown dataset label
        ShapeError: If *x* does not have ``cond_dim`` entries or a token id is invalid
    """
    params = model.params
    ds_id = model.vocab.dataset_id(dataset)
    x = as_tensor(x, like=params["w_p"])
    if x.size != model.config.cond_dim:
        raise ShapeError(f"conditioning embedding must have {model.config.cond_dim} entries, got {x.size}")
    if x.shape != (1, model.config.cond_dim):
        x = x.reshape(1, model.config.cond_dim)
    parts = [embedding_lookup(params["tok_emb"], [ds_id]), linear(x, params["w_p"], params["b_p"])]
    if len(token_ids):
        parts.append(embedding_lookup(params["tok_emb"], list(token_ids)))
    return concat(parts, axis=0)


def _causal_mask(length: int, dtype) -> Tensor:
    return Tensor._wrap(np.triu(np.full((length, length), _MASK_VALUE, dtype=dtype), k=1))


def decode_logits(model: MclmModel, inputs: Tensor) -> Tensor:
    """Run the causal decoder over assembled inputs; returns ``(T, |V|)`` logits."""
    config, params = model.config, model.params
    length = inputs.shape[0]
    if length > config.max_len + 2:
        raise ShapeError(f"sequence of {length} positions exceeds max_len {config.max_len} + 2")
    d, heads = config.hidden, config.heads
    dh = d // heads
    mask = _causal_mask(length, params["tok_emb"].dtype)
    h = add(inputs, params["pos_emb"][0:length])
    for layer in range(config.layers):
        pre = f"block{layer}."
        a = affine_layernorm(h, params[pre + "ln1_g"], params[pre + "ln1_b"])
        q, k, v = (matmul(a, params[pre + n]) for n in ("wq", "wk", "wv"))
        outs = []
        for head in range(heads):
            cols = slice(head * dh, (head + 1) * dh)
            scores = add(mul(matmul(q[:, cols], transpose(k[:, cols])), 1.0 / math.sqrt(dh)), mask)
            outs.append(matmul(softmax_lastdim(scores), v[:, cols]))
        h = add(h, linear(concat(outs, axis=1), params[pre + "wo"], params[pre + "bo"]))
        a = affine_layernorm(h, params[pre + "ln2_g"], params[pre + "ln2_b"])
        h = add(h, mlp(a, params[pre + "mlp_w1"], params[pre + "mlp_b1"],
                       params[pre + "mlp_w2"], params[pre + "mlp_b2"]))
    h = affine_layernorm(h, params["lnf_g"], params["lnf_b"])
    return linear(h, params["head_w"], params["head_b"])


def nll_loss(model: MclmModel, batch: Sequence[tuple[str | None, Any, Sequence[int]]]) -> Tensor:
    """Mean token negative log-likelihood over a batch of ``(dataset, x, ids)``.

    ``ids`` are the SMILES token ids ending in EOS.  The two conditioning
    positions are never targets.

    Raises:
        ValueError: On an empty batch or a sequence without trailing EOS
    """
    if not batch:
        raise ValueError("nll_loss needs a non-empty batch")
    total, count = None, 0
    for dataset, x, ids in batch:
        ids = list(ids)
        if not ids or ids[-1] != model.vocab.eos_id:
            raise ValueError("every target sequence must end with EOS")
        logits = decode_logits(model, assemble_input(model, dataset, x, ids[:-1]))
        term = cross_entropy(logits[1:], ids, reduction="sum", ignore_index=model.vocab.pad_id)
        total = term if total is None else add(total, term)
        count += sum(1 for i in ids if i != model.vocab.pad_id)
    return mul(total, 1.0 / count)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MclmSettings:
    steps: int = 500
    batch_size: int = 16
    lr: float = 1e-3
    log_every: int = 50


@dataclass
class MclmResult:
    model: MclmModel
    history: list[float] = field(default_factory=list)
    skipped: int = 0


def train_mclm(records: Sequence[ConformerRecord], encoder: SetModel, config: MclmConfig = MclmConfig(),
               settings: MclmSettings = MclmSettings(), seed: int = 0, threads: int = 1) -> MclmResult:
    """Train a decoder on frozen-encoder embeddings of *records*.

    Records whose SMILES does not tokenize, or is longer than ``max_len``
    tokens, are skipped and counted.

    Raises:
        ValueError: If no usable record remains
        ShapeError: If the encoder projection size differs from ``cond_dim``
    """
    if encoder.config.proj_dim != config.cond_dim:
        raise ShapeError(f"encoder projects to {encoder.config.proj_dim}, decoder expects {config.cond_dim}")
    labels = sorted({r.dataset for r in records})
    vocab = Vocab.build([r.smiles for r in records], labels)
    usable: list[tuple[ConformerRecord, list[int]]] = []
    skipped = 0
    for record in records:
        try:
            ids = vocab.encode(record.smiles)
        except SmilesError as exc:
            skipped += 1
            logger.warning("Skipping %s: %s (%d skipped so far)", record.id, exc, skipped)
            continue
        if len(ids) > config.max_len:
            skipped += 1
            logger.warning("Skipping %s: %d tokens exceed max_len (%d skipped so far)", record.id, len(ids), skipped)
            continue
        usable.append((record, ids))
    if not usable:
        raise ValueError("No tokenizable SMILES in the training corpus")

    embeddings = embed_clouds(encoder, [r.cloud for r, _ in usable], threads=threads)
    model = init_mclm(config, vocab, seed)
    optimizer = Adam(model.params, lr=settings.lr)
    rng = np.random.default_rng(seed)
    batch_size = min(settings.batch_size, len(usable))
    history: list[float] = []
    for step in range(settings.steps):
        reset_tape()
        optimizer.zero_grad()
        batch = []
        for idx in rng.choice(len(usable), size=batch_size, replace=False):
            record, ids = usable[int(idx)]
            label = NONE_LABEL if rng.random() < config.token_dropout else record.dataset
            batch.append((label, embeddings[int(idx)], ids))
        loss = nll_loss(model, batch)
        backward(loss)
        optimizer.step()
        history.append(loss.item())
        logger.debug("mclm step %d loss %.6f", step, history[-1])
        if settings.log_every and (step % settings.log_every == 0 or step == settings.steps - 1):
            logger.info("mclm step %d/%d loss %.4f", step + 1, settings.steps, history[-1])
    return MclmResult(model, history, skipped)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def generate(model: MclmModel, request: GenRequest) -> Generation:
    """Sample one SMILES; temperature 0 takes the argmax (lowest id on ties)."""
    rng = np.random.default_rng(request.seed)
    vocab = model.vocab
    blocked = vocab.special_ids
    steps = min(request.max_len, model.config.max_len)
    ids: list[int] = []
    finished = False
    with no_grad():
        for _ in range(steps):
            logits = decode_logits(model, assemble_input(model, request.dataset, request.x, ids)).data[-1]
            logits = logits.astype(np.float64)
            logits[blocked] = -np.inf
            if request.temperature == 0:
                nxt = int(np.argmax(logits))
            else:
                # shifted logits are <= 0, so tiny temperatures only underflow
                with np.errstate(over="ignore"):
                    scaled = (logits - logits.max()) / request.temperature
                probs = np.exp(scaled)
                probs /= probs.sum()
                nxt = int(rng.choice(len(probs), p=probs))
            if nxt == vocab.eos_id:
                finished = True
                break
            ids.append(nxt)
    tokens = tuple(vocab.tokens[i] for i in ids)
    return Generation(detokenize(list(tokens)), tokens, tuple(ids), finished)


def generate_batch(model: MclmModel, requests: Sequence[GenRequest], threads: int = 1) -> list[Generation]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda r: generate(model, r), requests))
    return [generate(model, r) for r in requests]


def validity(smiles: Sequence[str]) -> float:
    """Fraction of strings that parse."""
    if not smiles:
        return 0.0
    return sum(is_valid_smiles(s) for s in smiles) / len(smiles)


def uniqueness(smiles: Sequence[str]) -> float:
    """Distinct valid strings over valid strings (0.0 when none are valid)."""
    valid = [s for s in smiles if is_valid_smiles(s)]
    return len(set(valid)) / len(valid) if valid else 0.0


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_mclm(path: str | Path, model: MclmModel) -> Path:
    meta = {"kind": "mclm", "config": asdict(model.config), "vocab": model.vocab.to_dict()}
    return save_checkpoint(path, model.params, meta)


def load_mclm(path: str | Path) -> MclmModel:
    meta = load_sidecar(path)
    if meta.get("kind") != "mclm":
        raise ValueError(f"{path} is not a decoder checkpoint")
    return MclmModel(MclmConfig(**meta["config"]), Vocab.from_dict(meta["vocab"]), load_checkpoint(path))


__all__ = [
    "PAD",
    "BOS",
    "EOS",
    "NONE_LABEL",
    "Vocab",
    "MclmConfig",
    "MclmModel",
    "GenRequest",
    "Generation",
    "init_mclm",
    "assemble_input",
    "decode_logits",
    "nll_loss",
    "MclmSettings",
    "MclmResult",
    "train_mclm",
    "generate",
    "generate_batch",
    "validity",
    "uniqueness",
    "save_mclm",
    "load_mclm",
]
