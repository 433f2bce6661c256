"""Sharded embedding store with exact top-k cosine search.

Shard layout (little endian): magic ``CSE1`` | version u32 = 1 | dim u32 |
count u64 | ``count x dim`` float32 rows.  Each ``shard-NNNNN.cse`` has a
sibling ``shard-NNNNN.ids`` holding one UTF-8 id per line.  Rows are stored
L2-normalised, so cosine similarity is a dot product.
"""

from __future__ import annotations

import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ligspace.errors import FormatError, InvariantError, MissingInputError

logger = logging.getLogger(__name__)

MAGIC = b"CSE1"
VERSION = 1
HEADER = struct.Struct("<4sIIQ")
SCAN_BLOCK = 65536


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float


@dataclass(frozen=True)
class Shard:
    vectors: np.ndarray
    ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class EmbeddingStore:
    shards: tuple[Shard, ...]
    dim: int

    @property
    def count(self) -> int:
        return sum(len(s) for s in self.shards)

    @property
    def ids(self) -> list[str]:
        return [i for s in self.shards for i in s.ids]

    def vectors(self) -> np.ndarray:
        if not self.shards:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.vstack([np.asarray(s.vectors) for s in self.shards])


# ---------------------------------------------------------------------------
# Shard files
# ---------------------------------------------------------------------------

def shard_name(index: int) -> str:
    return f"shard-{index:05d}.cse"


def ids_path(path: Path) -> Path:
    return path.with_suffix(".ids")


def write_shard(path: str | Path, vectors: np.ndarray, ids: Sequence[str]) -> Path:
    """Write one shard and its ids file; *vectors* are written as given."""
    path = Path(path)
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ValueError(f"vectors {vectors.shape} do not match {len(ids)} ids")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(HEADER.pack(MAGIC, VERSION, vectors.shape[1], vectors.shape[0]))
        handle.write(vectors.tobytes())
    ids_path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
    return path


def read_shard(path: str | Path, mmap: bool = True) -> Shard:
    """Read a shard, memory-mapping the vector block by default.

    Raises:
        MissingInputError: If the shard or its ids file is absent
        FormatError: On a bad header, a size mismatch or an id count mismatch
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"shard not found: {path}")
    size = path.stat().st_size
    with path.open("rb") as handle:
        head = handle.read(HEADER.size)
    if len(head) < HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, count = HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if size != HEADER.size + 4 * dim * count:
        raise FormatError(f"{path}: expected {HEADER.size + 4 * dim * count} bytes, found {size}")
    if count == 0:
        vectors = np.zeros((0, dim), dtype="<f4")
    elif mmap:
        vectors = np.memmap(path, dtype="<f4", mode="r", offset=HEADER.size, shape=(count, dim))
    else:
        vectors = np.fromfile(path, dtype="<f4", offset=HEADER.size).reshape(count, dim)
    side = ids_path(path)
    if not side.exists():
        raise MissingInputError(f"ids file not found: {side}")
    ids = side.read_text(encoding="utf-8").split("\n")
    if ids and ids[-1] == "":
        ids.pop()
    if len(ids) != count:
        raise FormatError(f"{side}: {len(ids)} ids for {count} vectors")
    return Shard(vectors, tuple(ids))


def normalize_rows(embeddings: np.ndarray) -> np.ndarray:
    """L2-normalise rows in float64 and return float32.

    Raises:
        InvariantError: If any row is zero or non-finite
    """
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantError("store.finite", "embeddings must be finite")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise InvariantError("store.nonzero", f"zero vector at row {int(np.flatnonzero(norms == 0)[0])}")
    return (arr / norms[:, None]).astype(np.float32)


def build_store(embeddings: np.ndarray, ids: Sequence[str], shard_size: int,
                path: str | Path | None = None) -> EmbeddingStore:
    """Normalise, split into shards of ``shard_size`` rows and optionally write them under *path*.

    Raises:
        ValueError: On count mismatch, non-positive shard size or ids containing newlines
        InvariantError: On duplicate ids or zero vectors
    """
    ids = list(ids)
    if shard_size < 1:
        raise ValueError("shard_size must be positive")
    if len(ids) != len(embeddings):
        raise ValueError(f"{len(embeddings)} embeddings but {len(ids)} ids")
    if any("\n" in i or "\r" in i for i in ids):
        raise ValueError("ids must not contain line breaks")
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise InvariantError("store.unique-ids", f"duplicate id '{dup}'")
    vectors = normalize_rows(embeddings)
    shards = []
    for index, start in enumerate(range(0, len(ids), shard_size)):
        block = vectors[start:start + shard_size]
        block_ids = tuple(ids[start:start + shard_size])
        if path is not None:
            write_shard(Path(path) / shard_name(index), block, block_ids)
        shards.append(Shard(block, block_ids))
    logger.info("Built store with %d vectors in %d shards", len(ids), len(shards))
    return EmbeddingStore(tuple(shards), int(vectors.shape[1]))


def load_store(path: str | Path, mmap: bool = True) -> EmbeddingStore:
    """Load every ``shard-*.cse`` under *path* in name order.

    Raises:
        MissingInputError: If the directory holds no shard
        FormatError: If shard dimensions differ
        InvariantError: If an id appears twice across shards
    """
    path = Path(path)
    files = sorted(path.glob("shard-*.cse")) if path.is_dir() else []
    if not files:
        raise MissingInputError(f"no shards found under {path}")
    shards = tuple(read_shard(f, mmap=mmap) for f in files)
    dims = {int(s.vectors.shape[1]) for s in shards}
    if len(dims) != 1:
        raise FormatError(f"shards under {path} have differing dims {sorted(dims)}")
    seen: set[str] = set()
    for shard in shards:
        for i in shard.ids:
            if i in seen:
                raise InvariantError("store.unique-ids", f"duplicate id '{i}'")
            seen.add(i)
    return EmbeddingStore(shards, dims.pop())


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def _scores(vectors: np.ndarray, query: np.ndarray) -> np.ndarray:
    # Row-wise float64 reduction so a row's score never depends on its shard.
    out = np.empty(vectors.shape[0], dtype=np.float64)
    for start in range(0, vectors.shape[0], SCAN_BLOCK):
        block = np.asarray(vectors[start:start + SCAN_BLOCK], dtype=np.float64)
        out[start:start + SCAN_BLOCK] = (block * query).sum(axis=1)
    return out


def _select(scores: np.ndarray, ids: Sequence[str], k: int) -> list[SearchHit]:
    if scores.size > k:
        kth = np.partition(scores, scores.size - k)[scores.size - k]
        candidates = np.flatnonzero(scores >= kth)
    else:
        candidates = np.arange(scores.size)
    ranked = sorted(candidates, key=lambda i: (-scores[i], ids[i]))[:k]
    return [SearchHit(ids[i], float(scores[i])) for i in ranked]


def _prepare_query(store: EmbeddingStore, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.size != store.dim:
        raise ValueError(f"query has dim {q.size}, store has dim {store.dim}")
    norm = np.linalg.norm(q)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("query must be a finite non-zero vector")
    return q / norm


def topk_search(store: EmbeddingStore, query, k: int, threads: int = 1) -> list[SearchHit]:
    """Exact top-*k* by cosine, ordered by score descending then id ascending.

    Raises:
        ValueError: On a dimension mismatch, ``k < 1`` or a zero query
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    q = _prepare_query(store, query)

    def scan(shard: Shard) -> list[SearchHit]:
        return _select(_scores(shard.vectors, q), shard.ids, k)

    if threads > 1 and len(store.shards) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partial = list(pool.map(scan, store.shards))
    else:
        partial = [scan(s) for s in store.shards]
    merged = [hit for hits in partial for hit in hits]
    merged.sort(key=lambda h: (-h.score, h.id))
    return merged[:k]


def measure_scan_throughput(store: EmbeddingStore, queries: int = 3, seed: int = 0) -> float:
    """Vectors scanned per second over a few random queries; informational only."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    for _ in range(queries):
        topk_search(store, rng.normal(size=store.dim), k=10)
    elapsed = max(time.perf_counter() - start, 1e-12)
    rate = queries * store.count / elapsed
    logger.info("Scanned %d vectors x %d queries at %.3g vectors/s", store.count, queries, rate)
    return rate


__all__ = [
    "MAGIC",
    "VERSION",
    "SearchHit",
    "Shard",
    "EmbeddingStore",
    "shard_name",
    "write_shard",
    "read_shard",
    "normalize_rows",
    "build_store",
    "load_store",
    "topk_search",
    "measure_scan_throughput",
]
