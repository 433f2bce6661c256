"""Circular (Morgan-style) fingerprints, Tanimoto similarity and set diversity."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ligspace.errors import FormatError, MissingInputError
from ligspace.smiles import MolGraph

DEFAULT_RADIUS = 2
DEFAULT_NBITS = 2048
_HASH_KEY = b"ligspace-morgan"


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Fixed-width bit vector; ``bits`` is a read-only boolean array."""

    bits: np.ndarray
    radius: int = DEFAULT_RADIUS

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool).reshape(-1)
        _check_width(bits.size)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.radius == other.radius and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.radius, self.bits.tobytes()))

    @property
    def width(self) -> int:
        return int(self.bits.size)

    def popcount(self) -> int:
        return int(self.bits.sum())

    def on_bits(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.bits)]

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, width: int, radius: int = DEFAULT_RADIUS) -> "Fingerprint":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        return cls(np.unpackbits(raw)[:width].astype(bool), radius)

    @classmethod
    def from_bits(cls, on: Iterable[int], width: int = DEFAULT_NBITS,
                  radius: int = DEFAULT_RADIUS) -> "Fingerprint":
        bits = np.zeros(width, dtype=bool)
        bits[list(on)] = True
        return cls(bits, radius)


def _check_width(width: int) -> None:
    if width < 1 or width & (width - 1):
        raise ValueError(f"Fingerprint width must be a power of two, got {width}")


def _hash64(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8, key=_HASH_KEY).digest(), "little")


def morgan_identifiers(graph: MolGraph, radius: int = DEFAULT_RADIUS) -> list[list[int]]:
    """Per-round 64-bit environment identifiers, ``result[r][atom]``.

    Round 0 hashes element, charge, aromaticity, degree and H count; round
    ``r`` hashes the atom's previous identifier with the sorted
    ``(bond order, neighbour identifier)`` list of round ``r - 1``.
    """
    if radius < 0:
        raise ValueError("Radius must be non-negative")
    adj = graph.neighbors()
    current = []
    for atom, nbrs in zip(graph.atoms, adj):
        payload = struct.pack(
            "<B3sb?BB", 0, atom.symbol.encode("ascii"), atom.charge, atom.aromatic, len(nbrs), atom.h_count
        )
        current.append(_hash64(payload))
    rounds = [current]
    for r in range(1, radius + 1):
        previous = rounds[-1]
        nxt = []
        for idx, nbrs in enumerate(adj):
            env = sorted((int(order), previous[j]) for j, order in nbrs)
            payload = struct.pack("<BQ", r, previous[idx]) + b"".join(
                struct.pack("<BQ", order, ident) for order, ident in env
            )
            nxt.append(_hash64(payload))
        rounds.append(nxt)
    return rounds


def morgan_fingerprint(graph: MolGraph, radius: int = DEFAULT_RADIUS,
                       nbits: int = DEFAULT_NBITS) -> Fingerprint:
    """Fold every environment identifier up to *radius* into *nbits* bits.

    Raises:
        ValueError: If *nbits* is not a power of two or *radius* is negative
    """
    _check_width(nbits)
    bits = np.zeros(nbits, dtype=bool)
    for identifiers in morgan_identifiers(graph, radius):
        for ident in identifiers:
            bits[ident & (nbits - 1)] = True
    return Fingerprint(bits, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """``|a & b| / |a | b|``; two empty fingerprints score 1.0."""
    if a.width != b.width:
        raise ValueError(f"Fingerprint widths differ: {a.width} vs {b.width}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a.bits & b.bits)) / union


def fingerprint_matrix(fps: Sequence[Fingerprint]) -> np.ndarray:
    """Stack fingerprints into an ``(n, width)`` float32 0/1 matrix."""
    if not fps:
        return np.zeros((0, 0), dtype=np.float32)
    width = fps[0].width
    if any(fp.width != width for fp in fps):
        raise ValueError("Fingerprint widths differ")
    return np.stack([fp.bits for fp in fps]).astype(np.float32)


def tanimoto_matrix(left: Sequence[Fingerprint], right: Sequence[Fingerprint]) -> np.ndarray:
    """All-pairs Tanimoto similarity, shape ``(len(left), len(right))``."""
    if not left or not right:
        return np.zeros((len(left), len(right)))
    a = fingerprint_matrix(left)
    b = fingerprint_matrix(right)
    if a.size and b.size and a.shape[1] != b.shape[1]:
        raise ValueError(f"Fingerprint widths differ: {a.shape[1]} vs {b.shape[1]}")
    inter = (a @ b.T).astype(np.float64)
    union = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    return sim


def diversity(fps: Sequence[Fingerprint]) -> float:
    """One minus the mean pairwise Tanimoto over all unordered pairs.

    Raises:
        ValueError: If fewer than two fingerprints are given
    """
    if len(fps) < 2:
        raise ValueError("Diversity needs at least two fingerprints")
    sims = [tanimoto(a, b) for a, b in combinations(fps, 2)]
    return 1.0 - float(np.mean(sims))


def write_fingerprints(path: str | Path, ids: Sequence[str], fps: Sequence[Fingerprint]) -> Path:
    """Write tab-separated ``id, width, radius, hex`` lines."""
    if len(ids) != len(fps):
        raise ValueError("ids and fingerprints differ in length")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for fid, fp in zip(ids, fps):
            handle.write(f"{fid}\t{fp.width}\t{fp.radius}\t{fp.to_hex()}\n")
    return path


def read_fingerprints(path: str | Path) -> tuple[list[str], list[Fingerprint]]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"fingerprint file not found: {path}")
    ids: list[str] = []
    fps: list[Fingerprint] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected id, width, radius, hex")
        fid, width, radius, hexbits = parts
        try:
            fp = Fingerprint.from_hex(hexbits, int(width), int(radius))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if fp.width != int(width):
            raise FormatError(f"{path}:{lineno}: {len(hexbits) * 4} hex bits for width {width}")
        ids.append(fid)
        fps.append(fp)
    return ids, fps


__all__ = [
    "DEFAULT_RADIUS",
    "DEFAULT_NBITS",
    "Fingerprint",
    "morgan_identifiers",
    "morgan_fingerprint",
    "tanimoto",
    "fingerprint_matrix",
    "tanimoto_matrix",
    "diversity",
    "write_fingerprints",
    "read_fingerprints",
]
