"""Atomic point clouds, rigid motions and JSONL ingestion of conformers and pairs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from ligspace.errors import InvariantError, MissingInputError, RecordError

logger = logging.getLogger(__name__)

MAX_ATOMIC_NUMBER = 118


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

class AtomicPointCloud:
    """Heavy-atom numbers and 3D positions (Å); immutable after construction.

    Raises:
        InvariantError: If the cloud is empty, contains hydrogen or
            out-of-range atomic numbers, has mismatched lengths or
            non-finite coordinates
    """

    __slots__ = ("atomic_numbers", "positions")

    def __init__(self, atomic_numbers: Sequence[int] | np.ndarray,
                 positions: Sequence[Sequence[float]] | np.ndarray) -> None:
        try:
            z = np.array(atomic_numbers, dtype=np.int64).reshape(-1)
        except (OverflowError, ValueError, TypeError) as exc:
            raise InvariantError("geom.atomic-number", "atomic numbers must lie in [1, 118]") from exc
        try:
            p = np.array(positions, dtype=np.float64)
        except (OverflowError, ValueError, TypeError) as exc:
            raise InvariantError("geom.finite", "coordinates must be finite numbers") from exc
        if z.size == 0:
            raise InvariantError("geom.non-empty", "point cloud has no atoms")
        if p.ndim != 2 or p.shape != (z.size, 3):
            raise InvariantError(
                "geom.shape", f"positions shape {p.shape} does not match {z.size} atoms x 3"
            )
        if np.any(z == 1):
            raise InvariantError("geom.no-hydrogen", "hydrogen atoms must be removed before encoding")
        if np.any(z < 1) or np.any(z > MAX_ATOMIC_NUMBER):
            raise InvariantError("geom.atomic-number", "atomic numbers must lie in [1, 118]")
        if not np.all(np.isfinite(p)):
            raise InvariantError("geom.finite", "coordinates must be finite")
        z.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "atomic_numbers", z)
        object.__setattr__(self, "positions", p)

    def __setattr__(self, name, value):
        raise AttributeError("AtomicPointCloud is immutable")

    def __len__(self) -> int:
        return int(self.atomic_numbers.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AtomicPointCloud):
            return NotImplemented
        return (np.array_equal(self.atomic_numbers, other.atomic_numbers)
                and np.array_equal(self.positions, other.positions))

    def __hash__(self) -> int:
        return hash((self.atomic_numbers.tobytes(), self.positions.tobytes()))

    def __repr__(self) -> str:
        return f"AtomicPointCloud(n_atoms={len(self)})"

    def to_dict(self) -> dict[str, Any]:
        return {"z": [int(v) for v in self.atomic_numbers],
                "xyz": [[float(c) for c in row] for row in self.positions]}


@dataclass(frozen=True)
class RigidMotion:
    """Orthogonal map ``R`` (det ±1) followed by translation ``t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvariantError("geom.motion-shape", "rotation must be 3x3 and translation a 3-vector")
        if np.max(np.abs(r.T @ r - np.eye(3))) >= 1e-10:
            raise InvariantError("geom.orthogonal", "rotation matrix is not orthogonal")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.rotation))

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3), np.zeros(3))


class AffinityType(str, Enum):
    IC50 = "IC50"
    KI = "Ki"
    EC50 = "EC50"
    KD = "Kd"


@dataclass(frozen=True)
class ConformerRecord:
    id: str
    smiles: str
    dataset: str
    cloud: AtomicPointCloud

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "smiles": self.smiles, "dataset": self.dataset, **self.cloud.to_dict()}


@dataclass(frozen=True)
class LigandPocketPair:
    """A pocket, one or more ligand conformers and the measured affinity."""

    ligand_id: str
    pocket_id: str
    ligands: tuple[AtomicPointCloud, ...]
    pocket: AtomicPointCloud
    affinity_value: float
    affinity_type: AffinityType

    def __post_init__(self) -> None:
        if not self.ligands:
            raise InvariantError("geom.ligand-conformers", "a pair needs at least one ligand conformer")
        if not np.isfinite(self.affinity_value):
            raise InvariantError("geom.affinity-finite", "affinity value must be finite")

    @property
    def ligand(self) -> AtomicPointCloud:
        return self.ligands[0]

    def to_dict(self) -> dict[str, Any]:
        ligand = (self.ligands[0].to_dict() if len(self.ligands) == 1
                  else [c.to_dict() for c in self.ligands])
        return {
            "ligand_id": self.ligand_id,
            "pocket_id": self.pocket_id,
            "affinity_value": float(self.affinity_value),
            "affinity_type": self.affinity_type.value,
            "ligand": ligand,
            "pocket": self.pocket.to_dict(),
        }


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def center_of_positions(cloud: AtomicPointCloud) -> np.ndarray:
    """Unweighted mean of the atom positions."""
    if len(cloud) == 0:
        raise InvariantError("geom.non-empty", "cannot center an empty cloud")
    return cloud.positions.mean(axis=0)


def apply_rigid_motion(cloud: AtomicPointCloud, motion: RigidMotion) -> AtomicPointCloud:
    """Return ``positions @ R.T + t`` with the atomic numbers untouched."""
    moved = cloud.positions @ motion.rotation.T + motion.translation
    return AtomicPointCloud(cloud.atomic_numbers, moved)


def random_rigid_motion(rng: np.random.Generator, reflect: bool = False,
                        max_translation: float = 10.0) -> RigidMotion:
    """Draw a uniformly random rotation (or improper rotation) and translation."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if (np.linalg.det(q) < 0) != reflect:
        q[:, 0] = -q[:, 0]
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidMotion(q, t)


def pairwise_sq_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def signed_volume(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> float:
    """Signed volume spanned by the tetrahedron ``a, b, c, d`` (times 6)."""
    return float(np.linalg.det(np.stack([b - a, c - a, d - a])))


# ---------------------------------------------------------------------------
# JSONL IO
# ---------------------------------------------------------------------------

_CONFORMER_KEYS = {"id", "smiles", "dataset", "z", "xyz"}
_PAIR_KEYS = {"ligand_id", "pocket_id", "affinity_value", "affinity_type", "ligand", "pocket"}


def _iter_json_lines(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    if not path.exists():
        raise MissingInputError(f"input file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, lineno, f"malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise RecordError(path, lineno, "record must be a JSON object")
            yield lineno, obj


def _check_keys(path: Path, lineno: int, obj: dict[str, Any], expected: set[str]) -> None:
    missing = expected - obj.keys()
    extra = obj.keys() - expected
    if missing:
        raise RecordError(path, lineno, f"missing keys: {sorted(missing)}")
    if extra:
        raise RecordError(path, lineno, f"unexpected keys: {sorted(extra)}")


def _cloud_from(path: Path, lineno: int, obj: Any, what: str) -> AtomicPointCloud:
    if not isinstance(obj, dict) or set(obj) != {"z", "xyz"}:
        raise RecordError(path, lineno, f"{what} must be an object with keys 'z' and 'xyz'")
    z, xyz = obj["z"], obj["xyz"]
    if not isinstance(z, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in z):
        raise RecordError(path, lineno, f"{what}.z must be a list of integers")
    if not isinstance(xyz, list) or not all(
        isinstance(row, list) and len(row) == 3
        and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in row)
        for row in xyz
    ):
        raise RecordError(path, lineno, f"{what}.xyz must be a list of [x, y, z] numbers")
    try:
        return AtomicPointCloud(z, xyz if xyz else np.zeros((0, 3)))
    except InvariantError as exc:
        raise RecordError(path, lineno, f"{what}: {exc}") from exc


def _string(path: Path, lineno: int, obj: dict[str, Any], key: str, non_empty: bool = True) -> str:
    value = obj[key]
    if not isinstance(value, str) or (non_empty and not value):
        raise RecordError(path, lineno, f"'{key}' must be a non-empty string")
    return value


def load_conformers(path: str | Path, labels: Iterable[str] | None = None) -> list[ConformerRecord]:
    """Read conformer JSONL, validating every record.

    Args:
        path: JSONL file, one conformer per line
        labels: Declared dataset labels; ``None`` accepts any label

    Raises:
        RecordError: On malformed JSON, invariant violations, unknown labels
            or duplicate ids; the message carries the line number
    """
    path = Path(path)
    allowed = set(labels) if labels is not None else None
    seen: set[str] = set()
    records: list[ConformerRecord] = []
    for lineno, obj in _iter_json_lines(path):
        _check_keys(path, lineno, obj, _CONFORMER_KEYS)
        rid = _string(path, lineno, obj, "id")
        smiles = _string(path, lineno, obj, "smiles")
        dataset = _string(path, lineno, obj, "dataset")
        if allowed is not None and dataset not in allowed:
            raise RecordError(path, lineno, f"dataset label '{dataset}' not declared")
        if rid in seen:
            raise RecordError(path, lineno, f"duplicate id '{rid}'")
        seen.add(rid)
        cloud = _cloud_from(path, lineno, {"z": obj["z"], "xyz": obj["xyz"]}, "conformer")
        records.append(ConformerRecord(rid, smiles, dataset, cloud))
    logger.debug("Loaded %d conformers from %s", len(records), path)
    return records


def load_pairs(path: str | Path) -> list[LigandPocketPair]:
    """Read ligand-pocket pair JSONL, validating every record."""
    path = Path(path)
    seen: set[tuple[str, str]] = set()
    pairs: list[LigandPocketPair] = []
    for lineno, obj in _iter_json_lines(path):
        _check_keys(path, lineno, obj, _PAIR_KEYS)
        ligand_id = _string(path, lineno, obj, "ligand_id")
        pocket_id = _string(path, lineno, obj, "pocket_id")
        value = obj["affinity_value"]
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
            raise RecordError(path, lineno, "'affinity_value' must be a finite number")
        try:
            kind = AffinityType(obj["affinity_type"])
        except ValueError as exc:
            raise RecordError(path, lineno, f"unknown affinity_type {obj['affinity_type']!r}") from exc
        raw_ligands = obj["ligand"] if isinstance(obj["ligand"], list) else [obj["ligand"]]
        if not raw_ligands:
            raise RecordError(path, lineno, "at least one ligand conformer is required")
        ligands = tuple(_cloud_from(path, lineno, item, "ligand") for item in raw_ligands)
        pocket = _cloud_from(path, lineno, obj["pocket"], "pocket")
        key = (ligand_id, pocket_id)
        if key in seen:
            raise RecordError(path, lineno, f"duplicate pair {ligand_id}/{pocket_id}")
        seen.add(key)
        pairs.append(LigandPocketPair(ligand_id, pocket_id, ligands, pocket, float(value), kind))
    logger.debug("Loaded %d pairs from %s", len(pairs), path)
    return pairs


def _write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, separators=(",", ":")) + "\n")
    return path


def save_conformers(path: str | Path, records: Iterable[ConformerRecord]) -> Path:
    return _write_jsonl(path, (r.to_dict() for r in records))


def save_pairs(path: str | Path, pairs: Iterable[LigandPocketPair]) -> Path:
    return _write_jsonl(path, (p.to_dict() for p in pairs))


__all__ = [
    "MAX_ATOMIC_NUMBER",
    "AtomicPointCloud",
    "RigidMotion",
    "AffinityType",
    "ConformerRecord",
    "LigandPocketPair",
    "center_of_positions",
    "apply_rigid_motion",
    "random_rigid_motion",
    "pairwise_sq_distances",
    "signed_volume",
    "load_conformers",
    "load_pairs",
    "save_conformers",
    "save_pairs",
]
