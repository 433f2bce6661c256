import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ligspace.errors import InvariantError, MissingInputError, RecordError
from ligspace.geom import (
    AffinityType,
    AtomicPointCloud,
    ConformerRecord,
    LigandPocketPair,
    RigidMotion,
    apply_rigid_motion,
    center_of_positions,
    load_conformers,
    load_pairs,
    pairwise_sq_distances,
    random_rigid_motion,
    save_conformers,
    save_pairs,
    signed_volume,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _cloud(rng, n=6):
    return AtomicPointCloud(rng.choice([6, 7, 8, 16], size=n), rng.normal(scale=2.0, size=(n, 3)))


def test_center_midpoint():
    """Two atoms are centred at their midpoint."""
    cloud = AtomicPointCloud([6, 6], [[0, 0, 0], [2, 0, 0]])
    np.testing.assert_array_equal(center_of_positions(cloud), [1.0, 0.0, 0.0])


def test_center_single_atom():
    """A single atom is its own centre."""
    cloud = AtomicPointCloud([8], [[5, -1, 2]])
    np.testing.assert_array_equal(center_of_positions(cloud), [5.0, -1.0, 2.0])


@given(seeds)
def test_center_follows_translation(seed):
    """Translating a cloud moves its centre by the same vector."""
    rng = np.random.default_rng(seed)
    cloud = _cloud(rng)
    t = rng.uniform(-10, 10, size=3)
    moved = apply_rigid_motion(cloud, RigidMotion(np.eye(3), t))
    np.testing.assert_allclose(center_of_positions(moved), center_of_positions(cloud) + t, atol=1e-12)


def test_identity_motion():
    """The identity motion leaves the cloud unchanged."""
    cloud = _cloud(np.random.default_rng(1))
    assert apply_rigid_motion(cloud, RigidMotion.identity()) == cloud


@given(seeds, st.booleans())
def test_motion_preserves_distances(seed, reflect):
    """Rotations and reflections keep all pairwise distances."""
    rng = np.random.default_rng(seed)
    cloud = _cloud(rng)
    motion = random_rigid_motion(rng, reflect=reflect)
    assert motion.det == pytest.approx(-1.0 if reflect else 1.0)
    moved = apply_rigid_motion(cloud, motion)
    np.testing.assert_allclose(pairwise_sq_distances(moved.positions),
                               pairwise_sq_distances(cloud.positions), atol=1e-9)
    np.testing.assert_array_equal(moved.atomic_numbers, cloud.atomic_numbers)


def test_reflection_flips_signed_volume():
    """A reflection changes the sign of a triple plus the centroid."""
    cloud = AtomicPointCloud([6, 7, 8, 6], [[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, -1, -1.5]])
    mirror = RigidMotion(np.diag([-1.0, 1.0, 1.0]), np.array([0.5, 0.0, 0.0]))
    moved = apply_rigid_motion(cloud, mirror)

    def volume(c):
        p = c.positions
        return signed_volume(p[0], p[1], p[2], center_of_positions(c))

    assert volume(moved) == pytest.approx(-volume(cloud))
    assert volume(cloud) != 0.0


def test_non_orthogonal_motion():
    """A shear is not a rigid motion."""
    with pytest.raises(InvariantError, match="not orthogonal"):
        RigidMotion(np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3))


@pytest.mark.parametrize(
    "z, xyz, message",
    [
        ([], np.zeros((0, 3)), "no atoms"),
        ([6, 1], [[0, 0, 0], [1, 0, 0]], "hydrogen"),
        ([6, 119], [[0, 0, 0], [1, 0, 0]], r"\[1, 118\]"),
        ([6], [[0, 0]], "does not match"),
        ([6], [[0, np.nan, 0]], "finite"),
        ([10**20], [[0, 0, 0]], r"\[1, 118\]"),
        ([6], [[10**400, 0, 0]], "finite"),
    ],
)
def test_cloud_invariants(z, xyz, message):
    """Invalid clouds are rejected at construction."""
    with pytest.raises(InvariantError, match=message):
        AtomicPointCloud(z, xyz)


def test_cloud_is_immutable():
    """Positions cannot be rebound or written."""
    cloud = AtomicPointCloud([6], [[0, 0, 0]])
    with pytest.raises(AttributeError):
        cloud.positions = np.ones((1, 3))
    with pytest.raises(ValueError):
        cloud.positions[0, 0] = 1.0


def test_empty_file(tmp_path):
    """An empty file holds no records."""
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_conformers(path) == []
    assert load_pairs(path) == []


def test_hydrogen_record_reports_line(tmp_path):
    """A record containing hydrogen is rejected with its line number."""
    good = {"id": "a", "smiles": "C", "dataset": "A", "z": [6], "xyz": [[0, 0, 0]]}
    bad = {"id": "b", "smiles": "C", "dataset": "A", "z": [6, 1], "xyz": [[0, 0, 0], [1, 0, 0]]}
    path = tmp_path / "conf.jsonl"
    path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(RecordError, match=r"conf.jsonl:2: .*hydrogen"):
        load_conformers(path)


def test_oversized_numbers_report_line(tmp_path):
    """Integers too large for an array still fail as positioned record errors."""
    good = {"id": "a", "smiles": "C", "dataset": "A", "z": [6], "xyz": [[0, 0, 0]]}
    path = tmp_path / "conf.jsonl"
    for field, value in (("z", [10**20]), ("xyz", [[10**400, 0, 0]])):
        path.write_text(json.dumps(good) + "\n" + json.dumps({**good, "id": "b", field: value}) + "\n")
        with pytest.raises(RecordError, match=r"conf\.jsonl:2: conformer"):
            load_conformers(path)


def test_conformer_checks(tmp_path):
    """Duplicate ids, undeclared labels and malformed lines are rejected."""
    row = {"id": "a", "smiles": "C", "dataset": "A", "z": [6], "xyz": [[0, 0, 0]]}
    path = tmp_path / "conf.jsonl"
    path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
    with pytest.raises(RecordError, match="duplicate id 'a'"):
        load_conformers(path)
    with pytest.raises(RecordError, match="not declared"):
        load_conformers(path, labels=["B"])
    path.write_text("{not json\n")
    with pytest.raises(RecordError, match=":1: malformed JSON"):
        load_conformers(path)
    path.write_text(json.dumps({**row, "extra": 1}) + "\n")
    with pytest.raises(RecordError, match="unexpected keys"):
        load_conformers(path)


def test_missing_file(tmp_path):
    """A missing input is a usage error."""
    with pytest.raises(MissingInputError):
        load_pairs(tmp_path / "absent.jsonl")


def test_conformer_round_trip(tmp_path):
    """Written conformers read back identically."""
    rng = np.random.default_rng(4)
    records = [ConformerRecord(f"m{i}", "CCO", "A" if i % 2 else "B", _cloud(rng, 3)) for i in range(5)]
    path = save_conformers(tmp_path / "c.jsonl", records)
    assert load_conformers(path, labels=["A", "B"]) == records


def test_pair_round_trip(tmp_path):
    """Written pairs, including multi-conformer ligands, read back identically."""
    rng = np.random.default_rng(5)
    pairs = [
        LigandPocketPair("l0", "p0", (_cloud(rng, 3),), _cloud(rng, 8), 6.5, AffinityType.KI),
        LigandPocketPair("l1", "p0", (_cloud(rng, 4), _cloud(rng, 4)), _cloud(rng, 8), -0.25, AffinityType.IC50),
    ]
    path = save_pairs(tmp_path / "p.jsonl", pairs)
    assert load_pairs(path) == pairs


def test_pair_checks(tmp_path):
    """Duplicate pairs and unknown affinity types are rejected."""
    pocket = {"z": [6, 7], "xyz": [[0, 0, 0], [1, 0, 0]]}
    row = {"ligand_id": "l", "pocket_id": "p", "affinity_value": 5.0, "affinity_type": "Kd",
           "ligand": {"z": [6], "xyz": [[0, 0, 0]]}, "pocket": pocket}
    path = tmp_path / "p.jsonl"
    path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
    with pytest.raises(RecordError, match=":2: duplicate pair"):
        load_pairs(path)
    path.write_text(json.dumps({**row, "affinity_type": "pIC"}) + "\n")
    with pytest.raises(RecordError, match="unknown affinity_type"):
        load_pairs(path)
    path.write_text(json.dumps({**row, "ligand": []}) + "\n")
    with pytest.raises(RecordError, match="at least one ligand"):
        load_pairs(path)
