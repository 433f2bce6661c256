import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ligspace.errors import FormatError
from ligspace.fingerprint import (
    Fingerprint,
    diversity,
    fingerprint_matrix,
    morgan_fingerprint,
    morgan_identifiers,
    read_fingerprints,
    tanimoto,
    tanimoto_matrix,
    write_fingerprints,
)
from ligspace.smiles import parse_smiles
from ligspace.synth import acyclic_smiles, aromatic_smiles


def _environment_oracle(graph, radius):
    """Count distinct atom neighbourhoods by building them as nested tuples."""
    adj = graph.neighbors()
    current = [(a.symbol, a.charge, a.aromatic, len(adj[i]), a.h_count) for i, a in enumerate(graph.atoms)]
    seen = set(current)
    for r in range(1, radius + 1):
        current = [
            (r, current[i], tuple(sorted((int(order), current[j]) for j, order in adj[i])))
            for i in range(len(graph.atoms))
        ]
        seen.update(current)
    return len(seen)


def test_ethane_radius_zero():
    """Both carbons of CC share one invariant."""
    assert morgan_fingerprint(parse_smiles("CC"), radius=0).popcount() == 1


def test_methanol_radius_zero():
    """C and O give two bits."""
    assert morgan_fingerprint(parse_smiles("CO"), radius=0).popcount() == 2


def test_ethanol_radius_one():
    """Each atom of CCO is distinct at radius 0 and at radius 1."""
    graph = parse_smiles("CCO")
    assert _environment_oracle(graph, 1) == 6
    assert len({i for rnd in morgan_identifiers(graph, 1) for i in rnd}) == 6


def test_identifiers_match_enumeration_oracle():
    """Distinct identifiers equal distinct neighbourhoods on fifty molecules."""
    rng = np.random.default_rng(11)
    for k in range(50):
        text = aromatic_smiles(rng) if k % 2 else acyclic_smiles(rng)
        graph = parse_smiles(text)
        ids = {i for rnd in morgan_identifiers(graph, 2) for i in rnd}
        assert len(ids) == _environment_oracle(graph, 2), text


@pytest.mark.parametrize("a, b", [("CCO", "OCC"), ("c1ccccc1O", "Oc1ccccc1"), ("CC(=O)N", "NC(C)=O")])
def test_atom_order_invariance(a, b):
    """Reordering the atoms of a SMILES string does not change its fingerprint."""
    assert morgan_fingerprint(parse_smiles(a)) == morgan_fingerprint(parse_smiles(b))


def test_bad_width():
    """Widths must be powers of two."""
    with pytest.raises(ValueError, match="power of two"):
        morgan_fingerprint(parse_smiles("C"), nbits=1000)


def test_tanimoto_examples():
    """Identical, disjoint and overlapping bit sets."""
    a = Fingerprint.from_bits([1, 2, 3], width=8)
    b = Fingerprint.from_bits([2, 3, 4], width=8)
    c = Fingerprint.from_bits([7], width=8)
    empty = Fingerprint.from_bits([], width=8)
    assert tanimoto(a, a) == 1.0
    assert tanimoto(a, c) == 0.0
    assert tanimoto(a, b) == 0.5
    assert tanimoto(empty, empty) == 1.0


def test_tanimoto_width_mismatch():
    """Fingerprints of different widths cannot be compared."""
    with pytest.raises(ValueError, match="widths differ"):
        tanimoto(Fingerprint.from_bits([1], width=8), Fingerprint.from_bits([1], width=16))


@settings(max_examples=30)
@given(st.sets(st.integers(0, 31)), st.sets(st.integers(0, 31)))
def test_tanimoto_properties(x, y):
    """Tanimoto is symmetric and bounded, and the matrix agrees with it."""
    a, b = Fingerprint.from_bits(x, width=32), Fingerprint.from_bits(y, width=32)
    s = tanimoto(a, b)
    assert s == tanimoto(b, a)
    assert 0.0 <= s <= 1.0
    assert tanimoto_matrix([a], [a, b])[0, 1] == pytest.approx(s)


def test_diversity():
    """Diversity is one minus the mean pairwise similarity."""
    a = Fingerprint.from_bits([1, 2, 3], width=8)
    b = Fingerprint.from_bits([2, 3, 4], width=8)
    c = Fingerprint.from_bits([7], width=8)
    assert diversity([a, a, a]) == 0.0
    assert diversity([a, c]) == 1.0
    assert diversity([a, b, c]) == pytest.approx(1 - 1 / 6)
    with pytest.raises(ValueError, match="at least two"):
        diversity([a])


def test_file_round_trip(tmp_path):
    """Written fingerprints read back equal."""
    fps = [morgan_fingerprint(parse_smiles(s)) for s in ("CCO", "c1ccccc1", "CC(=O)N")]
    path = write_fingerprints(tmp_path / "fp.tsv", ["a", "b", "c"], fps)
    ids, loaded = read_fingerprints(path)
    assert ids == ["a", "b", "c"]
    assert loaded == fps


@pytest.mark.parametrize(
    "line",
    ["a\tx\t2\tff", "a\t8\ttwo\tff", "a\t8\t2\tzz", "a\t16\t2\tff", "a\t8\t2\t"],
)
def test_read_rejects_malformed_fields(tmp_path, line):
    """Bad widths, radii or hex payloads are reported with their line."""
    path = tmp_path / "fp.tsv"
    path.write_text("ok\t8\t2\tff\n" + line + "\n", encoding="utf-8")
    with pytest.raises(FormatError, match=r"fp\.tsv:2: "):
        read_fingerprints(path)


def test_tanimoto_matrix_empty_side():
    """An empty side yields a matrix with no rows or no columns."""
    a = Fingerprint.from_bits([1], width=8)
    assert tanimoto_matrix([], [a, a]).shape == (0, 2)
    assert tanimoto_matrix([a], []).shape == (1, 0)


def test_fingerprint_matrix():
    """Fingerprints stack into a 0/1 float matrix of one width."""
    a = Fingerprint.from_bits([0, 3], width=4)
    b = Fingerprint.from_bits([1], width=4)
    np.testing.assert_array_equal(fingerprint_matrix([a, b]), [[1, 0, 0, 1], [0, 1, 0, 0]])
    assert fingerprint_matrix([]).shape == (0, 0)
    with pytest.raises(ValueError, match="widths differ"):
        fingerprint_matrix([a, Fingerprint.from_bits([1], width=8)])
