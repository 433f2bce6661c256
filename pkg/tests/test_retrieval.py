import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ligspace.fingerprint import Fingerprint, morgan_fingerprint, tanimoto
from ligspace.retrieval import (
    chemical_similarity,
    morgan_baseline_search,
    multi_conformer_score,
    nearest_neighbor_similarity,
    score_conformer_library,
)
from ligspace.smiles import parse_smiles
from ligspace.synth import acyclic_smiles, aromatic_smiles

LIBRARY = ["CCO", "CCN", "c1ccccc1", "CC(=O)O", "CCCC", "c1ccncc1", "OCCO", "CC(C)C"]


def _fp(smiles):
    return morgan_fingerprint(parse_smiles(smiles))


def _conformers_with(cosines):
    """Unit vectors in 2-D whose cosine to (1, 0) is each of *cosines*."""
    return np.array([[c, np.sqrt(1.0 - c * c)] for c in cosines])


def test_best_conformer_wins():
    """The molecule scores as its best conformer."""
    score = multi_conformer_score([1.0, 0.0], _conformers_with([0.2, 0.8, 0.5]))
    assert score == pytest.approx(0.8, abs=1e-12)


def test_single_conformer_is_plain_cosine():
    """One conformer gives the ordinary cosine."""
    assert multi_conformer_score([2.0, 0.0], [3.0, 3.0]) == pytest.approx(np.sqrt(0.5))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_conformer_order_does_not_matter(seed):
    """Permuting conformers leaves the score unchanged."""
    rng = np.random.default_rng(seed)
    pocket = rng.normal(size=6)
    confs = rng.normal(size=(5, 6))
    assert multi_conformer_score(pocket, confs) == multi_conformer_score(pocket, confs[rng.permutation(5)])


def test_conformer_score_errors():
    """Empty, mismatched and zero inputs are rejected."""
    with pytest.raises(ValueError, match="At least one"):
        multi_conformer_score([1.0, 0.0], np.zeros((0, 2)))
    with pytest.raises(ValueError, match="mismatch"):
        multi_conformer_score([1.0, 0.0], [[1.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="zero vector"):
        multi_conformer_score([0.0, 0.0], [[1.0, 0.0]])


def test_conformer_library_ranking():
    """Library molecules are ranked by best conformer, ties by id."""
    library = {
        "b": _conformers_with([0.1, 0.9]),
        "a": _conformers_with([0.9]),
        "c": _conformers_with([0.3, 0.2, 0.4]),
    }
    hits = score_conformer_library([1.0, 0.0], library)
    assert [h.id for h in hits] == ["a", "b", "c"]
    assert hits[2].score == pytest.approx(0.4)


def test_baseline_finds_query_first():
    """A query present in the library is its own best hit."""
    library = [(f"L{i}", _fp(s)) for i, s in enumerate(LIBRARY)]
    hits = morgan_baseline_search(_fp("c1ccccc1"), library, k=3)
    assert hits[0].id == "L2"
    assert hits[0].score == 1.0


def test_baseline_disjoint_library():
    """With no shared bits every score is zero and ids decide the order."""
    library = [("z", Fingerprint.from_bits([5])), ("a", Fingerprint.from_bits([6])), ("m", Fingerprint.from_bits([7]))]
    hits = morgan_baseline_search(Fingerprint.from_bits([1, 2]), library, k=3)
    assert [(h.id, h.score) for h in hits] == [("a", 0.0), ("m", 0.0), ("z", 0.0)]


def test_baseline_matches_pairwise_tanimoto():
    """The baseline equals scoring every entry with tanimoto and sorting."""
    rng = np.random.default_rng(11)
    smiles = [acyclic_smiles(rng) for _ in range(20)] + [aromatic_smiles(rng) for _ in range(20)]
    library = [(f"s{i:02d}", _fp(s)) for i, s in enumerate(smiles)]
    query = _fp(aromatic_smiles(rng))
    expected = sorted(((-tanimoto(query, fp), mid) for mid, fp in library))[:10]
    hits = morgan_baseline_search(query, library, k=10)
    assert [(-h.score, h.id) for h in hits] == expected


def test_baseline_errors():
    """k must be positive and widths must agree."""
    with pytest.raises(ValueError, match="at least 1"):
        morgan_baseline_search(_fp("C"), [("a", _fp("C"))], k=0)
    with pytest.raises(ValueError, match="widths differ"):
        morgan_baseline_search(Fingerprint.from_bits([1], width=64), [("a", _fp("C"))], k=1)
    assert morgan_baseline_search(_fp("C"), [], k=5) == []


def test_nearest_neighbor_matches_double_loop():
    """Nearest-neighbour similarity agrees with a brute-force loop."""
    rng = np.random.default_rng(12)
    generated = [_fp(acyclic_smiles(rng)) for _ in range(15)]
    catalog = [_fp(aromatic_smiles(rng)) for _ in range(10)] + [generated[0]]
    summary = nearest_neighbor_similarity(generated, catalog)
    expected = [max(tanimoto(g, c) for c in catalog) for g in generated]
    np.testing.assert_allclose(summary.values, expected, rtol=0, atol=1e-12)
    assert summary.values[0] == 1.0
    assert summary.mean == pytest.approx(np.mean(expected))
    assert summary.median == pytest.approx(np.median(expected))
    assert summary.exact_fraction == pytest.approx(np.mean(np.array(expected) == 1.0))


def test_nearest_neighbor_edge_cases():
    """An empty catalog is an error and an empty sample is all zeros."""
    with pytest.raises(ValueError, match="Catalog is empty"):
        nearest_neighbor_similarity([_fp("C")], [])
    summary = nearest_neighbor_similarity([], [_fp("C")])
    assert summary.values.size == 0
    assert summary.mean == 0.0


def test_chemical_similarity():
    """Mean Tanimoto of the hits to a reference."""
    a = Fingerprint.from_bits([1, 2])
    b = Fingerprint.from_bits([1])
    c = Fingerprint.from_bits([3])
    assert chemical_similarity([a, b, c], a) == pytest.approx((1.0 + 0.5 + 0.0) / 3)
    with pytest.raises(ValueError, match="No hits"):
        chemical_similarity([], a)
