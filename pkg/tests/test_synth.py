import numpy as np
import pytest

from ligspace.geom import AffinityType, pairwise_sq_distances
from ligspace.smiles import has_aromatic_token, parse_smiles
from ligspace.synth import (
    BOND_LENGTH,
    acyclic_smiles,
    aromatic_smiles,
    cluster_of,
    layout_graph,
    planted_pairs,
    random_screen,
    steering_corpus,
)


def test_cluster_of():
    """The cluster is the id prefix."""
    assert cluster_of("c03-l0007") == "c03"
    assert cluster_of("c03-p1") == "c03"


def test_planted_pairs_shape():
    """Pairs cycle through clusters with bounded affinities."""
    pairs = planted_pairs(n_clusters=4, n_pairs=20, seed=1, conformers=3)
    assert len(pairs) == 20
    assert [cluster_of(p.ligand_id) for p in pairs[:5]] == ["c00", "c01", "c02", "c03", "c00"]
    for p in pairs:
        assert cluster_of(p.pocket_id) == cluster_of(p.ligand_id)
        assert len(p.ligands) == 3
        assert 6.0 <= p.affinity_value <= 8.75
        assert p.affinity_type is AffinityType.KD
    assert len({p.ligand_id for p in pairs}) == 20


def test_planted_pairs_are_seeded():
    """The same seed gives the same corpus."""
    a = planted_pairs(n_clusters=3, n_pairs=6, seed=5)
    b = planted_pairs(n_clusters=3, n_pairs=6, seed=5)
    assert [p.to_dict() for p in a] == [p.to_dict() for p in b]
    c = planted_pairs(n_clusters=3, n_pairs=6, seed=6)
    assert [p.to_dict() for p in a] != [p.to_dict() for p in c]


def test_ligand_composition_spells_cluster():
    """Ligand heteroatoms encode the cluster index in bits."""
    pairs = planted_pairs(n_clusters=16, n_pairs=16, seed=0)
    for k, p in enumerate(pairs):
        numbers = set(p.ligand.atomic_numbers.tolist())
        assert (7 in numbers) == bool(k & 1)
        assert (17 in numbers) == bool(k & 8)


def test_planted_pairs_rejects_cluster_count():
    """Between two and sixteen clusters are supported."""
    with pytest.raises(ValueError, match="n_clusters"):
        planted_pairs(n_clusters=1)
    with pytest.raises(ValueError, match="n_clusters"):
        planted_pairs(n_clusters=17)


def test_generated_smiles_parse():
    """Both generators produce parseable SMILES of the right family."""
    rng = np.random.default_rng(2)
    for _ in range(50):
        chain = acyclic_smiles(rng)
        ring = aromatic_smiles(rng)
        parse_smiles(chain)
        parse_smiles(ring)
        assert not has_aromatic_token(chain)
        assert has_aromatic_token(ring)


def test_layout_bond_lengths():
    """Tree edges are laid out at the fixed bond length."""
    graph = parse_smiles("CC(C)CCO")
    positions = layout_graph(graph, np.random.default_rng(0))
    distances = np.sqrt(pairwise_sq_distances(positions))
    for bond in graph.bonds:
        assert distances[bond.a, bond.b] == pytest.approx(BOND_LENGTH)


def test_steering_corpus_labels():
    """Each label gets its own molecule family and matching clouds."""
    records = steering_corpus(n_per_label=5, seed=3, labels=("X", "Y"))
    assert [r.dataset for r in records] == ["X"] * 5 + ["Y"] * 5
    assert records[0].id == "X-00000"
    for r in records:
        assert has_aromatic_token(r.smiles) == (r.dataset == "Y")
        assert len(r.cloud) == len(parse_smiles(r.smiles).atoms)


def test_random_screen():
    """The screen has the requested size and active count."""
    screen = random_screen(50, 7, seed=4)
    assert screen.total == 50
    assert screen.actives == 7
    with pytest.raises(ValueError, match="n_actives"):
        random_screen(5, 6)
