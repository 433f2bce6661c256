"""Synthetic corpora: planted-cluster ligand/pocket pairs, a two-label SMILES
corpus for steering experiments, and random ranked screens."""

from __future__ import annotations

from collections import deque

import numpy as np

from ligspace.geom import AffinityType, AtomicPointCloud, ConformerRecord, LigandPocketPair, random_rigid_motion
from ligspace.metrics import RankedScreen
from ligspace.smiles import MolGraph, parse_smiles

BOND_LENGTH = 1.5

# Ligand element per bit of the cluster index: N, O, S, Cl.
_LIGAND_BITS = (7, 8, 16, 17)


def cluster_of(identifier: str) -> str:
    """Cluster prefix of a planted ligand or pocket id (``"c03-l0007"`` -> ``"c03"``)."""
    return identifier.split("-", 1)[0]


def _template(rng: np.random.Generator, numbers: list[int], radius: float) -> AtomicPointCloud:
    directions = rng.normal(size=(len(numbers), 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    lengths = radius * rng.uniform(0.3, 1.0, size=(len(numbers), 1))
    return AtomicPointCloud(numbers, directions * lengths)


def _jitter(rng: np.random.Generator, cloud: AtomicPointCloud, sigma: float) -> AtomicPointCloud:
    moved = cloud.positions + rng.normal(scale=sigma, size=cloud.positions.shape)
    motion = random_rigid_motion(rng, reflect=bool(rng.integers(2)))
    return AtomicPointCloud(cloud.atomic_numbers, moved @ motion.rotation.T + motion.translation)


def planted_pairs(n_clusters: int = 16, n_pairs: int = 512, seed: int = 0,
                  pocket_variants: int = 4, conformers: int = 2) -> list[LigandPocketPair]:
    """Pairs drawn from latent clusters with cluster-specific compositions.

    Each cluster owns a pocket template (carbon plus ``1 + k % 4`` nitrogens
    and ``1 + k // 4`` oxygens) and a ligand template whose heteroatoms
    spell the cluster index in bits.  Every pair jitters both templates,
    applies random rigid motions and records
    ``affinity = 9 - 5 * sigma`` for ligand jitter ``sigma``.
    """
    if n_clusters < 2 or n_clusters > 16:
        raise ValueError("n_clusters must lie in [2, 16]")
    rng = np.random.default_rng(seed)
    pockets, ligands = [], []
    for k in range(n_clusters):
        pocket_z = [6] * 8 + [7] * (1 + k % 4) + [8] * (1 + k // 4)
        ligand_z = [6] * 4 + [z for bit, z in enumerate(_LIGAND_BITS) if k >> bit & 1]
        pockets.append(_template(rng, pocket_z, 5.0))
        ligands.append(_template(rng, ligand_z, 3.0))
    pairs = []
    for i in range(n_pairs):
        k = i % n_clusters
        variant = int(rng.integers(pocket_variants))
        sigma = float(rng.uniform(0.05, 0.6))
        confs = tuple(_jitter(rng, ligands[k], sigma) for _ in range(conformers))
        pocket = _jitter(rng, pockets[k], 0.2)
        pairs.append(LigandPocketPair(
            ligand_id=f"c{k:02d}-l{i:04d}",
            pocket_id=f"c{k:02d}-p{variant}",
            ligands=confs,
            pocket=pocket,
            affinity_value=round(9.0 - 5.0 * sigma, 6),
            affinity_type=AffinityType.KD,
        ))
    return pairs


# ---------------------------------------------------------------------------
# Steering corpus
# ---------------------------------------------------------------------------

_CHAIN_ATOMS = ("C", "C", "C", "N", "O")
_SUBSTITUENTS = ("C", "O", "N", "CC", "Cl", "F", "OC", "C(=O)O")


def acyclic_smiles(rng: np.random.Generator) -> str:
    """A random branched chain without rings or aromatic atoms."""
    length = int(rng.integers(3, 8))
    parts = ["C"]
    for _ in range(length - 1):
        atom = str(rng.choice(_CHAIN_ATOMS))
        roll = rng.random()
        if atom == "C" and roll < 0.2:
            atom += "(=O)"
        elif atom in ("C", "N") and roll < 0.4:
            atom += "(C)"
        parts.append(atom)
    return "".join(parts)


def aromatic_smiles(rng: np.random.Generator) -> str:
    """A six-membered aromatic ring, optionally one pyridine nitrogen, with substituents."""
    ring = ["c"] * 6
    if rng.random() < 0.3:
        ring[int(rng.integers(1, 5))] = "n"
    text = "c1"
    for pos in range(1, 6):
        atom = ring[pos]
        if atom == "c" and pos < 5 and rng.random() < 0.35:
            atom += f"({rng.choice(_SUBSTITUENTS)})"
        text += atom
    text += "1"
    if rng.random() < 0.5:
        text = str(rng.choice(_SUBSTITUENTS[:4])) + text
    return text


def layout_graph(graph: MolGraph, rng: np.random.Generator) -> np.ndarray:
    """Place atoms along a breadth-first spanning tree with fixed bond length."""
    n = len(graph.atoms)
    adj = graph.neighbors()
    positions = np.zeros((n, 3))
    placed = np.zeros(n, dtype=bool)
    placed[0] = True
    queue = deque([0])
    while queue:
        atom = queue.popleft()
        for nbr, _ in adj[atom]:
            if placed[nbr]:
                continue
            direction = rng.normal(size=3)
            positions[nbr] = positions[atom] + BOND_LENGTH * direction / np.linalg.norm(direction)
            placed[nbr] = True
            queue.append(nbr)
    return positions


def steering_corpus(n_per_label: int = 200, seed: int = 0,
                    labels: tuple[str, str] = ("A", "B")) -> list[ConformerRecord]:
    """Acyclic molecules under ``labels[0]`` and aromatic ones under ``labels[1]``."""
    rng = np.random.default_rng(seed)
    records = []
    for label, make in ((labels[0], acyclic_smiles), (labels[1], aromatic_smiles)):
        for i in range(n_per_label):
            smiles = make(rng)
            graph = parse_smiles(smiles)
            cloud = AtomicPointCloud([a.atomic_number for a in graph.atoms], layout_graph(graph, rng))
            records.append(ConformerRecord(f"{label}-{i:05d}", smiles, label, cloud))
    return records


def random_screen(n_items: int, n_actives: int, seed: int = 0, shift: float = 1.0) -> RankedScreen:
    """Normal scores with actives shifted up by *shift*; ties are possible only by chance."""
    if not 0 <= n_actives <= n_items:
        raise ValueError("n_actives must lie in [0, n_items]")
    rng = np.random.default_rng(seed)
    labels = np.zeros(n_items, dtype=bool)
    labels[rng.choice(n_items, size=n_actives, replace=False)] = True
    scores = rng.normal(size=n_items) + shift * labels
    return RankedScreen(tuple(f"m{i:05d}" for i in range(n_items)), scores, labels)


__all__ = [
    "cluster_of",
    "planted_pairs",
    "acyclic_smiles",
    "aromatic_smiles",
    "layout_graph",
    "steering_corpus",
    "random_screen",
]
