import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ligspace.metrics import (
    REPORT_COLUMNS,
    RankedScreen,
    auroc,
    bedroc,
    enrichment_factor,
    screen_report,
    write_screen_report,
)
from ligspace.synth import random_screen


def _screen(scores, labels):
    return RankedScreen(tuple(f"m{i:04d}" for i in range(len(scores))), np.array(scores, dtype=float),
                        np.array(labels, dtype=bool))


def _active_at(rank, total):
    """A screen with one active placed at the given 1-based rank."""
    labels = [i == rank - 1 for i in range(total)]
    return _screen(list(range(total, 0, -1)), labels)


def _pairwise_auroc(screen):
    actives = screen.scores[screen.labels]
    inactives = screen.scores[~screen.labels]
    wins = 0.0
    for a in actives:
        for i in inactives:
            wins += 1.0 if a > i else 0.5 if a == i else 0.0
    return wins / (len(actives) * len(inactives))


def _reference_bedroc(screen, alpha):
    n, big_n = screen.actives, screen.total
    ra = n / big_n
    ranks = [r + 1 for r, idx in enumerate(screen.order()) if screen.labels[idx]]
    weight = sum(math.exp(-alpha * r / big_n) for r in ranks)
    random_weight = (n / big_n) * (1 - math.exp(-alpha)) / math.expm1(alpha / big_n)
    rie = weight / random_weight
    scale = ra * math.sinh(alpha / 2) / (math.cosh(alpha / 2) - math.cosh(alpha / 2 - alpha * ra))
    return rie * scale + 1 / (1 - math.exp(alpha * (1 - ra)))


def test_screen_validation():
    """Mismatched lengths, NaN scores and repeated ids are rejected."""
    with pytest.raises(ValueError, match="differ in length"):
        RankedScreen(("a", "b"), np.array([1.0]), np.array([True, False]))
    with pytest.raises(ValueError, match="finite"):
        _screen([1.0, float("nan")], [True, False])
    with pytest.raises(ValueError, match="unique"):
        RankedScreen.from_items([("a", 1.0, True), ("a", 0.0, False)])


def test_order_breaks_ties_by_id():
    """Equal scores are ranked by id."""
    screen = RankedScreen.from_items([("c", 1.0, False), ("a", 1.0, True), ("b", 2.0, False)])
    assert [screen.ids[i] for i in screen.order()] == ["b", "a", "c"]
    assert screen.active_ranks().tolist() == [2]


def test_auroc_examples():
    """Perfect, flat and mixed rankings."""
    assert auroc(_screen([4, 3, 2, 1], [1, 1, 0, 0])) == 1.0
    assert auroc(_screen([1, 1, 1, 1], [1, 0, 1, 0])) == 0.5
    assert auroc(_screen([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])) == 0.75


def test_auroc_ordered_ties():
    """Ordered mode resolves ties by the deterministic ranking."""
    screen = RankedScreen.from_items([("a", 1.0, True), ("b", 1.0, False), ("c", 1.0, False), ("d", 1.0, True)])
    assert auroc(screen, ties="ordered") == 0.5
    assert auroc(RankedScreen.from_items([("a", 1.0, True), ("b", 1.0, False)]), ties="ordered") == 1.0
    assert auroc(RankedScreen.from_items([("a", 1.0, True), ("b", 1.0, False)])) == 0.5


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=2, max_value=200), st.integers(min_value=0, max_value=2**32 - 1))
def test_auroc_matches_pairwise_count(n_items, seed):
    """AUROC equals the brute-force pair count, coarse scores forcing ties."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(n_items, dtype=bool)
    n_act = int(rng.integers(1, n_items))
    labels[rng.choice(n_items, size=n_act, replace=False)] = True
    scores = np.round(rng.normal(size=n_items), 1)
    screen = _screen(scores, labels)
    assert auroc(screen) == _pairwise_auroc(screen)


def test_auroc_errors():
    """Single-class screens and unknown modes are rejected."""
    with pytest.raises(ValueError, match="one active and one inactive"):
        auroc(_screen([1, 2], [1, 1]))
    with pytest.raises(ValueError, match="Unknown tie mode"):
        auroc(_screen([1, 2], [1, 0]), ties="random")


def test_bedroc_extremes():
    """A single active first scores about one, last about zero."""
    assert bedroc(_active_at(1, 4), alpha=2.0) == pytest.approx(1.0, abs=1e-4)
    assert bedroc(_active_at(4, 4), alpha=2.0) == pytest.approx(0.0, abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=2, max_value=300), st.integers(min_value=0, max_value=2**32 - 1),
       st.sampled_from([1.0, 20.0, 80.5]))
def test_bedroc_matches_reference(n_items, seed, alpha):
    """BEDROC agrees with a direct evaluation of the closed form."""
    rng = np.random.default_rng(seed)
    screen = random_screen(n_items, int(rng.integers(1, n_items)), seed=seed)
    assert bedroc(screen, alpha) == pytest.approx(_reference_bedroc(screen, alpha), abs=1e-9)


def test_bedroc_rewards_earlier_actives():
    """Moving the active up never lowers BEDROC."""
    values = [bedroc(_active_at(rank, 50), alpha=20.0) for rank in range(1, 51)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_bedroc_large_alpha():
    """Early-recognition weights far beyond float range stay finite and bounded."""
    for alpha in (2000.0, 1e4, 1e6):
        assert bedroc(_active_at(1, 100), alpha=alpha) == pytest.approx(1.0, abs=1e-6)
        assert bedroc(_active_at(100, 100), alpha=alpha) == pytest.approx(0.0, abs=1e-6)
        screen = random_screen(300, 10, seed=4)
        assert -1e-9 <= bedroc(screen, alpha=alpha) <= 1.0 + 1e-9


def test_bedroc_errors():
    """BEDROC needs a positive alpha and a mixed screen."""
    with pytest.raises(ValueError, match="positive"):
        bedroc(_active_at(1, 4), alpha=0.0)
    with pytest.raises(ValueError, match="finite"):
        bedroc(_active_at(1, 4), alpha=float("inf"))
    with pytest.raises(ValueError, match="actives"):
        bedroc(_screen([1, 2], [0, 0]))
    with pytest.raises(ValueError, match="actives"):
        bedroc(_screen([1, 2], [1, 1]))


def test_enrichment_examples():
    """Whole-list enrichment is one and three early hits in 200 give six."""
    labels = [False] * 200
    for rank in (1, 4, 9, 50, 60, 70, 80, 90, 100, 110):
        labels[rank - 1] = True
    screen = _screen(list(range(200, 0, -1)), labels)
    assert enrichment_factor(screen, 1.0) == 1.0
    assert enrichment_factor(screen, 0.05) == 6.0
    late = _screen(list(range(200, 0, -1)), [i >= 190 for i in range(200)])
    assert enrichment_factor(late, 0.05) == 0.0


def test_enrichment_errors():
    """Bad fractions, empty buckets and active-free screens are rejected."""
    screen = _active_at(1, 50)
    for fraction in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError, match="fraction"):
            enrichment_factor(screen, fraction)
    with pytest.raises(ValueError, match="empty"):
        enrichment_factor(screen, 0.01)
    with pytest.raises(ValueError, match="at least one active"):
        enrichment_factor(_screen([1, 2], [0, 0]), 1.0)


def test_report_row_and_file(tmp_path):
    """Small screens report NaN for the empty early buckets."""
    screen = random_screen(100, 10, seed=3)
    row = screen_report("T1", screen)
    assert tuple(row) == REPORT_COLUMNS
    assert math.isnan(row["ef_0.5"])
    assert row["ef_1"] == enrichment_factor(screen, 0.01)
    assert row["auroc"] == auroc(screen)
    path = write_screen_report(tmp_path / "report.csv", [row])
    with path.open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert rows[0]["target"] == "T1"
    assert rows[0]["ef_0.5"] == "nan"
    assert float(rows[0]["bedroc"]) == row["bedroc"]
