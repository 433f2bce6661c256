"""Central finite-difference gradient checks.

:func:`check_gradients` compares the analytic gradient of a scalar loss
against ``(f(p + h) - f(p - h)) / 2h`` entry by entry.  The error of an
entry is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
:func:`run_suite` checks every differentiable op plus the three training
losses on small random inputs in float64, redrawn for every trial.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ligspace import tensor as T
from ligspace.contrastive import ContrastiveBatch, cf_infonce
from ligspace.encoder import SetConfig, init_encoder, mlm_corrupt, mlm_loss
from ligspace.geom import AtomicPointCloud
from ligspace.mclm import MclmConfig, Vocab, init_mclm, nll_loss
from ligspace.tensor import Tensor, backward, no_grad, reset_tape

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
DEFAULT_FLOOR = 1e-3
DEFAULT_TRIALS = 20


@dataclass
class GradReport:
    """Worst relative error per parameter name."""

    name: str
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE
    trials: int = 1

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    name: str = "loss",
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    floor: float = DEFAULT_FLOOR,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradReport:
    """Compare backward gradients of ``loss_fn()`` with central differences.

    Args:
        loss_fn: Rebuilds the forward pass and returns a scalar loss
        params: Tensors to perturb; their data is restored afterwards
        name: Label for the report
        step: Finite-difference step
        tolerance: Relative error below which the check passes
        floor: Lower bound on the error denominator
        max_entries: Check at most this many randomly chosen entries per tensor
        seed: Seed for the entry sample
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    reset_tape()
    backward(loss_fn())
    report = GradReport(name, tolerance=tolerance)
    for pname, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for idx in indices:
            original = flat[idx]
            with no_grad():
                flat[idx] = original + step
                plus = loss_fn().item()
                flat[idx] = original - step
                minus = loss_fn().item()
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * step)
            a = float(analytic.reshape(-1)[idx])
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
        report.errors[pname] = worst
    for p in params.values():
        p.zero_grad()
    logger.debug("gradcheck %s worst relative error %.3e", name, report.worst)
    return report


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def _leaf(rng: np.random.Generator, *shape: int, low: float | None = None) -> Tensor:
    data = rng.uniform(low, low + 1.0, size=shape) if low is not None else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return T.sum_(T.mul(out, weights))


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    a, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    row = _leaf(rng, 4)
    pos = _leaf(rng, 3, 4, low=0.5)
    m1, m2 = _leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)
    scale = _leaf(rng, 3)
    table = _leaf(rng, 6, 4)
    logits = _leaf(rng, 5, 7)
    w34 = rng.normal(size=(3, 4))
    w35 = rng.normal(size=(2, 3, 5))

    def unary(op, x=a):
        return lambda: _weighted(op(x), w34), {"x": x}

    return {
        "add": (lambda: _weighted(T.add(a, row), w34), {"a": a, "row": row}),
        "sub": (lambda: _weighted(T.sub(a, b), w34), {"a": a, "b": b}),
        "mul": (lambda: _weighted(T.mul(a, b), w34), {"a": a, "b": b}),
        "div": (lambda: _weighted(T.div(a, pos), w34), {"a": a, "pos": pos}),
        "neg": unary(T.neg),
        "exp": unary(T.exp),
        "log": unary(T.log, pos),
        "sqrt": unary(T.sqrt, pos),
        "sigmoid": unary(T.sigmoid),
        "silu": unary(T.silu),
        "tanh": unary(T.tanh),
        "softmax_lastdim": unary(T.softmax_lastdim),
        "log_softmax": unary(T.log_softmax),
        "layernorm": unary(T.layernorm),
        "l2_normalize": unary(T.l2_normalize),
        "scale_rows": (lambda: _weighted(T.scale_rows(a, scale), w34), {"a": a, "scale": scale}),
        "matmul": (lambda: _weighted(T.matmul(m1, m2), w35), {"m1": m1, "m2": m2}),
        "transpose": (lambda: _weighted(T.transpose(a), w34.T), {"x": a}),
        "reshape": (lambda: _weighted(T.reshape(a, (4, 3)), w34.reshape(4, 3)), {"x": a}),
        "concat": (lambda: T.sum_(T.mul(T.concat([a, b], axis=1), np.hstack([w34, w34 * 2]))), {"a": a, "b": b}),
        "slice": (lambda: _weighted(a[np.array([0, 2, 2])], w34), {"x": a}),
        "sum": (lambda: T.sum_(T.mul(T.sum_(a, axis=0), row)), {"x": a, "row": row}),
        "mean": (lambda: T.sum_(T.mul(T.mean(a, axis=-1), scale)), {"x": a, "scale": scale}),
        "embedding_lookup": (lambda: _weighted(T.embedding_lookup(table, [1, 5, 1]), w34), {"table": table}),
        "cross_entropy": (lambda: T.cross_entropy(logits, [0, 3, 6, 2, 2], ignore_index=2), {"logits": logits}),
    }


def _mlm_case(rng: np.random.Generator):
    config = SetConfig(layers=2, heads=2, dim=8, vector_channels=3, proj_dim=4)
    model = init_encoder(config, seed=int(rng.integers(1000)))
    cloud = AtomicPointCloud([6, 7, 8, 6, 16], rng.normal(scale=1.5, size=(5, 3)))
    sample = mlm_corrupt(cloud, seed=3, alphabet=config.alphabet)
    return (lambda: mlm_loss(model, sample)), dict(model.params)


def _infonce_case(rng: np.random.Generator):
    lig, poc = _leaf(rng, 4, 3), _leaf(rng, 4, 3)
    log_tau = Tensor(np.array(np.log(0.5)), requires_grad=True)

    def loss():
        batch = ContrastiveBatch(lig, poc, ["l0", "l1", "l2", "l3"], ["p0", "p0", "p1", "p2"], [5.0, 7.0, 6.0, 4.0])
        return cf_infonce(batch, T.exp(log_tau)).total

    return loss, {"ligand": lig, "pocket": poc, "log_tau": log_tau}


def _nll_case(rng: np.random.Generator):
    vocab = Vocab(["A", "B"], ["C", "O", "(", ")", "c", "1"])
    config = MclmConfig(layers=1, heads=2, hidden=8, cond_dim=4, max_len=8, mlp_ratio=2)
    model = init_mclm(config, vocab, seed=int(rng.integers(1000)))
    x1, x2 = rng.normal(size=4), rng.normal(size=4)
    batch = [("A", x1, vocab.encode("CC(O)C")), ("B", x2, vocab.encode("c1ccc1")), (None, x1, vocab.encode("O"))]
    return (lambda: nll_loss(model, batch)), dict(model.params)


def run_suite(seed: int = 0, step: float = DEFAULT_STEP, tolerance: float = DEFAULT_TOLERANCE,
              max_entries: int | None = 6, trials: int = DEFAULT_TRIALS) -> list[GradReport]:
    """Check every op and the three training losses on *trials* random draws each.

    Inputs are redrawn for every trial; each returned report holds the worst
    error per parameter over all trials.  Model losses sample entries.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    merged: dict[str, GradReport] = {}

    def record(report: GradReport) -> None:
        seen = merged.setdefault(report.name, GradReport(report.name, tolerance=tolerance, trials=0))
        for pname, err in report.errors.items():
            seen.errors[pname] = max(seen.errors.get(pname, 0.0), err)
        seen.trials += 1

    for trial in range(trials):
        for name, (fn, params) in _op_cases(rng).items():
            record(check_gradients(fn, params, name=name, step=step, tolerance=tolerance))
        for name, build in (("mlm_loss", _mlm_case), ("cf_infonce", _infonce_case), ("nll_loss", _nll_case)):
            fn, params = build(rng)
            record(check_gradients(fn, params, name=name, step=step, tolerance=tolerance,
                                   max_entries=max_entries, seed=seed + trial))
    reports = list(merged.values())
    for report in reports:
        logger.info("gradcheck %-18s worst %.2e over %d trials %s", report.name, report.worst,
                    report.trials, "ok" if report.passed else "FAIL")
    return reports


__all__ = ["DEFAULT_TRIALS", "GradReport", "check_gradients", "run_suite"]
