"""Capacity bounds for budgeted network classes and empirical estimators.

Closed forms are returned as logarithms of covering numbers (natural log).
The empirical side provides a greedy packing estimator under the sup-norm
over a probe grid and a Monte-Carlo Rademacher estimator over a finite
candidate set; both are lower estimates of the quantities they target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .net_core import LayerSpec, Layer, Network, forward, sample_budget_params

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ValueError("covering radius must be positive")


def cover_bound_ball(d: int, a: float, eps: float) -> float:
    """Log covering number of a radius-``a`` ball in ``R^d``: ``d log(1 + 2a/eps)``."""
    _check_eps(eps)
    if a < 0:
        raise ValueError("radius must be nonnegative")
    return d * math.log1p(2.0 * a / eps)


def cover_bound_dense(d_in: int, d_out: int, a: float, kappa: float, x_norm: float,
                      eps: float) -> float:
    _check_eps(eps)
    return (d_in + 1) * d_out * math.log1p(2.0 * a * kappa * (x_norm + 1.0) / eps)


def cover_bound_conv(r: int, s: int, m: int, a: float, kappa: float, x_norm: float,
                     eps: float) -> float:
    _check_eps(eps)
    return r * (s + m) * math.log1p(2.0 * a * kappa * (math.sqrt(m) * x_norm + 1.0) / eps)


def cover_bound_cnn(S: int, L: int, B: float, eps: float, form: str = "statement") -> float:
    """Whole-network log covering bound.

    ``statement``: ``2S log(1 + L B / eps)``.
    ``proof``: ``min{S log(1 + 4BL/eps), 2S (4BL/eps)^(1/2)}``.
    """
    if math.isinf(eps):
        return 0.0
    _check_eps(eps)
    if form == "statement":
        return 2.0 * S * math.log1p(L * B / eps)
    if form == "proof":
        u = 4.0 * B * L / eps
        return min(S * math.log1p(u), 2.0 * S * math.sqrt(u))
    raise ValueError(f"unknown form {form!r}")


def rademacher_bound(S: int, L: int, B: float, n: int) -> float:
    """``16 sqrt(2) B S^(1/2) L^(1/4) / sqrt(n)``."""
    return 16.0 * SQRT2 * B * math.sqrt(S) * L ** 0.25 / math.sqrt(n)


@dataclass(frozen=True)
class ComplexityInputs:
    S: int
    L: int
    B: float
    n: int
    delta: float
    B_phi: float
    eps: float | None = None

    def __post_init__(self):
        if min(self.S, self.L, self.n) <= 0 or self.B < 0 or self.B_phi < 0:
            raise ValueError("S, L, n must be positive and B, B_phi nonnegative")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")


class EstimationBound(NamedTuple):
    sup_dev: float
    erm_gap: float


def estimation_bound(ci: ComplexityInputs) -> EstimationBound:
    """High-probability uniform deviation and the resulting ERM excess-risk gap."""
    scale = ci.B_phi * ci.B
    cap = 8.0 * SQRT2 * scale * math.sqrt(ci.S) * ci.L ** 0.25 / math.sqrt(ci.n)
    conf = scale * math.sqrt(2.0 * math.log(1.0 / ci.delta) / ci.n)
    sup_dev = cap + conf
    return EstimationBound(sup_dev, 2.0 * sup_dev)


def dudley_entropy_bound(S: int, L: int, B: float, n: int, form: str = "proof",
                         num_alpha: int = 64) -> float:
    """Numeric Dudley integral ``inf_alpha 4 alpha + 12/sqrt(n) int_alpha^B sqrt(log N)``.

    Uses the selected whole-network covering bound for ``log N``; the infimum
    over alpha is taken on a log-spaced grid.
    """
    if B <= 0:
        return 0.0
    integrand = lambda e: math.sqrt(cover_bound_cnn(S, L, B, e, form))
    best = math.inf
    for alpha in np.geomspace(B * 1e-8, B, num_alpha):
        val, _ = integrate.quad(integrand, alpha, B, limit=200)
        best = min(best, 4.0 * alpha + 12.0 / math.sqrt(n) * val)
    return best


# ---------------------------------------------------------------------------
# empirical estimators
# ---------------------------------------------------------------------------


def network_class_sampler(specs: Sequence[LayerSpec]) -> Callable[[np.random.Generator], Network]:
    """Sampler drawing every affine layer uniformly from its budget set."""
    specs = list(specs)
    for s in specs:
        if s.affine and s.budget is None:
            raise ValueError("every affine layer needs a budget")

    def draw(rng: np.random.Generator) -> Network:
        layers = []
        for s in specs:
            if s.affine:
                w, b = sample_budget_params(rng, s.weight_shape, s.d_out, s.budget)
                layers.append(Layer(s, w, b))
            else:
                layers.append(Layer(s))
        return Network(layers)

    return draw


def _evaluate(f, grid: np.ndarray) -> np.ndarray:
    out = forward(f, grid) if isinstance(f, Network) else np.asarray(f(grid), dtype=np.float64)
    return np.asarray(out, dtype=np.float64).reshape(-1)


class PackingResult(NamedTuple):
    count: int
    exhausted: bool
    draws: int


def greedy_packing(values: np.ndarray, separation: float, chunk: int = 512):
    """First-fit packing of the rows of ``values`` with sup-distance ``> separation``.

    Returns ``(count, index of the last accepted row)``.
    """
    packed = np.empty((0, values.shape[1]))
    last = -1
    for start in range(0, len(values), chunk):
        block = values[start:start + chunk]
        idx = np.arange(start, start + len(block))
        if len(packed):
            near = np.zeros(len(block), dtype=bool)
            for p0 in range(0, len(packed), 256):
                d = np.abs(block[:, None, :] - packed[None, p0:p0 + 256, :]).max(axis=2)
                near |= (d <= separation).any(axis=1)
            block, idx = block[~near], idx[~near]
        accepted = []
        for i, v in zip(idx, block):
            if all(np.abs(v - u).max() > separation for u in accepted):
                accepted.append(v)
                last = int(i)
        if accepted:
            packed = np.vstack([packed, np.asarray(accepted)])
    return len(packed), last


def empirical_packing(class_sampler: Callable, probe_grid, eps: float, budget: int = 20000,
                      seed: int = 0) -> PackingResult:
    """Greedy lower estimate of the ``eps``-packing number (pairwise distance ``> 2 eps``).

    Distances are sup-norms over the probe grid (and over output coordinates).
    ``exhausted`` is set when the last tenth of the draw budget still produced
    new packing points, i.e. the estimate had not saturated.
    """
    _check_eps(eps)
    rng = np.random.default_rng(seed)
    grid = np.asarray(probe_grid, dtype=np.float64)
    if grid.ndim == 1:
        grid = grid[:, None]
    values = np.stack([_evaluate(class_sampler(rng), grid) for _ in range(budget)])
    count, last = greedy_packing(values, 2.0 * eps)
    return PackingResult(count, last >= budget - max(1, budget // 10), budget)


class RademacherEstimate(NamedTuple):
    value: float
    stderr: float


def empirical_rademacher(candidates, sample, num_sigma: int = 1000, seed: int = 0,
                         num_candidates: int = 500) -> RademacherEstimate:
    """Monte-Carlo ``E_sigma sup_f (1/n) sum sigma_i f(x_i)`` over a finite candidate set.

    ``candidates`` is either a (K, n) array of function values on ``sample``,
    a sequence of callables/networks, or a class sampler (called
    ``num_candidates`` times with a seeded generator).
    """
    rng = np.random.default_rng(seed)
    sample = np.asarray(sample, dtype=np.float64)
    if isinstance(candidates, np.ndarray):
        F = np.atleast_2d(candidates)
    elif callable(candidates) and not isinstance(candidates, Network):
        F = np.stack([_evaluate(candidates(rng), sample) for _ in range(num_candidates)])
    else:
        F = np.stack([_evaluate(f, sample) for f in candidates])
    n = F.shape[1]
    sigma = rng.choice([-1.0, 1.0], size=(num_sigma, n))
    sups = (sigma @ F.T / n).max(axis=1)
    se = float(sups.std(ddof=1) / math.sqrt(num_sigma)) if num_sigma > 1 else 0.0
    return RademacherEstimate(float(sups.mean()), se)
