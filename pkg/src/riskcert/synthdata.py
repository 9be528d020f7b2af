"""Synthetic binary classification tasks with analytically known ``eta``.

Two certified families are provided: a distance-based Holder ``eta`` and a
coordinate-power ``eta`` with a known Tsybakov noise exponent.  Manifold
tasks place inputs in a thin neighbourhood of a smooth low-dimensional
surface; their ``eta`` depends only on intrinsic coordinates.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import loss_calc as lc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EtaFunction:
    """``P(Y = +1 | X = x)`` with its declared regularity certificate."""

    fn: Callable[[np.ndarray], np.ndarray]
    d: int
    description: str
    lam: float | None = None
    alpha: float | None = None
    c_noise: float | None = None
    q: float | None = None
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        out = self.fn(np.atleast_2d(x))
        return out[0] if single else out


def constant_eta(d: int, value: float) -> EtaFunction:
    if not 0 <= value <= 1:
        raise ValueError("eta must lie in [0, 1]")
    return EtaFunction(lambda x: np.full(len(x), float(value)), d, f"constant {value}",
                       lam=0.0, alpha=1.0, params={"value": value})


def uniform_sampler(d: int) -> Callable[[np.random.Generator, int], np.ndarray]:
    return lambda rng, n: rng.uniform(size=(n, d))


def make_holder_eta(d: int, alpha: float, lam: float, seed: int = 0,
                    center=None, ref=None) -> EtaFunction:
    """``eta(x) = 1/2 + (lam/2)(||x - c||^alpha - ||x0 - c||^alpha)`` clipped to [0, 1].

    ``c`` is drawn uniformly in the cube unless given; ``x0`` defaults to the
    cube centre.  ``||x - c||^alpha`` is alpha-Holder with constant 1 for
    ``alpha <= 1``, so ``eta`` is ``(lam/2, alpha)``-Holder and the declared
    ``lam`` is conservative.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam * d ** (alpha / 2.0) > 1.0 + 1e-12:
        raise ValueError("need lam * d^(alpha/2) <= 1 to keep eta inside [0, 1]")
    rng = np.random.default_rng(seed)
    c = rng.uniform(size=d) if center is None else np.asarray(center, dtype=np.float64)
    x0 = np.full(d, 0.5) if ref is None else np.asarray(ref, dtype=np.float64)
    offset = np.linalg.norm(x0 - c) ** alpha

    def fn(x):
        r = np.linalg.norm(x - c, axis=1) ** alpha
        return np.clip(0.5 + 0.5 * lam * (r - offset), 0.0, 1.0)

    return EtaFunction(fn, d, "holder-distance", lam=lam, alpha=alpha,
                       params={"center": c.tolist(), "ref": x0.tolist(), "seed": seed})


def make_tsybakov_eta(d: int, q: float) -> EtaFunction:
    """``eta(x) = 1/2 + sign(x1 - 1/2)|x1 - 1/2|^(1/q)/2``; ``q = 0`` gives ``1/2 +- 1/4``."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    if q == 0:
        fn = lambda x: 0.5 + np.where(x[:, 0] >= 0.5, 0.25, -0.25)
        return EtaFunction(fn, d, "tsybakov-fixture", c_noise=2.0, q=0.0)

    def fn(x):
        u = x[:, 0] - 0.5
        return 0.5 + np.sign(u) * np.abs(u) ** (1.0 / q) / 2.0

    return EtaFunction(fn, d, "tsybakov-power", c_noise=2.0, q=float(q))


def noise_cdf(eta: EtaFunction, t, sampler=None, mc_budget: int = 100_000, seed: int = 0):
    """Monte-Carlo ``P(|2 eta(X) - 1| <= t)`` with standard errors."""
    rng = np.random.default_rng(seed)
    sampler = sampler or uniform_sampler(eta.d)
    margin = np.abs(2.0 * eta(sampler(rng, mc_budget)) - 1.0)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    p = (margin[None, :] <= t[:, None]).mean(axis=1)
    return p, np.sqrt(p * (1 - p) / mc_budget)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __eq__(self, other):
        return (isinstance(other, Dataset) and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))


def sample_dataset(eta: EtaFunction, n: int, seed: int, sampler=None) -> Dataset:
    """Draw ``n`` pairs with ``x`` from ``sampler`` and ``P(y = +1 | x) = eta(x)``."""
    rng = np.random.default_rng(seed)
    sampler = sampler or uniform_sampler(eta.d)
    X = sampler(rng, n)
    y = np.where(rng.uniform(size=n) < eta(X), 1.0, -1.0)
    return Dataset(X, y, seed, {"eta": eta.description, "eta_params": dict(eta.params)})


def bayes_risk(eta: EtaFunction, sampler=None, mc_budget: int = 100_000, seed: int = 0):
    """``E min(eta, 1 - eta)`` by Monte Carlo, returned as ``(estimate, stderr)``."""
    rng = np.random.default_rng(seed)
    sampler = sampler or uniform_sampler(eta.d)
    e = eta(sampler(rng, mc_budget))
    noise = np.minimum(e, 1.0 - e)
    return float(noise.mean()), float(noise.std(ddof=1) / math.sqrt(mc_budget))


def bayes_phi_risk(loss, eta: EtaFunction, sampler=None, mc_budget: int = 100_000,
                   seed: int = 0):
    """``E inf_a H(eta(X), a)`` by Monte Carlo, returned as ``(estimate, stderr)``."""
    rng = np.random.default_rng(seed)
    sampler = sampler or uniform_sampler(eta.d)
    h = lc.minimal_conditional_risk(loss, eta(sampler(rng, mc_budget)))
    return float(np.mean(h)), float(np.std(h, ddof=1) / math.sqrt(mc_budget))


# ---------------------------------------------------------------------------
# manifold tasks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifoldTaskSpec:
    d: int
    d_M: int
    rho: float
    offset: np.ndarray
    frame: np.ndarray  # d x d_M, orthonormal columns
    bend: np.ndarray  # d x d_M, orthonormal, orthogonal to frame
    scale: float
    amp: float
    freq: float
    seed: int
    intrinsic_eta: EtaFunction | None = None

    def embed(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        return (self.offset + self.scale * (u - 0.5) @ self.frame.T
                + self.amp * np.sin(self.freq * np.pi * u) @ self.bend.T)

    def intrinsic(self, x: np.ndarray) -> np.ndarray:
        """Intrinsic coordinates of ``x`` read off the linear part of the embedding."""
        x = np.atleast_2d(x)
        return np.clip((x - self.offset) @ self.frame / self.scale + 0.5, 0.0, 1.0)

    def sampler(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.uniform(size=(n, self.d_M))
        x = self.embed(u)
        if self.rho > 0:
            v = rng.normal(size=(n, self.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            r = self.rho * rng.uniform(size=(n, 1)) ** (1.0 / self.d)
            x = x + r * v
        return x

    def eta(self) -> EtaFunction:
        """Ambient ``eta`` that depends on ``x`` only through its intrinsic coordinates."""
        base = self.intrinsic_eta
        if base is None:
            raise ValueError("task has no intrinsic eta")
        return EtaFunction(lambda x: base.fn(self.intrinsic(x)), self.d,
                           f"manifold({base.description})", lam=None, alpha=base.alpha,
                           params={"d_M": self.d_M, "rho": self.rho, "seed": self.seed})


def _orthonormal(rng, d, k):
    q, r = np.linalg.qr(rng.normal(size=(d, k)))
    return q * np.sign(np.diag(r))


def make_manifold_task(d: int, d_M: int, rho: float, seed: int = 0,
                       intrinsic_eta: EtaFunction | None = None, amp: float = 0.05,
                       freq: float = 2.0) -> ManifoldTaskSpec:
    """Smooth ``d_M``-dimensional surface in ``[rho, 1 - rho]^d`` with a uniform ``rho``-ball noise.

    The embedding is ``offset + scale (u - 1/2) Q^T + amp sin(freq pi u) R^T``
    where ``Q`` and ``R`` have orthonormal, mutually orthogonal columns; the
    scale is chosen so every embedded point keeps distance ``rho`` from the
    cube boundary.
    """
    if not 1 <= d_M <= d:
        raise ValueError("need 1 <= d_M <= d")
    if not 0 <= rho < 0.5:
        raise ValueError("rho must lie in [0, 1/2)")
    if rho == 0:
        log.warning("rho = 0: samples lie exactly on the manifold, X has no density on [0,1]^d")
    rng = np.random.default_rng(seed)
    k = d_M if 2 * d_M > d else 2 * d_M
    basis = _orthonormal(rng, d, k)
    frame = basis[:, :d_M]
    bend = basis[:, d_M:2 * d_M] if 2 * d_M <= d else np.zeros((d, d_M))
    amp = amp if 2 * d_M <= d else 0.0
    # coordinate j of the embedding deviates from 1/2 by at most
    # (scale/2) sum_k |Q_jk| + amp sum_k |R_jk|
    reach_lin = 0.5 * np.abs(frame).sum(axis=1)
    reach_bend = np.abs(bend).sum(axis=1) * amp
    room = 0.5 - rho
    scale = float(np.min((room - reach_bend) / reach_lin))
    if scale <= 0:
        raise ValueError("bend amplitude too large for the requested rho")
    return ManifoldTaskSpec(d, d_M, float(rho), np.full(d, 0.5), frame, bend, scale,
                            float(amp), float(freq), seed, intrinsic_eta)


def segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of ``x`` to the segment ``[a, b]``."""
    ab = b - a
    t = np.clip((x - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(x - (a + t[:, None] * ab), axis=1)


def random_projection(d: int, d_eps: int, seed: int = 0) -> np.ndarray:
    """``d_eps x d`` matrix with orthonormal rows scaled so ``A A^T = (d / d_eps) I``."""
    if d_eps > d:
        raise ValueError("d_eps cannot exceed d")
    if d_eps < 1:
        raise ValueError("d_eps must be positive")
    rng = np.random.default_rng(seed)
    return math.sqrt(d / d_eps) * _orthonormal(rng, d, d_eps).T


@dataclass(frozen=True)
class ProjectionCheck:
    A: np.ndarray
    attempts: int
    passed: bool
    min_ratio: float
    max_ratio: float
    seeds: tuple


def projection_distortion_check(points: np.ndarray, d_eps: int, eps: float, seed: int = 0,
                                num_pairs: int = 1000, max_attempts: int = 20,
                                scale: float = 1.0) -> ProjectionCheck:
    """Resample projections until every sampled pair keeps its distance ratio in ``[1-eps, 1+eps]``.

    ``scale`` multiplies the projected distances (use ``sqrt(d_eps/d)`` to
    compare against unit-normalised projections).  Each attempt uses seed
    ``seed + attempt``; the seeds tried are logged and returned.
    """
    points = np.asarray(points, dtype=np.float64)
    d = points.shape[1]
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), size=num_pairs)
    j = rng.integers(0, len(points), size=num_pairs)
    keep = i != j
    diff = points[i[keep]] - points[j[keep]]
    base = np.linalg.norm(diff, axis=1)
    keep2 = base > 0
    diff, base = diff[keep2], base[keep2]
    tried = []
    A, lo, hi = None, math.nan, math.nan
    for attempt in range(max_attempts):
        s = seed + attempt
        tried.append(s)
        A = random_projection(d, d_eps, s)
        ratio = scale * np.linalg.norm(diff @ A.T, axis=1) / base
        lo, hi = float(ratio.min()), float(ratio.max())
        if lo >= 1 - eps and hi <= 1 + eps:
            log.info("projection accepted after %d attempt(s), seeds %s", attempt + 1, tried)
            return ProjectionCheck(A, attempt + 1, True, lo, hi, tuple(tried))
        log.info("projection seed %d rejected: ratio range [%.4f, %.4f]", s, lo, hi)
    return ProjectionCheck(A, max_attempts, False, lo, hi, tuple(tried))


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def write_dataset(ds: Dataset, path, meta: dict | None = None) -> None:
    """CSV ``x1..xd,y`` plus a ``<path>.json`` metadata sidecar."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(ds.d)] + ["y"])
        for x, y in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in x] + ["+1" if y > 0 else "-1"])
    sidecar = {**ds.meta, **(meta or {}), "n": ds.n, "d": ds.d, "seed": ds.seed}
    with open(str(path) + ".json", "w", encoding="ascii") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def read_dataset(path) -> Dataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    try:
        with open(str(path) + ".json", encoding="ascii") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
    return Dataset(data[:, :-1], data[:, -1], meta.get("seed"), meta)
