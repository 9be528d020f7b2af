"""Surrogate-loss calculus for binary classification.

Covers the six supported margin losses, their conditional risks and
pointwise minimisers, Lipschitz constants on bounded ranges, the truncation
gap ``Delta_phi(T)``, the psi-transform (numeric and closed form) with its
inverse, a calibration checker and propagation of moduli of continuity
through the truncated minimiser.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, xlogy

KINDS = (
    "least_squares",
    "hinge",
    "exponential",
    "logistic",
    "modified_logistic",
    "modified_exponential",
)
MODIFIED = ("modified_logistic", "modified_exponential")
_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0
BRACKET_LIMIT = 50.0


class UnboundedMinimizerError(ValueError):
    """The pointwise minimiser is infinite and no truncation level was given."""


class PsiConvergenceError(RuntimeError):
    """Inner minimisation for the psi-transform did not produce finite values."""


@dataclass(frozen=True)
class SurrogateLoss:
    kind: str
    T: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind in MODIFIED:
            if self.T is None or not self.T > 0:
                raise ValueError(f"{self.kind} needs a positive truncation level T")

    @property
    def tau(self) -> float:
        """Loss floor of the modified kinds; 0 for the others."""
        if self.kind == "modified_logistic":
            return math.log1p(math.exp(-self.T))
        if self.kind == "modified_exponential":
            return math.exp(-self.T)
        return 0.0

    @property
    def base_kind(self) -> str:
        return self.kind.replace("modified_", "")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T}

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateLoss":
        return cls(d["kind"], d.get("T"))


def as_loss(loss) -> SurrogateLoss:
    if isinstance(loss, SurrogateLoss):
        return loss
    if isinstance(loss, str):
        return SurrogateLoss(loss)
    if isinstance(loss, dict):
        return SurrogateLoss.from_dict(loss)
    raise TypeError(f"cannot interpret {loss!r} as a surrogate loss")


def _logistic(a):
    # log(1 + e^{-a}) without overflow
    return np.logaddexp(0.0, -a)


def phi(loss, a):
    """Loss value at margin ``a`` (scalar or array)."""
    loss = as_loss(loss)
    a = np.asarray(a, dtype=np.float64)
    kind = loss.kind
    if kind == "least_squares":
        out = (1.0 - a) ** 2
    elif kind == "hinge":
        out = np.maximum(1.0 - a, 0.0)
    elif kind == "exponential":
        out = np.exp(-a)
    elif kind == "logistic":
        out = _logistic(a)
    elif kind == "modified_logistic":
        out = _logistic(np.minimum(a, loss.T))
    else:
        out = np.exp(-np.minimum(a, loss.T))
    return out.item() if out.ndim == 0 else out


def dphi(loss, a):
    """A (sub)derivative of the loss; 0 is used on the flat parts and at kinks."""
    loss = as_loss(loss)
    a = np.asarray(a, dtype=np.float64)
    kind = loss.kind
    if kind == "least_squares":
        out = -2.0 * (1.0 - a)
    elif kind == "hinge":
        out = np.where(a < 1.0, -1.0, 0.0)
    elif kind == "exponential":
        out = -np.exp(-a)
    elif kind == "logistic":
        out = -expit(-a)
    elif kind == "modified_logistic":
        out = np.where(a < loss.T, -expit(-a), 0.0)
    else:
        out = np.where(a < loss.T, -np.exp(-a), 0.0)
    return out.item() if out.ndim == 0 else out


def conditional_risk(loss, eta, a):
    """``H(eta, a) = eta phi(a) + (1 - eta) phi(-a)``."""
    eta = np.asarray(eta, dtype=np.float64)
    out = eta * phi(loss, a) + (1.0 - eta) * phi(loss, -np.asarray(a, dtype=np.float64))
    return out.item() if np.ndim(out) == 0 else out


def _check_eta(eta):
    eta = np.asarray(eta, dtype=np.float64)
    if np.any((eta < 0) | (eta > 1)) or np.any(np.isnan(eta)):
        raise ValueError("eta must lie in [0, 1]")
    return eta


def pointwise_minimizer(loss, eta, T: float | None = None):
    """Minimiser of ``H(eta, .)``, clamped to ``[-T, T]`` when ``T`` is given.

    Modified kinds are always clamped to their own truncation level (their
    conditional risk is constant beyond it).
    """
    loss = as_loss(loss)
    eta = _check_eta(eta)
    kind = loss.kind
    if kind == "least_squares":
        out = 2.0 * eta - 1.0
    elif kind == "hinge":
        out = np.where(2.0 * eta - 1.0 >= 0, 1.0, -1.0)
    else:
        edge = (eta == 0) | (eta == 1)
        if kind in MODIFIED:
            T = loss.T if T is None else min(T, loss.T)
        elif np.any(edge) and T is None:
            raise UnboundedMinimizerError(
                f"{kind} minimiser is infinite at eta in {{0, 1}}; supply T"
            )
        with np.errstate(divide="ignore"):
            logit = np.log(eta) - np.log1p(-eta)
        out = 0.5 * logit if loss.base_kind == "exponential" else logit
    if T is not None:
        out = np.clip(out, -T, T)
    return out.item() if np.ndim(out) == 0 else out


def minimal_conditional_risk(loss, eta):
    """``inf_a H(eta, a)`` in closed form."""
    loss = as_loss(loss)
    eta = _check_eta(eta)
    kind = loss.kind
    if kind == "least_squares":
        out = 4.0 * eta * (1.0 - eta)
    elif kind == "hinge":
        out = 1.0 - np.abs(2.0 * eta - 1.0)
    elif kind == "exponential":
        out = 2.0 * np.sqrt(eta * (1.0 - eta))
    elif kind == "logistic":
        out = -xlogy(eta, eta) - xlogy(1.0 - eta, 1.0 - eta)
    else:
        out = np.asarray(conditional_risk(loss, eta, pointwise_minimizer(loss, eta)))
    return out.item() if out.ndim == 0 else out


def lipschitz_constant(loss, B: float) -> float:
    """Lipschitz constant of the loss on ``[-B, B]`` as tabulated for ``1 <= T <= B``."""
    loss = as_loss(loss)
    if not B >= 1:
        raise ValueError("function bound B must be at least 1")
    if loss.kind in MODIFIED and loss.T > B:
        raise ValueError("truncation level T must not exceed B")
    base = loss.base_kind
    if base == "least_squares":
        return 2.0 * B
    if base == "hinge":
        return 1.0
    if base == "exponential":
        return math.exp(B)
    return 1.0 / (math.exp(-B) + 1.0)


def delta_phi(loss, T: float) -> float:
    """``inf_{|a| <= T} phi(a) - inf_a phi(a)``."""
    loss = as_loss(loss)
    if not T >= 1:
        raise ValueError("truncation level T must be at least 1")
    if loss.kind == "exponential":
        return math.exp(-T)
    if loss.kind == "logistic":
        return math.log1p(math.exp(-T))
    # least squares and hinge reach 0 inside [-1, 1]; the modified kinds
    # reach their floor at their own truncation level.
    return 0.0


# ---------------------------------------------------------------------------
# psi-transform
# ---------------------------------------------------------------------------


def psi_closed_form(kind: str, theta):
    """Tabulated psi for the four classical losses."""
    theta = np.abs(np.asarray(theta, dtype=np.float64))
    if kind == "least_squares":
        out = theta ** 2
    elif kind == "hinge":
        out = theta
    elif kind == "exponential":
        out = 1.0 - np.sqrt(1.0 - theta ** 2)
    elif kind == "logistic":
        out = 0.5 * (xlogy(1.0 + theta, 1.0 + theta) + xlogy(1.0 - theta, 1.0 - theta))
    else:
        raise ValueError(f"no tabulated psi for {kind!r}")
    return out.item() if out.ndim == 0 else out


def psi_pointwise(loss, theta):
    """``phi(0) - inf_a H((1+theta)/2, a)``; equals psi for convex calibrated losses."""
    theta = np.abs(np.asarray(theta, dtype=np.float64))
    out = phi(loss, 0.0) - minimal_conditional_risk(loss, np.clip((1.0 + theta) / 2.0, 0, 1))
    return np.maximum(out, 0.0)


def _golden_min(f: Callable, lo: np.ndarray, hi: np.ndarray, tol: float = 1e-10):
    """Vectorised golden-section search of unimodal ``f`` over ``[lo, hi]``."""
    lo, hi = lo.astype(np.float64).copy(), hi.astype(np.float64).copy()
    c = hi - _INVGOLD * (hi - lo)
    d = lo + _INVGOLD * (hi - lo)
    fc, fd = f(c), f(d)
    while np.max(hi - lo) > tol:
        left = fc < fd
        # minimum in [lo, d] where left, else in [c, hi]
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = hi - _INVGOLD * (hi - lo)
        new_d = lo + _INVGOLD * (hi - lo)
        c_eval = np.where(left, new_c, d)
        d_eval = np.where(left, c, new_d)
        # Re-evaluate both points; keeps the loop simple and exact.
        c, d = c_eval, d_eval
        fc, fd = f(c), f(d)
    x = 0.5 * (lo + hi)
    vals = np.minimum(np.minimum(f(x), f(lo)), f(hi))
    return x, vals


def _adaptive_bracket(f: Callable, n: int, sign: np.ndarray | None = None):
    """Half-width per element, doubled until ``f`` rises at both ends (cap 50)."""
    w = np.ones(n)
    for _ in range(10):
        step = 1e-3 * w
        rising_hi = f(w) >= f(w - step)
        rising_lo = f(-w) >= f(-w + step)
        done = rising_hi & rising_lo
        if sign is not None:
            done = np.where(sign > 0, rising_lo, rising_hi)
        if np.all(done | (w >= BRACKET_LIMIT)):
            break
        w = np.where(done, w, np.minimum(2.0 * w, BRACKET_LIMIT))
    return w


def inner_infima(phi_fn: Callable, eta: np.ndarray):
    """Numerically compute ``inf_a H`` and ``inf_{a(2eta-1)<=0} H`` for each eta.

    ``phi_fn`` must accept arrays.  Returns ``(unconstrained, constrained,
    half_widths)``.
    """
    eta = np.asarray(eta, dtype=np.float64)
    H = lambda a: eta * phi_fn(a) + (1.0 - eta) * phi_fn(-a)
    w = _adaptive_bracket(H, eta.size)
    _, free = _golden_min(H, -w, w)
    # Constrained side: a <= 0 when eta > 1/2, a >= 0 when eta < 1/2.
    sgn = np.sign(2.0 * eta - 1.0)
    wc = _adaptive_bracket(H, eta.size, sign=sgn)
    lo = np.where(sgn > 0, -wc, 0.0)
    hi = np.where(sgn > 0, 0.0, wc)
    hi = np.where(sgn == 0, wc, hi)
    lo = np.where(sgn == 0, -wc, lo)
    _, cons = _golden_min(H, lo, hi)
    return free, np.minimum(cons, np.where(sgn == 0, free, np.inf)), w


def lower_convex_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Greatest convex minorant of the points ``(x_i, y_i)`` evaluated on ``x``."""
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(x, x[hull], y[hull])


@dataclass(frozen=True)
class PsiTransform:
    theta: np.ndarray
    psi_tilde: np.ndarray
    psi: np.ndarray
    loss: SurrogateLoss | None = None

    @property
    def exact_refinable(self) -> bool:
        """True when the hull coincides with psi-tilde, so off-grid values are available."""
        return self.loss is not None and bool(np.max(np.abs(self.psi - self.psi_tilde)) < 1e-9)

    def __call__(self, theta):
        return np.interp(np.abs(theta), self.theta, self.psi)


def psi_transform(loss, grid_size: int = 1001) -> PsiTransform:
    """Numeric psi on a uniform theta grid over ``[0, 1]``."""
    loss = as_loss(loss)
    theta = np.linspace(0.0, 1.0, grid_size)
    eta = (1.0 + theta) / 2.0
    free, cons, w = inner_infima(lambda a: phi(loss, a), eta)
    psi_t = cons - free
    if not np.all(np.isfinite(psi_t)):
        bad = np.flatnonzero(~np.isfinite(psi_t))
        raise PsiConvergenceError(
            f"non-finite psi at theta={theta[bad[:5]].tolist()} with bracket half-widths "
            f"{w[bad[:5]].tolist()}"
        )
    psi_t = np.maximum(psi_t, 0.0)
    psi_t[0] = 0.0
    return PsiTransform(theta, psi_t, lower_convex_hull(theta, psi_t), loss)


def psi_inverse(pt: PsiTransform, v: float) -> float:
    """Smallest ``theta`` with ``psi(theta) >= v``.

    Values above ``psi(1)`` map to 1, the largest possible excess 0-1 risk.
    Within a grid cell the theta is found by bisection on the exact
    pointwise psi when the table allows it, otherwise by linear interpolation.
    """
    if v < 0:
        if v < -1e-12:
            raise ValueError("psi_inverse needs a nonnegative argument")
        v = 0.0
    psi = pt.psi
    if v <= 0.0:
        return 0.0
    if v >= psi[-1]:
        return 1.0
    k = int(np.searchsorted(psi, v, side="left"))
    t0, t1, p0, p1 = pt.theta[k - 1], pt.theta[k], psi[k - 1], psi[k]
    if not pt.exact_refinable:
        return float(t0 + (t1 - t0) * (v - p0) / (p1 - p0)) if p1 > p0 else float(t0)
    lo, hi = t0, t1
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(psi_pointwise(pt.loss, mid)) < v:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return float(hi)


def is_calibrated(loss, eta_grid, margin: float = 1e-12) -> bool:
    """Check ``inf_a H < inf_{a(2eta-1)<=0} H`` at every grid point (1/2 excluded)."""
    eta = np.asarray(eta_grid, dtype=np.float64)
    if np.any(eta == 0.5):
        raise ValueError("grid must exclude eta = 1/2")
    phi_fn = loss if callable(loss) and not isinstance(loss, SurrogateLoss) else (
        lambda a, _l=as_loss(loss): phi(_l, a)
    )
    vec = lambda a: np.broadcast_to(np.asarray(phi_fn(a), dtype=np.float64), np.shape(a))
    free, cons, _ = inner_infima(vec, eta)
    return bool(np.all(free < cons - margin))


# ---------------------------------------------------------------------------
# moduli of continuity
# ---------------------------------------------------------------------------


def holder_modulus(lam: float, alpha: float) -> Callable:
    """``r -> lam r^alpha``."""
    return lambda r: lam * np.asarray(r, dtype=np.float64) ** alpha


def truncated_lipschitz_factor(loss, T: float) -> float:
    """Lipschitz constant of ``eta -> clip(f_0(eta), -T, T)``."""
    base = as_loss(loss).base_kind
    if base == "least_squares":
        return 2.0
    if base == "exponential":
        return (math.exp(T) + math.exp(-T)) ** 2 / 2.0
    if base == "logistic":
        return (math.exp(T / 2.0) + math.exp(-T / 2.0)) ** 2
    raise ValueError("the hinge minimiser is a step function and has no modulus")


def truncated_modulus(loss, omega_eta: Callable, T: float) -> Callable:
    """Modulus of continuity of the truncated minimiser, given the modulus of eta."""
    factor = truncated_lipschitz_factor(loss, T)
    return lambda r: factor * omega_eta(r)


def write_psi_csv(pt: PsiTransform, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "psi"])
        for t, p in zip(pt.theta, pt.psi):
            w.writerow([repr(float(t)), repr(float(p))])


def read_psi_csv(path, loss=None) -> PsiTransform:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    theta, psi = data[:, 0], data[:, 1]
    return PsiTransform(theta, psi.copy(), psi, None if loss is None else as_loss(loss))
