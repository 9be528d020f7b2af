"""Excess-risk certificates, architecture sizing and rate exponents.

Every certificate is a :class:`BoundReport` holding the sizing integers,
both error terms with their factors, and an echo of the request it was
computed from, so that any report can be recomputed from its own contents.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import loss_calc as lc
from .complexity import ComplexityInputs, estimation_bound

SQRT2 = math.sqrt(2.0)
REPORT_VERSION = 1
SVM_KINDS = ("hinge",)
INTEGER_TOL = 1e-9


@dataclass(frozen=True)
class ManifoldSpec:
    d_M: int
    eps_jl: float
    c_jl: float = 1.0
    rho: float | None = None

    def __post_init__(self):
        if not 0 < self.eps_jl < 1:
            raise ValueError("eps_jl must lie in (0, 1)")
        if self.d_M < 1 or self.c_jl <= 0:
            raise ValueError("d_M must be >= 1 and c_jl positive")


@dataclass(frozen=True)
class SizingRequest:
    loss: str
    n: int
    d: int
    alpha: float
    lam: float
    q: float | None = None
    T: float | None = None
    delta: float = 0.01
    c: float = 1.0
    c_noise: float = 2.0
    eta_at_origin: float | None = None
    manifold: ManifoldSpec | None = None

    def __post_init__(self):
        if self.loss not in lc.KINDS:
            raise ValueError(f"unsupported loss kind {self.loss!r}")
        if self.alpha <= 0 or self.lam < 0 or self.n < 1 or self.d < 1:
            raise ValueError("need alpha > 0, lam >= 0, n >= 1, d >= 1")
        if self.q is not None and self.q < 0:
            raise ValueError("noise exponent q must be nonnegative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if isinstance(self.manifold, dict):
            object.__setattr__(self, "manifold", ManifoldSpec(**self.manifold))

    @property
    def truncation(self) -> float:
        """Truncation level used for the target minimiser."""
        if self.loss in ("least_squares", "hinge"):
            return 1.0 if self.T is None else float(self.T)
        if self.T is None:
            raise ValueError(f"{self.loss} needs an explicit truncation level T")
        return float(self.T)

    @property
    def surrogate(self) -> lc.SurrogateLoss:
        if self.loss in lc.MODIFIED:
            return lc.SurrogateLoss(self.loss, self.truncation)
        return lc.SurrogateLoss(self.loss)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["q"] is not None and math.isinf(d["q"]):
            d["q"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SizingRequest":
        d = dict(d)
        if d.get("q") == "inf":
            d["q"] = math.inf
        if d.get("manifold") is not None:
            d["manifold"] = ManifoldSpec(**d["manifold"])
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown sizing fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class BoundReport:
    M: int
    N: int
    L: int
    W: int
    width_cap: int
    S_cap: int
    S_used: int
    B: float
    B_phi: float
    est_error: float
    app_error: float
    total: float
    exponent: float
    d_eff: int
    flags: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    rho_max: float | None = None
    budget_cap: float | None = None
    factors: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        d = dict(d)
        for k in ("B", "B_phi", "est_error", "app_error", "total"):
            if d.get(k) == "inf":
                d[k] = math.inf
        return cls(**d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# sizing
# ---------------------------------------------------------------------------


def risk_decomposition_bound(sup_dev: float, app_err: float) -> float:
    return 2.0 * sup_dev + app_err


def floor_strict(a: float) -> int:
    """Largest integer strictly below ``a``.

    Values within a relative ``1e-9`` of an integer are treated as that
    integer, so roundoff in powers such as ``4096 ** (1/6)`` does not shift
    the result.
    """
    k = round(a)
    if abs(a - k) <= INTEGER_TOL * max(1.0, abs(a)):
        return int(k) - 1
    return int(math.floor(a))


def manifold_dim(d: int, d_M: int, eps_jl: float, c_jl: float = 1.0) -> int:
    """``ceil(c_jl d_M log(d / eps) / eps^2)``."""
    return int(math.ceil(c_jl * d_M * math.log(d / eps_jl) / eps_jl ** 2))


def rate_exponent(kind: str, d: int, alpha: float, q: float | None = None) -> float:
    """Positive exponent ``r`` of the ``n^{-r}`` rate."""
    if kind == "least_squares":
        return 2.0 * alpha / (d + 2.0 * alpha)
    if kind in ("logistic", "exponential", "modified_logistic", "modified_exponential"):
        return alpha / (0.75 * d + 2.0 * alpha)
    if kind == "hinge":
        if q is None:
            raise ValueError("hinge rate needs the noise exponent q")
        if math.isinf(q):
            return 0.5
        return 4.0 * alpha * (q + 1.0) / (3.0 * d + 8.0 * alpha * (q + 1.0))
    raise ValueError(f"unsupported loss kind {kind!r}")


def _sizing_exponent(kind: str, d: int, alpha: float, q: float | None) -> float:
    if kind == "least_squares":
        return d / (2.0 * (d + 2.0 * alpha))
    if kind == "hinge":
        if q is None:
            raise ValueError("hinge sizing needs the noise exponent q")
        return 0.0 if math.isinf(q) else 2.0 * d / (3.0 * d + 8.0 * alpha * (q + 1.0))
    return 2.0 * d / (3.0 * d + 8.0 * alpha)


def width_cap(d: int, N: int) -> int:
    # floor(N^{1/d}) here is the ordinary floor; see the project notes.
    return max(4 * d * int(math.floor(N ** (1.0 / d) + INTEGER_TOL)) + 3 * d, 12 * N + 8)


@dataclass(frozen=True)
class Sizing:
    M: int
    N: int
    L: int
    W: int
    S_cap: int
    d_eff: int

    def __iter__(self):
        return iter((self.M, self.N, self.L, self.W, self.S_cap))


def effective_dim(req: SizingRequest) -> int:
    if req.manifold is None:
        return req.d
    m = req.manifold
    d_eps = manifold_dim(req.d, m.d_M, m.eps_jl, m.c_jl)
    return d_eps if d_eps < req.d else req.d


def size_architecture(req: SizingRequest) -> Sizing:
    d = effective_dim(req)
    # a zero exponent (or tiny n) would give M = 0; one block is the smallest network
    M = max(floor_strict(req.n ** _sizing_exponent(req.loss, d, req.alpha, req.q)), 1)
    N = 1
    L = 12 * M + (15 if req.loss == "hinge" else 14)
    W = width_cap(d, N)
    S_cap = max(49 * d * d, 400) * (M + 14)
    return Sizing(M, N, L, W, S_cap, d)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def target_modulus(req: SizingRequest) -> Callable:
    """Modulus of the truncated minimiser implied by a Holder ``eta``."""
    return lc.truncated_modulus(req.surrogate, lc.holder_modulus(req.lam, req.alpha),
                                req.truncation)


def required_function_bound(req: SizingRequest, modulus: Callable | None = None) -> float:
    """Smallest admissible output bound: ``|f_{0,T}(0)| + omega(sqrt d)``, at least ``max(T, 1)``.

    Without ``eta_at_origin`` the value ``|f_{0,T}(0)|`` is bounded by ``T``.
    """
    T = req.truncation
    omega = modulus or target_modulus(req)
    if req.eta_at_origin is None:
        origin = T
    else:
        origin = abs(float(lc.pointwise_minimizer(req.surrogate, req.eta_at_origin, T)))
    return max(origin + float(omega(math.sqrt(req.d))), T, 1.0)


def _lipschitz(loss, B: float) -> float:
    try:
        return lc.lipschitz_constant(loss, B)
    except OverflowError:
        return math.inf


def _est_error(B_phi, B, S, L, n, delta) -> float:
    return estimation_bound(ComplexityInputs(S, L, B, n, delta, B_phi)).erm_gap


def _base_report(req, M, N, S, modulus, flags):
    if req.loss == "hinge":
        raise ValueError("hinge certificates go through svm_bound")
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive integers")
    sizing = size_architecture(req)
    omega = modulus or target_modulus(req)
    B = required_function_bound(req, omega)
    loss = req.surrogate
    B_phi = _lipschitz(loss, B)
    L = 12 * M + 14
    S_cap = max(49 * sizing.d_eff ** 2, 400) * (M + 14)
    S_used = S_cap if S is None else int(S)
    if S is not None:
        flags.append("explicit_S")
    est = _est_error(B_phi, B, S_used, L, req.n, req.delta)
    delta_T = lc.delta_phi(loss, req.truncation)
    return dict(sizing=sizing, omega=omega, B=B, B_phi=B_phi, L=L, S_cap=S_cap,
                S_used=S_used, est=est, delta_T=delta_T)


def assemble_bound(req: SizingRequest, M: int | None = None, N: int | None = None,
                   modulus: Callable | None = None, S: int | None = None) -> BoundReport:
    """Estimation plus approximation certificate in the ambient dimension.

    ``modulus`` is the modulus of continuity of the truncated minimiser; by
    default it is derived from ``(lam, alpha)``.  ``M`` and ``N`` default to
    the sizing rule.
    """
    flags: list[str] = ["ambient_certificate", "est_closed_form"]
    if req.manifold is not None:
        flags.append("manifold_ignored")
    plain = replace(req, manifold=None)
    sz = size_architecture(plain)
    M = sz.M if M is None else M
    N = sz.N if N is None else N
    parts = _base_report(plain, M, N, S, modulus, flags)
    d = req.d
    r = N ** (-2.0 / d) * M ** (-2.0 / d)
    omega_r = float(parts["omega"](r))
    app = 18.0 * math.sqrt(d) * parts["B_phi"] * omega_r + parts["delta_T"]
    return BoundReport(
        M=M, N=N, L=parts["L"], W=width_cap(d, N), width_cap=width_cap(d, N),
        S_cap=parts["S_cap"], S_used=parts["S_used"], B=parts["B"], B_phi=parts["B_phi"],
        est_error=parts["est"], app_error=app, total=parts["est"] + app,
        exponent=-rate_exponent(req.loss, d, req.alpha, req.q), d_eff=d, flags=flags,
        inputs=req.to_dict(), rho_max=None, budget_cap=float(max(M * M * N * N, 2 ** (M + 1))),
        factors={"app_prefactor": 18.0 * math.sqrt(d), "omega_at_r": omega_r, "r": r,
                 "delta_phi": parts["delta_T"], "c_jl": None},
    )


def rho_max(d: int, d_eps: int, M: int, N: int, eps_jl: float) -> float:
    r = N ** (-2.0 / d_eps) * M ** (-2.0 / d_eps)
    return r * (1.0 - eps_jl) / (2.0 * (math.sqrt(d / d_eps) + 1.0 - eps_jl))


def assemble_bound_manifold(req: SizingRequest, M: int | None = None, N: int | None = None,
                            modulus: Callable | None = None, S: int | None = None) -> BoundReport:
    """Certificate with the approximation term in the reduced dimension ``d_eps``.

    Falls back to :func:`assemble_bound` (flag ``manifold_fallback``) when
    ``d_eps >= d``.
    """
    if req.manifold is None:
        raise ValueError("manifold fields are required")
    m = req.manifold
    d_eps = manifold_dim(req.d, m.d_M, m.eps_jl, m.c_jl)
    if d_eps >= req.d:
        warnings.warn(f"d_eps={d_eps} >= d={req.d}; using the ambient certificate", stacklevel=2)
        rep = assemble_bound(replace(req, manifold=None), M, N, modulus, S)
        rep.flags = ["manifold_fallback"] + [f for f in rep.flags if f != "manifold_ignored"]
        rep.inputs = req.to_dict()
        rep.factors["d_eps_formula"] = d_eps
        rep.factors["c_jl"] = m.c_jl
        return rep
    flags = ["manifold_certificate", "manifold", "est_closed_form"]
    sz = size_architecture(req)
    M = sz.M if M is None else M
    N = sz.N if N is None else N
    parts = _base_report(req, M, N, S, modulus, flags)
    r = N ** (-2.0 / d_eps) * M ** (-2.0 / d_eps)
    omega_r = float(parts["omega"](r))
    app = (18.0 * math.sqrt(d_eps) + 2.0) * parts["B_phi"] * omega_r + parts["delta_T"]
    rmax = rho_max(req.d, d_eps, M, N, m.eps_jl)
    if m.rho is not None and m.rho > rmax:
        flags.append("rho_exceeds_admissible")
    return BoundReport(
        M=M, N=N, L=parts["L"], W=width_cap(d_eps, N), width_cap=width_cap(d_eps, N),
        S_cap=parts["S_cap"], S_used=parts["S_used"], B=parts["B"], B_phi=parts["B_phi"],
        est_error=parts["est"], app_error=app, total=parts["est"] + app,
        exponent=-rate_exponent(req.loss, d_eps, req.alpha, req.q), d_eff=d_eps, flags=flags,
        inputs=req.to_dict(), rho_max=rmax, budget_cap=float(max(M * M * N * N, 2 ** (M + 1))),
        factors={"app_prefactor": 18.0 * math.sqrt(d_eps) + 2.0, "omega_at_r": omega_r,
                 "r": r, "delta_phi": parts["delta_T"], "c_jl": m.c_jl},
    )


def svm_bound(req: SizingRequest, M: int | None = None) -> BoundReport:
    """Hinge-loss certificate under a Tsybakov noise exponent ``q``.

    ``req.c`` stands in for the unspecified constant in the capacity term and
    is always echoed.  ``q = inf`` drops the noise-dependent term.
    """
    if req.loss != "hinge":
        raise ValueError("svm_bound needs the hinge loss")
    if req.q is None:
        raise ValueError("svm_bound needs the noise exponent q")
    d, q = req.d, req.q
    rate = rate_exponent("hinge", d, req.alpha, q)
    sz = size_architecture(req)
    M = sz.M if M is None else M
    W = max(7 * d, 20)
    f_cap = 16.0 * SQRT2 * req.c
    f_conf = 2.0 * SQRT2
    if math.isinf(q) or req.lam == 0:
        f_noise = 0.0
    else:
        f_noise = 144.0 * 4.0 ** q * req.lam * req.c_noise * math.sqrt(d) * W ** (-2.0 * req.alpha / d)
    n_factor = req.n ** (-rate)
    est = (f_cap + f_conf) * n_factor
    app = f_noise * n_factor
    flags = ["svm_noise_certificate", "c_supplied"]
    if math.isinf(q):
        flags.append("q_infinite")
    return BoundReport(
        M=M, N=1, L=12 * M + 15, W=W, width_cap=W, S_cap=sz.S_cap, S_used=sz.S_cap,
        B=1.0, B_phi=1.0, est_error=est, app_error=app, total=est + app,
        exponent=-rate, d_eff=d, flags=flags, inputs=req.to_dict(),
        budget_cap=float(max(M * M, 2 ** (M + 1))),
        factors={"capacity": f_cap, "confidence": f_conf, "noise": f_noise,
                 "four_pow_q": math.inf if math.isinf(q) else 4.0 ** q,
                 "width_term": W ** (-2.0 * req.alpha / d), "n_factor": n_factor, "c": req.c,
                 "c_noise": req.c_noise},
    )


def certify(req: SizingRequest) -> BoundReport:
    """Route a request to the matching certificate."""
    if req.loss == "hinge":
        return svm_bound(req)
    if req.manifold is not None:
        return assemble_bound_manifold(req)
    return assemble_bound(req)


# ---------------------------------------------------------------------------
# consistency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleEntry:
    n: int
    S: float
    L: float
    B: float
    T: float
    B_phi: float
    omega: Callable


def _tail_decreasing(values: Sequence[float], target: float = 0.0) -> bool:
    v = np.asarray(values, dtype=np.float64)
    tail = v[len(v) // 2:]
    if len(tail) < 2:
        return False
    if np.all(tail == target):
        return True
    return bool(np.all(np.diff(tail) <= 1e-15) and tail[-1] < tail[0])


def consistency_check(schedule: Sequence[ScheduleEntry], loss, d: int) -> dict[str, bool]:
    """Numeric trend check of the four consistency conditions along a schedule."""
    loss = lc.as_loss(loss)
    S = [e.S for e in schedule]
    v = np.asarray(S, dtype=np.float64)
    tail = v[len(v) // 2:]
    s_flag = bool(len(tail) >= 2 and np.all(np.diff(tail) > 0))
    approx = [math.sqrt(d) * e.B_phi * float(e.omega(e.S ** (-2.0 / d))) for e in schedule]
    est = [e.B_phi * e.B * math.sqrt(e.S) * e.L ** 0.25 / math.sqrt(e.n) for e in schedule]
    gap = [lc.delta_phi(loss, e.T) for e in schedule]
    return {
        "S_to_infinity": s_flag,
        "approximation_to_zero": _tail_decreasing(approx),
        "estimation_to_zero": _tail_decreasing(est),
        "delta_phi_to_zero": _tail_decreasing(gap),
    }
