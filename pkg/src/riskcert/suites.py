"""Invariant suites run by ``riskcert validate``.

Each suite returns a :class:`SuiteResult` whose ``margin`` is the measured
slack against its threshold (positive means passing with room to spare).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import complexity as cx
from . import erm
from . import loss_calc as lc
from . import net_core as nc
from . import synthdata as sd


@dataclass
class SuiteResult:
    name: str
    passed: bool
    margin: float
    threshold: float
    measured: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def direct_convolution(weights: np.ndarray, index_sets: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Loop oracle: output ``i*m + j`` is ``sum_k c_{i,k} x[S_j[k]]``."""
    r, m = weights.shape[0], index_sets.shape[0]
    out = np.zeros(r * m)
    for i in range(r):
        for j in range(m):
            acc = 0.0
            for k, pos in enumerate(index_sets[j]):
                acc += weights[i, k] * x[pos]
            out[i * m + j] = acc
    return out


def worked_example_matrix(c: np.ndarray) -> np.ndarray:
    """The 6 x 12 matrix of a 2x2 filter on a row-major 3x4 input, written out by hand."""
    c11, c12, c21, c22 = c.ravel()
    z = 0.0
    return np.array([
        [c11, c12, z, z, c21, c22, z, z, z, z, z, z],
        [z, c11, c12, z, z, c21, c22, z, z, z, z, z],
        [z, z, c11, c12, z, z, c21, c22, z, z, z, z],
        [z, z, z, z, c11, c12, z, z, c21, c22, z, z],
        [z, z, z, z, z, c11, c12, z, z, c21, c22, z],
        [z, z, z, z, z, z, c11, c12, z, z, c21, c22],
    ])


@_timed
def conv_oracle(cases: int = 1000, seed: int = 0, tol: float = 1e-12) -> SuiteResult:
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(1, 4))
    W = nc.induce_weight_matrix(nc.FilterBank(c, nc.sliding_index_sets((3, 4), (2, 2))), 12)
    example_ok = np.array_equal(W, worked_example_matrix(c))
    worst = 0.0
    for _ in range(cases):
        if rng.uniform() < 0.5:
            d_in = int(rng.integers(2, 16))
            s = int(rng.integers(1, d_in + 1))
            idx = nc.sliding_index_sets(d_in, s)
        else:
            h, w = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            fh, fw = int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))
            d_in = h * w
            idx = nc.sliding_index_sets((h, w), (fh, fw))
        r = int(rng.integers(1, 4))
        wts = rng.normal(size=(r, idx.shape[1]))
        x = rng.normal(size=d_in)
        got = nc.induce_weight_matrix(nc.FilterBank(wts, idx), d_in) @ x
        worst = max(worst, float(np.max(np.abs(got - direct_convolution(wts, idx, x)))))
    passed = example_ok and worst <= tol
    return SuiteResult("conv_oracle", passed, tol - worst, tol, worst,
                       {"worked_example_exact": bool(example_ok), "cases": cases})


# ---------------------------------------------------------------------------
# psi-transform and calibration
# ---------------------------------------------------------------------------


@_timed
def psi_closed_forms(grid_size: int = 1001, tol: float = 1e-6) -> SuiteResult:
    detail = {}
    worst = 0.0
    for kind in ("least_squares", "hinge", "exponential"):
        pt = lc.psi_transform(kind, grid_size)
        err = float(np.max(np.abs(pt.psi - lc.psi_closed_form(kind, pt.theta))))
        detail[kind] = err
        worst = max(worst, err)
    pt = lc.psi_transform("logistic", grid_size)
    second = np.diff(pt.psi, 2)
    logistic_ok = bool(pt.psi[0] == 0.0 and np.all(np.diff(pt.psi) > 0)
                       and np.all(second >= -1e-9))
    detail["logistic_convex_increasing"] = logistic_ok
    detail["logistic_min_second_difference"] = float(second.min())
    return SuiteResult("psi_closed_forms", worst <= tol and logistic_ok, tol - worst, tol, worst,
                       detail)


def random_finite_task(rng: np.random.Generator, max_atoms: int = 64):
    k = int(rng.integers(1, max_atoms + 1))
    p = rng.dirichlet(np.ones(k))
    eta = rng.uniform(size=k)
    # include exact ties and near-ties with 1/2 from time to time
    if rng.uniform() < 0.2:
        eta[: max(1, k // 4)] = 0.5 + rng.normal(scale=1e-3, size=max(1, k // 4))
    return p, np.clip(eta, 0.0, 1.0)


def random_scores(rng: np.random.Generator, loss, eta: np.ndarray) -> np.ndarray:
    k = len(eta)
    mode = rng.integers(0, 4)
    if mode == 0:
        return rng.uniform(-3, 3, size=k)
    if mode == 1:
        return rng.normal(scale=0.05, size=k)
    base = np.clip(np.asarray(lc.pointwise_minimizer(loss, np.clip(eta, 1e-6, 1 - 1e-6), 5.0)),
                   -5, 5)
    if mode == 2:
        return base + rng.normal(scale=0.3, size=k)
    flip = rng.uniform(size=k) < 0.3
    return np.where(flip, -rng.uniform(0, 0.2, size=k) * np.sign(base + 1e-300), base)


def calibration_gap(loss, pt, p, eta, f) -> float:
    """``psi^{-1}(excess phi-risk) - excess 0-1 risk``; negative means a violation."""
    sign_f = np.where(f >= 0, 1.0, -1.0)
    bayes = np.where(2 * eta - 1 >= 0, 1.0, -1.0)
    excess01 = float(np.sum(p * np.abs(2 * eta - 1) * (sign_f != bayes)))
    hf = lc.conditional_risk(loss, eta, f)
    hstar = lc.minimal_conditional_risk(loss, eta)
    excess_phi = float(np.sum(p * (hf - hstar)))
    return lc.psi_inverse(pt, max(excess_phi, 0.0)) - excess01


@_timed
def calibration(trials: int = 1000, seed: int = 0, tol: float = 1e-9, kinds=None,
                psi_override: dict | None = None) -> SuiteResult:
    """Calibration inequality on random finite tasks.

    ``psi_override`` maps a kind to a replacement :class:`PsiTransform`
    (used for the negative control).
    """
    kinds = kinds or ("least_squares", "hinge", "exponential", "logistic",
                      "modified_logistic", "modified_exponential")
    rng = np.random.default_rng(seed)
    detail, worst, violations = {}, math.inf, 0
    for kind in kinds:
        loss = lc.SurrogateLoss(kind, 2.0) if kind in lc.MODIFIED else lc.SurrogateLoss(kind)
        pt = (psi_override or {}).get(kind) or lc.psi_transform(loss)
        kind_worst, kind_viol = math.inf, 0
        for _ in range(trials):
            p, eta = random_finite_task(rng)
            gap = calibration_gap(loss, pt, p, eta, random_scores(rng, loss, eta))
            kind_worst = min(kind_worst, gap)
            kind_viol += gap < -tol
        detail[kind] = {"violations": kind_viol, "min_slack": kind_worst}
        worst = min(worst, kind_worst)
        violations += kind_viol
    return SuiteResult("calibration", violations == 0, worst + tol, -tol, worst,
                       {**detail, "trials_per_kind": trials, "violations": violations})


def corrupted_psi(kind: str = "least_squares", factor: float = 4.0) -> lc.PsiTransform:
    pt = lc.psi_transform(kind)
    return lc.PsiTransform(pt.theta, pt.psi_tilde * factor, pt.psi * factor, None)


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------


def packing_classes(seed: int = 0):
    """Three tiny one-layer classes with their probe grids and input norms."""
    g1 = np.linspace(0.0, 1.0, 64)[:, None]
    g2 = np.array([[i / 7, j / 7] for i in range(8) for j in range(8)])
    g3 = np.random.default_rng(seed).uniform(size=(64, 4))
    return [
        ("dense_1x1_relu", [nc.dense(1, 1, 1.0, "relu")], g1, 1.0),
        ("dense_2x1_identity", [nc.dense(2, 1, 1.0, "identity")], g2, math.sqrt(2.0)),
        ("conv_r1_s2_m3_relu", [nc.conv(4, nc.sliding_index_sets(4, 2), 1, 1.0, "relu")], g3, 2.0),
    ]


def layer_cover_bound(spec: nc.LayerSpec, x_norm: float, eps: float) -> float:
    if spec.kind == "dense":
        return cx.cover_bound_dense(spec.d_in, spec.d_out, spec.budget, 1.0, x_norm, eps)
    return cx.cover_bound_conv(spec.filters, spec.s, spec.m, spec.budget, 1.0, x_norm, eps)


@_timed
def packing_dominance(radii=(0.05, 0.1, 0.2), budget: int = 5000, seed: int = 0) -> SuiteResult:
    """``log M(2 eps) <= log N(eps)`` where ``M(2 eps)`` packs at separation ``> 2 eps``."""
    rows, worst = [], math.inf
    for name, specs, grid, x_norm in packing_classes(seed):
        sampler = cx.network_class_sampler(specs)
        S = nc.param_count(specs)
        B = nc.output_bound(specs, x_norm)
        for eps in radii:
            # empirical_packing(eps') separates at > 2 eps'; eps' = eps gives M(2 eps)
            pk = cx.empirical_packing(sampler, grid, eps, budget, seed)
            log_m = math.log(pk.count)
            bounds = {
                "layer": layer_cover_bound(specs[0], x_norm, eps),
                "network_statement": cx.cover_bound_cnn(S, 1, B, eps, "statement"),
                "network_proof": cx.cover_bound_cnn(S, 1, B, eps, "proof"),
            }
            slack = min(bounds.values()) - log_m
            worst = min(worst, slack)
            rows.append({"class": name, "eps": eps, "log_packing": log_m, "count": pk.count,
                         "exhausted": pk.exhausted, **bounds, "slack": slack})
    return SuiteResult("packing_dominance", worst >= 0, worst, 0.0, worst, {"rows": rows})


def tiny_class(num_networks: int = 200, seed: int = 0):
    specs = [nc.dense(1, 4, 1.0, "relu"), nc.dense(4, 1, 1.0, "identity")]
    rng = np.random.default_rng(seed)
    sampler = cx.network_class_sampler(specs)
    return specs, [sampler(rng) for _ in range(num_networks)]


@_timed
def sup_deviation(num_networks: int = 200, resamples: int = 200, n: int = 500,
                  delta: float = 0.1, atoms: int = 64, seed: int = 0,
                  required: float = 0.85) -> SuiteResult:
    """Frequency with which the uniform deviation stays below the high-probability bound."""
    loss = lc.SurrogateLoss("hinge")
    specs, nets = tiny_class(num_networks, seed)
    xs = (np.arange(atoms) + 0.5) / atoms
    eta = sd.make_holder_eta(1, 1.0, 1.0, seed=seed, center=[0.0])(xs[:, None])
    F = np.stack([nc.forward(f, xs[:, None])[:, 0] for f in nets])  # K x atoms
    true_risk = (eta * lc.phi(loss, F) + (1 - eta) * lc.phi(loss, -F)).mean(axis=1)
    B = nc.output_bound(specs, 1.0)
    bound = cx.estimation_bound(cx.ComplexityInputs(
        nc.param_count(specs), 2, B, n, delta, lc.lipschitz_constant(loss, B))).sup_dev
    rng = np.random.default_rng(seed + 1)
    devs = np.empty(resamples)
    loss_pos, loss_neg = lc.phi(loss, F), lc.phi(loss, -F)
    for t in range(resamples):
        a = rng.integers(0, atoms, size=n)
        y = rng.uniform(size=n) < eta[a]
        counts_pos = np.bincount(a[y], minlength=atoms)
        counts_neg = np.bincount(a[~y], minlength=atoms)
        emp = (loss_pos @ counts_pos + loss_neg @ counts_neg) / n
        devs[t] = np.max(np.abs(emp - true_risk))
    coverage = float(np.mean(devs <= bound))
    return SuiteResult("sup_deviation", coverage >= required, coverage - required, required,
                       coverage, {"bound": bound, "max_deviation": float(devs.max()),
                                  "median_deviation": float(np.median(devs)), "n": n,
                                  "networks": num_networks, "resamples": resamples})


# ---------------------------------------------------------------------------
# projection and gradients
# ---------------------------------------------------------------------------


@_timed
def projection(seed: int = 0, tol: float = 1e-9, attempts: int = 20) -> SuiteResult:
    worst = 0.0
    for d, k in [(4, 2), (5, 5), (64, 8), (20, 4), (100, 1), (30, 29)]:
        for s in range(5):
            A = sd.random_projection(d, k, seed + s)
            worst = max(worst, float(np.max(np.abs(A @ A.T - (d / k) * np.eye(k)))))
    task = sd.make_manifold_task(64, 2, 0.005, seed=seed)
    pts = task.sampler(np.random.default_rng(seed), 2000)
    chk = sd.projection_distortion_check(pts, 8, 0.5, seed=seed, max_attempts=attempts)
    passed = worst <= tol and chk.passed
    return SuiteResult("projection", passed, tol - worst, tol, worst,
                       {"distortion_attempts": chk.attempts, "distortion_passed": chk.passed,
                        "ratio_range": [chk.min_ratio, chk.max_ratio]})


def gradient_rel_errors(net: nc.Network, loss, X, y, num_params: int, rng, h: float = 1e-5):
    ds = sd.Dataset(X, y)
    theta = erm.flat_parameters(net)
    g = erm.flat_gradient(net, loss, X, y)
    errs = []
    for k in rng.choice(len(theta), size=min(num_params, len(theta)), replace=False):
        e = np.zeros_like(theta)
        e[k] = h
        fp = erm.empirical_phi_risk(loss, erm.unflatten(net, theta + e), ds)
        fm = erm.empirical_phi_risk(loss, erm.unflatten(net, theta - e), ds)
        fd = (fp - fm) / (2 * h)
        errs.append(abs(fd - g[k]) / max(abs(fd), abs(g[k]), 1e-6))
    return np.asarray(errs)


def _kink_margin(net: nc.Network, X) -> float:
    _, _, pre = nc.forward_cache(net, X)
    return min(float(np.min(np.abs(z))) for z, l in zip(pre, net.layers)
               if l.spec.affine and l.spec.activation == "relu")


def gradient_nets(seed: int = 0):
    rng = np.random.default_rng(seed)
    dense_specs = [nc.dense(3, 6, None, "relu"), nc.dense(6, 4, None, "relu"),
                   nc.dense(4, 1, None, "identity")]
    idx = nc.sliding_index_sets((3, 4), (2, 2))
    conv_specs = [nc.conv(12, idx, 2, None, "relu"), nc.conv(12, nc.sliding_index_sets(12, 3), 1,
                                                             None, "relu"),
                  nc.dense(10, 1, None, "identity")]
    out = []
    for name, specs, d in [("dense", dense_specs, 3), ("conv", conv_specs, 12)]:
        net = nc.init_network(specs, rng)
        # nonzero biases keep dead units off the exact kink at 0
        net = net.with_parameters([(w, rng.normal(scale=0.3, size=b.shape))
                                   for w, b in net.parameters()])
        out.append((name, net, d))
    return out


@_timed
def gradients(num_params: int = 20, seed: int = 0, tol: float = 1e-4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    detail, worst = {}, 0.0
    for name, net, d in gradient_nets(seed):
        X = rng.uniform(size=(16, d))
        # move inputs away from ReLU kinks so central differences stay on one piece
        for _ in range(50):
            if _kink_margin(net, X) > 1e-3:
                break
            X = X + rng.normal(scale=1e-2, size=X.shape)
        y = rng.choice([-1.0, 1.0], size=16)
        errs = gradient_rel_errors(net, "logistic", X, y, num_params, rng)
        detail[name] = float(errs.max())
        worst = max(worst, float(errs.max()))
    return SuiteResult("gradients", worst <= tol, tol - worst, tol, worst, detail)


SUITES = {
    "conv_oracle": conv_oracle,
    "psi_closed_forms": psi_closed_forms,
    "calibration": calibration,
    "packing_dominance": packing_dominance,
    "sup_deviation": sup_deviation,
    "projection": projection,
    "gradients": gradients,
}
