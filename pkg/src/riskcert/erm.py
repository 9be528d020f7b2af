"""Empirical phi-risk minimisation by projected minibatch SGD.

Gradients are computed by hand through dense, convolutional and max-pool
layers.  After every step each affine layer is projected back onto its norm
budget, so every iterate belongs to the constrained class.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import loss_calc as lc
from .net_core import (Layer, LayerSpec, Network, dense, forward, forward_cache,
                       init_network, induce_weight_matrix, FilterBank, project_budget)
from .synthdata import Dataset

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Every restart produced a non-finite empirical risk."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 64
    epochs: int = 50
    restarts: int = 5
    seed: int = 0
    momentum: float = 0.9
    cosine: bool = True
    tol: float = 1e-6
    patience: int = 10
    init_scale: float = 1.0

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.epochs, self.restarts) <= 0:
            raise ValueError("lr, batch_size, epochs and restarts must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def _scores(f, X: np.ndarray) -> np.ndarray:
    out = forward(f, X) if isinstance(f, Network) else np.asarray(f(X), dtype=np.float64)
    out = np.asarray(out, dtype=np.float64)
    if out.ndim == 2:
        if out.shape[1] != 1:
            raise ValueError("classifier must have a scalar output")
        out = out[:, 0]
    return np.broadcast_to(out, (len(X),))


def empirical_phi_risk(loss, f, dataset: Dataset) -> float:
    """``(1/n) sum phi(y_i f(x_i))``."""
    return float(np.mean(lc.phi(loss, dataset.y * _scores(f, dataset.X))))


def misclassification_rate(f, dataset: Dataset) -> float:
    """Fraction of points where ``sign(f(x)) != y`` with ``sign(0) = +1``."""
    pred = np.where(_scores(f, dataset.X) >= 0, 1.0, -1.0)
    return float(np.mean(pred != dataset.y))


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def backprop(net: Network, X: np.ndarray, grad_out: np.ndarray):
    """Parameter gradients given ``d objective / d output`` (shape n x d_out)."""
    _, inputs, pre = forward_cache(net, X)
    g = grad_out
    grads = []
    for layer, h, z in zip(reversed(net.layers), reversed(inputs), reversed(pre)):
        spec = layer.spec
        if spec.kind == "maxpool":
            gin = np.zeros_like(h)
            rows = np.arange(len(h))
            for i, s in enumerate(spec.pool_sets):
                s = np.asarray(s)
                arg = s[np.argmax(h[:, s], axis=1)]
                np.add.at(gin, (rows, arg), g[:, i])
            g = gin
            continue
        if spec.activation == "relu":
            g = g * (z > 0)
        gb = g.sum(axis=0)
        if spec.kind == "dense":
            gw = g.T @ h
            g = g @ layer.weight
        else:
            idx = spec.index_sets
            gz = g.reshape(len(g), spec.filters, idx.shape[0])
            gw = np.einsum("nrm,nms->rs", gz, h[:, idx])
            g = g @ induce_weight_matrix(FilterBank(layer.weight, idx), spec.d_in)
        grads.append((gw, gb))
    grads.reverse()
    return grads


def gradients(net: Network, loss, X: np.ndarray, y: np.ndarray):
    """Gradient of the empirical phi-risk with respect to every affine layer."""
    f = forward(net, X)[:, 0]
    g = (y * lc.dphi(loss, y * f) / len(y))[:, None]
    return backprop(net, X, g)


def flat_parameters(net: Network) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in net.parameters()])


def unflatten(net: Network, theta: np.ndarray) -> Network:
    params, k = [], 0
    for w, b in net.parameters():
        nw, nb = w.size, b.size
        params.append((theta[k:k + nw].reshape(w.shape), theta[k + nw:k + nw + nb]))
        k += nw + nb
    return net.with_parameters(params)


def flat_gradient(net: Network, loss, X, y) -> np.ndarray:
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in gradients(net, loss, X, y)])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    network: Network
    log: list
    best_risk: float
    best_restart: int
    restarts_run: int


def _project(specs: Sequence[LayerSpec], params):
    out = []
    affine = [s for s in specs if s.affine]
    for s, (w, b) in zip(affine, params):
        out.append(project_budget(w, b, s.budget) if s.budget is not None else (w, b))
    return out


def _train_once(net: Network, loss, ds: Dataset, cfg: TrainConfig, lr: float,
                rng: np.random.Generator, restart: int, log_rows: list):
    specs = net.specs
    params = net.parameters()
    vel = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    n = ds.n
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    step = 0
    best, best_net, stale = math.inf, net, 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for k in range(steps_per_epoch):
            idx = order[k * cfg.batch_size:(k + 1) * cfg.batch_size]
            rate = lr * (0.5 * (1 + math.cos(math.pi * step / total_steps)) if cfg.cosine else 1.0)
            grads = gradients(net, loss, ds.X[idx], ds.y[idx])
            vel = [(cfg.momentum * vw - rate * gw, cfg.momentum * vb - rate * gb)
                   for (vw, vb), (gw, gb) in zip(vel, grads)]
            params = _project(specs, [(w + vw, b + vb) for (w, b), (vw, vb) in zip(params, vel)])
            net = net.with_parameters(params)
            step += 1
        risk = empirical_phi_risk(loss, net, ds)
        if not math.isfinite(risk):
            log_rows.append({"restart": restart, "epoch": epoch, "phi_risk": risk,
                             "misclass": math.nan, "best_risk": best})
            return None, best
        if risk < best - cfg.tol:
            stale = 0
        else:
            stale += 1
        if risk < best:
            best, best_net = risk, net
        log_rows.append({"restart": restart, "epoch": epoch, "phi_risk": risk,
                         "misclass": misclassification_rate(net, ds), "best_risk": best})
        if stale >= cfg.patience:
            break
    return best_net, best


def train_erm(spec: Sequence[LayerSpec] | Network, loss, dataset: Dataset,
              cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Best-of-restarts projected SGD on the empirical phi-risk.

    A restart that produces a non-finite risk is retried with a tenfold
    smaller step size; the call fails once the restart budget is spent
    without any finite run.
    """
    loss = lc.as_loss(loss)
    specs = spec.specs if isinstance(spec, Network) else list(spec)
    if specs[0].d_in != dataset.d:
        raise ValueError(f"network expects d={specs[0].d_in}, dataset has d={dataset.d}")
    rng = np.random.default_rng(cfg.seed)
    rows: list[dict] = []
    best_net, best_risk, best_restart = None, math.inf, -1
    lr = cfg.lr
    for restart in range(cfg.restarts):
        start = init_network(specs, rng, cfg.init_scale)
        net, risk = _train_once(start, loss, dataset, cfg, lr, rng, restart, rows)
        if net is None:
            log.warning("restart %d diverged, lowering step size to %g", restart, lr * 0.1)
            lr *= 0.1
            continue
        if risk < best_risk:
            best_net, best_risk, best_restart = net, risk, restart
    if best_net is None:
        raise TrainingDivergedError(f"all {cfg.restarts} restarts diverged")
    return TrainResult(best_net, rows, best_risk, best_restart, cfg.restarts)


def write_training_log(rows: list, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.DictWriter(fh, fieldnames=["restart", "epoch", "phi_risk", "misclass", "best_risk"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})


def mlp_specs(d: int, hidden: Sequence[int], budget: float | None = None,
              out_budget: float | None = None) -> list[LayerSpec]:
    """ReLU hidden layers followed by an identity scalar head."""
    specs, prev = [], d
    for h in hidden:
        specs.append(dense(prev, h, budget, "relu"))
        prev = h
    specs.append(dense(prev, 1, out_budget if out_budget is not None else budget, "identity"))
    return specs


def sign_surrogate_layer(eta_net: Network, eps: float) -> Network:
    """Append ``x -> 2 relu(t) - 2 relu(t - 1) - 1`` with ``t = (eta(x) - 1/2)/eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if eta_net.d_out != 1:
        raise ValueError("eta network must have a scalar output")
    w1 = np.array([[1.0 / eps], [1.0 / eps]])
    b1 = np.array([-0.5 / eps, -0.5 / eps - 1.0])
    w2 = np.array([[2.0, -2.0]])
    b2 = np.array([-1.0])
    n1 = float(np.linalg.norm(w1) + np.linalg.norm(b1))
    n2 = float(np.linalg.norm(w2) + np.linalg.norm(b2))
    extra = [Layer(dense(1, 2, n1, "relu"), w1, b1), Layer(dense(2, 1, n2, "identity"), w2, b2)]
    return Network(list(eta_net.layers) + extra)
