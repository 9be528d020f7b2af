"""Experiment orchestration: configs, runners and report files.

Every runner is a pure function of its :class:`ExperimentConfig`; reports
contain no timestamps and are written with sorted keys, so identical
configs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import certifier as ct
from . import erm
from . import loss_calc as lc
from . import net_core as nc
from . import suites
from . import synthdata as sd

SCHEMA_VERSION = 1
KINDS = ("bound", "train", "rate_study", "manifold_compare", "validate")
CSV_COLUMNS = ["n", "median_excess_risk", "q25", "q75", "certified_bound", "theoretical_rate_line"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    kind: str
    sizing: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    n_grid: list = field(default_factory=list)
    seeds: int = 5
    train: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)
    holdout: int = 100_000
    seed: int = 0
    out_dir: str | None = None
    jobs: int = 1
    suites: list = field(default_factory=list)
    suite_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        if self.kind in ("rate_study", "manifold_compare"):
            if not self.n_grid:
                raise ConfigError("n_grid is required")
            if self.seeds < 3:
                raise ConfigError("aggregated statistics need at least 3 seeds")
        unknown = set(self.suites) - set(suites.SUITES)
        if unknown:
            raise ConfigError(f"unknown suites: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


def sizing_request(cfg: ExperimentConfig, **overrides) -> ct.SizingRequest:
    try:
        return ct.SizingRequest.from_dict({**cfg.sizing, **overrides})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sizing request: {exc}") from exc


def train_config(cfg: ExperimentConfig, **overrides) -> erm.TrainConfig:
    try:
        return erm.TrainConfig(**{**cfg.train, **overrides})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------


@dataclass
class Task:
    eta: sd.EtaFunction
    sampler: object
    meta: dict


def build_task(spec: dict) -> Task:
    """Construct ``eta`` and an input sampler from a task description."""
    spec = dict(spec)
    family = spec.get("family", "holder")
    d = int(spec.get("d", 2))
    seed = int(spec.get("seed", 0))
    try:
        if family == "holder":
            eta = sd.make_holder_eta(d, spec.get("alpha", 1.0), spec.get("lam", 0.5), seed)
            return Task(eta, sd.uniform_sampler(d), spec)
        if family == "tsybakov":
            return Task(sd.make_tsybakov_eta(d, spec["q"]), sd.uniform_sampler(d), spec)
        if family == "constant":
            return Task(sd.constant_eta(d, spec.get("value", 0.5)), sd.uniform_sampler(d), spec)
        if family in ("manifold", "manifold_ambient"):
            d_M = int(spec["d_M"])
            base = sd.make_holder_eta(d_M, spec.get("alpha", 1.0), spec.get("lam", 0.5), seed)
            mt = sd.make_manifold_task(d, d_M, spec.get("rho", 0.0), seed, base)
            sampler = mt.sampler if family == "manifold" else sd.uniform_sampler(d)
            return Task(mt.eta(), sampler, spec)
    except KeyError as exc:
        raise ConfigError(f"task family {family!r} is missing field {exc}") from exc
    raise ConfigError(f"unknown task family {family!r}")


def network_specs(d: int, M: int, net_cfg: dict) -> list:
    """Desk-scale dense ReLU network sized from ``M``."""
    cap = int(net_cfg.get("width_cap", 32))
    width = int(net_cfg.get("width", min(2 * M + 4, cap)))
    depth = int(net_cfg.get("hidden_layers", 2))
    budget = net_cfg.get("budget", 50.0)
    return erm.mlp_specs(d, [width] * depth, budget)


def excess_phi_risk(loss, net: nc.Network, eta: sd.EtaFunction, X: np.ndarray):
    """Held-out mean of ``H(eta(x), f(x)) - inf_a H(eta(x), a)`` with its standard error."""
    e = eta(X)
    gap = lc.conditional_risk(loss, e, nc.forward(net, X)[:, 0]) - lc.minimal_conditional_risk(loss, e)
    return float(gap.mean()), float(gap.std(ddof=1) / math.sqrt(len(gap)))


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def _fit_one(args):
    task_spec, loss, n, seed, specs_doc, tcfg, holdout, holdout_seed = args
    task = build_task(task_spec)
    ds = sd.sample_dataset(task.eta, n, seed, task.sampler)
    specs = nc.specs_from_list(specs_doc)
    try:
        res = erm.train_erm(specs, loss, ds, replace(tcfg, seed=seed))
    except erm.TrainingDivergedError as exc:
        return {"seed": seed, "failed": True, "error": str(exc)}
    Xh = task.sampler(np.random.default_rng(holdout_seed), holdout)
    ex, se = excess_phi_risk(loss, res.network, task.eta, Xh)
    return {"seed": seed, "failed": False, "excess": ex, "excess_se": se,
            "train_risk": res.best_risk, "train_misclass": erm.misclassification_rate(res.network, ds)}


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _seed_for(base: int, n: int, k: int) -> int:
    return int(base) * 1_000_003 + int(n) * 101 + k


def _loss_of(req: ct.SizingRequest) -> lc.SurrogateLoss:
    return req.surrogate


def _fit_grid(cfg, task_spec, req_for_n, jobs, tag=0):
    """Train ``cfg.seeds`` networks per grid point, returning per-n records."""
    tcfg = train_config(cfg)
    jobs_list, meta = [], []
    for n in cfg.n_grid:
        req = req_for_n(n)
        sz = ct.size_architecture(req)
        d_in = int(task_spec.get("d", req.d))
        specs = network_specs(d_in, max(sz.M, 1), cfg.network)
        meta.append((n, req, sz, specs))
        for k in range(cfg.seeds):
            jobs_list.append((task_spec, _loss_of(req), n, _seed_for(cfg.seed + tag, n, k),
                              nc.specs_to_list(specs), tcfg, cfg.holdout, cfg.seed + 7919))
    fits = _map(_fit_one, jobs_list, jobs)
    out = []
    for i, (n, req, sz, specs) in enumerate(meta):
        runs = fits[i * cfg.seeds:(i + 1) * cfg.seeds]
        ok = [r for r in runs if not r["failed"]]
        vals = np.array([r["excess"] for r in ok])
        rec = {"n": n, "M": sz.M, "width": specs[0].d_out, "runs": runs,
               "failed": len(ok) < len(runs)}
        if len(ok):
            rec.update(median_excess_risk=float(np.median(vals)),
                       q25=float(np.quantile(vals, 0.25)), q75=float(np.quantile(vals, 0.75)))
        out.append(rec)
    return out


def _slope(ns, vals) -> float:
    if len(ns) < 2:
        return math.nan
    return float(np.polyfit(np.log(ns), np.log(np.maximum(vals, 1e-300)), 1)[0])


def _inversions(vals) -> int:
    return int(sum(b > a for a, b in zip(vals, vals[1:])))


def run_rate_study(cfg: ExperimentConfig) -> dict:
    """Median excess phi-risk over seeds along the n-grid, with certificates and fitted slope."""
    base = sizing_request(cfg, n=cfg.n_grid[0])
    task_spec = {"d": base.d, "alpha": base.alpha, "lam": base.lam, **cfg.task}
    points = _fit_grid(cfg, task_spec, lambda n: replace(base, n=n), cfg.jobs)
    rate = ct.rate_exponent(base.loss, ct.effective_dim(base), base.alpha, base.q)
    good = [p for p in points if "median_excess_risk" in p and not p["failed"]]
    meds = [p["median_excess_risk"] for p in good]
    ns = [p["n"] for p in good]
    for p in points:
        p["certified_bound"] = ct.certify(replace(base, n=p["n"])).total
        if good:
            p["theoretical_rate_line"] = meds[0] * (p["n"] / ns[0]) ** (-rate)
    flags = ["training_failure"] if len(good) < len(points) else []
    return {
        "kind": "rate_study",
        "loss": base.loss,
        "points": points,
        "fitted_slope": _slope(ns, meds),
        "inversions": _inversions(meds),
        "theoretical_exponent": -rate,
        "flags": flags,
        "config": cfg.to_dict(),
    }


def run_manifold_compare(cfg: ExperimentConfig) -> dict:
    """Ambient-versus-manifold training with matched intrinsic ``eta`` and certificates for both."""
    base = sizing_request(cfg, n=cfg.n_grid[0])
    if base.manifold is None:
        raise ConfigError("manifold_compare needs sizing.manifold")
    t = {"d": base.d, "alpha": base.alpha, "lam": base.lam, "d_M": base.manifold.d_M,
         "rho": base.manifold.rho or 0.0, **cfg.task}
    amb_req = lambda n: replace(base, n=n, manifold=None)
    man_req = lambda n: replace(base, n=n)
    ambient = _fit_grid(cfg, {**t, "family": "manifold_ambient"}, amb_req, cfg.jobs, tag=0)
    manifold = _fit_grid(cfg, {**t, "family": "manifold"}, man_req, cfg.jobs, tag=0)
    certs = []
    for n in cfg.n_grid:
        a_rep = ct.assemble_bound(amb_req(n))
        m_rep = ct.assemble_bound_manifold(man_req(n), M=a_rep.M, N=a_rep.N)
        certs.append({"n": n, "M": a_rep.M, "N": a_rep.N, "app_error": a_rep.app_error,
                      "app_error_manifold": m_rep.app_error, "est_error": a_rep.est_error,
                      "est_error_manifold": m_rep.est_error, "d_eff": m_rep.d_eff,
                      "rho_max": m_rep.rho_max, "manifold_flags": m_rep.flags,
                      "certified_ambient": a_rep.total, "certified_manifold": m_rep.total})
    last_a, last_m = ambient[-1], manifold[-1]
    d_eps = certs[-1]["d_eff"]
    checks = {
        "manifold_le_ambient_at_largest_n": bool(
            last_m.get("median_excess_risk", math.inf) <= last_a.get("median_excess_risk", -math.inf)),
        "app_error_manifold_lt_ambient": bool(
            d_eps < base.d and all(c["app_error_manifold"] < c["app_error"] for c in certs)),
    }
    return {"kind": "manifold_compare", "ambient": ambient, "manifold": manifold,
            "certificates": certs, "checks": checks, "d_eps": d_eps, "config": cfg.to_dict()}


def run_validation(cfg: ExperimentConfig) -> dict:
    """Run the requested invariant suites (all by default) and collect a manifest."""
    names = cfg.suites or list(suites.SUITES)
    entries = []
    for name in names:
        opts = cfg.suite_options.get(name, {})
        if name == "calibration" and opts.get("corrupt_psi"):
            kind = opts.get("kind", "least_squares")
            opts = {"kinds": [kind], "trials": opts.get("trials", 300),
                    "psi_override": {kind: suites.corrupted_psi(kind, opts.get("factor", 4.0))}}
        res = suites.SUITES[name](**opts)
        d = res.to_dict()
        d.pop("seconds")  # keeps manifests reproducible
        entries.append(d)
    return {"kind": "validate", "suites": entries,
            "all_passed": all(e["passed"] for e in entries)}


def run_bound(cfg: ExperimentConfig) -> dict:
    req = sizing_request(cfg)
    try:
        rep = ct.certify(req)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return {"kind": "bound", "report": rep.to_dict()}


def run_train(cfg: ExperimentConfig, model_path=None) -> dict:
    """Train a single network on the configured task and certify it."""
    req = sizing_request(cfg)
    task_spec = {"d": req.d, "alpha": req.alpha, "lam": req.lam, **cfg.task}
    task = build_task(task_spec)
    ds = sd.sample_dataset(task.eta, req.n, cfg.seed, task.sampler)
    sz = ct.size_architecture(req)
    specs = network_specs(int(task_spec["d"]), max(sz.M, 1), cfg.network)
    res = erm.train_erm(specs, req.surrogate, ds, train_config(cfg, seed=cfg.seed))
    Xh = task.sampler(np.random.default_rng(cfg.seed + 7919), cfg.holdout)
    ex, se = excess_phi_risk(req.surrogate, res.network, task.eta, Xh)
    out = {"kind": "train", "train_risk": res.best_risk, "best_restart": res.best_restart,
           "train_misclass": erm.misclassification_rate(res.network, ds),
           "excess_phi_risk": ex, "excess_phi_risk_se": se, "network_size": res.network.size,
           "certificate": ct.certify(req).to_dict(), "log": res.log, "config": cfg.to_dict()}
    if model_path is not None:
        nc.save_network(res.network, model_path)
    return out


RUNNERS = {"bound": run_bound, "train": run_train, "rate_study": run_rate_study,
           "manifold_compare": run_manifold_compare, "validate": run_validation}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _clean(obj):
    """Normalise to JSON-native values (non-finite floats become strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps_summary(results: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "results": _clean(results)}
    return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=True) + "\n"


def curve_rows(results: dict) -> list:
    rows = []
    for p in results.get("points", []):
        rows.append([p.get("n"), p.get("median_excess_risk"), p.get("q25"), p.get("q75"),
                     p.get("certified_bound"), p.get("theoretical_rate_line")])
    return rows


def dumps_curve(results: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in curve_rows(results):
        w.writerow(["" if v is None else repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def emit_report(results: dict, out_dir) -> dict:
    """Write ``summary.json`` and ``curve.csv`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out / "summary.json", "curve": out / "curve.csv"}
    paths["summary"].write_text(dumps_summary(results), encoding="ascii")
    paths["curve"].write_text(dumps_curve(results), encoding="ascii")
    return {k: str(v) for k, v in paths.items()}


def parse_report(out_dir) -> dict:
    doc = json.loads((Path(out_dir) / "summary.json").read_text(encoding="ascii"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {doc.get('schema_version')}")
    return doc["results"]


def read_curve(out_dir) -> list:
    with open(Path(out_dir) / "curve.csv", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def run(cfg: ExperimentConfig, out_dir=None) -> dict:
    results = RUNNERS[cfg.kind](cfg)
    target = out_dir or cfg.out_dir
    if target is not None:
        emit_report(results, target)
    return results
