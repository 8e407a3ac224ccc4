"""Experiment driver: ``blab <subcommand> --config run.json``.

A run configuration names a weight, a quadrature rule and a list of checks::

    {"weight": {"family": "exponential", "c": 1, "alpha": 1},
     "quad": {"radial_panels": 24, "gl_order": 16, "angular_count": 512, "r_max": 0.99},
     "checks": [{"name": "moments-oracle", "parameters": {"N": 50},
                 "thresholds": {"max_rel_error": {"max": 1e-12}}}],
     "output": {"dir": "out", "formats": ["json", "csv", "svg"]},
     "seed": 0}

Subcommands select the checks of one group (``suite`` runs all of them).  The
configuration is validated completely before anything is computed or written,
so a malformed file leaves no output behind.  Exit status: 0 when every
thresholded check passes, 1 when one fails, 2 on usage errors.

Checks return metrics; pass/fail is decided only by the ``thresholds`` block
of the configuration.  ``report.json`` is a deterministic function of the
configuration and seed -- wall-clock times live in its ``timing`` field.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy import special
from threadpoolctl import threadpool_limits

from . import covering, dbar_solver, disk_quad, kernel, projection, weights
from .errors import BlabError, ConfigError

log = logging.getLogger(__name__)

GROUPS = ("weights-report", "moments", "kernel-verify", "projection-verify", "covering", "dbar", "duality")

# --------------------------------------------------------------------------
# check registry


@dataclass
class CheckResult:
    metrics: dict
    body: dict
    csv: str = ""
    plot: dict | None = None  # {"kind": line|scatter|history, "x": [...], "y": [...], "xlabel", "ylabel"}


@dataclass
class _Check:
    name: str
    group: str
    fn: object
    defaults: dict = field(default_factory=dict)


REGISTRY: dict[str, _Check] = {}


def register(name: str, group: str, **defaults):
    def deco(fn):
        REGISTRY[name] = _Check(name, group, fn, defaults)
        return fn

    return deco


class Context:
    """Shared, lazily built objects of one run (rule, kernel model, class constants)."""

    def __init__(self, spec, quad: dict, seed: int):
        self.spec = spec
        self.quad = quad
        self.seed = seed
        self._cache: dict = {}

    def get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def rule(self) -> disk_quad.QuadRule:
        return self.get("rule", lambda: disk_quad.build_rule(**self.quad))

    def model(self, spec=None):
        spec = self.spec if spec is None else spec
        key = ("model", json.dumps(spec.to_json(), sort_keys=True))
        return self.get(key, lambda: projection.make_operator(spec, self.rule).model)

    def tau_fn(self, r_max: float = 0.99) -> weights.TauFn:
        return self.get(("tau", r_max), lambda: weights.estimate_class_constants(
            self.spec, weights.disk_samples(r_max, 120, 48)))


def _xy(z):
    return [float(np.real(z)), float(np.imag(z))]


def _num(x):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _p(v) -> float:
    return math.inf if v in ("inf", "Infinity", math.inf) else float(v)


def _estimate_result(rep: kernel.EstimateReport, xs, xlabel: str, kind: str = "line") -> CheckResult:
    return CheckResult(
        {"min": rep.min, "max": rep.max, "spread": rep.spread, "drift": rep.drift},
        rep.to_json(),
        rep.to_csv(),
        {"kind": kind, "x": [float(x) for x in xs], "y": [float(v) for v in rep.ratios],
         "xlabel": xlabel, "ylabel": rep.quantity},
    )


# ---- weights ---------------------------------------------------------------


@register("tau-certificate", "weights-report", r_max=0.99, n_r=120, n_theta=48, margin=1.1)
def _tau_certificate(ctx, r_max, n_r, n_theta, margin):
    samples = weights.disk_samples(r_max, n_r, n_theta)
    tf = weights.estimate_class_constants(ctx.spec, samples, margin=margin)
    check = weights.verify_tau_certificate(tf, weights.disk_samples(r_max, n_r + 7, n_theta + 5))
    r = np.linspace(0.0, r_max, 64)
    t = weights.tau(ctx.spec, r.astype(complex))
    metrics = {"c1": tf.c1, "c2": tf.c2, "m_tau": tf.m_tau, "worst_A": check["worst_A"], "worst_B": check["worst_B"]}
    csv = "r,tau\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(r, t))
    return CheckResult(metrics, {**metrics, "A": check["A"], "B": check["B"]}, csv,
                       {"kind": "line", "x": list(r), "y": list(t), "xlabel": "r", "ylabel": "tau"})


@register("condition-E", "weights-report", m=1, r_max=0.95, n_r=40, n_theta=24)
def _condition_e(ctx, m, r_max, n_r, n_theta):
    pts = weights.disk_samples(r_max, n_r, n_theta)
    idx = np.random.default_rng(ctx.seed).integers(0, len(pts), size=(4000, 2))
    rep = weights.check_condition_E(ctx.spec, m, pts[idx])
    body = rep.to_json()
    return CheckResult({"feasible": float(rep.feasible), "n_tested": rep.n_tested, "vacuous": float(rep.vacuous)},
                       body, "b_m,t_m,n_tested\n" + f"{rep.b_m!r},{rep.t_m!r},{rep.n_tested}\n")


# ---- moments ----------------------------------------------------------------


def _closed_form_moments(spec, n):
    """Moments with a closed form, or ``None``."""
    if spec.family == "unweighted":
        return 1.0 / (n + 1.0)
    if spec.family == "standard":
        return special.beta(n + 1.0, spec.beta + 1.0)
    if spec.family == "exponential" and spec.alpha == 1.0:
        # only m_0 = E_2(c) is elementary enough to compare against
        return np.array([special.expn(2, spec.c)])
    return None


@register("moments-oracle", "moments", N=50)
def _moments_oracle(ctx, N):
    mom = kernel.compute_moments(ctx.spec, N, ctx.rule)
    n = np.arange(N + 1)
    exact = _closed_form_moments(ctx.spec, n)
    m = mom.values()
    metrics = {"refinement": _num(mom.refinement if mom.refinement is not None else math.nan)}
    rel = None
    if exact is not None:
        k = len(exact)
        rel = np.abs(m[:k] / exact - 1.0)
        metrics["max_rel_error"] = float(rel.max())
    rows = [f"{i},{m[i]!r},{'' if rel is None or i >= len(rel) else repr(float(rel[i]))}\n" for i in n]
    body = {"N": N, "log_m": [float(v) for v in mom.log_m], **metrics}
    return CheckResult(metrics, body, "n,m_n,rel_error\n" + "".join(rows),
                       {"kind": "line", "x": [float(i) for i in n], "y": [float(v) for v in m],
                        "xlabel": "n", "ylabel": "m_n"})


# ---- kernel -------------------------------------------------------------------


@register("kernel-closed-form", "kernel-verify", n_pairs=100, r_max=0.9)
def _kernel_closed_form(ctx, n_pairs, r_max):
    if ctx.spec.family != "unweighted":
        raise ConfigError("kernel-closed-form needs the unweighted weight")
    rng = np.random.default_rng(ctx.seed)
    z = r_max * np.sqrt(rng.random((n_pairs, 2))) * np.exp(2j * np.pi * rng.random((n_pairs, 2)))
    model = ctx.model()
    got = np.array([complex(kernel.eval_kernel(model, a, b).value()) for a, b in z])
    exact = 1.0 / (1.0 - z[:, 1] * np.conj(z[:, 0])) ** 2
    rel = np.abs(got / exact - 1.0)
    csv = "z,xi,rel_error\n" + "".join(f"{a!r},{b!r},{e!r}\n" for (a, b), e in zip(z, rel))
    return CheckResult({"max_rel_error": float(rel.max())}, {"max_rel_error": float(rel.max()), "n_pairs": n_pairs},
                       csv, {"kind": "scatter", "x": list(np.abs(z[:, 0] - z[:, 1])), "y": list(rel),
                             "xlabel": "|z - xi|", "ylabel": "relative error"})


@register("norm-asymptotic", "kernel-verify", r_max=0.95, n=40, levels=2)
def _norm_asymptotic(ctx, r_max, n, levels):
    r = np.linspace(0.0, r_max, n)
    rep = kernel.check_norm_asymptotic(ctx.model(), ctx.spec, r, levels=levels)
    return _estimate_result(rep, r, "r")


def _far_pairs(spec, n, r_max, M, rng):
    out = []
    while len(out) < n:
        z, w = r_max * np.sqrt(rng.random(2)) * np.exp(2j * np.pi * rng.random(2))
        t = weights.tau(spec, np.array([z, w]))
        if abs(z - w) >= 0.5 * (t[0] + t[1]):
            out.append((z, w))
    return np.array(out)


@register("pointwise-decay", "kernel-verify", M=3.0, n_pairs=40, r_max=0.9, levels=2)
def _pointwise_decay(ctx, M, n_pairs, r_max, levels):
    pairs = _far_pairs(ctx.spec, n_pairs, r_max, M, np.random.default_rng(ctx.seed))
    rep = kernel.check_pointwise_decay(ctx.model(), ctx.spec, M, pairs, delta=0.5, levels=levels)
    return _estimate_result(rep, np.abs(pairs[:, 0] - pairs[:, 1]), "|z - xi|", "scatter")


@register("integral-estimate", "kernel-verify", beta=0.0, z=[0.0, 0.4, 0.7, 0.85], levels=2)
def _integral_estimate(ctx, beta, z, levels):
    rep = kernel.check_integral_estimate(ctx.model(), ctx.spec, np.array(z, dtype=complex), beta, levels)
    return _estimate_result(rep, z, "|z|")


# ---- projection ------------------------------------------------------------


@register("reproducing", "projection-verify", r_max=0.9, k_max=8)
def _reproducing(ctx, r_max, k_max):
    op = projection.make_operator(ctx.spec, ctx.rule, ctx.model())
    grid = projection.polar_grid(r_max, 19, 48)
    fns = [(f"z^{k}", lambda z, k=k: np.asarray(z) ** k) for k in range(k_max + 1)]
    fns.append(("1/(1-0.5z)", lambda z: 1.0 / (1.0 - 0.5 * np.asarray(z))))
    fns.append(("K_0.3", kernel.kernel_function(op.model, 0.3)))
    errs = [projection.reproduce_check(op, f, grid) for _, f in fns]
    csv = "function,max_error\n" + "".join(f"{n},{e!r}\n" for (n, _), e in zip(fns, errs))
    return CheckResult({"max_error": float(max(errs))}, {"errors": dict(zip([n for n, _ in fns], errs))}, csv,
                       {"kind": "scatter", "x": [float(i) for i in range(len(errs))], "y": errs,
                        "xlabel": "test function", "ylabel": "max error"})


@register("projection-norm", "projection-verify", p=2.0, n_functions=50, r_out=0.95, levels=2)
def _projection_norm(ctx, p, n_functions, r_out, levels):
    op = projection.make_operator(ctx.spec, ctx.rule, ctx.model())
    fns = projection.default_test_functions(ctx.spec, n_functions, ctx.seed)
    rep = projection.empirical_norm(op, _p(p), fns, r_out=r_out, levels=levels)
    csv = "function,ratio\n" + "".join(f"{n},{r!r}\n" for n, r in zip(rep.names, rep.ratios))
    return CheckResult({"max_ratio": rep.max_ratio, "drift": rep.drift}, rep.to_json(), csv,
                       {"kind": "history", "x": [float(i) for i in range(len(rep.history))], "y": rep.history,
                        "xlabel": "level", "ylabel": "max ratio"})


# ---- covering ---------------------------------------------------------------


@register("covering", "covering", r_max=0.3, delta1_fraction=0.5, probe_spacings=[0.25, 0.125])
def _covering(ctx, r_max, delta1_fraction, probe_spacings):
    tf = ctx.tau_fn()
    cov = covering.build_covering(ctx.spec, delta1_fraction * tf.m_tau, r_max, m_tau=tf.m_tau, c2=tf.c2_certified)
    rep = covering.verify_covering(cov, ctx.spec, covering.probe_grid(ctx.spec, r_max, 0.2 * cov.delta1, phase=0.37))
    pou = covering.build_pou(cov, ctx.spec, probe_spacings=tuple(probe_spacings))
    probes = covering.probe_grid(ctx.spec, r_max, 0.3 * cov.delta1, phase=0.61)
    sum_err = float(np.max(np.abs(np.asarray(pou.chi(probes).sum(axis=1)).ravel() - 1.0)))
    h = pou.gradient_history
    drift = abs(h[-1] - h[-2]) / h[-2] if len(h) > 1 else 0.0
    metrics = {"centers": len(cov), "N": cov.N, "conditions_pass": float(rep.passed), "pou_sum_error": sum_err,
               "gradient_constant": pou.gradient_constant, "gradient_drift": drift}
    body = {**metrics, "report": rep.to_json(), "gradient_history": h, "covering": cov.to_json()}
    csv = "x,y,radius\n" + "".join(f"{z.real!r},{z.imag!r},{R!r}\n" for z, R in zip(cov.centers, cov.radii))
    return CheckResult(metrics, body, csv, {"kind": "scatter", "x": list(cov.centers.real),
                                            "y": list(cov.centers.imag), "xlabel": "Re a_j", "ylabel": "Im a_j"})


# ---- dbar ---------------------------------------------------------------------


def _dbar_setup(ctx, r_max):
    tf = ctx.tau_fn()
    key = ("cov", r_max)

    def build():
        cov = covering.build_covering(ctx.spec, 0.5 * tf.m_tau, r_max, m_tau=tf.m_tau, c2=tf.c2_certified)
        return cov, covering.build_pou(cov, ctx.spec, probe_spacings=(0.25,))

    return ctx.get(key, build)


@register("dbar-solve", "dbar", r_max=0.65, p=[1, 2, "inf"], alpha=[-1.0, 0.0, 2.0], levels=2)
def _dbar_solve(ctx, r_max, p, alpha, levels):
    cov, pou = _dbar_setup(ctx, r_max)
    prob = dbar_solver.DbarProblem(dbar_solver.SmoothCut(), weights.build_associated(ctx.spec, 0.0), 2.0)
    sol = dbar_solver.solve_dbar_S(prob, cov, pou, ctx.model(), levels=levels)
    rows, worst_drift, worst_ratio = [], 0.0, 0.0
    for a in alpha:
        ws = weights.build_associated(ctx.spec, a)
        for q in p:
            q = _p(q)
            vals = [sol.lp_ratio_for(ws, q, lev) for lev in range(levels)]
            d = sol.lp_drift(ws, q) if levels > 1 else 0.0
            worst_drift, worst_ratio = max(worst_drift, d), max(worst_ratio, vals[-1])
            rows.append({"alpha": a, "p": _num(q), "lp_ratio": vals, "drift": d})
    metrics = {"residual_rel_l2": sol.residual_l2, "residual_rel_sup": sol.residual_report.rel_sup,
               "max_lp_ratio": worst_ratio, "max_lp_drift": worst_drift}
    csv = "alpha,p,lp_ratio,drift\n" + "".join(f"{r['alpha']!r},{r['p']},{r['lp_ratio'][-1]!r},{r['drift']!r}\n"
                                               for r in rows)
    body = {**metrics, "residual": sol.residual_report.to_json(), "lp": rows}
    return CheckResult(metrics, body, csv, {"kind": "scatter", "x": [float(i) for i in range(len(rows))],
                                            "y": [r["lp_ratio"][-1] for r in rows],
                                            "xlabel": "(alpha, p) case", "ylabel": "lp ratio"})


@register("G-integral", "dbar", r_max=0.9, z=[0.0, 0.4, 0.7, 0.85], alpha=[0.0, 2.0, -1.0], levels=2)
def _g_integral(ctx, r_max, z, alpha, levels):
    cov, pou = _dbar_setup(ctx, r_max)
    rows, metrics = [], {"max": 0.0, "drift": 0.0}
    xs, ys = [], []
    for a in alpha:
        rep = dbar_solver.check_G_integral(cov, pou, ctx.model(), weights.build_associated(ctx.spec, a),
                                           np.array(z, dtype=complex), levels=levels)
        metrics["max"] = max(metrics["max"], rep.max)
        metrics["drift"] = max(metrics["drift"], rep.drift)
        rows.append({"alpha": a, **rep.to_json()})
        xs.extend(z)
        ys.extend(float(v) for v in rep.ratios)
    csv = "alpha,z,value,near_fraction\n" + "".join(
        f"{r['alpha']!r},{s['z'][0]!r},{s['value']!r},{s['near_fraction']!r}\n" for r in rows for s in r["samples"])
    return CheckResult(metrics, {**metrics, "alpha": rows}, csv,
                       {"kind": "scatter", "x": xs, "y": ys, "xlabel": "|z|", "ylabel": "G integral"})


@register("minimal-solution", "dbar", alpha=2.0, k_max=6)
def _minimal_solution(ctx, alpha, k_max):
    ws = weights.build_associated(ctx.spec, alpha)
    cut = dbar_solver.SmoothCut()
    ms = dbar_solver.minimal_solution(cut, ws, model_star=ctx.model(ws))
    orth = ms.orthogonality(k_max)
    pts = np.array([r * np.exp(1j * t) for r in np.linspace(0.05, 0.9, 12)
                    for t in np.linspace(0, 2 * np.pi, 8, endpoint=False)])
    h = float(weights.tau(ctx.spec, 0.0)) / 20
    du, dc = dbar_solver.fd_dbar(ms, pts, h), dbar_solver.fd_dbar(cut, pts, h)
    res = float(np.linalg.norm(du - dc) / np.linalg.norm(dc))
    metrics = {"max_orthogonality": float(orth.max()), "dbar_rel_l2": res}
    csv = "k,orthogonality\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(orth))
    return CheckResult(metrics, {**metrics, "orthogonality": [float(v) for v in orth]}, csv,
                       {"kind": "scatter", "x": [float(k) for k in range(len(orth))], "y": [float(v) for v in orth],
                        "xlabel": "k", "ylabel": "|<u, z^k>| / norms"})


# ---- duality ------------------------------------------------------------------


@register("duality", "duality", p=[2.0, 1.3333333333333333, 4.0], degree=9, trials=20)
def _duality(ctx, p, degree, trials):
    rows, out = [], {}
    for q in p:
        rep = projection.duality_ratio(ctx.spec, ctx.model(), _p(q), degree, trials=trials, seed=ctx.seed)
        out[f"p{_p(q):g}_min"], out[f"p{_p(q):g}_max"] = rep.min, rep.max
        rows.append(rep.to_json())
    csv = "p,min,max\n" + "".join(f"{r['extra']['p']!r},{r['min']!r},{r['max']!r}\n" for r in rows)
    return CheckResult(out, {"reports": rows}, csv)


@register("kernel-density", "duality", k=[1, 4, 9, 16], p=2.0)
def _kernel_density(ctx, k, p):
    curve = projection.kernel_density_experiment(ctx.spec, ctx.model(), lambda w: np.asarray(w) ** 2, ks=k, p=_p(p))
    e = curve.errors
    decreasing = all(b < a for a, b in zip(e, e[1:]))
    csv = "k,error,relative_error,condition\n" + "".join(
        f"{a},{b!r},{c!r},{d!r}\n" for a, b, c, d in zip(curve.ks, e, curve.relative, curve.condition))
    return CheckResult({"strictly_decreasing": float(decreasing), "final_relative_error": curve.relative[-1]},
                       curve.to_json(), csv, {"kind": "line", "x": [float(v) for v in curve.ks],
                                              "y": [float(v) for v in e], "xlabel": "k", "ylabel": "error"})


DEFAULT_SUITE = {
    "weights-report": ["tau-certificate", "condition-E"],
    "moments": ["moments-oracle"],
    "kernel-verify": ["norm-asymptotic", "pointwise-decay", "integral-estimate"],
    "projection-verify": ["reproducing", "projection-norm"],
    "covering": ["covering"],
    "dbar": ["dbar-solve", "G-integral", "minimal-solution"],
    "duality": ["duality", "kernel-density"],
}

# --------------------------------------------------------------------------
# configuration

_BOUND = {"type": "object", "properties": {"min": {"type": "number"}, "max": {"type": "number"}},
          "additionalProperties": False, "minProperties": 1}

SCHEMA = {
    "type": "object",
    "properties": {
        "weight": {"type": "object", "required": ["family"]},
        "quad": {"type": "object", "properties": {
            "radial_panels": {"type": "integer", "minimum": 1}, "gl_order": {"type": "integer", "minimum": 1},
            "angular_count": {"type": "integer", "minimum": 1},
            "r_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}, "additionalProperties": False},
        "checks": {"type": "array", "items": {
            "type": "object", "required": ["name"],
            "properties": {"name": {"type": "string"}, "parameters": {"type": "object"},
                           "thresholds": {"type": "object", "additionalProperties": _BOUND}},
            "additionalProperties": False}},
        "output": {"type": "object", "properties": {
            "dir": {"type": "string"},
            "formats": {"type": "array", "items": {"enum": ["json", "csv", "svg"]}, "uniqueItems": True}},
            "additionalProperties": False},
        "seed": {"type": "integer"},
    },
    "required": ["weight"],
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    weight: dict
    quad: dict
    checks: list
    output: dict
    seed: int

    def to_json(self) -> dict:
        return {"weight": self.weight, "quad": self.quad, "checks": self.checks, "output": self.output,
                "seed": self.seed}


def load_config(obj, group: str = "suite", seed: int | None = None, out: str | None = None) -> RunConfig:
    """Validate a configuration (dict or JSON text) and apply the subcommand filter.

    Raises :class:`ConfigError` for anything that would fail later: schema
    violations, unknown weights, checks or parameters.
    """
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON: {e}") from None
    try:
        jsonschema.validate(obj, SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path)
        raise ConfigError(f"config/{path}: {e.message}") from None
    try:
        weights.from_json(obj["weight"])
        disk_quad.rule_from_json(obj.get("quad", {}))
    except (BlabError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid weight or quad block: {e}") from None
    if "checks" in obj:
        checks = obj["checks"]
    else:
        groups = GROUPS if group == "suite" else (group,)
        checks = [{"name": n} for g in groups for n in DEFAULT_SUITE[g]]
    norm = []
    for c in checks:
        if c["name"] not in REGISTRY:
            raise ConfigError(f"unknown check {c['name']!r}")
        chk = REGISTRY[c["name"]]
        params = dict(c.get("parameters", {}))
        unknown = set(params) - set(chk.defaults)
        if unknown:
            raise ConfigError(f"check {chk.name!r}: unknown parameters {sorted(unknown)}")
        if group != "suite" and chk.group != group:
            continue
        norm.append({"name": chk.name, "parameters": {**chk.defaults, **params},
                     "thresholds": c.get("thresholds", {})})
    output = {"dir": "blab-out", "formats": ["json", "csv", "svg"], **obj.get("output", {})}
    if out is not None:
        output["dir"] = out
    return RunConfig(obj["weight"], obj.get("quad", {}), norm, output,
                     int(obj.get("seed", 0) if seed is None else seed))


def _judge(metrics: dict, thresholds: dict):
    """``None`` when unthresholded, else ``(passed, failures)``."""
    if not thresholds:
        return None
    fails = []
    for key, bound in sorted(thresholds.items()):
        v = metrics.get(key)
        v = math.inf if v == "inf" else v
        if v is None or (isinstance(v, float) and math.isnan(v)):
            fails.append(f"{key}: missing")
            continue
        if "min" in bound and not v >= bound["min"]:
            fails.append(f"{key}={v:.6g} < {bound['min']:.6g}")
        if "max" in bound and not v <= bound["max"]:
            fails.append(f"{key}={v:.6g} > {bound['max']:.6g}")
    return not fails, fails


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings/None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, complex):
        return _xy(obj)
    return obj


@dataclass
class RunReport:
    config: dict
    checks: list
    timing: dict
    plots: dict = field(default_factory=dict, repr=False)
    csvs: dict = field(default_factory=dict, repr=False)

    @property
    def failed(self) -> list:
        return [c["name"] for c in self.checks if c["passed"] is False]

    def body(self) -> dict:
        """Everything except wall-clock times."""
        return _clean({"config": self.config, "checks": self.checks, "failed": self.failed})

    def to_json(self) -> dict:
        return {**self.body(), "timing": self.timing}


def run(config: RunConfig) -> RunReport:
    """Execute the configured checks in order (nothing is written here)."""
    spec = weights.from_json(config.weight)
    ctx = Context(spec, config.quad, config.seed)
    checks, timing, plots, csvs = [], {}, {}, {}
    for i, c in enumerate(config.checks):
        chk = REGISTRY[c["name"]]
        key = f"{i:02d}-{chk.name}"
        t0 = time.perf_counter()
        try:
            res = chk.fn(ctx, **c["parameters"])
            verdict = _judge(res.metrics, c["thresholds"])
            entry = {"name": chk.name, "group": chk.group, "parameters": c["parameters"],
                     "metrics": res.metrics, "thresholds": c["thresholds"],
                     "passed": None if verdict is None else verdict[0],
                     "failures": [] if verdict is None else verdict[1], "result": res.body}
            if res.plot is not None:
                plots[key] = res.plot
            csvs[key] = res.csv
        except Exception as e:  # noqa: BLE001 - one broken check must not discard the others
            expected = isinstance(e, (BlabError, ValueError, FloatingPointError))
            if not expected:
                log.exception("check %s raised an unexpected error", chk.name)
            entry = {"name": chk.name, "group": chk.group, "parameters": c["parameters"], "metrics": {},
                     "thresholds": c["thresholds"], "passed": False,
                     "failures": [f"{type(e).__name__}: {e}"], "result": None,
                     "error": "numerical" if expected else "internal"}
        timing[key] = time.perf_counter() - t0
        checks.append(entry)
    return RunReport(config.to_json(), checks, timing, plots, csvs)


# --------------------------------------------------------------------------
# SVG


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        step = max(1, (b - a) // 6)
        return [10.0**k for k in range(a, b + 1, step)]
    if hi == lo:
        return [lo]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / 5))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def plot_svg(x, y, kind: str = "line", xlabel: str = "", ylabel: str = "", title: str = "",
             width: int = 640, height: int = 400) -> str:
    """Standalone SVG of one series; the y axis is logarithmic when ``max/min > 100``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) == 0:
        raise ValueError("nothing to plot: empty sample list")
    if kind not in ("line", "scatter", "history"):
        raise ValueError(f"unknown chart kind {kind!r}")
    pos = y[y > 0]
    log = len(pos) == len(y) and pos.max() / pos.min() > 100
    ty = np.log10(y) if log else y
    ml, mr, mt, mb = 70, 20, 30, 50
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(ty.min()), float(ty.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return ml + (v - x0) / (x1 - x0) * (width - ml - mr)

    def py(v):
        return height - mb - (v - y0) / (y1 - y0) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>']
    for t in _ticks(x0, x1, False):
        out.append(f'<line x1="{px(t):.2f}" y1="{height - mb}" x2="{px(t):.2f}" y2="{height - mb + 4}" stroke="black"/>'
                   f'<text x="{px(t):.2f}" y="{height - mb + 16}" text-anchor="middle">{t:.4g}</text>')
    lo, hi = (10**y0, 10**y1) if log else (y0, y1)
    for t in _ticks(lo, hi, log):
        v = math.log10(t) if log else t
        if y0 <= v <= y1:
            out.append(f'<line x1="{ml - 4}" y1="{py(v):.2f}" x2="{ml}" y2="{py(v):.2f}" stroke="black"/>'
                       f'<text x="{ml - 6}" y="{py(v) + 4:.2f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 12}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{(mt + height - mb) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})">{_esc(ylabel)}{" (log)" if log else ""}</text>')
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, ty))
    if kind in ("line", "history"):
        order = np.argsort(x, kind="stable")
        pts = " ".join(f"{px(x[k]):.2f},{py(ty[k]):.2f}" for k in order)
        out.append(f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{pts}"/>')
    if kind in ("scatter", "history"):
        out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="#c0392b"/>' for a, b in zip(x, ty))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def plot(report: RunReport, quantity: str) -> str:
    """SVG for the check named ``quantity`` (or its ``NN-name`` key) in ``report``."""
    keys = [k for k in report.plots if k == quantity or k.split("-", 1)[1] == quantity]
    if not keys:
        raise ConfigError(f"no plottable quantity {quantity!r} in report")
    p = report.plots[keys[0]]
    return plot_svg(p["x"], p["y"], p["kind"], p["xlabel"], p["ylabel"], keys[0])


# --------------------------------------------------------------------------
# entry point


def write_outputs(report: RunReport, config: RunConfig) -> Path:
    d = Path(config.output["dir"])
    d.mkdir(parents=True, exist_ok=True)
    fmts = config.output["formats"]
    if "json" in fmts:
        (d / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    for key, text in report.csvs.items():
        if "csv" in fmts and text:
            (d / f"{key}.csv").write_text(text)
    if "svg" in fmts:
        for key in report.plots:
            try:
                (d / f"{key}.svg").write_text(plot(report, key))
            except ValueError:
                pass  # nothing finite to draw
    return d


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blab", description="Weighted Bergman space verification lab.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in GROUPS + ("suite",):
        p = sub.add_parser(name, help=f"run the {name} checks" if name != "suite" else "run every check")
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
        p.add_argument("--seed", type=int, help="override the configured seed")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if os.environ.get("BLAB_PRECISION", "double") not in ("double", "extended"):
            raise ConfigError("BLAB_PRECISION must be 'double' or 'extended'")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        config = load_config(text, args.command, args.seed, args.out)
    except ConfigError as e:
        print(f"blab: usage error: {e}", file=sys.stderr)
        return 2
    with threadpool_limits(limits=args.threads):
        report = run(config)
    d = write_outputs(report, config)
    for c in report.checks:
        status = {True: "PASS", False: "FAIL", None: "----"}[c["passed"]]
        print(f"{status} {c['name']}" + (f"  ({'; '.join(c['failures'])})" if c["failures"] else ""))
    print(f"report: {d / 'report.json'}")
    if report.failed:
        print("failing checks: " + ", ".join(report.failed), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
