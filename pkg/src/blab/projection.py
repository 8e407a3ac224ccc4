"""The Bergman projection as a quadrature operator, and the checks built on it.

``P f(z) = int f(xi) conj(K_z(xi)) omega(xi) dA(xi) = sum_n c_n z^n`` where the
monomial coefficients follow from the moments ``b_n = <f, xi^n>_omega``:
``c_n = b_n / m_n`` for radial weights, ``conj(G) c = b`` for a Gram model.
All ``b_n`` are obtained at once from one angular FFT per quadrature ring, so
the operator costs ``O(n_r n_theta log n_theta)`` per input function.

Operator norms reported here are lower bounds from finite test families.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from . import disk_quad, kernel, weights
from .disk_quad import SampledFn
from .kernel import EstimateReport
from .logreal import log_complex_sum, logsumexp


@dataclass
class ProjectionOperator:
    model: kernel.KernelModel
    spec: weights.WeightSpec
    rule: disk_quad.QuadRule
    n_terms: int = 0
    _node_logw: np.ndarray = field(default=None, repr=False)
    _refined: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_terms <= 0:
            cap = self.model.N + 1
            self.n_terms = min(cap, self.rule.angular_count - 1)
        if self.n_terms >= self.rule.angular_count:
            raise ValueError("projection degree must stay below the angular node count")
        self._node_logw = weights.log_weight(self.spec, self.rule.nodes) + self.rule.log_weights

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    def refined(self) -> "ProjectionOperator":
        if self._refined is None:
            m = self.model.refined()
            self._refined = ProjectionOperator(m, self.spec, m.rule)
        return self._refined

    def sample(self, f) -> SampledFn:
        """Sample a closed-form ``f`` (callable or analytic descriptor) on the rule nodes."""
        if isinstance(f, SampledFn):
            return f
        return SampledFn.from_callable(self.nodes, f)


def make_operator(spec, rule, model=None, n_terms: int = 0) -> ProjectionOperator:
    if model is None:
        model = kernel.radial_model(spec, rule) if spec.radial_flag else kernel.gram_onb(spec, 40, rule)
    return ProjectionOperator(model, spec, rule, n_terms)


def moments_of(op: ProjectionOperator, f) -> tuple[np.ndarray, np.ndarray]:
    """``b_n = <f, xi^n>_omega`` for ``n < n_terms`` as ``(log|b|, arg b)``."""
    s = op.sample(f)
    rule = op.rule
    lg = (s.log_mag + op._node_logw).reshape(rule.n_r, rule.angular_count)
    ph = s.phase.reshape(rule.n_r, rule.angular_count)
    shift = np.max(lg, axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    F = np.fft.fft(np.exp(lg - shift[:, None] + 1j * ph), axis=1)[:, : op.n_terms]
    n = np.arange(op.n_terms)
    with np.errstate(divide="ignore"):
        L = np.log(np.abs(F)) + shift[:, None] + n[None, :] * np.log(rule.r)[:, None]
    return log_complex_sum(L, np.angle(F), axis=0)


def coefficients(op: ProjectionOperator, f) -> tuple[np.ndarray, np.ndarray]:
    """Monomial coefficients of ``P f`` as ``(log|c|, arg c)``."""
    lb, pb = moments_of(op, f)
    m = op.model
    if m.mode == "radial":
        return lb - m.moments.log_m[: op.n_terms], pb
    N = m.N + 1
    bs = np.exp(lb[:N] - m.log_scale + 1j * pb[:N])
    # conj(Gs) w = bs with Gs = L L^H  ->  conj(L) y = bs, L^T w = y
    y = scipy.linalg.solve_triangular(np.conj(m.chol), bs, lower=True)
    w = scipy.linalg.solve_triangular(m.chol.T, y, lower=False)
    with np.errstate(divide="ignore"):
        lc = np.log(np.abs(w)) - m.log_scale
    return lc, np.angle(w)


def project(op: ProjectionOperator, f, z):
    """``P_omega f(z)`` at a point or array of points."""
    lc, pc = coefficients(op, f)
    lm, ph = kernel.eval_series(lc, pc, np.asarray(z, dtype=complex))
    out = np.exp(lm + 1j * ph)
    return complex(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))


def project_on_rule(op: ProjectionOperator, f, rule=None) -> SampledFn:
    """``P f`` at every node of ``rule`` (default: the operator's rule)."""
    rule = op.rule if rule is None else rule
    lc, pc = coefficients(op, f)
    lm, ph = kernel.eval_series_rings(lc, pc, rule.r, rule.angular_count)
    return SampledFn(lm.ravel(), ph.ravel(), "grid_data")


def reproduce_check(op: ProjectionOperator, f, grid) -> float:
    """``max |P f(z) - f(z)| / (1 + |f(z)|)`` over ``grid``."""
    grid = np.asarray(grid, dtype=complex)
    pf = project(op, f, grid)
    fv = np.asarray(f(grid), dtype=complex)
    return float(np.max(np.abs(pf - fv) / (1.0 + np.abs(fv))))


def polar_grid(r_max: float, n_r: int = 10, n_theta: int = 24) -> np.ndarray:
    r = np.linspace(0.0, r_max, n_r)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    return np.concatenate([[0j], (r[1:, None] * np.exp(1j * th)[None, :]).ravel()])


def pairing(f, g, spec, rule) -> complex:
    """``<f, g>_omega = int f conj(g) omega dA``; ``f``, ``g`` callables or sampled on ``rule``."""
    nodes = rule.nodes
    sf = f if isinstance(f, SampledFn) else SampledFn.from_callable(nodes, f)
    sg = g if isinstance(g, SampledFn) else SampledFn.from_callable(nodes, g)
    lw = weights.log_weight(spec, nodes) + rule.log_weights
    lm, ph = log_complex_sum(sf.log_mag + sg.log_mag + lw, sf.phase - sg.phase)
    return complex(math.exp(lm) * complex(math.cos(ph), math.sin(ph))) if np.isfinite(lm) else 0j


# --------------------------------------------------------------------------
# norms


def lp_log_norm(s: SampledFn, log_w_half, log_qw, p: float, mask=None) -> float:
    """``log ||f||_{L^p(omega^{p/2})}`` from samples; ``log_w_half = log omega^{1/2}`` at nodes."""
    lm = s.log_mag + log_w_half
    if mask is not None:
        lm, log_qw = lm[mask], log_qw[mask]
    if math.isinf(p):
        return float(np.max(lm))
    return logsumexp(p * lm + log_qw) / p


@dataclass
class NormReport:
    """Empirical ``||P f|| / ||f||`` over a test family; ``max_ratio`` is a lower bound on ``||P||``."""

    p: float
    description: str
    ratios: np.ndarray
    names: list
    history: list = field(default_factory=list)
    skipped: int = 0

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    @property
    def drift(self) -> float:
        if len(self.history) < 2:
            return 0.0
        a, b = self.history[-2], self.history[-1]
        return abs(b - a) / abs(a)

    def to_json(self) -> dict:
        return {
            "p": "inf" if math.isinf(self.p) else self.p,
            "description": self.description,
            "max_ratio": self.max_ratio,
            "lower_bound": True,
            "ratios": [float(x) for x in self.ratios],
            "names": self.names,
            "refinement": self.history,
            "drift": self.drift,
            "skipped": self.skipped,
        }


def _smooth_bump(t):
    """C-infinity bump on [0, 1): 1 at 0, 0 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
        b = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        return np.where(t <= 0, 1.0, a / (a + b))


@dataclass(frozen=True)
class ProbeFunction:
    """Closed-form element of ``L^p(omega^{p/2})``, written as ``omega^{-1/2} * g``; ``g`` bounded."""

    name: str
    g: object
    spec: weights.WeightSpec

    def sampled(self, nodes) -> SampledFn:
        v = np.asarray(self.g(nodes), dtype=complex)
        s = SampledFn.from_values(v, "closed_form")
        return s.times_log(-0.5 * weights.log_weight(self.spec, nodes))


def default_test_functions(spec, n: int = 50, seed: int = 0, r_in: float = 0.9) -> list:
    """Seeded mix of mollified indicators, conjugate-analytic, random-phase and a few analytic functions."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        kind = i % 3 if i % 10 != 9 else 3
        if kind == 3:
            # analytic members: P acts as the identity on these
            a = 0.9 * rng.random() * np.exp(2j * np.pi * rng.random())
            out.append(ProbeFunction(f"analytic{i}", lambda z, a=a, s=spec: np.exp(0.5 * weights.log_weight(s, z)) / (1 - np.conj(a) * z), spec))
        elif kind == 0:
            c = r_in * math.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
            w = (0.5 + 2.0 * rng.random()) * float(weights.tau(spec, c))
            ph = rng.random() * 2 * np.pi
            g = (lambda z, c=c, w=w, ph=ph: _smooth_bump(np.abs(z - c) / w) * np.exp(1j * ph))
            out.append(ProbeFunction(f"bump{i}", g, spec))
        elif kind == 1:
            k, j = int(rng.integers(1, 6)), int(rng.integers(0, 6))
            a = rng.normal() + 1j * rng.normal()
            g = (lambda z, k=k, j=j, a=a: a * np.conj(z) ** k * z**j)
            out.append(ProbeFunction(f"conj{i}_k{k}_j{j}", g, spec))
        else:
            modes = rng.integers(1, 8, size=4)
            amp = rng.normal(size=4) * 3
            off = rng.random(4) * 2 * np.pi

            def g(z, modes=modes, amp=amp, off=off):
                r, t = np.abs(z), np.angle(z)
                phase = sum(a * r**m * np.cos(m * t + o) for m, a, o in zip(modes, amp, off))
                return np.exp(1j * phase)

            out.append(ProbeFunction(f"phase{i}", g, spec))
    return out


def _norm_ratios(op, p, test_fns, r_out):
    rule = op.rule
    nodes = rule.nodes
    lwh = 0.5 * weights.log_weight(op.spec, nodes)
    mask = np.abs(nodes) <= r_out
    ratios, names, skipped = [], [], 0
    for tf in test_fns:
        s = tf.sampled(nodes) if isinstance(tf, ProbeFunction) else op.sample(tf)
        ln_f = lp_log_norm(s, lwh, rule.log_weights, p)
        if not np.isfinite(ln_f):
            warnings.warn(f"test function {getattr(tf, 'name', tf)} has zero norm; skipped")
            skipped += 1
            continue
        if p == 2:
            ln_pf = 0.5 * _log_a2_norm_sq(op, s)
        else:
            pf = project_on_rule(op, s)
            ln_pf = lp_log_norm(pf, lwh, rule.log_weights, p, mask)
        ratios.append(math.exp(ln_pf - ln_f))
        names.append(getattr(tf, "name", "f"))
    return np.array(ratios), names, skipped


def _log_a2_norm_sq(op, f) -> float:
    """``||P f||^2`` by Parseval in the monomial basis."""
    lc, pc = coefficients(op, f)
    m = op.model
    if m.mode == "radial":
        return logsumexp(2 * lc + m.moments.log_m[: op.n_terms])
    N = m.N + 1
    w = np.exp(lc[:N] + m.log_scale + 1j * pc[:N])
    y = m.chol.conj().T @ w
    return float(np.log(np.vdot(y, y).real))


def empirical_norm(op: ProjectionOperator, p: float, test_fns=None, r_out: float = 0.95,
                   levels: int = 2, seed: int = 0) -> NormReport:
    """Ratios ``||P f||_{L^p(omega^{p/2})} / ||f||_{L^p(omega^{p/2})}`` over ``test_fns``.

    For ``p = 2`` the output norm is the exact A^2 norm (Parseval); otherwise the
    output is measured on ``|z| <= r_out`` -- a lower bound for the full norm.
    ``levels=2`` repeats the computation on the refined operator.
    """
    if test_fns is None:
        test_fns = default_test_functions(op.spec, 50, seed)
    ops = [op] + ([op.refined()] if levels > 1 else [])
    hist, ratios, names, skipped = [], None, None, 0
    for o in ops:
        ratios, names, skipped = _norm_ratios(o, p, test_fns, r_out)
        hist.append(float(np.max(ratios)))
    desc = f"{len(names)} closed-form test functions; output norm on |z| <= {r_out if p != 2 else op.rule.r_max}"
    return NormReport(float(p), desc, ratios, names, hist, skipped)


# --------------------------------------------------------------------------
# duality


@dataclass
class _PolySpace:
    """Degree < d polynomials sampled on a rule, in the A^2(omega)-orthonormal monomial basis."""

    V: np.ndarray  # nodes x d
    log_w: np.ndarray  # log omega at nodes
    log_q: np.ndarray  # log quadrature weights


def _poly_space(spec, d, rule, model):
    nodes = rule.nodes
    n = np.arange(d)
    if model.mode == "radial":
        ls = 0.5 * model.moments.log_m[:d]
    else:
        ls = model.log_scale[:d]
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(n[None, :] == 0, 0.0, n[None, :] * np.log(np.abs(nodes))[:, None]) - ls[None, :]
    V = np.exp(L + 1j * n[None, :] * np.angle(nodes)[:, None])
    return _PolySpace(V, weights.log_weight(spec, nodes), rule.log_weights)


def _lp_norm(F, ps, p):
    a = np.abs(F) * np.exp(0.5 * ps.log_w)
    if math.isinf(p):
        return float(np.max(a))
    return float(np.exp(logsumexp(p * np.log(np.maximum(a, 1e-300)) + ps.log_q) / p))


def _dual_objective(x, ps, q, p, mu):
    d = len(x) // 2
    a = x[:d] + 1j * x[d:]
    F = ps.V @ a
    u = q @ a
    au2 = abs(u) ** 2
    if au2 == 0:
        return 1e3, np.zeros_like(x)
    gu = np.concatenate([np.real(np.conj(u) * q), -np.imag(np.conj(u) * q)]) / au2
    absF = np.maximum(np.abs(F), 1e-300)
    S = np.sum(mu * absF**p)
    h = mu * p * absF ** (p - 2) * np.conj(F)
    Vh = ps.V.T @ h
    gS = np.concatenate([np.real(Vh), -np.imag(Vh)]) / (p * S)
    val = -(0.5 * math.log(au2) - math.log(S) / p)
    return val, -(gu - gS)


def _dual_norm(g_coef, ps, p, rng, restarts=20, maxiter=300):
    """``max |<f, g>| / ||f||_p`` over the subspace; returns (value, converged)."""
    G = ps.V @ g_coef
    wq = np.exp(ps.log_w + ps.log_q)
    q = ps.V.T @ (wq * np.conj(G))  # <f, g> = q . a
    d = ps.V.shape[1]
    seeds = [g_coef]
    if p not in (1, 2):  # Hoelder extremal seed (p = 1 pairs with the sup norm; no smooth extremal)
        pp = p / (p - 1)
        ext = np.abs(G) ** (pp - 2) * np.exp((pp - 2) * 0.5 * ps.log_w) * G
        A = ps.V.conj().T @ (wq[:, None] * ps.V)
        seeds.append(np.linalg.solve(A, ps.V.conj().T @ (wq * ext)))
    n_base = len(seeds)
    while len(seeds) < restarts:
        seeds.append(seeds[len(seeds) % n_base] + 0.5 * np.linalg.norm(g_coef) * (rng.normal(size=d) + 1j * rng.normal(size=d)))
    mu = np.exp(0.5 * p * ps.log_w + ps.log_q)
    best, conv = -np.inf, True
    for s in seeds:
        x0 = np.concatenate([s.real, s.imag])
        res = minimize(_dual_objective, x0, args=(ps, q, p, mu), jac=True, method="BFGS",
                       options={"maxiter": maxiter, "gtol": 1e-10})
        val = -res.fun
        if val > best:
            best, conv = val, bool(res.success or res.status == 2)
    return math.exp(best), conv


def duality_ratio(spec, model, p: float, d: int, trials: int = 20, seed: int = 0, rule=None,
                  restarts: int = 20, g_coefs=None) -> EstimateReport:
    """``||Lambda_g|| / ||g||_{A^{p'}(omega^{p'/2})}`` for random ``g`` of degree ``< d``.

    ``||Lambda_g||`` is maximized over the same subspace (BFGS with analytic
    gradient, restarts seeded by the Hoelder extremal), so each value is a lower
    estimate of the functional norm on the subspace.  ``p = 1`` pairs with the
    sup norm of ``g``.
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    rule = disk_quad.build_rule(12, 16, 64, model.rule.r_max) if rule is None else rule
    ps = _poly_space(spec, d, rule, model)
    rng = np.random.default_rng(seed)
    pp = math.inf if p == 1 else p / (p - 1)
    ratios, samples, all_conv = [], [], True
    coefs = g_coefs if g_coefs is not None else [
        rng.normal(size=d) + 1j * rng.normal(size=d) for _ in range(trials)
    ]
    for t, gc in enumerate(coefs):
        gc = np.asarray(gc, dtype=complex)
        lam, conv = _dual_norm(gc, ps, p, rng, restarts)
        gn = _lp_norm(ps.V @ gc, ps, pp)
        ratios.append(lam / gn)
        all_conv &= conv
        samples.append({"trial": t, "value": lam / gn, "functional_norm": lam, "g_norm": gn})
    extra = {"p": p, "p_dual": "inf" if math.isinf(pp) else pp, "degree_lt": d,
             "lower_estimate": True, "converged": all_conv}
    return EstimateReport(f"duality_p{p:g}", np.array(ratios), samples, extra=extra)


# --------------------------------------------------------------------------
# density of kernel combinations


def lattice_centers(spec, k: int, step: float = 0.6) -> np.ndarray:
    """Nested tau-adapted centers: the origin, then rings ``rho_{i+1} = rho_i + step tau(rho_i)``.

    Within a ring points are listed in bit-reversed angular order so every prefix
    is spread around the ring; the first ``k`` points of the sequence are returned.
    """
    pts = [0j]
    rho = 0.0
    while len(pts) < k:
        rho = rho + step * float(weights.tau(spec, rho))
        if rho >= 1:
            break
        t = step * float(weights.tau(spec, rho))
        n = max(3, int(round(2 * np.pi * rho / t)))
        order = sorted(range(n), key=lambda j: _bitrev_key(j, n))
        off = 0.5 * (len(pts) % 2)
        pts.extend(rho * np.exp(2j * np.pi * (np.array(order) + off) / n))
    return np.array(pts[:k])


def _bitrev_key(j, n):
    bits = max(1, (n - 1).bit_length())
    return int(format(j, f"0{bits}b")[::-1], 2)


@dataclass
class DensityCurve:
    ks: list
    errors: list
    relative: list
    condition: list

    def to_json(self) -> dict:
        return {"k": self.ks, "error": self.errors, "relative_error": self.relative, "condition": self.condition}


def kernel_density_experiment(spec, model, f, ks=(1, 4, 9, 16), p: float = 2, centers=None,
                              rule=None, rcond: float = 1e-13) -> DensityCurve:
    """Best approximation of ``f`` from ``span{K_{z_1}, ..., K_{z_k}}``.

    ``p = 2``: exact least squares through the kernel Gram matrix
    ``[K_{z_j}(z_i)]`` (regularized by an eigenvalue cut-off, condition reported).
    Otherwise BFGS on the ``L^p(omega^{p/2})`` error over the quadrature nodes,
    warm-started from the previous ``k`` so the curve is non-increasing.
    """
    ks = list(ks)
    kmax = max(ks) if ks else 0
    z = lattice_centers(spec, kmax) if centers is None else np.asarray(centers, dtype=complex)
    rule = model.rule if rule is None else rule
    nodes = rule.nodes
    lwh = 0.5 * weights.log_weight(spec, nodes)
    fs = SampledFn.from_callable(nodes, f)
    if p == 2:
        f_norm2 = math.exp(lp_log_norm(fs, lwh, rule.log_weights, 2) * 2)
    errors, conds = [], []
    prev = None
    Kn = None
    if p != 2 and kmax:
        Kn = np.stack([np.exp(np.array(kernel.kernel_on_rule(model, a, rule)[0])
                              + 1j * np.array(kernel.kernel_on_rule(model, a, rule)[1])) for a in z[:kmax]], axis=1)
    fv = fs.values()
    for k in ks:
        if k == 0:
            errors.append(math.exp(lp_log_norm(fs, lwh, rule.log_weights, p)))
            conds.append(1.0)
            continue
        zk = z[:k]
        if p == 2:
            Gk = np.array([[kernel.eval_kernel(model, zj, zi).value() for zj in zk] for zi in zk])
            rhs = np.asarray(f(zk), dtype=complex)
            dsc = np.sqrt(np.real(np.diag(Gk)))
            Gs = Gk / dsc[:, None] / dsc[None, :]
            Gs = 0.5 * (Gs + Gs.conj().T)
            ev, U = np.linalg.eigh(Gs)
            keep = ev > rcond * ev.max()
            conds.append(float(ev.max() / ev[keep].min()))
            y = U[:, keep].conj().T @ (rhs / dsc)
            gain = float(np.sum(np.abs(y) ** 2 / ev[keep]))
            errors.append(math.sqrt(max(f_norm2 - gain, 0.0)))
        else:
            mu = np.exp(0.5 * p * weights.log_weight(spec, nodes) + rule.log_weights)
            A = Kn[:, :k]
            x0 = np.zeros(2 * k)
            if prev is not None:
                x0[: len(prev) // 2] = prev[: len(prev) // 2]
                x0[k : k + len(prev) // 2] = prev[len(prev) // 2 :]

            def obj(x, A=A, k=k):
                c = x[:k] + 1j * x[k:]
                R = fv - A @ c
                aR = np.maximum(np.abs(R), 1e-300)
                S = np.sum(mu * aR**p)
                h = mu * p * aR ** (p - 2) * np.conj(R)
                Ah = -(A.T @ h)
                return S, np.concatenate([np.real(Ah), -np.imag(Ah)])

            res = minimize(obj, x0, jac=True, method="BFGS", options={"maxiter": 500})
            prev = res.x
            errors.append(float(res.fun) ** (1 / p))
            conds.append(float(np.linalg.cond(A)))
    base = math.sqrt(f_norm2) if p == 2 else math.exp(lp_log_norm(fs, lwh, rule.log_weights, p))
    return DensityCurve(ks, errors, [e / base for e in errors], conds)


# --------------------------------------------------------------------------
# truncation


def smoothstep_cutoff(n: int):
    """``chi_n(r)``: 1 on ``r <= 1 - 1/n``, 0 on ``r >= 1 - 1/(2n)``, quintic (C^2) in between."""

    def chi(z):
        r = np.abs(np.asarray(z, dtype=complex))
        t = np.clip((r - (1 - 1 / n)) * 2 * n, 0.0, 1.0)
        return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)

    return chi


@dataclass
class TruncatedApprox:
    coef_log: np.ndarray
    coef_arg: np.ndarray
    norm_ratio: float
    compact_error: float

    def __call__(self, z):
        lm, ph = kernel.eval_series(self.coef_log, self.coef_arg, np.asarray(z, dtype=complex))
        return np.exp(lm + 1j * ph).reshape(np.shape(z))


def truncated_approx(spec, f, n: int, R: float = 0.5, rule=None, op_star=None) -> TruncatedApprox:
    """``f_n = P_{omega_*}(f chi_n)`` with ``omega_* = omega tau^2``.

    Returns ``f_n`` with ``||f_n||_{A^1(omega^1/2)} / ||f||_{A^1(omega^1/2)}`` and
    ``max |f_n - f|`` on ``|z| <= R``.
    """
    if op_star is None:
        rule = disk_quad.build_rule() if rule is None else rule
        star = weights.build_associated(spec, 2.0)
        op_star = ProjectionOperator(kernel.radial_model(star, rule), star, rule)
    rule = op_star.rule
    nodes = rule.nodes
    chi = smoothstep_cutoff(n)
    fchi = SampledFn.from_values(np.asarray(f(nodes), dtype=complex) * chi(nodes), "closed_form")
    lc, pc = coefficients(op_star, fchi)
    fn = TruncatedApprox(lc, pc, math.nan, math.nan)
    lwh = 0.5 * weights.log_weight(spec, nodes)
    lm, ph = kernel.eval_series_rings(lc, pc, rule.r, rule.angular_count)
    n_fn = lp_log_norm(SampledFn(lm.ravel(), ph.ravel()), lwh, rule.log_weights, 1)
    n_f = lp_log_norm(SampledFn.from_values(f(nodes)), lwh, rule.log_weights, 1)
    grid = polar_grid(R, 12, 32)
    fn.norm_ratio = math.exp(n_fn - n_f)
    fn.compact_error = float(np.max(np.abs(fn(grid) - np.asarray(f(grid), dtype=complex))))
    return fn


__all__ = [
    "ProjectionOperator", "NormReport", "ProbeFunction", "DensityCurve", "TruncatedApprox",
    "make_operator", "moments_of", "coefficients", "project", "project_on_rule", "reproduce_check",
    "pairing", "empirical_norm", "default_test_functions", "duality_ratio", "lattice_centers",
    "kernel_density_experiment", "smoothstep_cutoff", "truncated_approx", "polar_grid", "lp_log_norm",
]
