"""Reproducing kernels of A^2(omega) and numerical checks of kernel estimates.

Two representations are supported.

``radial``
    ``K_z(xi) = sum_n (xi conj(z))^n / m_n`` with moments
    ``m_n = 2 int_0^{r_max} r^{2n+1} omega(r) dr``.  Moments are log-convex
    (Cauchy--Schwarz), so ``m_n / m_{n+1}`` is non-increasing and the tail after
    ``N`` terms is bounded by ``T_{N+1} / (1 - |x| m_N / m_{N+1})``.

``gram``
    Monomials up to degree ``N`` are orthonormalized against the (possibly
    non-radial) weight through a Cholesky factorization of the diagonally scaled
    Gram matrix ``G_{mn} = <z^m, z^n>_omega``.

Both give the kernel as a power series ``K_z(xi) = sum_n c_n(z) xi^n`` whose
coefficients are kept in log form; evaluation at scattered points and on the
rings of a quadrature rule (via FFT) share that representation.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import disk_quad, weights
from .errors import DegreeReductionError, ModeError, PreconditionError, ResolutionError
from .logreal import LogReal, log_complex_sum, logsumexp

DEFAULT_CAP = 4000
DEFAULT_TOL = 1e-15


def _precision():
    p = os.environ.get("BLAB_PRECISION", "double")
    if p not in ("double", "extended"):
        raise ValueError("BLAB_PRECISION must be 'double' or 'extended'")
    return p


# --------------------------------------------------------------------------
# moments


@dataclass
class MomentSeq:
    """``log m_n`` for ``n = 0..N`` of a radial weight on ``|z| <= r_max``."""

    spec: weights.WeightSpec
    N: int
    log_m: np.ndarray
    r_max: float
    refinement: float | None = None

    @property
    def m(self) -> list:
        return [LogReal.from_log(v) for v in self.log_m]

    def values(self) -> np.ndarray:
        return np.exp(self.log_m)


def _radial_log_moments(spec, N, rule, precision):
    r = rule.r
    lw = weights.log_weight(spec, r.astype(complex))
    n = np.arange(N + 1)[:, None]
    logs = (2 * n + 1) * np.log(r)[None, :] + (lw + np.log(2.0 * rule.wr))[None, :]
    return logsumexp(logs, axis=1, precision=precision)


def compute_moments(spec: weights.WeightSpec, N: int, rule: disk_quad.QuadRule, refine: bool = True) -> MomentSeq:
    """Moments ``m_0..m_N`` by the radial part of ``rule``; accumulation precision from ``BLAB_PRECISION``.

    With ``refine=True`` the computation is repeated on ``rule.refined()`` and the
    largest relative change is stored as ``refinement``.
    """
    if not spec.radial_flag:
        raise ModeError("moment series needs a radial weight; use gram_onb for non-radial weights")
    if N < 0:
        raise ValueError("N must be >= 0")
    prec = _precision()
    log_m = _radial_log_moments(spec, N, rule, prec)
    ref = None
    if refine:
        fine = _radial_log_moments(spec, N, rule.refined(), prec)
        ref = float(np.max(np.abs(np.expm1(fine - log_m))))
    return MomentSeq(spec, int(N), log_m, rule.r_max, ref)


# --------------------------------------------------------------------------
# kernel models


@dataclass
class KernelModel:
    mode: str
    spec: weights.WeightSpec
    rule: disk_quad.QuadRule
    N: int
    moments: MomentSeq | None = None
    log_scale: np.ndarray | None = None  # gram: log sqrt(G_nn)
    chol: np.ndarray | None = None  # gram: lower Cholesky factor of the scaled Gram matrix
    tol: float = DEFAULT_TOL
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def r_max(self) -> float:
        return self.rule.r_max

    def refined(self) -> "KernelModel":
        """The same model built on the refined quadrature rule (cached)."""
        if "refined" not in self._cache:
            fine = self.rule.refined()
            if self.mode == "radial":
                self._cache["refined"] = radial_model(self.spec, fine, self.N, self.tol)
            else:
                self._cache["refined"] = gram_onb(self.spec, self.N, fine)
        return self._cache["refined"]


def radial_model(spec, rule, N: int = DEFAULT_CAP, tol: float = DEFAULT_TOL) -> KernelModel:
    """Radial kernel model with a moment sequence of length ``N + 2``."""
    mom = compute_moments(spec, N + 1, rule, refine=False)
    return KernelModel("radial", spec, rule, int(N), moments=mom, tol=tol)


def gram_onb(spec: weights.WeightSpec, N: int, rule: disk_quad.QuadRule, cond_floor: float = 1e-13) -> KernelModel:
    """Kernel of the degree-``N`` polynomial subspace via a Cholesky-factored Gram matrix.

    Raises :class:`DegreeReductionError` when the scaled Gram matrix has an
    eigenvalue below ``cond_floor``; ``achievable`` is the largest degree that passes.
    """
    if N >= rule.angular_count // 2:
        raise ValueError("Gram degree must be below half the angular node count")
    G, log_d = _gram_matrix(spec, N, rule)
    ok = _largest_stable_degree(G, cond_floor)
    if ok < N:
        raise DegreeReductionError(f"Gram matrix numerically singular beyond degree {ok}", ok)
    L = np.linalg.cholesky(G)
    return KernelModel("gram", spec, rule, int(N), log_scale=log_d, chol=L)


def _largest_stable_degree(G, floor):
    n = G.shape[0]
    ev = np.linalg.eigvalsh(G)
    if ev[0] > floor:
        return n - 1
    lo = 0
    for k in range(1, n + 1):
        if np.linalg.eigvalsh(G[:k, :k])[0] > floor:
            lo = k - 1
        else:
            break
    return lo


def _ring_fourier_logs(rule, log_vals):
    """Per ring: ``sum_j v_kj e^{i l theta_j}`` for all ``l`` as (log-shift, normalized array)."""
    lv = log_vals.reshape(rule.n_r, rule.angular_count)
    shift = np.max(lv, axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    return shift, lv - shift[:, None]


def _gram_matrix(spec, N, rule):
    nodes = rule.nodes
    lw = weights.log_weight(spec, nodes)
    shift, lv = _ring_fourier_logs(rule, lw)
    # Omega_k(l) = sum_j w_kj e^{-i l theta_j}, l in [-N, N]
    F = np.fft.fft(np.exp(lv), axis=1)
    n = np.arange(N + 1)
    logc = np.log(rule.ring_weights) + shift
    # log magnitude of r^{m+n} c_k
    expo = (n[:, None] + n[None, :])[None, :, :] * np.log(rule.r)[:, None, None] + logc[:, None, None]
    mx = expo.max(axis=0)
    # <z^m, z^n> = sum w z^m conj(z)^n  -> angular factor e^{i(m-n)theta}; fft gives e^{-i l theta}
    ang = F[:, (-(n[:, None] - n[None, :])) % rule.angular_count]
    G = np.sum(np.exp(expo - mx[None]) * ang, axis=0)
    log_d = 0.5 * np.real(np.log(np.diag(G)) + np.diag(mx))
    Gs = G * np.exp(mx - log_d[:, None] - log_d[None, :])
    Gs = 0.5 * (Gs + Gs.conj().T)
    return Gs, log_d


# --------------------------------------------------------------------------
# series coefficients and evaluation


def _tail_N(model: KernelModel, ax: float, cap: int | None = None):
    """Smallest N with tail bound <= tol * sum|T_n| at |x| = ax (radial mode)."""
    lm = model.moments.log_m
    cap = model.N if cap is None else min(cap, model.N)
    if ax == 0:
        return 0, -np.inf
    n = np.arange(cap + 1)
    logT = n * math.log(ax) - lm[: cap + 1]
    log_rho = math.log(ax) + lm[: cap + 1] - lm[1 : cap + 2]
    logT_next = (n + 1) * math.log(ax) - lm[1 : cap + 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        log_tail = np.where(log_rho < 0, logT_next - np.log(-np.expm1(log_rho)), np.inf)
    log_S = np.logaddexp.accumulate(logT)
    ok = log_tail - log_S <= math.log(model.tol)
    if ok.any():
        k = int(np.argmax(ok))
        return k, float(log_tail[k] - log_S[k])
    # suggestion: continue the geometric bound past the cap, or search longer moment sequences
    rho = math.exp(log_rho[-1])
    sugg = None
    if rho < 1:
        need = (math.log(model.tol) - (log_tail[-1] - log_S[-1])) / math.log(rho)
        sugg = int(cap + math.ceil(need) + 1)
    else:
        sugg = _search_N(model, ax, 2 * max(cap, 16))
    raise ResolutionError(
        f"kernel series not resolved with N={cap} terms at |xi conj(z)|={ax:.6g}", suggested=sugg
    )


def _search_N(model: KernelModel, ax: float, start: int, limit: int = 64_000):
    """Smallest sufficient ``N`` found by recomputing moments with doubling length."""
    N = start
    while N <= limit:
        trial = KernelModel("radial", model.spec, model.rule, N,
                            moments=compute_moments(model.spec, N + 1, model.rule, refine=False), tol=model.tol)
        try:
            return _tail_N(trial, ax)[0]
        except ResolutionError:
            N *= 2
    return None


def kernel_coefficients(model: KernelModel, z, n_terms: int | None = None):
    """``(log|c_n|, arg c_n)`` with ``K_z(xi) = sum_n c_n xi^n``."""
    z = complex(z)
    if model.mode == "radial":
        n_terms = model.N + 1 if n_terms is None else n_terms
        n = np.arange(n_terms)
        lz = math.log(abs(z)) if z != 0 else -np.inf
        with np.errstate(invalid="ignore"):
            logc = np.where(n == 0, 0.0, n * lz) - model.moments.log_m[:n_terms]
        argc = -n * np.angle(z)
        return logc, argc
    vt = _scaled_powers(model, np.array([z]))[:, 0]
    y = scipy.linalg.solve_triangular(model.chol, vt, lower=True)
    c = scipy.linalg.solve_triangular(model.chol.T, np.conj(y), lower=False)
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c)) - model.log_scale
    return logc, np.angle(c)


def _scaled_powers(model, pts):
    """Columns ``xi^n / sqrt(G_nn)`` for n = 0..N (gram mode)."""
    n = np.arange(model.N + 1)[:, None]
    pts = np.asarray(pts, dtype=complex)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(n == 0, 0.0, n * np.log(np.abs(pts)))
    return np.exp(lg - model.log_scale[:, None]) * np.exp(1j * n * np.angle(pts))


def eval_series(logc, argc, pts, chunk_elems: int = 1 << 21):
    """``sum_n c_n xi^n`` at points, returned as ``(log|S|, arg S)`` arrays."""
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))
    n = np.arange(len(logc))
    out_l = np.empty(pts.shape, dtype=float)
    out_p = np.empty(pts.shape, dtype=float)
    flat = pts.ravel()
    ol, op = out_l.ravel(), out_p.ravel()
    step = max(1, chunk_elems // max(1, len(n)))
    for s in range(0, flat.size, step):
        x = flat[s : s + step]
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(np.abs(x))
            L = np.where(n[None, :] == 0, 0.0, n[None, :] * lx[:, None]) + logc[None, :]
        P = n[None, :] * np.angle(x)[:, None] + argc[None, :]
        ol[s : s + step], op[s : s + step] = log_complex_sum(L, P, axis=1)
    return out_l, out_p


def eval_series_rings(logc, argc, r, n_theta: int):
    """Series on rings ``r_k e^{2 pi i j / n_theta}``: fold ``n mod n_theta`` and inverse FFT.

    Exact at the ring nodes (aliasing is an identity there).  Returns
    ``(log|S|, arg S)`` with shape ``(len(r), n_theta)``.
    """
    n = np.arange(len(logc))
    r = np.asarray(r, dtype=float)
    L = n[None, :] * np.log(r)[:, None] + logc[None, :]
    shift = L.max(axis=1)
    terms = np.exp(L - shift[:, None] + 1j * argc[None, :])
    folded = np.zeros((len(r), n_theta), dtype=complex)
    np.add.at(folded, (slice(None), n % n_theta), terms) if len(n) > n_theta else folded.__setitem__(
        (slice(None), slice(0, len(n))), terms
    )
    vals = np.fft.ifft(folded, axis=1) * n_theta
    with np.errstate(divide="ignore"):
        lm = np.log(np.abs(vals)) + shift[:, None]
    return lm, np.angle(vals)


@dataclass
class KernelValue:
    log_mag: np.ndarray | float
    phase: np.ndarray | float
    log_tail: float = -np.inf
    n_terms: int = 0

    def __iter__(self):
        yield self.log_mag
        yield self.phase

    def value(self):
        return np.exp(self.log_mag + 1j * self.phase)


def _terms_for(model, ax):
    if model.mode == "gram":
        return model.N + 1, -np.inf
    k, lt = _tail_N(model, ax)
    return k + 1, lt


def eval_kernel(model: KernelModel, z, xi) -> KernelValue:
    """``K_z(xi)`` in log form; ``z`` scalar, ``xi`` scalar or array.

    In radial mode the number of terms comes from the log-convexity tail bound;
    an unresolvable request raises :class:`ResolutionError` with a suggested ``N``.
    """
    xi_arr = np.asarray(xi, dtype=complex)
    ax = abs(complex(z)) * float(np.max(np.abs(xi_arr))) if xi_arr.size else 0.0
    nt, lt = _terms_for(model, ax)
    if model.mode == "radial":
        # K_z(xi) = F(xi conj(z)) with real coefficients 1/m_n; xi conj(z) and
        # z conj(xi) are exact conjugates, so Hermitian symmetry holds exactly
        lm, ph = eval_series(-model.moments.log_m[:nt], np.zeros(nt), xi_arr * np.conj(complex(z)))
    else:
        logc, argc = kernel_coefficients(model, z)
        lm, ph = eval_series(logc, argc, xi_arr)
    if np.ndim(xi) == 0:
        return KernelValue(float(lm[0]), float(ph[0]), lt, nt)
    return KernelValue(lm.reshape(xi_arr.shape), ph.reshape(xi_arr.shape), lt, nt)


def kernel_on_rule(model: KernelModel, z, rule: disk_quad.QuadRule | None = None):
    """``K_z`` at every node of ``rule`` (flattened, radius-major) as ``(log|K|, arg K)``."""
    rule = model.rule if rule is None else rule
    nt, _ = _terms_for(model, abs(complex(z)) * float(rule.r.max()))
    logc, argc = kernel_coefficients(model, z, nt if model.mode == "radial" else None)
    lm, ph = eval_series_rings(logc, argc, rule.r, rule.angular_count)
    return lm.ravel(), ph.ravel()


def log_kernel_diag(model: KernelModel, z) -> np.ndarray:
    """``log K_z(z)`` for an array of points."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape)
    if model.mode == "radial":
        ax = float(np.max(np.abs(z))) ** 2
        nt, _ = _terms_for(model, ax)
        n = np.arange(nt)
        with np.errstate(divide="ignore", invalid="ignore"):
            L = np.where(n[None, :] == 0, 0.0, 2 * n[None, :] * np.log(np.abs(z.ravel()))[:, None])
        out = logsumexp(L - model.moments.log_m[None, :nt], axis=1)
        return out.reshape(z.shape)
    V = _scaled_powers(model, z.ravel())
    Y = scipy.linalg.solve_triangular(model.chol, V, lower=True)
    return np.log(np.sum(np.abs(Y) ** 2, axis=0)).reshape(z.shape)


def kernel_norm_sq(model: KernelModel, z) -> LogReal:
    """``||K_z||^2 = K_z(z)``."""
    return LogReal.from_log(float(log_kernel_diag(model, complex(z))[0]))


def kernel_function(model: KernelModel, a):
    """``K_a`` as an analytic descriptor (vectorized, with exact ``log_abs``)."""
    from .analytic import FromCallable

    class _K(FromCallable):
        def log_abs(self, z):
            return eval_kernel(model, a, z).log_mag

    return _K(lambda z: eval_kernel(model, a, z).value(), f"K_{complex(a)}")


# --------------------------------------------------------------------------
# reports


@dataclass
class EstimateReport:
    """Per-sample ratios of a verified estimate plus its refinement history."""

    quantity: str
    ratios: np.ndarray
    samples: list = field(default_factory=list)
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ratios = np.asarray(self.ratios, dtype=float)
        if not self.history:
            self.history = [{"level": 0, "min": self.min, "max": self.max}]

    @property
    def min(self) -> float:
        return float(np.min(self.ratios))

    @property
    def max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def spread(self) -> float:
        return self.max / self.min if self.min > 0 else math.inf

    @property
    def drift(self) -> float:
        """Relative change of the maximum between the two finest levels."""
        if len(self.history) < 2:
            return 0.0
        a, b = self.history[-2]["max"], self.history[-1]["max"]
        return abs(b - a) / abs(a) if a else math.inf

    def to_json(self) -> dict:
        return {
            "quantity": self.quantity,
            "samples": self.samples,
            "min": self.min,
            "max": self.max,
            "spread": self.spread,
            "drift": self.drift,
            "refinement": self.history,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        keys = sorted({k for s in self.samples for k in s}) if self.samples else ["value"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        rows = self.samples or [{"value": v} for v in self.ratios]
        for s in rows:
            w.writerow([_csv_cell(s.get(k)) for k in keys])
        return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (list, tuple)):
        return " ".join(repr(float(x)) for x in v)
    return "" if v is None else repr(v) if isinstance(v, float) else v


def _xy(z):
    z = complex(z)
    return [z.real, z.imag]


def _levels(model, levels):
    ms = [model]
    for _ in range(levels - 1):
        ms.append(ms[-1].refined())
    return ms


def check_norm_asymptotic(model: KernelModel, spec, r_grid, levels: int = 2, e_report=None) -> EstimateReport:
    """``rho(r) = K_z(z) omega(z) tau(z)^2`` along ``z = r``; bounded above and below means ``||K_z||^2 omega ~ tau^-2``."""
    if e_report is not None and not e_report.feasible:
        raise PreconditionError("norm asymptotics need a condition-(C) certificate (check_condition_E with m=1)")
    r = np.atleast_1d(np.asarray(r_grid, dtype=float)).astype(complex)
    hist, ratios = [], None
    for lev, m in enumerate(_levels(model, levels)):
        lr = log_kernel_diag(m, r) + weights.log_weight(spec, r) + 2 * np.log(weights.tau(spec, r))
        rr = np.exp(lr)
        hist.append({"level": lev, "min": float(rr.min()), "max": float(rr.max()), "spread": float(rr.max() / rr.min())})
        ratios = rr
    samples = [{"z": _xy(z), "value": float(v)} for z, v in zip(r, ratios)]
    jumps = ratios[1:] / ratios[:-1] if len(ratios) > 1 else np.ones(1)
    extra = {"max_adjacent_jump": float(np.max(np.maximum(jumps, 1 / jumps)))}
    return EstimateReport("norm_asymptotic", ratios, samples, hist, extra)


def check_near_diagonal(model: KernelModel, spec, z, delta: float, m_tau: float | None = None,
                        n_r: int = 8, n_theta: int = 16) -> EstimateReport:
    """``|K_z(zeta)| / sqrt(K_z(z) K_zeta(zeta))`` for ``zeta`` in ``D(z, delta tau(z))``."""
    if m_tau is not None and delta >= m_tau:
        raise PreconditionError(f"delta={delta} must be below m_tau={m_tau}")
    z = complex(z)
    R = delta * weights.tau(spec, z)
    pts = np.concatenate([[z], disk_quad.disc_rule(z, R, n_r, n_theta).nodes])
    kv = eval_kernel(model, z, pts)
    ld = log_kernel_diag(model, pts)
    ratios = np.exp(kv.log_mag - 0.5 * (ld[0] + ld))
    samples = [{"z": _xy(z), "xi": _xy(p), "value": float(v)} for p, v in zip(pts, ratios)]
    return EstimateReport("near_diagonal", ratios, samples, extra={"delta": delta, "radius": R})


def check_pointwise_decay(model: KernelModel, spec, M: float, pairs, delta: float = 0.0,
                          levels: int = 2) -> EstimateReport:
    """``C_M(z, xi) = |K_z(xi)| tau(z) tau(xi) omega(z)^1/2 omega(xi)^1/2 (|z - xi| / min tau)^M``.

    Pairs must be off the near-diagonal region: ``|z - xi| >= delta (tau(z) + tau(xi))``.
    """
    pairs = np.asarray(pairs, dtype=complex).reshape(-1, 2)
    z, xi = pairs[:, 0], pairs[:, 1]
    tz, tx = weights.tau(spec, z), weights.tau(spec, xi)
    d = np.abs(z - xi)
    if np.any(d < delta * (tz + tx)) or np.any(d == 0):
        raise PreconditionError("pair inside the near-diagonal region D(delta tau(z)) u D(delta tau(xi))")
    base = (np.log(tz) + np.log(tx) + 0.5 * (weights.log_weight(spec, z) + weights.log_weight(spec, xi))
            + M * np.log(d / np.minimum(tz, tx)))
    hist, vals = [], None
    for lev, m in enumerate(_levels(model, levels)):
        lk = np.array([eval_kernel(m, a, b).log_mag for a, b in pairs])
        vals = np.exp(lk + base)
        hist.append({"level": lev, "min": float(vals.min()), "max": float(vals.max())})
    samples = [{"z": _xy(a), "xi": _xy(b), "value": float(v)} for (a, b), v in zip(pairs, vals)]
    return EstimateReport(f"pointwise_decay_M{M:g}", vals, samples, hist, {"M": M})


def check_integral_estimate(model: KernelModel, spec_star, z_samples, beta: float, levels: int = 2) -> EstimateReport:
    """``I(z) = omega_*(z)^1/2 tau(z)^-beta int |K*_z(xi)| omega_*(xi)^1/2 tau(xi)^beta dA(xi)``.

    ``model`` must be the kernel model of ``spec_star`` (the weight whose
    estimate is tested); ``tau`` is the tau of its base weight.
    """
    zs = np.atleast_1d(np.asarray(z_samples, dtype=complex))
    hist, vals = [], None
    for lev, m in enumerate(_levels(model, levels)):
        rule = m.rule
        nodes = rule.nodes
        lw_nodes = 0.5 * weights.log_weight(spec_star, nodes) + beta * np.log(weights.tau(spec_star, nodes))
        out = []
        for z in zs:
            lk, _ = kernel_on_rule(m, z, rule)
            li = logsumexp(lk + lw_nodes + rule.log_weights)
            out.append(li + 0.5 * weights.log_weight(spec_star, z) - beta * math.log(weights.tau(spec_star, z)))
        vals = np.exp(np.array(out))
        hist.append({"level": lev, "min": float(vals.min()), "max": float(vals.max())})
    samples = [{"z": _xy(z), "value": float(v)} for z, v in zip(zs, vals)]
    return EstimateReport(f"integral_estimate_beta{beta:g}", vals, samples, hist, {"beta": beta})


def check_submean(spec, f, p: float, beta: float, delta: float, z_samples, m_tau: float | None = None,
                  n_r: int = 16, n_theta: int = 32, levels: int = 2) -> EstimateReport:
    """``M(z) = |f(z)|^p omega(z)^beta (delta tau(z))^2 / int_{D(delta tau(z))} |f|^p omega^beta dA``.

    ``f`` is an analytic descriptor (``log_abs`` is used when present).  The
    disc integral uses a local polar rule; the second level doubles both counts.
    """
    if m_tau is not None and delta >= m_tau:
        raise PreconditionError(f"delta={delta} must be below m_tau={m_tau}")
    if n_r * n_theta < 100:
        raise ResolutionError("the disc D(delta tau(z)) must be resolved by at least 100 nodes",
                              suggested=100)
    zs = np.atleast_1d(np.asarray(z_samples, dtype=complex))

    def log_int(z, R, nr, nt):
        rule = disk_quad.disc_rule(z, R, nr, nt)
        la = p * _log_abs(f, rule.nodes) + beta * weights.log_weight(spec, rule.nodes)
        return logsumexp(la + np.log(rule.weights))

    hist, vals = [], None
    for lev in range(levels):
        nr, nt = n_r * 2**lev, n_theta * 2**lev
        out = []
        for z in zs:
            R = delta * weights.tau(spec, z)
            top = p * float(_log_abs(f, np.array([z]))[0]) + beta * weights.log_weight(spec, z) + 2 * math.log(R)
            out.append(top - log_int(z, R, nr, nt))
        vals = np.exp(np.array(out))
        hist.append({"level": lev, "min": float(vals.min()), "max": float(vals.max())})
    samples = [{"z": _xy(z), "value": float(v)} for z, v in zip(zs, vals)]
    return EstimateReport("submean", vals, samples, hist, {"p": p, "beta": beta, "delta": delta})


def _log_abs(f, pts):
    if hasattr(f, "log_abs"):
        return np.asarray(f.log_abs(pts), dtype=float) * np.ones(np.shape(pts))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(np.asarray(f(pts), dtype=complex)))


__all__ = [
    "MomentSeq", "KernelModel", "KernelValue", "EstimateReport",
    "compute_moments", "radial_model", "gram_onb", "eval_kernel", "kernel_on_rule",
    "kernel_coefficients", "eval_series", "eval_series_rings", "log_kernel_diag",
    "kernel_norm_sq", "kernel_function", "check_norm_asymptotic", "check_near_diagonal",
    "check_pointwise_decay", "check_integral_estimate", "check_submean",
]
