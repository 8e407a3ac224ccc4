"""Constructive weighted dbar-solver.

The solution operator glues local Cauchy transforms with normalized
reproducing kernels ``h_j = K_{a_j} / ||K_{a_j}||``::

    u(z) = sum_j h_j(z) C_j(z),      C_j(z) = int g_j(zeta) / (z - zeta) dA(zeta),
    g_j  = f chi_j / h_j,

where ``{chi_j}`` is a partition of unity subordinate to a covering by discs
``D(a_j, delta1 tau(a_j))``.  With ``dA = dx dy / pi`` the Cauchy--Pompeiu
formula gives ``dbar C_j = g_j``; since ``h_j`` is holomorphic,
``dbar u = sum_j f chi_j = f``.

``C_j(z)`` is evaluated from a multipole expansion about ``a_j`` when ``z`` is
well outside the disc and from a polar rule centred at ``z`` otherwise, so the
``1/(z - zeta)`` singularity is absorbed by the ``rho d rho`` Jacobian.

Besides the solver the module provides the integral ``int |G(z, zeta)|
dA(zeta) / tau(zeta)`` of the solution kernel, the minimal-norm solution
``u = f chi - P(f chi)`` and a finite-difference residual check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import disk_quad, kernel, projection, weights
from .disk_quad import SampledFn
from .errors import DivisionGuardError, PreconditionError
from .logreal import logsumexp

# |z - a_j| <= NEAR_FACTOR * R_j switches from the multipole to the singular rule
NEAR_FACTOR = 2.0
# multipole terms; the expansion converges like NEAR_FACTOR ** -k
MULTIPOLE_TERMS = 48
# polar rule (radii, angles) used for the singular part at default resolution
DEFAULT_LOCAL = (32, 64)
G_LOCAL = (16, 32)
# below this log-magnitude a normalized kernel counts as vanishing
LOG_GUARD = -600.0


def cinf_step(t):
    """C-infinity transition: 1 for ``t <= 0``, 0 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = 1.0 / (1.0 + np.exp(1.0 / (1.0 - t) - 1.0 / t))
    out = np.where(t <= 0, 1.0, out)
    return np.where(t >= 1, 0.0, out)


# --------------------------------------------------------------------------
# right-hand sides


@dataclass(frozen=True)
class SmoothCut:
    """``f = value`` on ``|z| <= r0``, decreasing smoothly to 0 at ``|z| = r1``."""

    r0: float = 0.5
    r1: float = 0.6
    value: complex = 1.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.value * cinf_step((np.abs(z) - self.r0) / (self.r1 - self.r0)) + 0j

    @property
    def support(self) -> float:
        return self.r1

    @property
    def plateau(self) -> float:
        return self.r0

    def to_json(self) -> dict:
        v = complex(self.value)
        return {"kind": "smooth_cut", "r0": self.r0, "r1": self.r1, "value": [v.real, v.imag]}


@dataclass(frozen=True)
class ZeroData:
    """The zero right-hand side."""

    def __call__(self, z):
        return np.zeros(np.shape(z), dtype=complex)

    support = 0.0
    plateau = 0.0

    def to_json(self) -> dict:
        return {"kind": "zero"}


def data_from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "zero":
        return ZeroData()
    if kind == "smooth_cut":
        v = obj.get("value", 1.0)
        v = complex(*v) if isinstance(v, (list, tuple)) else complex(v)
        return SmoothCut(float(obj.get("r0", 0.5)), float(obj.get("r1", 0.6)), v)
    raise ValueError(f"unknown data kind {kind!r}")


@dataclass
class DbarProblem:
    """``dbar u = f`` with the estimate measured in ``L^p(omega_*^{p/2})``."""

    f: object
    weight_star: weights.WeightSpec
    p: float = 2.0

    def sample(self, points) -> SampledFn:
        return SampledFn.from_values(self.f(np.asarray(points, dtype=complex)))

    def to_json(self) -> dict:
        return {"f": self.f.to_json(), "weight_star": self.weight_star.to_json(),
                "p": "inf" if math.isinf(self.p) else self.p}


def problem_from_json(obj: dict) -> DbarProblem:
    p = obj.get("p", 2.0)
    return DbarProblem(data_from_json(obj["f"]), weights.from_json(obj["weight_star"]),
                       math.inf if p in ("inf", "Infinity") else float(p))


def _base_weight(spec):
    return spec.base if spec.family == "associated" else spec


def _alpha_star(spec) -> float:
    return spec.alpha_star if spec.family == "associated" else 0.0


# --------------------------------------------------------------------------
# normalized kernels


@dataclass
class NormalizedKernel:
    """``h_a = K_a / ||K_a||``; calling returns ``(log|h_a|, arg h_a)``."""

    model: kernel.KernelModel
    a: complex
    log_norm: float

    def __call__(self, z):
        kv = kernel.eval_kernel(self.model, self.a, z)
        return kv.log_mag - self.log_norm, kv.phase

    def value(self, z):
        lm, ph = self(z)
        return np.exp(lm + 1j * ph)


def normalized_kernel(model: kernel.KernelModel, a) -> NormalizedKernel:
    a = complex(a)
    return NormalizedKernel(model, a, 0.5 * float(kernel.log_kernel_diag(model, a)[0]))


def _series_F(model, w):
    """``F(w) = sum_n w^n / m_n`` in log form (radial weights: ``K(z, a) = F(z conj a)``)."""
    lm_seq = model.moments.log_m
    ax = float(np.max(np.abs(w))) if w.size else 0.0
    if ax == 0.0:
        return np.full(w.shape, -lm_seq[0]), np.zeros(w.shape)
    nt, _ = kernel._terms_for(model, ax)
    n = np.arange(nt)
    L = n * math.log(ax) - lm_seq[:nt]
    shift = float(L.max())
    c = np.exp(L - shift)
    t = w / ax
    S = np.full(w.shape, c[-1], dtype=complex)
    for k in range(nt - 2, -1, -1):
        S = S * t + c[k]
    with np.errstate(divide="ignore"):
        return np.log(np.abs(S)) + shift, np.angle(S)


class KernelBank:
    """Normalized kernels ``h_j`` of a fixed center list at arbitrary (point, center) pairs."""

    def __init__(self, model: kernel.KernelModel, centers, chunk: int = 1 << 18):
        self.model = model
        self.centers = np.asarray(centers, dtype=complex)
        self.chunk = chunk
        self.log_norm = 0.5 * kernel.log_kernel_diag(model, self.centers) if len(self.centers) else np.zeros(0)

    def log_h(self, z, j):
        """``(log|h_j(z)|, arg h_j(z))`` for paired arrays ``z``, ``j``."""
        z = np.asarray(z, dtype=complex).ravel()
        j = np.asarray(j, dtype=int).ravel()
        lm = np.empty(z.shape)
        ph = np.empty(z.shape)
        if self.model.mode == "radial":
            w = z * np.conj(self.centers[j])
            order = np.argsort(np.abs(w), kind="stable")
            for s in range(0, len(order), self.chunk):
                sel = order[s : s + self.chunk]
                lm[sel], ph[sel] = _series_F(self.model, w[sel])
        else:
            for jj in np.unique(j):
                sel = np.flatnonzero(j == jj)
                kv = kernel.eval_kernel(self.model, self.centers[jj], z[sel])
                lm[sel], ph[sel] = kv.log_mag, kv.phase
        return lm - self.log_norm[j], ph

    def values(self, z, j):
        lm, ph = self.log_h(z, j)
        return np.exp(lm + 1j * ph)


# --------------------------------------------------------------------------
# partition-of-unity helpers


def _chi_own(pou, pts, owner, chunk: int = 100_000):
    """``chi_{owner[i]}(pts[i])``."""
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        M = pou.chi(pts[s : s + chunk])
        rows = np.arange(M.shape[0])
        out[s : s + chunk] = np.asarray(M[rows, owner[s : s + chunk]]).ravel()
    return out


def _chi_pairs(pou, pts, chunk: int = 100_000):
    """All nonzero ``chi_j(pts[i])`` as ``(i, j, value)`` arrays."""
    rows, cols, vals = [], [], []
    for s in range(0, len(pts), chunk):
        M = pou.chi(pts[s : s + chunk]).tocoo()
        rows.append(M.row + s)
        cols.append(M.col)
        vals.append(M.data)
    if not rows:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _disc_nodes(cov, idx, n_r, n_theta):
    tpl = disk_quad.disc_rule(0.0, 1.0, n_r, n_theta)
    a = cov.centers[idx]
    R = cov.radii[idx]
    nodes = a[:, None] + R[:, None] * tpl.nodes[None, :]
    wts = (R**2)[:, None] * tpl.weights[None, :]
    return nodes, wts, tpl.nodes


# --------------------------------------------------------------------------
# the solver


class DbarSolver:
    """``u = sum_j h_j C_j`` for one right-hand side, evaluable anywhere in the disk.

    Parameters
    ----------
    problem : DbarProblem
    cov, pou : covering and partition of unity; must cover ``supp f``.
    model : kernel model of the base weight (the weight whose kernels ``h_j`` are used).
    local : (radii, angles) of the singular polar rule.
    moment_rule : (radii, angles) of the per-disc rule for the multipole moments
        (default: twice ``local``).
    """

    def __init__(self, problem: DbarProblem, cov, pou, model, local=DEFAULT_LOCAL, moment_rule=None,
                 terms: int = MULTIPOLE_TERMS):
        self.problem = problem
        self.cov = cov
        self.pou = pou
        self.local = tuple(local)
        self.bank = KernelBank(model, cov.centers)
        supp = float(problem.f.support)
        if supp > cov.r_max:
            raise PreconditionError(f"covering radius {cov.r_max} does not reach supp f (|z| <= {supp})")
        a, R = cov.centers, cov.radii
        self.active = np.flatnonzero(np.abs(a) - R < supp) if supp > 0 else np.zeros(0, dtype=int)
        self.terms = terms
        if len(self.active):
            mr = moment_rule or (2 * self.local[0], 2 * self.local[1])
            nodes, wts, unit = _disc_nodes(cov, self.active, *mr)
            m = nodes.shape[1]
            g = self._g(nodes.ravel(), np.repeat(self.active, m)).reshape(nodes.shape)
            U = unit[:, None] ** np.arange(terms)[None, :]
            self.moments = (wts * g) @ U
        else:
            self.moments = np.zeros((0, terms), dtype=complex)

    def _g(self, pts, owner):
        """``g_j = f chi_j / h_j`` at ``pts`` for ``j = owner``."""
        fv = self.problem.f(pts)
        out = np.zeros(len(pts), dtype=complex)
        nz = np.flatnonzero(fv != 0)
        if len(nz) == 0:
            return out
        chi = _chi_own(self.pou, pts[nz], owner[nz])
        keep = chi > 0
        nz, chi = nz[keep], chi[keep]
        lh, ph = self.bank.log_h(pts[nz], owner[nz])
        if np.any(lh < LOG_GUARD):
            k = int(np.argmin(lh))
            raise DivisionGuardError(
                f"normalized kernel of center {int(owner[nz][k])} vanishes at {complex(pts[nz][k])} inside supp chi"
            )
        out[nz] = fv[nz] * chi * np.exp(-lh - 1j * ph)
        return out

    def evaluate(self, z, local=None, chunk: int = 2048) -> np.ndarray:
        """``u(z)`` at an array of points."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        shape = z.shape
        z = z.ravel()
        out = np.zeros(len(z), dtype=complex)
        if len(self.active) == 0:
            return out.reshape(shape)
        local = self.local if local is None else tuple(local)
        act = self.active
        a = self.cov.centers[act]
        R = self.cov.radii[act]
        K = self.terms
        for s in range(0, len(z), chunk):
            zz = z[s : s + chunk]
            nz, na = len(zz), len(act)
            H = self.bank.values(np.repeat(zz, na), np.tile(act, nz)).reshape(nz, na)
            w = zz[:, None] - a[None, :]
            near = np.abs(w) <= NEAR_FACTOR * R[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(near, 0.0, R[None, :] / w)
                C = np.zeros((nz, na), dtype=complex)
                for k in range(K - 1, -1, -1):
                    C = C * t + self.moments[None, :, k]
                C = np.where(near, 0.0, C / np.where(near, 1.0, w))
            iz, ik = np.nonzero(near)
            if len(iz):
                C[iz, ik] = self._near(zz[iz], ik, local)
            out[s : s + chunk] = np.sum(H * C, axis=1)
        return out.reshape(shape)

    def _near(self, z, k, local, chunk: int = 4096):
        """``C_j(z)`` with the singular polar rule for pairs ``(z[i], active[k[i]])``."""
        act = self.active
        res = np.empty(len(z), dtype=complex)
        for s in range(0, len(z), chunk):
            zz, kk = z[s : s + chunk], k[s : s + chunk]
            nodes, wts = disk_quad.cauchy_rules(self.cov.centers[act[kk]], self.cov.radii[act[kk]], zz, *local)
            m = nodes.shape[1]
            g = self._g(nodes.ravel(), np.repeat(act[kk], m)).reshape(nodes.shape)
            res[s : s + chunk] = np.sum(wts * g, axis=1)
        return res

    def __call__(self, z):
        return self.evaluate(z)


@dataclass
class ResidualReport:
    """Discrepancy ``dbar u - f`` on a grid (finite-difference ``dbar``)."""

    sup: float
    l2: float
    rel_sup: float
    rel_l2: float
    n_points: int
    skipped: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def fd_dbar(u, z, step):
    """Fourth-order central-difference ``dbar u = (u_x + i u_y) / 2``."""
    z = np.asarray(z, dtype=complex)
    h = np.broadcast_to(np.asarray(step, dtype=float), z.shape)
    offs = np.array([2, 1, -1, -2], dtype=float)
    cx = np.array([-1, 8, -8, 1], dtype=float) / 12.0
    pts = np.concatenate([(z[None, :] + offs[:, None] * h[None, :]).ravel(),
                          (z[None, :] + 1j * offs[:, None] * h[None, :]).ravel()])
    vals = np.asarray(u(pts)).reshape(2, 4, -1)
    ux = np.tensordot(cx, vals[0], axes=1) / h
    uy = np.tensordot(cx, vals[1], axes=1) / h
    return 0.5 * (ux + 1j * uy)


def residual(u, f, points, step=None, spec=None, step_fraction: float = 1 / 20) -> ResidualReport:
    """Sup and root-mean-square of ``dbar u - f`` over ``points``.

    ``u`` and ``f`` are callables.  The stencil step is ``step`` or, with a
    weight ``spec``, ``step_fraction * tau(z)``.  Points whose stencil would
    leave the disk are skipped and counted.
    """
    z = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    if step is None:
        if spec is None:
            raise ValueError("either step or spec is required")
        step = step_fraction * weights.tau(spec, z)
    h = np.broadcast_to(np.asarray(step, dtype=float), z.shape)
    ok = np.abs(z) + 2 * h * math.sqrt(2) < 1
    z, h = z[ok], h[ok]
    skipped = int((~ok).sum())
    if len(z) == 0:
        return ResidualReport(0.0, 0.0, 0.0, 0.0, 0, skipped)
    d = fd_dbar(u, z, h) - np.asarray(f(z))
    fv = np.asarray(f(z))
    sup = float(np.max(np.abs(d)))
    l2 = float(np.sqrt(np.mean(np.abs(d) ** 2)))
    fs = float(np.max(np.abs(fv)))
    f2 = float(np.sqrt(np.mean(np.abs(fv) ** 2)))
    return ResidualReport(sup, l2, sup / fs if fs else sup, l2 / f2 if f2 else l2, len(z), skipped)


def interior_grid(problem: DbarProblem, n_r: int = 6, n_theta: int = 16, step_fraction: float = 1 / 20) -> np.ndarray:
    """Polar grid whose residual stencils stay inside the plateau ``|z| <= r0`` of the data.

    Without a plateau, ``0.8 supp f`` is used.  The grid radius is the plateau
    radius minus the stencil reach ``2 sqrt(2) step`` with ``step = step_fraction * tau(0)``
    (an upper bound for ``tau`` on radial weights of the supported families).
    """
    spec = _base_weight(problem.weight_star)
    r = getattr(problem.f, "plateau", 0.0) or 0.8 * problem.f.support
    reach = 2 * math.sqrt(2) * step_fraction * float(weights.tau(spec, 0.0))
    return projection.polar_grid(max(r - reach, 0.5 * r), n_r, n_theta)


@dataclass
class DbarSolution:
    """Solver output: ``u`` sampled on the norm rule of the finest level plus diagnostics."""

    u: SampledFn
    residual_sup: float
    residual_l2: float
    lp_ratio: float
    problem: DbarProblem
    lp_history: list = field(default_factory=list)
    residual_report: ResidualReport | None = None
    levels: list = field(default_factory=list, repr=False)
    solver: DbarSolver | None = field(default=None, repr=False)

    def lp_ratio_for(self, weight_star, p: float, level: int = -1) -> float:
        """``||u||_{L^p(omega_*^{p/2})} / ||f tau||_{L^p(omega_*^{p/2})}`` on a stored level."""
        rule, u = self.levels[level]
        return _lp_ratio(rule, u, self.problem.f, weight_star, p)

    def lp_drift(self, weight_star, p: float) -> float:
        a = self.lp_ratio_for(weight_star, p, -2)
        b = self.lp_ratio_for(weight_star, p, -1)
        return abs(b - a) / abs(a) if a else math.inf

    def to_json(self) -> dict:
        return {
            "problem": self.problem.to_json(),
            "residual_sup": self.residual_sup,
            "residual_l2": self.residual_l2,
            "lp_ratio": self.lp_ratio,
            "lp_history": self.lp_history,
            "residual": self.residual_report.to_json() if self.residual_report else None,
            "u": {"rule": self.levels[-1][0].params() if self.levels else None,
                  "log_mag": [float(v) if np.isfinite(v) else None for v in self.u.log_mag],
                  "phase": [float(v) for v in self.u.phase]},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _lp_ratio(rule, u, f, weight_star, p: float) -> float:
    nodes = rule.nodes
    lwh = 0.5 * weights.log_weight(weight_star, nodes)
    su = SampledFn.from_values(u)
    ft = f(nodes) * weights.tau(weight_star, nodes)
    sf = SampledFn.from_values(ft)
    num = projection.lp_log_norm(su, lwh, rule.log_weights, p)
    den = projection.lp_log_norm(sf, lwh, rule.log_weights, p)
    if not np.isfinite(den):
        return 0.0 if not np.isfinite(num) else math.inf
    return math.exp(num - den)


def default_norm_rule(r_max: float = 0.95) -> disk_quad.QuadRule:
    return disk_quad.build_rule(12, 12, 128, r_max)


def solve_dbar_S(problem: DbarProblem, cov, pou, model, levels: int = 2, local=DEFAULT_LOCAL,
                 norm_rule=None, norm_local=(8, 16), residual_points=None) -> DbarSolution:
    """Solve ``dbar u = f`` with ``u = sum_j S_j f`` and verify it.

    The residual is measured with the level-0 solver on ``residual_points``
    (default: :func:`interior_grid`); ``u`` is sampled on ``norm_rule`` at every
    level (each level doubles the local rules and refines the norm rule) and
    ``lp_ratio`` is taken on the finest level for ``problem.p``.
    """
    norm_rule = default_norm_rule() if norm_rule is None else norm_rule
    base = _base_weight(problem.weight_star)
    stored = []
    hist = []
    solver0 = None
    rule = norm_rule
    for lev in range(levels):
        fac = 2**lev
        solver = DbarSolver(problem, cov, pou, model, local=(local[0] * fac, local[1] * fac))
        if lev == 0:
            solver0 = solver
        else:
            rule = rule.refined(angular=True)
        u = solver.evaluate(rule.nodes, local=(norm_local[0] * fac, norm_local[1] * fac))
        stored.append((rule, u))
        hist.append({"level": lev, "lp_ratio": _lp_ratio(rule, u, problem.f, problem.weight_star, problem.p)})
    pts = interior_grid(problem) if residual_points is None else residual_points
    rep = residual(solver0.evaluate, problem.f, pts, spec=base)
    return DbarSolution(SampledFn.from_values(stored[-1][1]), rep.sup, rep.rel_l2, hist[-1]["lp_ratio"],
                        problem, hist, rep, stored, solver0)


# --------------------------------------------------------------------------
# the G-kernel integral


class GIntegral:
    """``I(z) = int |G(z, zeta)| dA(zeta) / tau(zeta)`` over the covered region.

    Uses ``1 = sum_k chi_k`` to split the integral into disc pieces
    ``int_{D_k} chi_k |G| / tau``: discs far from ``z`` use a fixed polar rule,
    discs near ``z`` a polar rule centred at ``z`` that absorbs ``1/|z - zeta|``.
    """

    def __init__(self, cov, pou, model, base_spec, local=G_LOCAL):
        self.cov, self.pou, self.spec = cov, pou, base_spec
        self.local = tuple(local)
        self.bank = KernelBank(model, cov.centers)
        idx = np.arange(len(cov))
        nodes, wts, _ = _disc_nodes(cov, idx, *self.local)
        m = nodes.shape[1]
        self.owner = np.repeat(idx, m)
        self.nodes = nodes.ravel()
        self.weights = wts.ravel()
        self.Q, chi = self._q_matrix(self.nodes)
        self.chi_own = np.asarray(chi[np.arange(len(self.nodes)), self.owner]).ravel()
        self.tau_nodes = weights.tau(base_spec, self.nodes)

    def _q_matrix(self, pts):
        """Sparse ``chi_j(zeta) / (h_j(zeta) omega(zeta)^1/2)`` and ``chi_j(zeta)`` (rows: points)."""
        rows, cols, vals = _chi_pairs(self.pou, pts)
        lh, ph = self.bank.log_h(pts[rows], cols)
        if np.any(lh < LOG_GUARD):
            raise DivisionGuardError("normalized kernel vanishes inside the support of a cut-off")
        lw = 0.5 * weights.log_weight(self.spec, pts[rows])
        q = vals * np.exp(-(lh + lw) - 1j * ph)
        shape = (len(pts), len(self.cov))
        return sp.csr_matrix((q, (rows, cols)), shape=shape), sp.csr_matrix((vals, (rows, cols)), shape=shape)

    def _hz(self, z):
        nc = len(self.cov)
        lh, ph = self.bank.log_h(np.full(nc, z), np.arange(nc))
        return np.exp(lh + 0.5 * weights.log_weight(self.spec, z) + 1j * ph)

    def __call__(self, z, alpha: float = 0.0, near_radius: float = 0.0):
        """``(I(z), part of I(z) from |zeta - z| < near_radius)``."""
        z = complex(z)
        hz = self._hz(z)
        tz = float(weights.tau(self.spec, z))
        a, R = self.cov.centers, self.cov.radii
        near_k = np.flatnonzero(np.abs(z - a) <= NEAR_FACTOR * R)
        far = ~np.isin(self.owner, near_k)
        s = self.Q[far] @ hz
        zeta = self.nodes[far]
        tzeta = self.tau_nodes[far]
        dens = self.weights[far] * self.chi_own[far] * np.abs(s) * (tz / tzeta) ** (alpha / 2) / tzeta
        dens = dens / np.abs(z - zeta)
        total = float(dens.sum())
        close = float(dens[np.abs(zeta - z) < near_radius].sum())
        if len(near_k):
            nodes, wts = disk_quad.cauchy_rules(a[near_k], R[near_k], np.full(len(near_k), z), *self.local)
            m = nodes.shape[1]
            pts = nodes.ravel()
            Qn, chi_n = self._q_matrix(pts)
            chi_k = np.asarray(chi_n[np.arange(len(pts)), np.repeat(near_k, m)]).ravel()
            sn = Qn @ hz
            tn = weights.tau(self.spec, pts)
            dn = np.abs(wts.ravel()) * chi_k * np.abs(sn) * (tz / tn) ** (alpha / 2) / tn
            total += float(dn.sum())
            close += float(dn[np.abs(pts - z) < near_radius].sum())
        return total, close


def check_G_integral(cov, pou, model, spec_star, z_samples, levels: int = 2, local=G_LOCAL,
                     refine: float = 1.5) -> kernel.EstimateReport:
    """Sup of ``int |G(z, zeta)| dA(zeta) / tau(zeta)`` over ``z_samples`` with refinement history.

    Level ``l`` uses local rules scaled by ``refine ** l``.  ``extra`` holds the
    near fraction: the share of ``I(z)`` from ``D(z, delta0 tau(z))``.
    """
    base = _base_weight(spec_star)
    alpha = _alpha_star(spec_star)
    zs = np.atleast_1d(np.asarray(z_samples, dtype=complex))
    hist, vals, fracs = [], None, None
    for lev in range(levels):
        f = refine**lev
        loc = (int(round(local[0] * f)), int(round(local[1] * f)))
        gi = GIntegral(cov, pou, model, base, loc)
        out = [gi(z, alpha, cov.delta0 * float(weights.tau(base, z))) for z in zs]
        vals = np.array([t for t, _ in out])
        fracs = [c / t if t else 0.0 for t, c in out]
        hist.append({"level": lev, "local": list(loc), "min": float(vals.min()), "max": float(vals.max())})
    samples = [{"z": [z.real, z.imag], "value": float(v), "near_fraction": float(q)}
               for z, v, q in zip(zs, vals, fracs)]
    return kernel.EstimateReport(f"G_integral_alpha{alpha:g}", vals, samples, hist,
                                 {"alpha": alpha, "near_fraction": fracs})


# --------------------------------------------------------------------------
# minimal-norm solution


@dataclass
class MinimalSolution:
    """``u = f chi - P_{omega_*}(f chi)``: callable plus samples on the operator rule."""

    data: object
    op: projection.ProjectionOperator
    coef_log: np.ndarray
    coef_arg: np.ndarray
    u: SampledFn

    def projection_at(self, z):
        lm, ph = kernel.eval_series(self.coef_log, self.coef_arg, z)
        return np.exp(lm + 1j * ph)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return np.asarray(self.data(z)) - self.projection_at(z)

    def orthogonality(self, k_max: int = 6) -> np.ndarray:
        """``|<u, z^k>_{omega_*}| / (||u|| ||z^k||)`` for ``k = 0..k_max``."""
        spec, rule = self.op.spec, self.op.rule
        nodes = rule.nodes
        lw = weights.log_weight(spec, nodes) + rule.log_weights
        uval = self.u.values()
        nu = math.exp(0.5 * logsumexp(2 * self.u.log_mag + lw))
        out = []
        for k in range(k_max + 1):
            q = nodes**k
            ip = complex(np.sum(uval * np.conj(q) * np.exp(lw)))
            nq = math.exp(0.5 * logsumexp(2 * k * np.log(np.abs(nodes)) + lw)) if k else math.exp(0.5 * logsumexp(lw))
            out.append(abs(ip) / (nu * nq) if nu > 0 else 0.0)
        return np.array(out)


def minimal_solution(f_times_chi, spec_star, model_star=None, op_star=None) -> MinimalSolution:
    """Minimal ``L^2(omega_*)`` solution of ``dbar u = dbar(f chi)``.

    ``f_times_chi`` is a callable; ``op_star`` (or ``model_star``) supplies the
    projection onto ``A^2(omega_*)``.
    """
    if op_star is None:
        if model_star is None:
            raise ValueError("need model_star or op_star")
        op_star = projection.ProjectionOperator(model_star, spec_star, model_star.rule)
    lc, pc = projection.coefficients(op_star, f_times_chi)
    nodes = op_star.nodes
    pf = kernel.eval_series_rings(lc, pc, op_star.rule.r, op_star.rule.angular_count)
    pv = np.exp(pf[0] + 1j * pf[1]).ravel()
    u = SampledFn.from_values(np.asarray(f_times_chi(nodes)) - pv)
    return MinimalSolution(f_times_chi, op_star, lc, pc, u)


__all__ = [
    "SmoothCut", "ZeroData", "DbarProblem", "DbarSolution", "DbarSolver", "NormalizedKernel", "KernelBank",
    "GIntegral", "MinimalSolution", "ResidualReport", "normalized_kernel", "solve_dbar_S", "check_G_integral",
    "minimal_solution", "residual", "fd_dbar", "interior_grid", "problem_from_json", "data_from_json",
    "cinf_step", "default_norm_rule",
]
