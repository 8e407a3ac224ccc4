"""Tau-adapted coverings of a truncated disk and smooth partitions of unity.

A covering is a list of centers ``a_j`` with discs ``D(a_j, delta1 tau(a_j))``
satisfying

(i)   ``a_j`` is not in ``D(a_k, delta1 tau(a_k))`` for ``j != k``;
(ii)  the discs cover ``|z| <= r_max``;
(iii) ``{z : |z - a| < delta1 tau(z)}`` lies inside ``D(a, 3 delta1 tau(a))``;
(iv)  every point lies in at most ``N`` of the discs ``D(a_j, 3 delta1 tau(a_j))``.

All four are checked on probe grids whose spacing is a fixed fraction of
``delta1 tau``.  Candidates come from a staggered ring lattice in increasing
``|z|``; a greedy pass keeps the separated ones and a probe sweep fills any gap
starting from the uncovered probe of smallest modulus, so the construction is
deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import optimize
from scipy.spatial import cKDTree

from . import weights
from .errors import CoveringError, PreconditionError

# spacing of lattice candidates in units of the disc radius.  Below sqrt(3) the
# lattice covers; 1.3 leaves every point well inside some disc even where
# neighbouring rings fall out of stagger, which keeps sum eta^2 bounded below
# and the gradient constant of the partition of unity finite.
LATTICE_FACTOR = 1.3


def smooth_step(t):
    """C-infinity transition: 1 for ``t <= 0``, 0 for ``t >= 1``.

    ``1 / (1 + exp(1/(1-t) - 1/t))``; all derivatives vanish at both ends, so
    partitions of unity built from it are smooth and integrals against them
    converge spectrally under Gauss rules.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = 1.0 / (1.0 + np.exp(1.0 / (1.0 - t) - 1.0 / t))
    out = np.where(t <= 0, 1.0, out)
    return np.where(t >= 1, 0.0, out)


def smooth_step_deriv(t):
    """Derivative of :func:`smooth_step` (zero outside ``(0, 1)``)."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    q = 1.0 / (1.0 - tt) - 1.0 / tt
    # -s (1 - s) q'  with s = 1 / (1 + e^q), written without overflow
    e = np.exp(-np.abs(q))
    frac = e / (1.0 + e) ** 2
    d = -frac * (1.0 / (1.0 - tt) ** 2 + 1.0 / tt**2)
    return np.where(inside, d, 0.0)


@dataclass
class Covering:
    centers: np.ndarray
    delta1: float
    delta0: float
    delta: float
    N: int
    r_max: float
    spec: weights.WeightSpec = field(repr=False)
    c2: float = 1.0
    _tree: object = field(default=None, repr=False, compare=False)

    @property
    def radii(self) -> np.ndarray:
        return self.delta1 * weights.tau(self.spec, self.centers)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(np.column_stack([self.centers.real, self.centers.imag]))
        return self._tree

    def __len__(self):
        return len(self.centers)

    def without(self, j: int) -> "Covering":
        """Copy with center ``j`` removed (for forced-failure tests)."""
        c = np.delete(self.centers, j)
        return Covering(c, self.delta1, self.delta0, self.delta, self.N, self.r_max, self.spec, self.c2)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "delta1": self.delta1,
            "delta0": self.delta0,
            "delta": self.delta,
            "N": self.N,
            "r_max": self.r_max,
            "c2": self.c2,
            "centers": [[float(z.real), float(z.imag)] for z in self.centers],
            "radii": [float(r) for r in self.radii],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def covering_from_json(obj) -> Covering:
    if isinstance(obj, str):
        obj = json.loads(obj)
    c = np.array([complex(x, y) for x, y in obj["centers"]])
    return Covering(c, obj["delta1"], obj["delta0"], obj["delta"], obj["N"], obj["r_max"],
                    weights.from_json(obj["spec"]), obj.get("c2", 1.0))


# --------------------------------------------------------------------------
# probes


def probe_grid(spec, r_max: float, spacing: float, phase: float = 0.0) -> np.ndarray:
    """Polar probes with local spacing ``spacing * tau``; the last ring sits on ``|z| = r_max``.

    ``phase`` (in units of the angular step) shifts every ring, giving an
    independent grid of the same density.
    """
    out = [np.array([0j])]
    rho = 0.0
    while rho < r_max:
        rho = min(rho + spacing * float(weights.tau(spec, rho)), r_max)
        h = spacing * float(weights.tau(spec, rho))
        n = max(6, int(math.ceil(2 * math.pi * rho / h)))
        t = 2 * math.pi * (np.arange(n) + phase + 0.5 * (len(out) % 2)) / n
        out.append(rho * np.exp(1j * t))
    return np.concatenate(out)


def _neighbours(tree, pts, bound, k0=48):
    """Indices/distances of tree points within ``bound`` (per point) using k-NN with growing k."""
    xy = np.column_stack([pts.real, pts.imag])
    k = min(k0, tree.n)
    while True:
        d, i = tree.query(xy, k=k, distance_upper_bound=np.max(bound) if np.ndim(bound) else bound)
        d = np.atleast_2d(d.reshape(len(pts), -1))
        i = np.atleast_2d(i.reshape(len(pts), -1))
        if k >= tree.n or not np.any(np.isfinite(d[:, -1]) & (d[:, -1] < np.reshape(bound, (-1,)))):
            break
        k = min(2 * k, tree.n)
    ok = np.isfinite(d) & (d < np.reshape(bound, (-1, 1)))
    return d, np.where(ok, i, -1), ok


# --------------------------------------------------------------------------
# construction


def _ring_candidates(spec, delta1, r_max, lam=None, reach=0.5):
    """Staggered rings of candidate centers with spacing ``lam * delta1 tau``.

    Rings stop once the outermost ring reaches ``r_max`` with half a disc to spare.
    """
    lam = LATTICE_FACTOR if lam is None else lam
    R = lambda r: delta1 * float(weights.tau(spec, r))  # noqa: E731
    cands = [np.array([0j])]
    rho = 0.0
    i = 0
    if 0.8 * R(0.0) >= r_max:  # the central disc alone covers with margin
        return cands
    while not (rho > 0 and rho + reach * R(rho) >= r_max):
        i += 1
        h = lam * R(rho) if rho == 0 else 0.5 * math.sqrt(3) * lam * R(rho)
        # midpoint correction for the varying radius
        h = 0.5 * (h + (0.5 * math.sqrt(3) * lam * R(min(rho + h, 0.999999))))
        rho = rho + h
        if rho >= 1:
            break
        n = max(6, int(math.ceil(2 * math.pi * rho / (lam * R(rho)))))
        t = 2 * math.pi * (np.arange(n) + 0.5 * (i % 2)) / n
        cands.append(rho * np.exp(1j * t))
    return cands


def build_covering(spec, delta1: float, r_max: float, m_tau: float | None = None, c2: float | None = None,
                   probe_spacing: float = 0.25, lattice: float = LATTICE_FACTOR, verify: bool = True) -> Covering:
    """Deterministic covering of ``|z| <= r_max`` by ``D(a_j, delta1 tau(a_j))``.

    ``probe_spacing`` is the probe step in units of ``delta1 tau``.  Conditions
    (i)--(iv) are verified on the probes and a failure raises
    :class:`CoveringError` carrying a witness point.  ``delta0 = 2 delta1`` and
    ``delta = 10 delta1``.
    """
    if m_tau is None or c2 is None:
        tf = weights.estimate_class_constants(spec, weights.disk_samples(min(r_max, 0.99), 120, 48))
        m_tau = tf.m_tau if m_tau is None else m_tau
        c2 = tf.c2_certified if c2 is None else c2
    if not (0 < delta1 <= m_tau / 2):
        raise PreconditionError(f"delta1={delta1} must lie in (0, m_tau/2] with m_tau={m_tau}")
    if not (0 < r_max < 1):
        raise ValueError("r_max must lie in (0, 1)")
    accepted: list = []
    tree = None
    for ring in _ring_candidates(spec, delta1, r_max, lattice):
        R = delta1 * weights.tau(spec, ring)
        ok = np.ones(len(ring), dtype=bool)
        if tree is not None:
            acc = np.array(accepted)
            Racc = delta1 * weights.tau(spec, acc)
            bound = 2 * R / (1 - delta1 * c2)
            d, idx, hit = _neighbours(tree, ring, bound)
            Rn = np.where(hit, Racc[np.maximum(idx, 0)], np.inf)
            ok = ~np.any(hit & (d < np.maximum(Rn, R[:, None])), axis=1)
        kept = []
        for z, good, r in zip(ring, ok, R):
            if not good:
                continue
            if kept and (abs(z - kept[-1][0]) < max(r, kept[-1][1]) or abs(z - kept[0][0]) < max(r, kept[0][1])):
                continue
            kept.append((z, r))
        accepted.extend(z for z, _ in kept)
        tree = cKDTree(np.column_stack([np.real(accepted), np.imag(accepted)]))
    centers = np.array(accepted)
    centers = _probe_fill(spec, centers, delta1, r_max, probe_spacing, c2)
    cov = Covering(centers, delta1, 2 * delta1, 10 * delta1, 0, r_max, spec, c2)
    probes = probe_grid(spec, r_max, probe_spacing * delta1)
    rep = verify_covering(cov, spec, probes)
    cov.N = rep.multiplicity
    if verify and not rep.passed:
        bad = next(k for k in ("i", "ii", "iii", "iv") if not rep.conditions[k])
        raise CoveringError(f"covering condition ({bad}) failed", rep.witnesses.get(bad))
    return cov


def _probe_fill(spec, centers, delta1, r_max, spacing, c2, margin=1.0):
    """Add centers until every probe lies within ``margin R`` of a center.

    Probes are visited in order of increasing modulus.  A new center is put at
    the probe itself when that keeps the separation, otherwise it is pushed
    just outside the disc of the nearest center along a few fixed directions.
    """
    probes = probe_grid(spec, r_max, spacing * delta1, phase=0.25)
    probes = probes[np.argsort(np.abs(probes), kind="stable")]
    tree = cKDTree(np.column_stack([centers.real, centers.imag]))
    Rc = delta1 * weights.tau(spec, centers)
    Rp = delta1 * weights.tau(spec, probes)
    d, idx, hit = _neighbours(tree, probes, Rp / (1 - delta1 * c2))
    covered = np.any(hit & (d < margin * np.where(hit, Rc[np.maximum(idx, 0)], 0)), axis=1)
    new: list = []
    new_r: list = []
    turns = np.deg2rad([0.0, 20.0, -20.0, 40.0, -40.0, 60.0, -60.0])

    def separated(c, rc):
        if new:
            dz = np.abs(np.array(new) - c)
            if np.any(dz < np.maximum(np.array(new_r), rc)):
                return False
        dd, ii = tree.query([c.real, c.imag], k=min(16, tree.n))
        ii, dd = np.atleast_1d(ii), np.atleast_1d(dd)
        return not np.any(dd < np.maximum(Rc[ii], rc))

    for z, r in zip(probes[~covered], Rp[~covered]):
        if new and np.any(np.abs(np.array(new) - z) < margin * np.array(new_r)):
            continue
        cands = [z]
        dd, ii = tree.query([z.real, z.imag], k=1)
        u = z - centers[ii]
        if abs(u) > 0:
            u = u / abs(u)
            step = 1.02 * max(Rc[ii], r)
            cands += [centers[ii] + step * u * np.exp(1j * t) for t in turns]
        for c in cands:
            if abs(c) >= 1:
                continue
            rc = delta1 * float(weights.tau(spec, c))
            if abs(c - z) < margin * rc and separated(c, rc):
                new.append(c)
                new_r.append(rc)
                break
    if new:
        centers = np.concatenate([centers, np.array(new)])
    return centers


# --------------------------------------------------------------------------
# verification


@dataclass
class CoveringReport:
    conditions: dict
    witnesses: dict
    multiplicity: int
    n_probes: int
    n_centers: int

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    def to_json(self) -> dict:
        w = {k: [v.real, v.imag] for k, v in self.witnesses.items() if v is not None}
        return {"conditions": self.conditions, "witnesses": w, "multiplicity": self.multiplicity,
                "n_probes": self.n_probes, "n_centers": self.n_centers, "passed": self.passed}


def verify_covering(cov: Covering, spec, probes=None, chunk: int = 100_000) -> CoveringReport:
    """Re-check (i)--(iv) on ``probes`` (default: an independent grid at spacing ``delta1 tau / 10``).

    (iv) passes when the multiplicity seen on ``probes`` is at most ``cov.N + 1``.
    """
    if probes is None:
        probes = probe_grid(spec, cov.r_max, cov.delta1 / 10, phase=0.5)
    probes = probes[np.abs(probes) <= cov.r_max]
    c = cov.centers
    Rc = cov.delta1 * weights.tau(spec, c)
    tree = cov.tree
    cond = {"i": True, "ii": True, "iii": True, "iv": True}
    wit = {}
    # (i) separation
    d, idx, hit = _neighbours(tree, c, 2 * Rc / (1 - cov.delta1 * cov.c2), k0=16)
    self_hit = idx == np.arange(len(c))[:, None]
    Rn = np.where(hit, Rc[np.maximum(idx, 0)], 0)
    viol = hit & ~self_hit & ((d < Rn) | (d < Rc[:, None]))
    if viol.any():
        cond["i"] = False
        wit["i"] = complex(c[np.argmax(viol.any(axis=1))])
    mult = 0
    shrink = 1 - 3 * cov.delta1 * cov.c2
    if shrink <= 0:
        raise PreconditionError("3 delta1 c2 must be below 1 for the multiplicity search")
    for s in range(0, len(probes), chunk):
        z = probes[s : s + chunk]
        tz = weights.tau(spec, z)
        d, idx, hit = _neighbours(tree, z, 3 * cov.delta1 * tz / shrink)
        Rn = np.where(hit, Rc[np.maximum(idx, 0)], 0.0)
        inside = hit & (d < Rn)
        if cond["ii"] and not inside.any(axis=1).all():
            cond["ii"] = False
            wit["ii"] = complex(z[np.argmin(inside.any(axis=1))])
        tilde = hit & (d < cov.delta1 * tz[:, None])
        bad = tilde & ~(d < 3 * Rn)
        if cond["iii"] and bad.any():
            cond["iii"] = False
            wit["iii"] = complex(z[np.argmax(bad.any(axis=1))])
        cnt = (hit & (d < 3 * Rn)).sum(axis=1)
        mult = max(mult, int(cnt.max()))
    # a grid only bounds the multiplicity from below, so a finer grid may see one more overlap
    if cov.N and mult > cov.N + 1:
        cond["iv"] = False
        wit["iv"] = None
    return CoveringReport(cond, wit, mult, len(probes), len(c))


# --------------------------------------------------------------------------
# partition of unity


@dataclass
class PartitionOfUnity:
    """``chi_j = eta_j^2 / sum_k eta_k^2`` with ``eta_j = 1`` on ``D(a_j, R_j/2)``, 0 outside ``D(a_j, R_j)``."""

    cov: Covering
    spec: weights.WeightSpec
    gradient_constant: float = math.nan
    gradient_history: list = field(default_factory=list)

    def _eta(self, z, with_dbar: bool = True):
        """Sparse (points x centers) ``eta`` and ``dbar eta``."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        cov = self.cov
        Rc = cov.radii
        tz = weights.tau(self.spec, z)
        d, idx, hit = _neighbours(cov.tree, z, cov.delta1 * tz / (1 - cov.delta1 * cov.c2), k0=8)
        Rn = np.where(hit, Rc[np.maximum(idx, 0)], 1.0)
        inside = hit & (d < Rn)
        t = (d[inside] - 0.5 * Rn[inside]) / (0.5 * Rn[inside])
        eta = np.zeros(d.shape)
        eta[inside] = smooth_step(t)
        dbar = None
        if with_dbar:
            deta = np.zeros(d.shape)
            deta[inside] = smooth_step_deriv(t) * 2.0 / Rn[inside]
            a = cov.centers[np.maximum(idx, 0)]
            w = z[:, None] - a
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(d > 0, w / np.where(d > 0, d, 1.0), 0.0)
            dbar = 0.5 * deta * unit
        return z, idx, inside, eta, dbar

    def _assemble(self, z, vals, idx, inside):
        rows = np.repeat(np.arange(len(z)), idx.shape[1])[inside.ravel()]
        cols = idx.ravel()[inside.ravel()]
        return sp.csr_matrix((vals.ravel()[inside.ravel()], (rows, cols)), shape=(len(z), len(self.cov)))

    def chi(self, z) -> sp.csr_matrix:
        """Sparse matrix ``chi_j(z_i)``; raises :class:`CoveringError` at uncovered points."""
        z, idx, inside, eta, _ = self._eta(z, with_dbar=False)
        S = np.sum(eta**2, axis=1)
        if np.any(S == 0):
            raise CoveringError("sum of eta_k^2 vanishes: point not covered", complex(z[np.argmin(S)]))
        return self._assemble(z, eta**2 / S[:, None], idx, inside)

    def chi_and_dbar(self, z):
        """``chi_j`` and ``dbar chi_j`` (both sparse) plus the bound ratio ``|dbar chi|^2 tau^2 / chi``."""
        z, idx, inside, eta, dbar = self._eta(z)
        S = np.sum(eta**2, axis=1)
        if np.any(S == 0):
            raise CoveringError("sum of eta_k^2 vanishes: point not covered", complex(z[np.argmin(S)]))
        E = np.sum(eta * dbar, axis=1) / S
        core = dbar - eta * E[:, None]
        chi = eta**2 / S[:, None]
        dchi = 2 * eta / S[:, None] * core
        ratio = 4.0 / S[:, None] * np.abs(core) ** 2 * weights.tau(self.spec, z)[:, None] ** 2
        ratio = np.where(inside & (eta > 0), ratio, 0.0)
        return self._assemble(z, chi, idx, inside), self._assemble(z, dchi, idx, inside), ratio

    def measure_gradient_constant(self, probes, polish: int = 0) -> float:
        """Largest ``|dbar chi_j|^2 tau^2 / chi_j`` over ``probes``.

        With ``polish > 0`` the that many best probes (one per center) are used
        as starting points for a local Nelder-Mead maximisation, so the value
        approximates the supremum rather than a grid maximum.
        """
        _, idx, ratio = self.chi_and_dbar(probes)
        per_point = ratio.max(axis=1)
        best = float(per_point.max())
        if polish <= 0:
            return best
        order = np.argsort(-per_point, kind="stable")
        seen: set = set()
        starts = []
        for k in order:
            owner = int(np.argmin(np.abs(self.cov.centers - probes[k])))
            if owner in seen:
                continue
            seen.add(owner)
            starts.append(probes[k])
            if len(starts) >= polish:
                break
        r_lim = self.cov.r_max

        def neg(x):
            z = complex(x[0], x[1])
            if abs(z) > r_lim:
                return 0.0
            return -float(self.chi_and_dbar(np.array([z]))[2].max())

        for z0 in starts:
            h = 0.05 * self.cov.delta1 * float(weights.tau(self.spec, z0))
            res = optimize.minimize(neg, [z0.real, z0.imag], method="Nelder-Mead",
                                    options={"xatol": 1e-4 * h, "fatol": 1e-10, "initial_simplex":
                                             [[z0.real, z0.imag], [z0.real + h, z0.imag], [z0.real, z0.imag + h]]})
            best = max(best, -float(res.fun))
        return best


def build_pou(cov: Covering, spec, probe_spacings=(0.25, 0.125), chunk: int = 50_000,
              polish: int = 8) -> PartitionOfUnity:
    """Partition of unity subordinate to ``cov`` with the constant ``C`` in ``|dbar chi_j|^2 <= C chi_j / tau^2``.

    ``C`` is measured on probe grids of the given spacings (in units of
    ``delta1 tau``), each followed by a local maximisation from its ``polish``
    best probes; all values are kept in ``gradient_history``.
    """
    pou = PartitionOfUnity(cov, spec)
    hist = []
    for s in probe_spacings:
        probes = probe_grid(spec, cov.r_max, s * cov.delta1, phase=0.125)
        c = 0.0
        cand = []
        for k in range(0, len(probes), chunk):
            part = probes[k : k + chunk]
            _, _, ratio = pou.chi_and_dbar(part)
            pr = ratio.max(axis=1)
            top = np.argsort(-pr, kind="stable")[: 4 * max(polish, 1)]
            cand.append(part[top])
            c = max(c, float(pr.max()))
        if polish > 0:
            c = max(c, pou.measure_gradient_constant(np.concatenate(cand), polish=polish))
        hist.append(c)
    pou.gradient_history = hist
    pou.gradient_constant = hist[-1]
    return pou


__all__ = [
    "Covering", "CoveringReport", "PartitionOfUnity", "build_covering", "build_pou",
    "verify_covering", "probe_grid", "covering_from_json", "smooth_step", "smooth_step_deriv",
]
