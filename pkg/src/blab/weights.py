"""Weight families on the unit disk, their potentials and the local scale tau.

A weight is written ``omega = exp(-2 phi)``; ``tau`` is defined as exactly
``(laplacian phi) ** -1/2``.  Every evaluation goes through ``log omega`` so that
points close to the boundary never underflow.

All point-wise functions accept scalars or numpy arrays of complex points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial import cKDTree

from . import analytic
from .errors import ClassificationError, DomainError, PreconditionError, WeightSpecError
from .logreal import LogReal

FAMILIES = ("exponential", "unweighted", "standard", "custom_radial", "modulated", "associated")


@dataclass(frozen=True)
class WeightSpec:
    """Immutable description of a weight.

    Only the fields relevant to ``family`` are used:

    * ``exponential``: ``c``, ``alpha`` -- ``omega = exp(-c (1-|z|^2)^-alpha)``
    * ``unweighted``: ``omega = 1`` (tau is the convention ``(1-|z|)/2``)
    * ``standard``: ``beta`` -- ``omega = (1-|z|^2)^beta``
    * ``custom_radial``: ``knots`` -- ``((r, log omega), ...)``, monotone cubic in r
    * ``modulated``: ``base``, ``p``, ``f`` -- ``|f|^p omega_base``
    * ``associated``: ``base``, ``alpha_star`` -- ``omega_base * tau^alpha_star``
    """

    family: str
    c: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    knots: tuple = ()
    base: "WeightSpec | None" = None
    p: float = 1.0
    f: "analytic.Analytic | None" = None
    alpha_star: float = 0.0
    _interp: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise WeightSpecError(f"unknown weight family {self.family!r}")
        if self.family == "exponential" and (self.c <= 0 or self.alpha <= 0):
            raise WeightSpecError("exponential weights need c > 0 and alpha > 0")
        if self.family == "standard" and self.beta <= -1:
            raise WeightSpecError("standard weights need beta > -1")
        if self.family in ("modulated", "associated") and self.base is None:
            raise WeightSpecError(f"{self.family} weight needs a base weight")
        if self.family == "modulated":
            if not self.base.radial_flag:
                raise WeightSpecError("modulated weights need a radial base")
            if self.p <= 0 or self.f is None:
                raise WeightSpecError("modulated weights need p > 0 and an entire f")
        if self.family == "custom_radial":
            r, lw = np.asarray(self.knots, dtype=float).T
            if len(r) < 2 or np.any(np.diff(r) <= 0) or r[0] < 0 or r[-1] > 1:
                raise WeightSpecError("custom_radial knots need increasing radii in [0, 1]")
            object.__setattr__(self, "_interp", PchipInterpolator(r, lw, extrapolate=True))

    @property
    def radial_flag(self) -> bool:
        if self.family == "modulated":
            return False
        if self.family == "associated":
            return self.base.radial_flag
        return True

    def tau_source(self) -> "WeightSpec":
        """The weight whose tau this weight uses (associated weights keep the base tau)."""
        return self.base.tau_source() if self.family == "associated" else self

    def to_json(self) -> dict:
        fam = self.family
        if fam == "exponential":
            return {"family": fam, "c": self.c, "alpha": self.alpha}
        if fam == "unweighted":
            return {"family": fam}
        if fam == "standard":
            return {"family": fam, "beta": self.beta}
        if fam == "custom_radial":
            return {"family": fam, "knots": [list(k) for k in self.knots]}
        if fam == "modulated":
            return {"family": fam, "base": self.base.to_json(), "p": self.p, "f": self.f.to_json()}
        return {"family": fam, "base": self.base.to_json(), "alpha_star": self.alpha_star}


def exponential(c: float = 1.0, alpha: float = 1.0) -> WeightSpec:
    return WeightSpec("exponential", c=float(c), alpha=float(alpha))


def unweighted() -> WeightSpec:
    return WeightSpec("unweighted")


def standard(beta: float) -> WeightSpec:
    return WeightSpec("standard", beta=float(beta))


def custom_radial(knots) -> WeightSpec:
    return WeightSpec("custom_radial", knots=tuple((float(r), float(v)) for r, v in knots))


def modulated(base: WeightSpec, p: float, f: analytic.Analytic) -> WeightSpec:
    return WeightSpec("modulated", base=base, p=float(p), f=f)


def build_associated(spec: WeightSpec, alpha_star: float) -> WeightSpec:
    """``omega_* = omega * tau^alpha_star``; tau of the result is the tau of ``spec``."""
    return WeightSpec("associated", base=spec, alpha_star=float(alpha_star))


def from_json(obj: dict) -> WeightSpec:
    fam = obj.get("family")
    try:
        if fam == "exponential":
            return exponential(obj.get("c", 1.0), obj.get("alpha", 1.0))
        if fam in ("unweighted", "unweighted_oracle"):
            return unweighted()
        if fam in ("standard", "standard_oracle"):
            return standard(obj["beta"])
        if fam == "custom_radial":
            return custom_radial(obj["knots"])
        if fam == "modulated":
            return modulated(from_json(obj["base"]), obj["p"], analytic.from_json(obj["f"]))
        if fam == "associated":
            return build_associated(from_json(obj["base"]), obj["alpha_star"])
    except KeyError as exc:
        raise WeightSpecError(f"weight block for {fam!r} is missing {exc}") from None
    raise WeightSpecError(f"unknown weight family {fam!r}")


def _radius(z):
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    if np.any(r >= 1):
        raise DomainError("point outside the open unit disk")
    return z, r


def log_weight(spec: WeightSpec, z):
    """``log omega(z)``, exact in the log domain (never under- or overflows)."""
    z, r = _radius(z)
    fam = spec.family
    if fam == "exponential":
        out = -spec.c * (1.0 - r * r) ** (-spec.alpha)
    elif fam == "unweighted":
        out = np.zeros_like(r)
    elif fam == "standard":
        out = spec.beta * np.log1p(-r * r)
    elif fam == "custom_radial":
        out = spec._interp(r)
    elif fam == "modulated":
        out = log_weight(spec.base, z) + spec.p * spec.f.log_abs(z)
    else:
        out = log_weight(spec.base, z) + spec.alpha_star * np.log(tau(spec.base, z))
    return float(out) if np.ndim(out) == 0 else out


def weight(spec: WeightSpec, z) -> LogReal:
    """``omega(z)`` at a single point as a :class:`LogReal`."""
    return LogReal.from_log(float(log_weight(spec, complex(z))))


def phi(spec: WeightSpec, z):
    return -0.5 * log_weight(spec, z)


def _fd_laplacian(spec, z, h):
    z = np.asarray(z, dtype=complex)
    h = np.asarray(h, dtype=float)
    ph = lambda w: phi(spec, w)  # noqa: E731
    return (ph(z + h) + ph(z - h) + ph(z + 1j * h) + ph(z - 1j * h) - 4 * ph(z)) / (h * h)


def _analytic_laplacian(spec, r):
    s = r * r
    if spec.family == "exponential":
        c, a = spec.c, spec.alpha
        return 2.0 * c * a * (1.0 + a * s) * (1.0 - s) ** (-a - 2.0)
    if spec.family == "standard":
        return 2.0 * spec.beta / (1.0 - s) ** 2
    if spec.family == "unweighted":
        return np.zeros_like(r)
    return None


def laplacian_phi(spec: WeightSpec, z, finite_difference: bool = False):
    """Laplacian of ``phi`` (classical, i.e. ``4 d dbar``).

    Closed forms are used for the exponential and standard families; otherwise
    (or on request) a central 5-point stencil with step ``tau(z)/100``, improved
    by one Richardson extrapolation against the half step.
    Modulation by ``|f|^p`` adds a harmonic term and leaves the Laplacian unchanged;
    associated weights report the Laplacian of their base.
    """
    z, r = _radius(z)
    fam = spec.family
    if fam in ("modulated", "associated"):
        return laplacian_phi(spec.base, z, finite_difference)
    out = None if finite_difference else _analytic_laplacian(spec, r)
    if out is None:
        # two passes: a crude step from the distance to the boundary, then tau/100
        h0 = np.maximum((1.0 - r) / 100.0, 1e-6)
        lap0 = _fd_laplacian(spec, z, np.minimum(h0, (1.0 - r) / 4))
        if np.any(~(lap0 > 0)):
            raise WeightSpecError(f"non-positive Laplacian for {fam} weight")
        h = np.minimum(lap0 ** -0.5 / 100.0, (1.0 - r) / 4)
        # one Richardson step lifts the O(h^2) stencil to O(h^4)
        out = (4.0 * _fd_laplacian(spec, z, h / 2) - _fd_laplacian(spec, z, h)) / 3.0
    if np.any(~(out > 0)):
        raise WeightSpecError(f"non-positive Laplacian for {fam} weight")
    return float(out) if np.ndim(out) == 0 else out


def tau(spec: WeightSpec, z):
    """``(laplacian phi(z)) ** -1/2``; the natural local length scale of the weight."""
    spec = spec.tau_source()
    if spec.family == "modulated":
        spec = spec.base
    if spec.family == "unweighted":
        _, r = _radius(z)
        out = (1.0 - r) / 2.0
        return float(out) if np.ndim(out) == 0 else out
    return laplacian_phi(spec, z) ** -0.5


# --------------------------------------------------------------------------
# class constants


def disk_samples(r_max: float, n_r: int, n_theta: int, r_min: float = 0.0) -> np.ndarray:
    """Polar sample grid (origin included) on ``r_min <= |z| <= r_max``."""
    r = np.linspace(r_min, r_max, n_r)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    pts = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    if r_min == 0.0:
        pts = np.concatenate([[0j], pts[n_theta:]])
    return pts


def neighbour_pairs(points, k: int = 8, n_random: int = 0, seed: int = 0) -> np.ndarray:
    """Pairs ``(z, zeta)`` of nearest neighbours plus optional random pairs."""
    points = np.asarray(points, dtype=complex)
    xy = np.column_stack([points.real, points.imag])
    _, idx = cKDTree(xy).query(xy, k=min(k + 1, len(points)))
    i = np.repeat(np.arange(len(points)), idx.shape[1] - 1)
    j = idx[:, 1:].ravel()
    pairs = [np.column_stack([points[i], points[j]])]
    if n_random:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, len(points), n_random)
        b = rng.integers(0, len(points), n_random)
        pairs.append(np.column_stack([points[a], points[b]]))
    out = np.concatenate(pairs)
    return out[out[:, 0] != out[:, 1]]


@dataclass(frozen=True)
class TauFn:
    """tau of a weight with its empirical (A)/(B) constants.

    ``c1``/``c2`` are the raw sample suprema; ``margin`` is the safety factor
    applied when the certificate is re-checked.
    """

    spec: WeightSpec
    c1: float
    c2: float
    m_tau: float
    margin: float = 1.1

    def eval(self, z):
        return tau(self.spec, z)

    __call__ = eval

    @property
    def c1_certified(self) -> float:
        return self.margin * self.c1

    @property
    def c2_certified(self) -> float:
        return self.margin * self.c2


def m_tau_from(c1: float, c2: float) -> float:
    return min(1.0, 1.0 / c1, 1.0 / c2) / 4.0


def estimate_class_constants(spec: WeightSpec, samples, pairs=None, margin: float = 1.1) -> TauFn:
    """Smallest c1, c2 with ``tau <= c1 (1-|z|)`` and ``|tau(z)-tau(w)| <= c2 |z-w|`` on the sample.

    Raises :class:`ClassificationError` when the (A)-ratio keeps growing toward the
    sampled boundary, i.e. the weight is not in class L at this scale.
    """
    samples = np.asarray(samples, dtype=complex)
    r = np.abs(samples)
    t = tau(spec, samples)
    ratio_a = t / (1.0 - r)
    c1 = float(np.max(ratio_a))
    r_max = float(r.max())
    shell = r > 1.0 - 2.0 * (1.0 - r_max)
    if shell.any() and (~shell).any():
        inner = float(np.max(ratio_a[~shell]))
        if float(np.max(ratio_a[shell])) > 1.5 * inner:
            raise ClassificationError(
                f"tau/(1-|z|) grows toward |z|={r_max:.4g}: not in class L at the sampled scale"
            )
    if pairs is None:
        pairs = neighbour_pairs(samples)
    pairs = np.asarray(pairs, dtype=complex)
    d = np.abs(pairs[:, 0] - pairs[:, 1])
    keep = d > 0
    tz = tau(spec, pairs[keep, 0])
    tw = tau(spec, pairs[keep, 1])
    c2 = float(np.max(np.abs(tz - tw) / d[keep])) if keep.any() else 0.0
    if not (np.isfinite(c1) and np.isfinite(c2)) or max(c1, c2) > 1e6:
        raise ClassificationError("unbounded empirical class constant")
    return TauFn(spec, c1, c2, m_tau_from(c1, c2), margin)


def verify_tau_certificate(tau_fn: TauFn, samples, pairs=None) -> dict:
    """Re-check (A) and (B) with the stored safety margin; returns worst ratios."""
    samples = np.asarray(samples, dtype=complex)
    t = tau_fn(samples)
    worst_a = float(np.max(t / (1 - np.abs(samples)))) / tau_fn.c1_certified
    if pairs is None:
        pairs = neighbour_pairs(samples)
    pairs = np.asarray(pairs, dtype=complex)
    d = np.abs(pairs[:, 0] - pairs[:, 1])
    keep = d > 0
    slope = np.abs(tau_fn(pairs[keep, 0]) - tau_fn(pairs[keep, 1])) / d[keep]
    worst_b = float(np.max(slope)) / tau_fn.c2_certified if keep.any() else 0.0
    return {"A": worst_a <= 1.0, "B": worst_b <= 1.0, "worst_A": worst_a, "worst_B": worst_b}


# --------------------------------------------------------------------------
# condition (E)


@dataclass
class ConditionEReport:
    m: int
    feasible: bool
    b_m: float = math.nan
    t_m: float = math.nan
    n_tested: int = 0
    violations: list = field(default_factory=list)

    @property
    def vacuous(self) -> bool:
        """No sampled pair was far enough apart to be tested at the chosen ``b_m``."""
        return self.feasible and self.n_tested == 0

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "feasible": self.feasible,
            "b_m": self.b_m,
            "t_m": self.t_m,
            "n_tested": self.n_tested,
            "vacuous": self.vacuous,
            "violations": [[_xy(z), _xy(w)] for z, w in self.violations],
        }


def _xy(z):
    return [float(np.real(z)), float(np.imag(z))]


def check_condition_E(spec: WeightSpec, m: int, pairs, b_grid=None, t_fracs=None) -> ConditionEReport:
    """Grid search for ``(b_m, t_m)`` with ``t_m < 1/m`` such that
    ``tau(z) <= tau(w) + t_m |z-w|`` whenever ``|z-w| > b_m tau(w)``.

    ``b`` is scanned in increasing order and, for each ``b``, ``t`` increasing; the
    first feasible pair is returned.  The scan stops at the first ``b`` for which
    no sampled pair is tested any more, so feasibility is never vacuous unless
    no pair at all is far enough apart.  Infeasibility is reported, not raised.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    pairs = np.asarray(pairs, dtype=complex).reshape(-1, 2)
    if b_grid is None:
        b_grid = np.geomspace(0.25, 1e4, 81)
    if t_fracs is None:
        t_fracs = np.linspace(0.05, 0.95, 19)
    t_grid = np.asarray(t_fracs) / m
    z, w = pairs[:, 0], pairs[:, 1]
    d = np.abs(z - w)
    tz, tw = tau(spec, z), tau(spec, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(d > 0, (tz - tw) / d, -np.inf)
    if not np.any(d > b_grid[0] * tw):
        # nothing is far enough apart to test: vacuously feasible
        return ConditionEReport(m, True, float(b_grid[0]), float(t_grid[0]), 0)
    last = b_grid[0]
    for b in b_grid:
        tested = d > b * tw
        if not tested.any():
            # a larger b would only pass because no sampled pair is tested any more
            break
        last = b
        need = float(np.max(slope[tested]))
        ok = t_grid >= need
        if ok.any():
            return ConditionEReport(m, True, float(b), float(t_grid[np.argmax(ok)]), int(tested.sum()))
    b = float(last)
    tested = d > b * tw
    bad = tested & (tz > tw + t_grid[-1] * d)
    viol = [(complex(a), complex(c)) for a, c in pairs[bad][:50]]
    return ConditionEReport(m, False, b, float(t_grid[-1]), int(tested.sum()), viol)


# --------------------------------------------------------------------------
# the auxiliary subharmonic bump


@dataclass(frozen=True)
class LfiBump:
    """``phi_a(z) = (M/4) log(1 + |z-a|^2 / (beta tau(a))^2)`` with closed-form derivatives."""

    a: complex
    M: float
    beta: float
    tau_a: float

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.M / 4 * np.log1p(np.abs(z - self.a) ** 2 / (self.beta * self.tau_a) ** 2)

    def grad_sq(self, z):
        """``|d phi_a|^2``."""
        d2 = np.abs(np.asarray(z, dtype=complex) - self.a) ** 2
        s = (self.beta * self.tau_a) ** 2
        return (self.M / 4) ** 2 * d2 / (s + d2) ** 2

    def laplacian(self, z):
        d2 = np.abs(np.asarray(z, dtype=complex) - self.a) ** 2
        s = (self.beta * self.tau_a) ** 2
        return self.M * s / (s + d2) ** 2


def lfi_bump(a, M: float, eps: float, tau_fn: TauFn, e_report: ConditionEReport):
    """Constant ``beta`` and bump ``phi_a`` with ``|d phi_a|^2 <= eps lap(phi)`` and
    ``lap(phi_a) <= eps lap(phi)``.

    ``beta`` follows the explicit choice
    ``beta^2 > eps^-1 (1 + c2 b)^2 max(M, (M/4)^2)`` with ``b > max(m, b_m)``.
    """
    if M < 1 or not (0 < eps < 1):
        raise ValueError("need M >= 1 and 0 < eps < 1")
    need = 2 * M / math.sqrt(eps)
    if not e_report.feasible or e_report.m <= need:
        raise PreconditionError(
            f"lfi_bump needs a feasible condition-(E) certificate with m > {need:g} "
            f"(got m={e_report.m}, feasible={e_report.feasible})"
        )
    b = 1.01 * max(e_report.m, e_report.b_m)
    beta2 = 1.01 * (1 + tau_fn.c2_certified * b) ** 2 * max(M, (M / 4) ** 2) / eps
    beta = math.sqrt(beta2)
    bump = LfiBump(complex(a), float(M), beta, float(tau_fn(complex(a))))
    return beta, bump


def verify_lfi(bump: LfiBump, spec: WeightSpec, eps: float, points) -> dict:
    """Check both bump inequalities point-wise; returns the worst ratios (pass iff <= 1)."""
    lap = laplacian_phi(spec, points)
    g = float(np.max(bump.grad_sq(points) / (eps * lap)))
    h = float(np.max(bump.laplacian(points) / (eps * lap)))
    return {"gradient_ratio": g, "laplacian_ratio": h, "passed": g <= 1.0 and h <= 1.0}


def square_grid(r_max: float, n: int) -> np.ndarray:
    """``n x n`` Cartesian grid clipped to ``|z| <= r_max``."""
    x = np.linspace(-r_max, r_max, n)
    z = (x[None, :] + 1j * x[:, None]).ravel()
    return z[np.abs(z) <= r_max]


__all__ = [
    "WeightSpec", "TauFn", "ConditionEReport", "LfiBump",
    "exponential", "unweighted", "standard", "custom_radial", "modulated", "build_associated",
    "from_json", "log_weight", "weight", "phi", "laplacian_phi", "tau",
    "estimate_class_constants", "verify_tau_certificate", "check_condition_E",
    "lfi_bump", "verify_lfi", "disk_samples", "neighbour_pairs", "square_grid", "m_tau_from",
    "replace",
]
