import json
import math

import numpy as np
import pytest
from scipy import integrate

from blab import covering, dbar_solver, disk_quad, kernel, projection, weights
from blab.dbar_solver import DbarProblem, SmoothCut, ZeroData
from blab.errors import DivisionGuardError, PreconditionError

EXP = weights.exponential(1.0, 1.0)


@pytest.fixture(scope="module")
def constants():
    return weights.estimate_class_constants(EXP, weights.disk_samples(0.99, 120, 48))


@pytest.fixture(scope="module")
def cov(constants):
    return covering.build_covering(EXP, constants.m_tau / 2, 0.65, constants.m_tau, constants.c2_certified)


@pytest.fixture(scope="module")
def pou(cov):
    return covering.build_pou(cov, EXP)


@pytest.fixture(scope="module")
def model():
    return kernel.radial_model(EXP, disk_quad.build_rule(24, 16, 512, 0.99))


@pytest.fixture(scope="module")
def cut_problem():
    return DbarProblem(SmoothCut(), weights.build_associated(EXP, 0.0), 2.0)


class _Sum:
    """``a f + b g`` with the support bookkeeping the solver expects."""

    def __init__(self, f, g, a, b):
        self.f, self.g, self.a, self.b = f, g, a, b
        self.support = max(f.support, g.support)
        self.plateau = 0.0

    def __call__(self, z):
        return self.a * self.f(z) + self.b * self.g(z)


def _points(n, r, seed):
    rng = np.random.default_rng(seed)
    return r * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))


# --------------------------------------------------------------------------
# residual plumbing


def test_residual_of_conjugate_is_zero():
    z = _points(50, 0.8, 0)
    rep = dbar_solver.residual(np.conj, lambda w: np.ones_like(w), z, spec=EXP)
    assert rep.sup < 1e-12 and rep.skipped == 0


def test_residual_of_holomorphic_is_at_floor():
    z = _points(50, 0.8, 1)
    rep = dbar_solver.residual(lambda w: w**3 + np.exp(w), lambda w: np.zeros_like(w), z, spec=EXP)
    assert rep.sup < 1e-9


def test_residual_skips_stencils_leaving_disk():
    rep = dbar_solver.residual(np.conj, lambda w: np.ones_like(w), np.array([0.2, 0.9999]), step=1e-3)
    assert rep.skipped == 1 and rep.n_points == 1


def test_residual_needs_step_or_weight():
    with pytest.raises(ValueError):
        dbar_solver.residual(np.conj, np.ones_like, [0.1])


def test_fd_dbar_fourth_order():
    z = np.array([0.3 + 0.1j])
    exact = np.exp(np.conj(z[0]))  # dbar exp(conj w) = exp(conj w)
    e1 = abs(dbar_solver.fd_dbar(lambda w: np.exp(np.conj(w)), z, 0.1)[0] - exact)
    e2 = abs(dbar_solver.fd_dbar(lambda w: np.exp(np.conj(w)), z, 0.05)[0] - exact)
    assert 12 < e1 / e2 < 20


def test_interior_grid_stays_on_plateau(cut_problem):
    pts = dbar_solver.interior_grid(cut_problem)
    reach = 2 * math.sqrt(2) * weights.tau(EXP, pts) / 20
    assert np.all(np.abs(pts) + reach <= cut_problem.f.plateau)
    assert len(pts) == 81


# --------------------------------------------------------------------------
# normalized kernels


def test_normalized_kernel_unit_norm(model):
    for a in (0.0, 0.4j, 0.7 - 0.1j):
        h = dbar_solver.normalized_kernel(model, a)
        assert projection.pairing(h.value, h.value, EXP, model.rule).real == pytest.approx(1.0, rel=1e-8)


def test_normalized_kernel_at_origin_is_constant(model):
    h = dbar_solver.normalized_kernel(model, 0.0)
    v = h.value(_points(20, 0.9, 2))
    assert np.allclose(v, 1 / math.sqrt(math.exp(model.moments.log_m[0])), rtol=1e-13)


def test_normalized_kernel_near_diagonal_size(model, constants):
    # |h_a| tau omega^{1/2} stays within fixed bounds on D(delta tau(a))
    vals = []
    for a in (0.0, 0.3, 0.6 + 0.2j, 0.85, -0.9j):
        h = dbar_solver.normalized_kernel(model, a)
        z = a + 0.5 * constants.m_tau * float(weights.tau(EXP, a)) * _points(60, 1.0, 3)
        lm, _ = h(z)
        vals.append(np.exp(lm + np.log(weights.tau(EXP, z)) + 0.5 * weights.log_weight(EXP, z)))
    v = np.concatenate(vals)
    assert 0.1 < v.min() and v.max() < 10


# --------------------------------------------------------------------------
# the S operator


def test_zero_data_gives_zero(cov, pou, model):
    prob = DbarProblem(ZeroData(), EXP)
    sol = dbar_solver.DbarSolver(prob, cov, pou, model, local=(8, 16))
    assert np.all(sol.evaluate(_points(10, 0.9, 4)) == 0)
    rep = dbar_solver.residual(sol.evaluate, prob.f, _points(10, 0.5, 5), spec=EXP)
    assert rep.sup == 0


def test_solver_linear(cov, pou, model):
    f = SmoothCut(0.3, 0.45, 1.0)
    g = SmoothCut(0.2, 0.5, 2.0 - 1.0j)
    a, b = 0.7 - 0.2j, -1.3
    z = _points(5, 0.8, 6)
    loc = (8, 16)
    uf = dbar_solver.DbarSolver(DbarProblem(f, EXP), cov, pou, model, local=loc).evaluate(z)
    ug = dbar_solver.DbarSolver(DbarProblem(g, EXP), cov, pou, model, local=loc).evaluate(z)
    us = dbar_solver.DbarSolver(DbarProblem(_Sum(f, g, a, b), EXP), cov, pou, model, local=loc).evaluate(z)
    assert np.max(np.abs(us - (a * uf + b * ug))) <= 1e-12 * np.max(np.abs(us))


def test_solver_continuous_at_centers_and_nodes(cov, pou, model, cut_problem):
    sol = dbar_solver.DbarSolver(cut_problem, cov, pou, model, local=(16, 32))
    a = cov.centers[[0, 5, 40]]
    at = sol.evaluate(a)
    near = sol.evaluate(a + 1e-9)
    assert np.all(np.isfinite(at))
    assert np.max(np.abs(at - near)) < 1e-6


def test_covering_must_reach_support(cov, pou, model):
    with pytest.raises(PreconditionError):
        dbar_solver.DbarSolver(DbarProblem(SmoothCut(0.6, 0.8), EXP), cov, pou, model)


def test_division_guard(cov, pou, model, cut_problem, monkeypatch):
    monkeypatch.setattr(dbar_solver, "LOG_GUARD", math.inf)
    with pytest.raises(DivisionGuardError):
        dbar_solver.DbarSolver(cut_problem, cov, pou, model, local=(8, 16))


def test_residual_on_cut_problem(cov, pou, model, cut_problem):
    sol = dbar_solver.DbarSolver(cut_problem, cov, pou, model)
    rep = dbar_solver.residual(sol.evaluate, cut_problem.f, dbar_solver.interior_grid(cut_problem), spec=EXP)
    assert rep.rel_l2 < 1e-3
    assert rep.rel_sup < 1e-3


def test_lp_ratio_stable_under_refinement(cov, pou, model, cut_problem):
    sol = dbar_solver.solve_dbar_S(cut_problem, cov, pou, model, local=(8, 16),
                                   norm_rule=disk_quad.build_rule(4, 8, 32, 0.9), norm_local=(4, 8),
                                   residual_points=np.array([0.1, 0.2j]))
    for alpha in (-1.0, 0.0, 2.0):
        ws = weights.build_associated(EXP, alpha)
        for p in (1, 2, math.inf):
            r = sol.lp_ratio_for(ws, p)
            assert 0 < r < math.inf
            assert sol.lp_drift(ws, p) < 0.2
    back = json.loads(sol.dumps())
    assert back["lp_ratio"] == sol.lp_ratio and len(back["lp_history"]) == 2


def test_problem_json_round_trip(cut_problem):
    back = dbar_solver.problem_from_json(json.loads(json.dumps(cut_problem.to_json())))
    assert back.to_json() == cut_problem.to_json()
    z = DbarProblem(ZeroData(), EXP, math.inf)
    assert dbar_solver.problem_from_json(z.to_json()).p == math.inf
    with pytest.raises(ValueError):
        dbar_solver.data_from_json({"kind": "bogus"})


# --------------------------------------------------------------------------
# the G integral


def _single_disc_oracle(z, R, spec):
    """int_{D(0,R)} omega(z)^1/2 omega(zeta)^-1/2 / (|zeta - z| tau(zeta)) dA(zeta), dA = dx dy / pi."""
    lw_z = 0.5 * weights.log_weight(spec, z)

    def g(zeta):
        return math.exp(lw_z - 0.5 * weights.log_weight(spec, zeta)) / float(weights.tau(spec, zeta))

    if abs(z) < R:  # polar coordinates about z absorb 1/|zeta - z|
        def rho(t):
            c = (z * np.exp(-1j * t)).real
            return -c + math.sqrt(c * c - abs(z) ** 2 + R * R)

        val, _ = integrate.dblquad(lambda s, t: g(z + s * np.exp(1j * t)), 0, 2 * math.pi, 0, rho,
                                   epsabs=1e-13, epsrel=1e-11)
    else:
        val, _ = integrate.dblquad(lambda s, t: g(s * np.exp(1j * t)) * s / abs(s * np.exp(1j * t) - z),
                                   0, 2 * math.pi, 0, R, epsabs=1e-13, epsrel=1e-11)
    return val / math.pi


@pytest.mark.parametrize("z", [0.0, 0.03 + 0.01j, 0.2])
def test_G_single_center_against_quadrature_oracle(constants, model, z):
    one = covering.build_covering(EXP, constants.m_tau / 2, 0.05, constants.m_tau, constants.c2_certified)
    assert len(one) == 1
    gi = dbar_solver.GIntegral(one, covering.build_pou(one, EXP), model, EXP)
    got, _ = gi(z)
    assert got == pytest.approx(_single_disc_oracle(complex(z), float(one.radii[0]), EXP), rel=1e-4)


def test_G_integral_stable_and_near_dominated(cov, pou, model):
    rep = dbar_solver.check_G_integral(cov, pou, model, weights.build_associated(EXP, 0.0), [0.0, 0.4])
    a, b = rep.history[-2]["max"], rep.history[-1]["max"]
    assert math.isfinite(b) and abs(b - a) / a < 0.2
    gi = dbar_solver.GIntegral(cov, pou, model, EXP)
    for z in (0.0, 0.4):
        total, near = gi(z, 0.0, 2 * float(weights.tau(EXP, z)))
        assert near / total > 0.9


# --------------------------------------------------------------------------
# minimal-norm solutions


@pytest.fixture(scope="module")
def star():
    ws = weights.build_associated(EXP, 2.0)
    return ws, kernel.radial_model(ws, disk_quad.build_rule(24, 16, 512, 0.99))


def test_minimal_solution_orthogonal_and_solves(star):
    ws, m = star
    cut = SmoothCut()
    ms = dbar_solver.minimal_solution(cut, ws, model_star=m)
    assert np.all(ms.orthogonality(6) < 1e-6)
    z = np.array([r * np.exp(1j * t) for r in np.linspace(0.05, 0.9, 12) for t in np.linspace(0, 6, 8)])
    h = float(weights.tau(EXP, 0.0)) / 20
    du, dc = dbar_solver.fd_dbar(ms, z, h), dbar_solver.fd_dbar(cut, z, h)
    assert np.linalg.norm(du - dc) / np.linalg.norm(dc) < 1e-3


def test_minimal_solution_of_holomorphic_data_vanishes(star):
    ws, m = star
    ms = dbar_solver.minimal_solution(lambda z: np.asarray(z) ** 3, ws, model_star=m)
    assert np.max(np.abs(ms(np.array([0.1, 0.5j, -0.8])))) < 1e-8


def test_minimal_solution_needs_a_projection():
    with pytest.raises(ValueError):
        dbar_solver.minimal_solution(SmoothCut(), EXP)
