import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blab import disk_quad, kernel, projection, weights
from blab.disk_quad import SampledFn

EXP = weights.exponential(1.0, 1.0)


@pytest.fixture(scope="module")
def op():
    return projection.make_operator(EXP, disk_quad.build_rule())


@pytest.fixture(scope="module")
def grid():
    return projection.polar_grid(0.9, 10, 24)


def _mp_moment(k, r_max):
    """m_k = int_0^{r_max^2} t^k exp(-1/(1-t)) dt for the exponential(1,1) weight."""
    mpmath.mp.dps = 30
    return float(mpmath.quad(lambda t: t**k * mpmath.exp(-1 / (1 - t)), [0, 0.5, r_max**2]))


def test_constant_reproduced(op):
    z = np.array([0, 0.3, 0.5j, -0.9, 0.6 + 0.6j])
    pf = projection.project(op, lambda w: np.ones_like(w), z)
    assert np.max(np.abs(pf - 1)) < 1e-8


def test_conjugate_projects_to_zero(op):
    z = np.array([0.1, 0.4 - 0.2j, 0.85j])
    assert np.max(np.abs(projection.project(op, np.conj, z))) < 1e-10


@pytest.mark.parametrize("k", range(9))
def test_monomials_reproduced(op, grid, k):
    assert projection.reproduce_check(op, lambda w: w**k, grid) < 1e-6


def test_bounded_analytic_and_kernel_reproduced(op, grid):
    assert projection.reproduce_check(op, lambda w: 1 / (1 - 0.5 * w), grid) < 1e-5
    assert projection.reproduce_check(op, kernel.kernel_function(op.model, 0.3), grid) < 1e-5


@pytest.mark.parametrize("m,n", [(0, 0), (3, 3), (8, 8), (2, 5), (0, 7)])
def test_monomial_pairing_against_moment_oracle(op, m, n):
    val = projection.pairing(lambda w: w**m, lambda w: w**n, EXP, op.rule)
    if m == n:
        assert val.real == pytest.approx(_mp_moment(m, op.rule.r_max), rel=1e-9)
        assert abs(val.imag) < 1e-15
    else:
        assert abs(val) < 1e-15


def test_pairing_reproduces_cubic(op):
    for a in (0.2, 0.5 - 0.3j, 0.8j):
        val = projection.pairing(lambda w: w**3, kernel.kernel_function(op.model, a), EXP, op.rule)
        assert val == pytest.approx(a**3, rel=1e-6)


def test_pairing_hermitian(op):
    f = lambda w: np.exp(np.conj(w)) + w**2  # noqa: E731
    g = lambda w: np.cos(3 * np.abs(w)) * (1 + 1j * w)  # noqa: E731
    a = projection.pairing(f, g, EXP, op.rule)
    b = projection.pairing(g, f, EXP, op.rule)
    assert a == pytest.approx(np.conj(b), rel=1e-14)


@settings(max_examples=15, deadline=None)
@given(a=st.complex_numbers(max_magnitude=10), b=st.complex_numbers(max_magnitude=10))
def test_linearity(a, b):
    op = _small_op()
    f = lambda w: np.abs(w) ** 2 * np.exp(1j * np.angle(w))  # noqa: E731
    g = lambda w: np.conj(w) ** 2 + w  # noqa: E731
    z = np.array([0.2, 0.5j, -0.7 + 0.1j])
    lhs = projection.project(op, lambda w: a * f(w) + b * g(w), z)
    rhs = a * projection.project(op, f, z) + b * projection.project(op, g, z)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + abs(a) + abs(b))


_SMALL = {}


def _small_op():
    if "op" not in _SMALL:
        _SMALL["op"] = projection.make_operator(EXP, disk_quad.build_rule(12, 16, 128))
    return _SMALL["op"]


def _random_sampled(op, seed):
    rng = np.random.default_rng(seed)
    modes, amp = rng.integers(1, 6, 3), rng.normal(size=3)
    z = op.nodes
    return SampledFn.from_values(sum(a * np.conj(z) ** m * z for m, a in zip(modes, amp)) + np.cos(5 * z.real))


def test_idempotent(op):
    f = _random_sampled(op, 0)
    pf = projection.project_on_rule(op, f)
    rng = np.random.default_rng(1)
    z = 0.9 * np.sqrt(rng.random(10)) * np.exp(2j * np.pi * rng.random(10))
    once = projection.project(op, f, z)
    twice = projection.project(op, pf, z)
    assert np.max(np.abs(twice - once) / np.abs(once)) < 1e-6


def test_self_adjoint(op):
    f, g = _random_sampled(op, 2), _random_sampled(op, 3)
    a = projection.pairing(projection.project_on_rule(op, f), g, EXP, op.rule)
    b = projection.pairing(f, projection.project_on_rule(op, g), EXP, op.rule)
    assert a == pytest.approx(b, rel=1e-6)


def test_p2_contraction_and_analytic_norm_one(op):
    fns = projection.default_test_functions(EXP, 20, seed=5)
    rep = projection.empirical_norm(op, 2, fns, levels=1)
    assert rep.max_ratio <= 1 + 1e-6
    assert np.all(rep.ratios >= 0)
    analytic = [r for r, n in zip(rep.ratios, rep.names) if n.startswith("analytic")]
    assert analytic and np.allclose(analytic, 1.0, atol=1e-6)


def test_pinf_unit_function_finite(op):
    unit = projection.ProbeFunction("omega^-1/2", lambda z: np.ones_like(z), EXP)
    rep = projection.empirical_norm(op, math.inf, [unit], levels=1)
    assert math.isfinite(rep.max_ratio) and rep.max_ratio > 0


def test_zero_norm_function_skipped(op):
    zero = projection.ProbeFunction("zero", lambda z: np.zeros_like(z), EXP)
    one = projection.ProbeFunction("one", lambda z: np.ones_like(z), EXP)
    with pytest.warns(UserWarning):
        rep = projection.empirical_norm(op, 1, [zero, one], levels=1)
    assert rep.skipped == 1 and rep.names == ["one"]
    assert rep.to_json()["lower_bound"] is True


def test_duality_p2_is_exact():
    m = kernel.radial_model(EXP, disk_quad.build_rule())
    rep = projection.duality_ratio(EXP, m, 2, 8, trials=3, restarts=2)
    assert np.allclose(rep.ratios, 1.0, atol=1e-6)


def test_duality_p4_interval_and_kernel_seed():
    m = kernel.radial_model(EXP, disk_quad.build_rule())
    rep = projection.duality_ratio(EXP, m, 4, 8, trials=4, restarts=3)
    assert 0 < rep.min <= rep.max < 10
    assert rep.extra["lower_estimate"]
    # g = K_0 in the subspace: constant coefficient only (orthonormal basis)
    k0 = np.zeros(8, complex)
    k0[0] = 1.0
    one = projection.duality_ratio(EXP, m, 4 / 3, 8, restarts=3, g_coefs=[k0])
    assert 0.5 < one.max < 2


def test_duality_rejects_p_below_one():
    m = kernel.radial_model(EXP, disk_quad.build_rule(8, 16, 64))
    with pytest.raises(ValueError):
        projection.duality_ratio(EXP, m, 0.5, 4)


def test_lattice_centers_nested_and_distinct():
    a = projection.lattice_centers(EXP, 16)
    b = projection.lattice_centers(EXP, 9)
    assert np.array_equal(a[:9], b)
    assert len(np.unique(np.round(a, 12))) == 16
    assert a[0] == 0


def test_kernel_density_curve(op):
    curve = projection.kernel_density_experiment(EXP, op.model, lambda w: w**2, (0, 1, 4, 9, 16))
    e = curve.errors
    # k = 0 gives ||f||, computed independently as sqrt(m_2)
    assert e[0] == pytest.approx(math.sqrt(_mp_moment(2, op.rule.r_max)), rel=1e-8)
    assert all(b < a for a, b in zip(e[1:], e[2:]))
    assert set(curve.to_json()) == {"k", "error", "relative_error", "condition"}


def test_kernel_density_target_in_span(op):
    curve = projection.kernel_density_experiment(EXP, op.model, kernel.kernel_function(op.model, 0.2), (1,),
                                                 centers=[0.2])
    assert curve.relative[0] < 1e-6


def test_kernel_density_lp_non_increasing():
    m = kernel.radial_model(EXP, disk_quad.build_rule(12, 16, 64))
    curve = projection.kernel_density_experiment(EXP, m, lambda w: w**2, (1, 4, 9), p=4)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(curve.errors, curve.errors[1:]))


def test_cutoff_properties():
    chi = projection.smoothstep_cutoff(10)
    r = np.linspace(0, 0.999, 2000)
    v = chi(r)
    assert np.all(v[r <= 0.9] == 1) and np.all(v[r >= 0.95] == 0)
    assert np.all(np.diff(v) <= 0)
    # |d chi / dr| <= 4 n for the quintic smoothstep of width 1/(2n)
    assert np.max(np.abs(np.gradient(v, r))) <= 4 * 10 * 1.01


def test_truncated_polynomial_is_exact(op):
    fa = projection.truncated_approx(EXP, lambda z: z**3 + 1, 200, rule=op.rule)
    assert fa.compact_error < 1e-12
    assert fa.norm_ratio == pytest.approx(1.0, rel=1e-12)


def test_truncated_kernel_converges_on_compacts(op):
    f = kernel.kernel_function(op.model, 0.5)
    errs, ratios = [], []
    for n in (5, 10, 20):
        fa = projection.truncated_approx(EXP, f, n, rule=op.rule)
        errs.append(fa.compact_error)
        ratios.append(fa.norm_ratio)
    assert errs[0] > errs[1] > errs[2]
    assert max(ratios) < 2
