import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blab import disk_quad, weights
from blab.disk_quad import SampledFn
from blab.errors import EmptyRegionError, IntegrationError, QuadratureError


@pytest.fixture(scope="module")
def rule():
    return disk_quad.build_rule()


def test_weights_positive_and_sum_to_area(rule):
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(rule.r_max**2, rel=1e-12)
    assert disk_quad.integrate(rule, np.ones(rule.size)).real == pytest.approx(rule.r_max**2, rel=1e-12)


def test_second_moment_full_disk():
    r = disk_quad.build_rule(8, 16, 64, 1.0)
    assert disk_quad.integrate(r, lambda z: np.abs(z) ** 2).real == pytest.approx(0.5, rel=1e-13)


def test_odd_monomial_vanishes(rule):
    assert abs(disk_quad.integrate(rule, lambda z: z**3)) < 1e-14


def test_polynomial_exactness_up_to_degree():
    r = disk_quad.build_rule(4, 8, 16, 0.9)
    deg = r.degree
    for m in range(deg + 1):
        for n in range(deg + 1 - m):
            got = disk_quad.integrate(r, lambda z, m=m, n=n: z**m * np.conj(z) ** n)
            exact = r.r_max ** (2 * m + 2) / (m + 1) if m == n else 0.0
            assert abs(got - exact) < 1e-12, (m, n)


def test_exponential_m0_is_e2():
    spec = weights.exponential(1.0, 1.0)
    r = disk_quad.build_rule()
    got = disk_quad.integrate(r, lambda z: np.exp(weights.log_weight(spec, z))).real
    mpmath.mp.dps = 30
    assert got == pytest.approx(float(mpmath.expint(2, 1)), rel=1e-8)
    assert got == pytest.approx(0.14849551, rel=1e-7)


def test_unweighted_moments(rule):
    full = disk_quad.build_rule(8, 16, 64, 1.0)
    for n in range(51):
        got = disk_quad.integrate(full, lambda z, n=n: np.abs(z) ** (2 * n)).real
        assert got == pytest.approx(1 / (n + 1), rel=1e-12)


def test_refinement_changes_m0_little():
    spec = weights.exponential(1.0, 1.0)
    rv = disk_quad.integrate_refined(disk_quad.build_rule(), lambda z: np.exp(weights.log_weight(spec, z)))
    assert rv.error_estimate < 1e-10


def test_self_convergence_moments():
    spec = weights.exponential(1.0, 1.0)
    for n in (0, 10, 50, 100):
        f = lambda z, n=n: (2 * n * np.log(np.abs(z)) + weights.log_weight(spec, z), 0.0)  # noqa: E731
        vals = [disk_quad.integrate(disk_quad.build_rule(p, 8, 16), f).real for p in (4, 8, 16, 32)]
        diffs = np.abs(np.diff(vals))
        assert np.all(diffs[1:] <= diffs[:-1] + 1e-18), (n, diffs)


def test_log_domain_integration_does_not_underflow():
    # integrand e^{-800} everywhere: plain doubles would give 0
    r = disk_quad.build_rule(4, 8, 16, 0.5)
    lm, _ = disk_quad.log_integrate(r.nodes, r.log_weights, (np.full(r.size, -800.0), 0.0))
    assert lm == pytest.approx(-800 + math.log(0.25), rel=1e-14)


def test_nan_integrand_names_node(rule):
    def f(z):
        out = np.ones_like(z)
        out[5] = np.nan
        return out

    with pytest.raises(IntegrationError) as e:
        disk_quad.integrate(rule, f)
    assert e.value.node == rule.nodes[5]


@pytest.mark.parametrize("args", [(0, 8, 16, 0.9), (4, 8, 16, 1.5), (4, 8, 16, 0.0)])
def test_degenerate_rules_rejected(args):
    with pytest.raises(QuadratureError):
        disk_quad.build_rule(*args)


def test_region_true_equals_full(rule):
    f = lambda z: np.exp(-np.abs(z) ** 2)  # noqa: E731
    a = disk_quad.integrate(rule, f)
    b = disk_quad.integrate_region(rule, lambda z: np.ones(np.shape(z), bool), f, supersample=1).value
    assert b == pytest.approx(a, rel=1e-14)


def test_region_small_disc_area(rule):
    res = disk_quad.integrate_region(rule, lambda z: np.abs(z) < 0.1, np.ones(rule.size))
    assert res.value.real == pytest.approx(0.01, rel=0.01)
    assert res.n_nodes > 0


def test_region_zero_integrand():
    r = disk_quad.build_rule()
    res = disk_quad.integrate_region(r, lambda z: np.abs(z - 0.5) < 0.2, np.zeros(r.size))
    assert res.value == 0


def test_empty_region_signalled(rule):
    with pytest.raises(EmptyRegionError):
        disk_quad.integrate_region(rule, lambda z: np.zeros(np.shape(z), bool), np.ones(rule.size))


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.1, 5.0), k=st.integers(0, 6))
def test_positive_integrand_positive_result(c, k):
    r = disk_quad.build_rule(6, 8, 32, 0.95)
    val = disk_quad.integrate(r, lambda z: np.abs(z) ** k * np.exp(-c * np.abs(z)))
    assert val.real > 0 and abs(val.imag) <= 1e-12 * val.real


def test_sampled_fn_phase_range_and_zero():
    s = SampledFn.from_values(np.array([-1.0, 0.0, 1j, -1j]))
    assert np.all((s.phase > -np.pi) & (s.phase <= np.pi))
    assert list(s.zero_flag) == [False, True, False, False]
    assert np.allclose(s.values(), [-1.0, 0.0, 1j, -1j])


def test_disc_rule_area():
    lr = disk_quad.disc_rule(0.3 + 0.1j, 0.05)
    assert lr.weights.sum() == pytest.approx(0.05**2, rel=1e-13)


def _cauchy_oracle(a, R, z, g):
    """Cauchy transform over a disc by plain polar nested quadrature (scipy, adaptive)."""
    from scipy import integrate

    def part(fun):
        val, _ = integrate.dblquad(lambda r, t: fun(a + r * np.exp(1j * t)) * r / np.pi, 0, 2 * np.pi, 0, R,
                                   epsabs=1e-13, epsrel=1e-11)
        return val

    h = lambda w: g(w) / (z - w)  # noqa: E731
    return part(lambda w: h(w).real) + 1j * part(lambda w: h(w).imag)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("z", [0.32 + 0.1j, 0.3 + 0.13j, 0.5])
def test_cauchy_rule_against_adaptive_oracle(z):
    a, R = 0.3 + 0.1j, 0.05
    g = lambda w: np.exp(w) * (R**2 - np.abs(w - a) ** 2) ** 2  # noqa: E731 - vanishes at the rim
    lr = disk_quad.cauchy_rule(a, R, z, 24, 48)
    got = lr.integrate(g(lr.nodes))
    exact = _cauchy_oracle(a, R, z, g)
    assert abs(got - exact) <= 1e-9 * abs(exact)


def test_cauchy_rules_batched_matches_scalar():
    a = np.array([0.1, 0.2 + 0.3j, -0.4j])
    R = np.array([0.05, 0.1, 0.02])
    z = np.array([0.11, 0.5, -0.41j])
    nodes, wts = disk_quad.cauchy_rules(a, R, z, 8, 16)
    for k in range(3):
        lr = disk_quad.cauchy_rule(a[k], R[k], z[k], 8, 16)
        assert np.allclose(np.sort_complex(nodes[k]), np.sort_complex(lr.nodes), atol=1e-14)
        g = np.exp(nodes[k])
        assert np.sum(wts[k] * g) == pytest.approx(lr.integrate(np.exp(lr.nodes)), rel=1e-13)


def test_rule_json_round_trip():
    r = disk_quad.build_rule(10, 12, 64, 0.95)
    r2 = disk_quad.rule_from_json(r.params())
    assert np.array_equal(r.nodes, r2.nodes)
    with pytest.raises(QuadratureError):
        disk_quad.rule_from_json({"bogus": 1})



def test_truncation_sweep():
    # each truncated moment matches its own oracle; the truncation effect itself shrinks with r_max
    spec = weights.exponential(1.0, 1.0)
    mpmath.mp.dps = 30
    for n in (0, 20):
        f = lambda z, n=n: (2 * n * np.log(np.abs(z)) + weights.log_weight(spec, z), 0.0)  # noqa: E731
        vals = []
        for r in (0.98, 0.99, 0.995):
            got = disk_quad.integrate(disk_quad.build_rule(24, 16, 64, r), f).real
            exact = float(mpmath.quad(lambda t: t**n * mpmath.exp(-1 / (1 - t)), [0, 0.5, r * r]))
            assert got == pytest.approx(exact, rel=1e-13)
            vals.append(got)
        assert abs(vals[1] - vals[0]) <= 1e-9 * vals[2]
        assert abs(vals[2] - vals[1]) <= 1e-14 * vals[2]
