import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from blab import covering, weights
from blab.errors import CoveringError, PreconditionError

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


def _random_points(n, r_max, seed):
    rng = np.random.default_rng(seed)
    return r_max * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))


def test_smooth_step_endpoints_and_derivative():
    t = np.linspace(-0.5, 1.5, 4001)
    s = covering.smooth_step(t)
    assert np.all(s[t <= 0] == 1) and np.all(s[t >= 1] == 0)
    assert np.all(np.diff(s) <= 0)
    fd = np.gradient(s, t)
    assert np.max(np.abs(fd - covering.smooth_step_deriv(t))) < 1e-4


def test_separation_all_pairs(cov):
    c = cov.centers
    D = cdist(np.column_stack([c.real, c.imag]), np.column_stack([c.real, c.imag]))
    np.fill_diagonal(D, np.inf)
    # a_j outside D(delta1 tau(a_k)) for every ordered pair
    assert np.all(D >= cov.radii[None, :])


def test_delta_ordering(cov):
    assert 2 * cov.delta1 <= cov.delta0 <= cov.delta / 5


def test_fresh_covering_passes_independent_grid(cov):
    rep = covering.verify_covering(cov, EXP)
    assert rep.passed, rep.to_json()
    assert rep.multiplicity <= cov.N + 1
    assert rep.n_probes > 10 * len(cov)


def test_deleted_center_leaves_uncovered_witness(cov):
    broken = cov.without(0)
    rep = covering.verify_covering(broken, EXP)
    assert not rep.conditions["ii"]
    w = rep.witnesses["ii"]
    assert np.all(np.abs(broken.centers - w) >= broken.radii)


def test_deterministic_and_json_round_trip(constants, cov):
    again = covering.build_covering(EXP, constants.m_tau / 2, 0.65, constants.m_tau, constants.c2_certified)
    assert again.dumps() == cov.dumps()
    back = covering.covering_from_json(cov.dumps())
    assert np.array_equal(back.centers, cov.centers) and back.N == cov.N
    assert json.loads(cov.dumps())["radii"] == pytest.approx(list(cov.radii), rel=1e-15)


def test_delta1_precondition(constants):
    with pytest.raises(PreconditionError):
        covering.build_covering(EXP, 0.6 * constants.m_tau, 0.5, constants.m_tau, constants.c2_certified)


def test_count_near_origin_against_packing_heuristic(constants):
    d1 = constants.m_tau / 2
    c = covering.build_covering(EXP, d1, 0.3, constants.m_tau, constants.c2_certified)
    heuristic = 0.09 / (d1 * float(weights.tau(EXP, 0.0))) ** 2
    assert len(c) <= 2 * heuristic, (len(c), heuristic)


def test_multiplicity_independent_of_r_max(constants):
    d1 = constants.m_tau / 2
    n = [covering.build_covering(EXP, d1, r, constants.m_tau, constants.c2_certified).N for r in (0.9, 0.95)]
    assert abs(n[0] - n[1]) <= 2


def test_partition_sums_to_one(pou, cov):
    z = _random_points(10_000, cov.r_max, 0)
    chi = pou.chi(z)
    assert np.max(np.abs(np.asarray(chi.sum(axis=1)).ravel() - 1)) < 1e-10
    assert chi.data.min() >= 0 and chi.data.max() <= 1 + 1e-15


def test_support_inside_discs(pou, cov):
    z = _random_points(5000, cov.r_max, 1)
    chi = pou.chi(z).tocoo()
    nz = chi.data > 0
    d = np.abs(z[chi.row[nz]] - cov.centers[chi.col[nz]])
    assert np.all(d < cov.radii[chi.col[nz]])


def test_single_disc_point_has_chi_one(pou, cov):
    z = _random_points(5000, cov.r_max, 2)
    chi = pou.chi(np.concatenate([[0j], z])).tocsr()
    single = np.diff(chi.indptr) == 1
    assert single[0]  # the origin only meets the central disc
    assert np.all(chi.data[chi.indptr[:-1][single]] == 1.0)


def test_dbar_chi_matches_finite_differences(pou, cov):
    z = _random_points(200, 0.6, 3)
    _, dchi, _ = pou.chi_and_dbar(z)
    h = 1e-6 * weights.tau(EXP, z)
    dx = (pou.chi(z + h).toarray() - pou.chi(z - h).toarray()) / (2 * h[:, None])
    dy = (pou.chi(z + 1j * h).toarray() - pou.chi(z - 1j * h).toarray()) / (2 * h[:, None])
    fd = 0.5 * (dx + 1j * dy)
    scale = 1 / (cov.delta1 * weights.tau(EXP, z))
    assert np.max(np.abs(dchi.toarray() - fd) / scale[:, None]) < 1e-6


def test_gradient_bound_recorded_and_stable(pou, cov):
    h = pou.gradient_history
    assert len(h) == 2 and all(math.isfinite(v) and v > 0 for v in h)
    assert abs(h[1] - h[0]) / h[1] < 0.05
    # the bound holds on an independent random sample
    _, _, ratio = pou.chi_and_dbar(_random_points(5000, cov.r_max, 4))
    assert ratio.max() <= pou.gradient_constant * (1 + 1e-9)


def test_chi_continuous_along_segment(pou):
    # no jumps beyond the Lipschitz bound 2 |dbar chi| h across disc boundaries
    z = np.linspace(-0.6, 0.6, 20001) + 0.013j
    h = abs(z[1] - z[0])
    chi = pou.chi(z).toarray()
    _, dchi, _ = pou.chi_and_dbar(z)
    lip = 2 * np.abs(dchi.toarray())
    jump = np.abs(np.diff(chi, axis=0))
    bound = h * np.maximum(lip[1:], lip[:-1]) * 1.05 + 1e-12
    assert np.all(jump <= bound + h * h * 1e3 * np.max(lip) ** 2)


def test_uncovered_point_raises(cov):
    far = covering.PartitionOfUnity(cov, EXP)
    with pytest.raises(CoveringError) as e:
        far.chi(np.array([0.0, 0.97]))
    assert e.value.witness == 0.97


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0, 0.64), t=st.floats(0, 2 * math.pi))
def test_every_point_covered(cov, r, t):
    z = r * complex(math.cos(t), math.sin(t))
    assert np.any(np.abs(cov.centers - z) < cov.radii)
