import json
import math

import numpy as np
import pytest

from bvwiener.bv_measure import BVScalarFunction
from bvwiener.clark_ocone import (Cylindrical, RunningMax, barrier, digital, discretize_density,
                                  evaluate_f, expected_value, integrability_bound_check,
                                  integrand, integrand_matrix, ito_integral, ito_sum,
                                  projection_check, spec_from_dict, verify_representation,
                                  xi_weighted_variation)
from bvwiener.errors import InvalidArgument, NumericError
from bvwiener.grid_paths import (BrownianPath, RngStream, TimeGrid, grid_from_times, make_grid, running_max, sample_path,
                                 sample_paths)
from bvwiener.kernels import NormalizedDirection, std_normal_density
from bvwiener.montecarlo import MCConfig
from bvwiener.steps import StepFunction

RHO0 = 0.3989422804014327

# mpmath oracles
TWO_PHI_MINUS_1 = 0.31731050786291415      # 2 (1 - Phi(1))
M1_AT_1 = 0.48394144903828673              # 2 rho(1)
XI_MAX_11 = 0.3821395060910375
E_RAMP_Z = 0.3156268098137464              # E[ramp_[0,1](Z)]
E_RAMP_M = 0.3369795272774028              # E[ramp_[0.5,1.5](sup_[0,1] W)]


def test_integrand_at_time_zero():
    grid = make_grid(1.0, 4)
    p = sample_path(grid, RngStream(0))
    assert integrand(digital(1.0), p.prefix(0)) == pytest.approx(RHO0, rel=1e-15)
    rec = running_max(p)
    assert integrand(barrier(1.0), p.prefix(0, rec)) == pytest.approx(M1_AT_1, rel=1e-14)


def test_integrand_zero_measure():
    spec = Cylindrical(NormalizedDirection.indicator(1.0), BVScalarFunction.constant(2.0))
    p = sample_paths(make_grid(1.0, 8), RngStream(1), 3)
    np.testing.assert_array_equal(integrand_matrix(spec, p), 0.0)


def test_max_integrand_vanishes_after_hit():
    grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
    path = BrownianPath(grid, np.array([0.0, 1.5, 1.2]))
    rec = running_max(path)
    H = integrand_matrix(barrier(1.0), path, rec)
    assert H[0] == pytest.approx(M1_AT_1, rel=1e-14)
    assert H[1] == 0.0


def test_ito_sum_examples():
    p = sample_paths(make_grid(1.0, 64), RngStream(2), 5)
    np.testing.assert_allclose(ito_integral(p, lambda pre: 1.0), p.values[:, -1], atol=1e-14)
    # sum W_i dW_i = (W_T^2 - sum dW^2) / 2 exactly
    got = ito_integral(p, lambda pre: pre.values[..., -1])
    want = 0.5 * (p.values[:, -1] ** 2 - np.sum(p.increments**2, axis=-1))
    np.testing.assert_allclose(got, want, atol=1e-13)


def test_ito_isometry():
    grid = make_grid(1.0, 32)
    p = sample_paths(grid, RngStream(3), 100000)
    H = p.values[:, :-1]
    I = ito_sum(H, p)
    lhs = I**2
    rhs = np.sum(H**2 * grid.gaps, axis=-1)
    d = lhs - rhs
    assert abs(d.mean()) <= 3 * d.std() / math.sqrt(d.size)


def test_integrand_is_predictable():
    grid = make_grid(1.0, 16)
    p = sample_path(grid, RngStream(4))
    future = p.values.copy()
    future[9:] = 2 * future[9:] + 1.0
    q = BrownianPath(grid, future)
    for spec in (digital(1.0), barrier(0.5)):
        rp, rq = running_max(p), running_max(q)
        for i in range(9):
            assert integrand(spec, p.prefix(i, rp)) == integrand(spec, q.prefix(i, rq))


@pytest.mark.parametrize("spec", [
    digital(1.0), digital(0.5), barrier(1.0),
    Cylindrical(NormalizedDirection.indicator(1.0), BVScalarFunction.ramp(0.0, 1.0)),
    RunningMax(BVScalarFunction.ramp(0.5, 1.5)),
], ids=["digital", "digital-half", "barrier", "ramp", "ramp-max"])
def test_fast_route_matches_callback(spec):
    grid = grid_from_times(1.0, make_grid(1.0, 24, "geo").points, [0.5])
    p = sample_paths(grid, RngStream(5), 4)
    rec = running_max(p, bridge=True, rng=RngStream(5))
    fast = ito_sum(integrand_matrix(spec, p, rec), p)
    slow = ito_integral(p, lambda pre: integrand(spec, pre), record=rec)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-14)


def test_digital_residual_is_antisymmetric():
    spec = digital(1.0)
    grid = make_grid(1.0, 256, "geo")
    p = sample_paths(grid, RngStream(6), 50)
    m = BrownianPath(grid, -p.values)

    def resid(path):
        return evaluate_f(spec, path) - 0.5 - ito_sum(integrand_matrix(spec, path), path)

    # ties at W_T = 0 have probability zero
    np.testing.assert_allclose(resid(m), -resid(p), atol=1e-12)


def test_constant_functional_has_zero_residual():
    spec = Cylindrical(NormalizedDirection.indicator(1.0), BVScalarFunction.constant(3.0))
    rep = verify_representation(spec, MCConfig(200, make_grid(1.0, 16), seed=1), l1_tol=0.0)
    assert rep.repr_error_L1 == 0.0 and rep.passed


def test_expected_values():
    assert expected_value(digital(1.0), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert expected_value(barrier(1.0), 1.0) == pytest.approx(TWO_PHI_MINUS_1, rel=1e-14)
    ramp = Cylindrical(NormalizedDirection.indicator(1.0), BVScalarFunction.ramp(0.0, 1.0))
    assert expected_value(ramp, 1.0) == pytest.approx(E_RAMP_Z, rel=1e-13)
    rmax = RunningMax(BVScalarFunction.ramp(0.5, 1.5))
    assert expected_value(rmax, 1.0) == pytest.approx(E_RAMP_M, rel=1e-13)
    # atoms at or below zero are always reached by the maximum
    assert expected_value(RunningMax(BVScalarFunction.heaviside(-1.0, 2.0)), 1.0) == 2.0


def test_expected_value_by_simulation():
    spec = RunningMax(BVScalarFunction.ramp(0.5, 1.5))
    grid = make_grid(1.0, 256)
    p = sample_paths(grid, RngStream(7), 20000)
    f = evaluate_f(spec, p, running_max(p, bridge=True, rng=RngStream(7)))
    assert abs(f.mean() - E_RAMP_M) <= 3 * f.std() / math.sqrt(f.size)


def test_representation_small_run():
    mc = MCConfig(2000, make_grid(1.0, 256, "geo"), seed=11)
    rep = verify_representation(digital(1.0), mc, grids=[make_grid(1.0, 64, "geo")], l1_tol=0.1)
    assert rep.checks["mean"] and rep.checks["l1"]
    d = rep.to_dict()
    json.dumps(d)
    assert {"repr_error_L1", "repr_error_L2", "stderr_L1", "rows", "pass"} <= d.keys()
    lines = rep.rows_csv().splitlines()
    assert lines[0] == "n_steps,paths,l1_error,l2_error,stderr"
    assert [int(r.split(",")[0]) for r in lines[1:]] == [64, 256]


def test_representation_without_closed_form():
    mc = MCConfig(1000, make_grid(1.0, 128, "geo"), seed=3, bridge=True)
    rep = verify_representation(barrier(1.0), mc, l1_tol=0.2, closed_form=False)
    assert rep.expected_source == "mc" and "mean" not in rep.checks
    assert rep.post_hit_violations == 0


def test_representation_needs_grid():
    with pytest.raises(InvalidArgument):
        verify_representation(digital(1.0), MCConfig(10))
    with pytest.raises(InvalidArgument):
        verify_representation(digital(2.0), MCConfig(10, make_grid(1.0, 4)))


def test_non_finite_integrand_reports_path():
    p = sample_paths(make_grid(1.0, 4), RngStream(0), 3)
    H = np.ones((3, 4))
    H[1, 2] = np.nan
    with pytest.raises(NumericError, match=r"path 11 at s = 0\.5"):
        ito_sum(H, p, first_index=10)
    with pytest.raises(NumericError, match="path 1 "):
        ito_integral(p, lambda pre: np.where(pre.s == 0.5, [1.0, np.inf, 1.0], 1.0))


def test_integrand_rejects_terminal_time():
    p = sample_path(make_grid(1.0, 4), RngStream(0))
    with pytest.raises(InvalidArgument):
        integrand(digital(1.0), p.prefix(4))
    with pytest.raises(InvalidArgument):
        integrand(barrier(1.0), p.prefix(1))


def test_spec_round_trip():
    for spec in (digital(0.5), barrier(1.0)):
        back = spec_from_dict(json.loads(json.dumps(spec.to_dict())))
        assert back.to_dict() == spec.to_dict()
    for bad in ({}, {"kind": "cylindrical", "phi": {}}, {"kind": "other", "phi": {}}, []):
        with pytest.raises(InvalidArgument):
            spec_from_dict(bad)


# -- smooth projection ----------------------------------------------------------

def test_discretize_density_cell_averages():
    mu = discretize_density(lambda x: 2.0 * x, spacing=0.5, window=(0.0, 1.0))
    np.testing.assert_allclose(mu.levels, [0.5, 1.5], rtol=1e-14)


@pytest.mark.parametrize("s", [0.0, 0.3, 0.7])
def test_projection_linear_phi(s):
    k = NormalizedDirection.normalize(StepFunction([0.0, 0.5, 1.0], [1.0, 2.0]))
    rep = projection_check(k, lambda x: np.full_like(x, 1.0), s, [0.0, 0.3, -1.2])
    assert rep.passed
    np.testing.assert_allclose(rep.closed_values, float(k.value(s)), rtol=1e-14)


def test_projection_gaussian_phi_with_prefixes():
    k = NormalizedDirection.indicator(1.0)
    grid = make_grid(1.0, 10)
    probes = [sample_path(grid, RngStream(j)).prefix(4) for j in range(5)]
    rep = projection_check(k, std_normal_density, grid.points[4], probes)
    assert rep.passed, rep.sup_discrepancy


def test_projection_small_tau():
    # tau = 1e-3: the kernel is nearly a point mass at x0
    k = NormalizedDirection.indicator(1.0)
    s = 1.0 - 1e-6
    rep = projection_check(k, std_normal_density, s, [0.0, 0.5])
    assert rep.passed, rep.sup_discrepancy
    np.testing.assert_allclose(rep.kernel_values, std_normal_density(np.array([0.0, 0.5])),
                               atol=2e-6)


def test_projection_prefix_must_end_at_s():
    grid = make_grid(1.0, 4)
    pre = sample_path(grid, RngStream(0)).prefix(1)
    with pytest.raises(InvalidArgument):
        projection_check(NormalizedDirection.indicator(1.0), std_normal_density, 0.5, [pre])


# -- integrability bound -----------------------------------------------------

def test_xi_weighted_variation():
    assert xi_weighted_variation(digital(1.0), 1.0) == pytest.approx(RHO0, rel=1e-15)
    assert xi_weighted_variation(barrier(1.0), 1.0) == pytest.approx(XI_MAX_11, rel=1e-7)


def test_bound_zero_measure():
    spec = RunningMax(BVScalarFunction.constant(1.0))
    rep = integrability_bound_check(spec, MCConfig(100, make_grid(1.0, 8), bridge=True))
    assert rep.estimate.mean == 0.0 and rep.bound == 0.0 and rep.passed


def test_bound_small_run():
    for spec in (digital(1.0), barrier(1.0)):
        rep = integrability_bound_check(spec, MCConfig(2000, make_grid(1.0, 256, "geo"),
                                                        seed=2, bridge=True))
        assert rep.passed
        assert rep.bound <= rep.coarse_bound + 1e-15
        json.dumps(rep.to_dict())
