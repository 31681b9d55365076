from types import SimpleNamespace

import numpy as np
import pytest

from bvwiener.bv_measure import BVScalarFunction
from bvwiener.chain_rule import (GaussianConditioner, bv_defining_identity_check,
                                 chain_rule_check_phi, disintegrated_check, levelset_check,
                                 levelset_continuity, lhs_levelset, rhs_levelset)
from bvwiener.clark_ocone import digital
from bvwiener.errors import ConditioningError, InvalidArgument
from bvwiener.functional import CylindricalFunctional, Direction
from bvwiener.kernels import NormalizedDirection
from bvwiener.montecarlo import MCConfig
from bvwiener.presets import orthogonal_direction, unit_direction
from bvwiener.steps import StepFunction

# rho(x) at x = 0, 0.5, 1 (mpmath)
RHO = {0.0: 0.3989422804014327, 0.5: 0.3520653267642995, 1.0: 0.24197072451914337}

K = unit_direction()
H = Direction(K.k)
ONE = CylindricalFunctional.constant(1.0)
COS_HALF = CylindricalFunctional.of_increment(0.0, 0.5, np.cos, lambda z: -np.sin(z), 1.0)


def test_conditioner_covariance_and_constraint():
    k = NormalizedDirection.normalize(StepFunction([0.0, 0.25, 1.0], [2.0, 1.0]))
    times = [0.0, 0.25, 0.5, 1.0]
    c = GaussianConditioner.build(k, times)
    cov = np.diag(np.diff(times)) - np.outer(c.c, c.c)
    np.testing.assert_allclose(c.factor @ c.factor.T, cov, atol=1e-14)
    # the conditioned increments reproduce W(k) = x exactly
    z = np.random.default_rng(0).normal(size=(50, 3))
    inc = c.sample(0.7, z)
    np.testing.assert_allclose(inc @ k.k.levels_on(np.array(times)), 0.7, atol=1e-12)


def test_conditioner_rejects_indefinite_covariance():
    fake = SimpleNamespace(k=StepFunction([0.0, 1.0], [2.0]))
    with pytest.raises(ConditioningError):
        GaussianConditioner.build(fake, [0.0, 1.0])


def test_levelset_u_one_is_density():
    for x, rho in RHO.items():
        rep = levelset_check(K, ONE, H, x, MCConfig(20000, seed=1))
        assert rep.rhs == pytest.approx(rho, rel=1e-14) and rep.stderr_rhs == 0.0
        assert rep.passed


def test_levelset_trivial_cases():
    zero = CylindricalFunctional.constant(0.0)
    rep = levelset_check(K, zero, H, 0.0, MCConfig(1000))
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed
    far = levelset_check(K, ONE, H, 10.0, MCConfig(1000))
    assert far.rhs < 1e-21 and far.lhs == 0.0


def test_orthogonal_direction_gives_exact_zero():
    h = orthogonal_direction()
    est = rhs_levelset(K, COS_HALF, h, 0.3, MCConfig(1000))
    assert est.mean == 0.0 and est.stderr == 0.0
    assert levelset_check(K, COS_HALF, h, 0.3, MCConfig(20000, seed=2)).passed


def test_levelset_general_u():
    for x in (0.0, 1.0):
        assert levelset_check(K, COS_HALF, H, x, MCConfig(20000, seed=3)).passed


def test_levelset_is_linear_in_h():
    mc = MCConfig(5000, seed=4)
    h2 = Direction(K.k.scaled(2.0))
    a, b = lhs_levelset(K, COS_HALF, H, 0.2, mc), lhs_levelset(K, COS_HALF, h2, 0.2, mc)
    assert b.mean == pytest.approx(2 * a.mean, rel=1e-12)
    c, d = rhs_levelset(K, COS_HALF, H, 0.2, mc), rhs_levelset(K, COS_HALF, h2, 0.2, mc)
    assert d.mean == pytest.approx(2 * c.mean, rel=1e-12)


def test_chain_rule_ramp():
    phi = BVScalarFunction.ramp(0.0, 1.0)
    rep = chain_rule_check_phi(K, phi, COS_HALF, H, MCConfig(20000, seed=5))
    assert rep.passed
    assert rep.quad_budget < 1e-10
    assert rep.extra["variation"] <= rep.extra["variation_bound"]


def test_chain_rule_heaviside_matches_levelset():
    phi = BVScalarFunction.heaviside(0.5)
    mc = MCConfig(5000, seed=6)
    a = chain_rule_check_phi(K, phi, COS_HALF, H, mc)
    b = levelset_check(K, COS_HALF, H, 0.5, mc)
    assert a.lhs == pytest.approx(b.lhs, rel=1e-14)
    assert a.rhs == pytest.approx(b.rhs, rel=1e-14)


def test_levelset_continuity():
    # on a fine grid the true change between neighbours is far below the noise
    out = levelset_continuity(K, COS_HALF, H, np.linspace(-0.1, 0.1, 11), MCConfig(5000, seed=7))
    assert out["pass"]
    assert out["max_jump_sigma"] < 1.0


def test_disintegrated_windows():
    u = CylindricalFunctional.of_increment(0.0, 0.5, np.cos, lambda z: -np.sin(z), 1.0)
    rep = disintegrated_check(K, BVScalarFunction.heaviside(0.0), u, 0.5, [0.5, 0.8],
                              MCConfig(20000, seed=8))
    assert rep.passed
    for d in rep.direct:
        assert d.mean > 0
    assert rep.to_dict()["pass"]


def test_disintegrated_validation():
    phi = BVScalarFunction.heaviside(0.0)
    with pytest.raises(InvalidArgument):
        disintegrated_check(K, phi, COS_HALF, 0.25, [0.5], MCConfig(100))
    with pytest.raises(InvalidArgument):
        disintegrated_check(K, phi, COS_HALF, 0.5, [0.4], MCConfig(100))
    with pytest.raises(InvalidArgument):
        disintegrated_check(K, phi, COS_HALF, 0.5, [0.95], MCConfig(100))


def test_bv_defining_identity():
    rep = bv_defining_identity_check(digital(1.0), COS_HALF, H, MCConfig(20000, seed=9))
    assert rep.passed
    # the sides are swapped: lhs now holds the explicit chain-rule value
    direct = chain_rule_check_phi(K, digital(1.0).phi, COS_HALF, H, MCConfig(20000, seed=9))
    assert (rep.lhs, rep.rhs) == (direct.rhs, direct.lhs)
