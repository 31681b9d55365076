import math

import numpy as np
import pytest

from bvwiener.errors import InvalidArgument
from bvwiener.grid_paths import make_grid
from bvwiener.montecarlo import (Estimate, IdentityReport, MCConfig, run_batches, run_paths,
                                 run_samples)


def test_moments_match_numpy():
    data = np.random.default_rng(1).normal(size=1000)

    def fn(start, size):
        return {"x": data[start:start + size]}

    est = run_batches(1000, 128, 1, fn)["x"]
    assert est.mean == pytest.approx(data.mean(), abs=1e-13)
    assert est.stderr == pytest.approx(data.std(ddof=1) / math.sqrt(1000), rel=1e-10)
    assert est.n == 1000 and est.minimum == data.min()


def test_raw_outputs_are_concatenated_in_order():
    out = run_batches(10, 3, 2, lambda s, n: {"raw_i": np.arange(s, s + n)})
    np.testing.assert_array_equal(out["raw_i"], np.arange(10))


def test_workers_do_not_change_results():
    grid = make_grid(1.0, 16)

    def fn(path, stream):
        return {"wt": path.values[:, -1], "sq": path.values[:, -1] ** 2}

    a = run_paths(MCConfig(5000, grid, seed=3, workers=1), fn)
    b = run_paths(MCConfig(5000, grid, seed=3, workers=4), fn)
    assert a == b


def test_samples_are_standard_normal():
    est = run_samples(MCConfig(50000, seed=2), 3, lambda z: {"z2": (z**2).sum(-1)})["z2"]
    assert est.within(3.0)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        MCConfig(0)
    with pytest.raises(InvalidArgument):
        MCConfig(10, workers=0)
    with pytest.raises(InvalidArgument):
        MCConfig(10, seed=-1)
    with pytest.raises(InvalidArgument):
        run_paths(MCConfig(10), lambda p, s: {})


def test_batch_size_depends_only_on_grid():
    g = make_grid(1.0, 2**14)
    assert MCConfig(10, g, workers=1).resolved_batch_size() == MCConfig(10, g, workers=8).resolved_batch_size() == 128


def test_identity_report_tolerances():
    r = IdentityReport(1.0, 1.05, 0.01, 0.01, quad_budget=0.001)
    assert r.tolerance == pytest.approx(3 * 0.021)
    assert r.passed
    assert not IdentityReport(1.0, 1.1, 0.01, 0.01, quad_budget=0.001).passed
    d = r.to_dict()
    for key in ("lhs", "rhs", "stderr_lhs", "stderr_rhs", "quad_budget", "pass"):
        assert key in d


def test_estimate_within():
    assert Estimate(1.0, 0.1, 10).within(1.25)
    assert not Estimate(1.0, 0.1, 10).within(1.35)
