import math

import numpy as np
import pytest

from steinsure.core import RegressionProblem, RngStream
from steinsure import solvers
from steinsure.divergence_mc import (default_step, divergence_table,
                                     lasso_fitted_map, mc_divergence, svt_map)


def test_linear_map_recovers_trace():
    gen = np.random.default_rng(0)
    a = gen.standard_normal((12, 12)) / 4
    est = mc_divergence(lambda v: a @ v, np.zeros(12), 400, RngStream(1))
    assert abs(est.value - np.trace(a)) <= 4 * est.empirical_se


def test_identity_map_is_exact_per_probe():
    est = mc_divergence(lambda v: v, np.ones(7), 5, RngStream(2))
    # each probe term is z'z whose mean is exactly n; spread is chi-square
    assert est.value == pytest.approx(7.0, abs=4 * est.empirical_se)
    assert est.se_bound == pytest.approx(2 * math.sqrt(7 / 5))


def test_two_sided_variant():
    gen = np.random.default_rng(3)
    a = gen.standard_normal((10, 10)) / 3
    est = mc_divergence(lambda v: a @ v, np.zeros(10), 200, RngStream(4),
                        two_sided=True)
    assert est.two_sided
    assert est.se_bound == pytest.approx(math.sqrt(2 * 10 / 200))
    assert abs(est.value - np.trace(a)) <= 4 * max(est.empirical_se, 1e-12)


def test_soft_threshold_map():
    y = np.array([2.0, -0.1, 0.4, -3.0, 0.05])
    f = lambda v: solvers.soft_threshold(v, 0.5)
    est = mc_divergence(f, y, 300, RngStream(5), a=1e-5)
    exact = float(np.sum(np.abs(y) > 0.5))   # 2 components clear the gate
    assert est.value == pytest.approx(exact, abs=4 * est.empirical_se + 0.05)


def test_lasso_map_matches_support_size():
    gen = np.random.default_rng(6)
    x = gen.standard_normal((40, 30))
    y = x[:, :3] @ np.ones(3) + gen.standard_normal(40)
    lam = 0.4
    fit = solvers.fit_lasso(RegressionProblem(x, y), lam)
    f = lasso_fitted_map(x, lam)
    est = mc_divergence(f, y, 200, RngStream(7), a=1e-5)
    assert est.value == pytest.approx(fit.df_hat,
                                      abs=4 * est.empirical_se + 0.1)


def test_svt_map_matrix_shaped():
    gen = np.random.default_rng(8)
    y = gen.standard_normal((6, 9))
    res = solvers.svt(y, 1.0)
    est = mc_divergence(svt_map(1.0), y, 300, RngStream(9), a=1e-5)
    assert est.value == pytest.approx(res.df_exact,
                                      abs=4 * est.empirical_se + 0.2)
    assert est.se_bound == pytest.approx(2 * math.sqrt(54 / 300))


def test_default_step_scale():
    assert default_step(np.zeros(4)) == pytest.approx(1e-4)
    big = default_step(1000 * np.ones(4))
    assert big == pytest.approx(1e-4 * 1001)


def test_validation():
    with pytest.raises(ValueError):
        mc_divergence(lambda v: v, np.ones(3), 0, RngStream(1))
    with pytest.raises(ValueError):
        mc_divergence(lambda v: v, np.ones(3), 5, RngStream(1), a=0.0)


def test_divergence_table_deterministic():
    gen = np.random.default_rng(10)
    a = gen.standard_normal((8, 8)) / 3
    f = lambda v: a @ v
    t1 = divergence_table(f, np.zeros(8), np.trace(a), (5, 20), 6,
                          RngStream(11))
    t2 = divergence_table(f, np.zeros(8), np.trace(a), (5, 20), 6,
                          RngStream(11))
    assert t1 == t2
    assert [r["m"] for r in t1] == [5, 20]
    assert all(r["std"] > 0 for r in t1)
