"""Synthetic generators and the Monte-Carlo harness."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from frechetforest import simulate, spaces
from frechetforest.simulate import (Dataset, MonteCarloConfig, SimSetting,
                                    evaluate_mse, gen_distribution,
                                    gen_sphere, gen_spd, generate,
                                    monte_carlo, normal_quantile_grid,
                                    quantile_levels, single_beta,
                                    sym_matrix_normal, tangent_basis)


def test_betas_match_published_values():
    assert np.allclose(single_beta(2), [0.75, 0.25])
    b5 = single_beta(5)
    assert np.allclose(b5, [0.1, 0.2, 0.3, 0.4, 0.0])
    b20 = single_beta(20)
    assert np.allclose(b20[:4], np.array([0.1, 0.2, 0.3, 0.4]) / 2)
    assert np.allclose(b20[-4:], np.array([0.1, 0.2, 0.3, 0.4]) / 2)
    assert np.allclose(b20[4:16], 0.0)


def test_quantile_grid_midpoints():
    t = quantile_levels(21)
    assert t[0] == pytest.approx(1 / 42)
    assert t[-1] == pytest.approx(41 / 42)
    assert np.allclose(np.diff(t), 1 / 21)


def test_normal_quantile_grid():
    g = normal_quantile_grid(2.0, 3.0, 21)
    assert np.allclose(g, 2.0 + 3.0 * norm.ppf(quantile_levels(21)))


def test_i1_sigma_zero_degenerate():
    setting = SimSetting("I-1", p=2, n=25, sigma=0.0)
    data = gen_distribution(setting, np.random.default_rng(0))
    mu = 5.0 * data.X @ single_beta(2) - 2.5
    expect = normal_quantile_grid(mu, np.ones(25), 21)
    assert np.allclose(data.Y, expect, atol=1e-12)
    assert np.allclose(data.Y, data.truth, atol=1e-12)


def test_i1_truth_is_conditional_frechet_mean():
    # averaging quantile functions of N(mu, 1) over mu ~ N(a, sigma^2)
    # yields a + Phi^{-1}(t): Monte-Carlo audit
    rng = np.random.default_rng(1)
    a, sigma = 1.3, 0.2
    draws = a + sigma * rng.standard_normal(10 ** 6)
    grid = normal_quantile_grid(draws, np.ones_like(draws), 21)
    assert np.max(np.abs(grid.mean(axis=0)
                         - normal_quantile_grid(a, 1.0, 21))) < 1e-3


def test_generated_objects_pass_invariants():
    rng = np.random.default_rng(2)
    for sc in simulate.SCENARIOS:
        data = generate(SimSetting(sc, p=2, n=30), rng)
        for y in data.Y:
            spaces.validate_object(data.space, y)
        for y in data.truth:
            spaces.validate_object(data.space, y)


def test_sym_matrix_normal_moments():
    rng = np.random.default_rng(3)
    M = np.zeros((2, 2))
    sigma = math.sqrt(0.2)
    assert np.allclose(sym_matrix_normal(M, 0.0, rng), M)
    draws = np.stack([sym_matrix_normal(M, sigma, rng)
                      for _ in range(100_000)])
    var_diag = draws[:, 0, 0].var()
    var_off = draws[:, 0, 1].var()
    assert var_diag == pytest.approx(sigma ** 4, rel=0.05)
    assert var_off == pytest.approx(sigma ** 4 / 2, rel=0.05)
    assert np.allclose(draws[:, 0, 1], draws[:, 1, 0])
    with pytest.raises(ValueError):
        sym_matrix_normal(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0, rng)


def test_gen_spd_sigma_zero_and_closed_form():
    setting = SimSetting("II-1", p=2, n=15, sigma=0.0)
    data = gen_spd(setting, np.random.default_rng(4))
    assert np.allclose(data.Y, data.truth, atol=1e-10)
    # beta^T x = 0 -> rho = 1, D = exp([[1,1],[1,1]]), eigenvalues 1 and e^2
    D = spaces.matrix_exp(np.array([[1.0, 1.0], [1.0, 1.0]]))
    eig = np.linalg.eigvalsh(D)
    assert eig[0] == pytest.approx(1.0, abs=1e-10)
    assert eig[1] == pytest.approx(math.exp(2.0), abs=1e-8)


def test_gen_sphere_delta_zero_and_formula():
    setting = SimSetting("III-1", p=2, n=15, sigma=0.0)
    data = gen_sphere(setting, np.random.default_rng(5))
    assert np.allclose(data.Y, data.truth, atol=1e-10)
    assert np.allclose(np.linalg.norm(data.Y, axis=1), 1.0, atol=1e-10)
    # p = 2, x = (0, 0): m = (sqrt(1)*cos 0, sqrt(1)*sin 0, 0)
    m = simulate._sphere_target(setting, np.zeros(2))
    assert np.allclose(m, [1.0, 0.0, 0.0], atol=1e-12)


def test_tangent_basis_orthonormal():
    rng = np.random.default_rng(6)
    for _ in range(20):
        p = rng.normal(size=3)
        p /= np.linalg.norm(p)
        B = tangent_basis(p)
        assert B.shape == (2, 3)
        assert np.allclose(B @ B.T, np.eye(2), atol=1e-10)
        assert np.allclose(B @ p, 0.0, atol=1e-10)


def test_evaluate_mse():
    space = spaces.sphere_space(3)
    truths = np.tile([0.0, 0.0, 1.0], (100, 1))
    preds = truths.copy()
    assert evaluate_mse(preds, truths, space) == 0.0
    preds = truths.copy()
    preds[0] = [math.sin(1.0), 0.0, math.cos(1.0)]  # distance exactly 1
    assert evaluate_mse(preds, truths, space) == pytest.approx(0.01,
                                                               abs=1e-12)
    with pytest.raises(ValueError):
        evaluate_mse(preds[:3], truths, space)


def test_evaluate_mse_direct_sum_oracle():
    rng = np.random.default_rng(7)
    space = spaces.wasserstein_space(9)
    a = np.sort(rng.normal(size=(8, 9)), axis=1)
    b = np.sort(rng.normal(size=(8, 9)), axis=1)
    direct = np.mean([spaces.distance(space, x, y) ** 2
                      for x, y in zip(a, b)])
    assert evaluate_mse(a, b, space) == pytest.approx(direct, abs=1e-12)


def test_generators_deterministic():
    s = SimSetting("I-2", p=2, n=20)
    d1 = generate(s, np.random.default_rng(11))
    d2 = generate(s, np.random.default_rng(11))
    assert np.array_equal(d1.X, d2.X)
    assert np.array_equal(d1.Y, d2.Y)


_FAST = MonteCarloConfig(runs=2, test_size=20, num_trees=8, cv_trees=4,
                         folds=2, depth_grid=(3,), mtry_grid=(2,))


def test_monte_carlo_single_run():
    cfg = MonteCarloConfig(runs=1, test_size=20, num_trees=8,
                           depth_grid=(3,), mtry_grid=(2,))
    res = monte_carlo(SimSetting("I-1", p=2, n=40), ["gfr", "rfwlcfr"], cfg,
                      seed=5)
    for k in ("gfr", "rfwlcfr"):
        assert res.summary[k]["runs"] == 1
        assert res.summary[k]["sd_mse"] == 0.0
        run_vals = [m for r, kk, m in res.rows if kk == k]
        assert res.summary[k]["mean_mse"] == pytest.approx(run_vals[0])
    assert res.failures == []


def test_monte_carlo_parallel_matches_serial():
    setting = SimSetting("I-1", p=2, n=40)
    serial = monte_carlo(setting, ["gfr", "rfwlcfr"], _FAST, seed=9,
                         n_jobs=1)
    parallel = monte_carlo(setting, ["gfr", "rfwlcfr"], _FAST, seed=9,
                           n_jobs=4)
    assert serial.rows == parallel.rows
    assert serial.summary == parallel.summary
