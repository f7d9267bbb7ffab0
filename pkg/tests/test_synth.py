import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketcorr.correlation import lag_matrix, normalized_correlation
from marketcorr.exceptions import ValidationError
from marketcorr.synth import (
    PAPER_INSTRUMENTS,
    TailModel,
    VarModel,
    autocovariance,
    generate_tail_sample,
    generate_var,
    lag1_asymptotic_std_error,
    make_rng,
    panel_to_bars,
    paper_like_model,
    planted_pair_model,
    population_lag1_correlation,
    population_lag1_matrix,
    random_var_model,
    rollover_rows,
    standard_normal,
    stationary_covariance,
)


def test_same_seed_same_bytes():
    model = random_var_model(3, make_rng(1), seed=42)
    a = generate_var(model, 500)
    b = generate_var(model, 500)
    assert a.returns.tobytes() == b.returns.tobytes()
    assert a.content_hash() == b.content_hash()
    c = generate_var(VarModel(model.phi, model.sigma, seed=43), 500)
    assert not np.array_equal(a.returns, c.returns)


def test_frozen_reference_draws():
    # PCG64 uniforms through Box-Muller; pinned so a change of transform is noticed
    z = standard_normal(make_rng(0), 4)
    u = make_rng(0).random((2, 2))
    r = np.sqrt(-2 * np.log1p(-u[0]))
    expected = np.array([r[0] * math.cos(2 * math.pi * u[1, 0]),
                         r[0] * math.sin(2 * math.pi * u[1, 0]),
                         r[1] * math.cos(2 * math.pi * u[1, 1]),
                         r[1] * math.sin(2 * math.pi * u[1, 1])])
    assert np.array_equal(z, expected)


def test_box_muller_moments():
    z = standard_normal(make_rng(3), 200_001)
    assert z.shape == (200_001,)
    assert abs(z.mean()) < 5 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    assert abs(np.mean(z ** 4) - 3) < 0.1


def test_rejects_non_stationary_and_bad_sigma():
    with pytest.raises(ValidationError, match="stationary"):
        VarModel([[1.0]], [[1.0]])
    with pytest.raises(ValidationError):
        VarModel([[0.1, 0], [0, 0.1]], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        VarModel([[0.1, 0], [0, 0.1]], [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ValidationError):
        generate_var(VarModel.white_noise(2), 99)


def test_white_noise_has_no_lag_one_structure():
    p = generate_var(VarModel.white_noise(4, seed=5), 15_000)
    coef, err = lag_matrix(p, 1)
    assert np.all(np.abs(coef / err) < 4)
    assert np.all(population_lag1_matrix(VarModel.white_noise(4)) == 0)


@pytest.mark.parametrize("phi", [0.0, 0.3, -0.7, 0.95])
def test_ar1_closed_form(phi):
    model = VarModel(phi * np.eye(3), np.eye(3))
    for i in range(3):
        assert population_lag1_correlation(model, i, i) == pytest.approx(phi, abs=1e-12)
    np.testing.assert_allclose(np.diag(stationary_covariance(model)), 1 / (1 - phi ** 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_lyapunov_solution(seed, n):
    model = random_var_model(n, make_rng(seed))
    s = stationary_covariance(model)
    np.testing.assert_allclose(s, model.phi @ s @ model.phi.T + model.sigma,
                               rtol=1e-9, atol=1e-9)
    g = autocovariance(model, 2)
    np.testing.assert_allclose(g[2], model.phi @ model.phi @ s, rtol=1e-9, atol=1e-12)
    assert model.spectral_radius <= 0.9 + 1e-12


def test_two_dim_example_recovered():
    model = VarModel([[0.0, 0.1], [0.0, 0.0]], np.eye(2), seed=3)
    # x0(t) = 0.1 x1(t-1) + e: S = diag(1.01, 1), (phi S)[0, 1] = 0.1
    assert population_lag1_correlation(model, 0, 1) == pytest.approx(0.1 / math.sqrt(1.01))
    p = generate_var(model, 15_000)
    lc = normalized_correlation(p, 0, 1, 1)
    assert abs(lc.normalized_value - population_lag1_correlation(model, 0, 1)) < 3 * lc.std_error


def test_planted_strength_is_population_value():
    model = planted_pair_model(3, 2, 0, 0.05)
    assert population_lag1_correlation(model, 0, 2) == pytest.approx(0.05, abs=1e-12)


def test_stationarity_of_the_mean():
    model = random_var_model(5, make_rng(8), seed=8)
    t = 100_000
    p = generate_var(model, t)
    s = stationary_covariance(model)
    # 5/sqrt(T) in units of each column's own spread
    assert np.all(np.abs(p.returns.mean(axis=0)) < 5 * np.sqrt(np.diag(s)) / math.sqrt(t)
                  * _long_run_factor(model))


def _long_run_factor(model):
    # sd of a sample mean of a VAR exceeds the iid value by the long-run variance ratio
    inv = np.linalg.inv(np.eye(model.dimension) - model.phi)
    lr = inv @ model.sigma @ inv.T
    return np.sqrt(np.diag(lr) / np.diag(stationary_covariance(model)))


def test_stationary_init_skips_burn_in():
    model = VarModel(0.9 * np.eye(2), np.eye(2), seed=1)
    assert model.burn_in == 100
    p = generate_var(model, 200, stationary_init=True)
    assert p.n_rows == 200


def test_population_matches_long_simulation():
    model = random_var_model(5, make_rng(123), seed=123)
    t = 1_000_000
    p = generate_var(model, t)
    coef, _ = lag_matrix(p, 1)
    pop = population_lag1_matrix(model)
    se = np.array([[lag1_asymptotic_std_error(model, i, j, t) for j in range(5)]
                   for i in range(5)])
    assert np.all(np.abs(coef - pop) < 5 * se)


def test_asymptotic_error_reduces_to_null_value():
    model = VarModel.white_noise(3)
    assert lag1_asymptotic_std_error(model, 0, 1, 10_000) == pytest.approx(0.01, rel=1e-12)


@pytest.mark.slow
def test_asymptotic_error_matches_monte_carlo():
    model = random_var_model(2, make_rng(77), max_radius=0.7)
    est = [normalized_correlation(generate_var(VarModel(model.phi, model.sigma, seed=s),
                                               2000), 0, 1, 1).normalized_value
           for s in range(400)]
    predicted = lag1_asymptotic_std_error(model, 0, 1, 2000)
    # sd of a sample sd from 400 draws is about 3.5%
    assert np.std(est) == pytest.approx(predicted, rel=0.12)


def test_paper_like_model_links():
    model = paper_like_model(coupling=0.05)
    assert model.instrument_ids == PAPER_INSTRUMENTS
    pos = {k: n for n, k in enumerate(PAPER_INSTRUMENTS)}
    assert model.phi[pos["EU"], pos["SI"]] == 0.05
    assert model.phi[pos["SI"], pos["RI"]] == -0.05
    assert np.count_nonzero(model.phi) == 6


@pytest.mark.parametrize("family, param", [("pareto", 0.0), ("student_t", -1.0),
                                           ("cauchy", 1.0)])
def test_tail_model_validation(family, param):
    with pytest.raises(ValidationError):
        TailModel(family, param)


def test_tail_samples():
    pareto = generate_tail_sample(TailModel.pareto(-4.0, scale=0.01, seed=1), 10_000)
    assert np.all(np.abs(pareto) >= 0.01)
    assert abs(np.mean(pareto > 0) - 0.5) < 0.02
    # P(|x| > 2 scale) = 2**-3
    assert abs(np.mean(np.abs(pareto) > 0.02) - 0.125) < 0.01
    t = generate_tail_sample(TailModel("student_t", 4.0, seed=1), 100_000)
    assert abs(t.var() - 2.0) < 0.2
    assert TailModel("student_t", 4.0).density_exponent == -5.0
    assert np.array_equal(t, generate_tail_sample(TailModel("student_t", 4.0, seed=1), 100_000))
    with pytest.raises(ValidationError):
        generate_tail_sample(TailModel("gaussian"), 50)


def test_bars_reproduce_scaled_returns():
    p = generate_var(VarModel.white_noise(2, seed=2, instrument_ids=("A", "B")), 300)
    bars, calendar = panel_to_bars(p, return_scale=0.01, roll_every=100)
    closes = np.array([b.close for b in bars if b.instrument_id == "A"])
    contracts = [b.contract_id for b in bars if b.instrument_id == "A"]
    r = np.diff(np.log(closes))
    skip = set(rollover_rows(300, 100).tolist())
    keep = [k for k in range(300) if k not in skip]
    np.testing.assert_allclose(r[keep], 0.01 * p.returns[keep, 0], atol=1e-12)
    assert len(calendar) == 2 * 3 and len(set(contracts)) == 4
    for k in skip:
        assert contracts[k] != contracts[k + 1]
