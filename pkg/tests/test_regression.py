import numpy as np
import pytest

from stratamatch.errors import EmptyInput, InsufficientDegreesOfFreedom
from stratamatch.regression import adjusted_r2, feature_weights, ols_fit, std_dev

from conftest import control_only


def test_ols_known_line():
    # x = (0, 1, 2), y = (0, 1, 1): slope 1/2, intercept 1/6, R^2 = 3/4
    fit = ols_fit(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 1.0, 1.0]))
    assert fit.coefficients[0] == pytest.approx(0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(1.0 / 6.0, abs=1e-12)
    assert fit.r2 == pytest.approx(0.75, abs=1e-12)
    assert fit.n_obs == 3
    assert not fit.rank_deficient


def test_ols_exact_fit_r2_one():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    fit = ols_fit(x, 2.0 * x[:, 0] + 3.0)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-10)
    assert fit.intercept == pytest.approx(3.0, abs=1e-10)


def test_ols_constant_outcome():
    fit = ols_fit(np.array([[0.0], [1.0], [2.0]]), np.array([5.0, 5.0, 5.0]))
    # zero total variation counts as perfectly explained
    assert fit.r2 == 1.0


def test_ols_residual_orthogonality():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(80, 4))
    y = x @ np.array([1.0, -2.0, 0.5, 0.0]) + rng.normal(size=80)
    fit = ols_fit(x, y)
    resid = y - fit.predict(x)
    assert abs(resid.sum()) < 1e-8
    for j in range(4):
        assert abs(resid @ x[:, j]) < 1e-8


def test_ols_rank_deficient_flagged():
    x = np.column_stack([np.arange(6.0), 2.0 * np.arange(6.0)])
    fit = ols_fit(x, np.arange(6.0))
    assert fit.rank_deficient


def test_ols_r2_affine_invariance():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(50, 2))
    y = x @ np.array([1.0, 2.0]) + rng.normal(size=50)
    r2 = ols_fit(x, y).r2
    r2_scaled = ols_fit(3.0 * x + 7.0, y).r2
    assert r2 == pytest.approx(r2_scaled, abs=1e-10)


def test_predict_matches_manual():
    fit = ols_fit(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 1.0, 1.0]))
    x_new = np.array([[4.0]])
    assert fit.predict(x_new)[0] == pytest.approx(fit.intercept + 0.5 * 4.0, abs=1e-12)


def test_adjusted_r2_known_value():
    # 1 - (1 - 0.9) * 29 / 27
    assert adjusted_r2(0.9, 30, 2) == pytest.approx(0.8925925925925926, abs=1e-12)


def test_adjusted_r2_below_r2():
    assert adjusted_r2(0.9, 30, 2) < 0.9


def test_adjusted_r2_needs_dof():
    with pytest.raises(InsufficientDegreesOfFreedom):
        adjusted_r2(0.9, 3, 2)


def test_ols_small_n_has_no_adjusted():
    fit = ols_fit(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
    assert fit.r2_adj is None


def test_std_dev_population():
    assert std_dev(np.array([1.0, 2.0, 3.0, 4.0])) == pytest.approx(np.sqrt(1.25), abs=1e-15)


def test_std_dev_empty():
    with pytest.raises(EmptyInput):
        std_dev(np.array([]))


def test_feature_weights_are_abs_coefficients():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=(200, 3))
    y = x @ np.array([2.0, -3.0, 0.0]) + rng.normal(0, 0.01, 200)
    d = control_only(x, y)
    w = feature_weights(d)
    assert w.shape == (3,)
    assert np.all(w >= 0)
    assert w[1] > w[0] > w[2]
    assert w[0] == pytest.approx(2.0, abs=0.05)
    assert w[1] == pytest.approx(3.0, abs=0.05)


def test_adjusted_r2_perfect_fit_is_fixed_point():
    assert adjusted_r2(1.0, 30, 2) == 1.0
    assert adjusted_r2(1.0, 5, 1) == 1.0


def test_std_dev_known_values():
    assert std_dev(np.array([5.0, 5.0, 5.0])) == 0.0
    assert std_dev(np.array([0.0, 0.0, 10.0, 10.0])) == 5.0


def test_feature_weights_constant_outcome_all_zero():
    rng = np.random.default_rng(6)
    d = control_only(rng.uniform(size=(50, 4)), np.full(50, 2.5))
    np.testing.assert_allclose(feature_weights(d), np.zeros(4), atol=1e-10)


def test_feature_weights_pick_up_benchmark_signal():
    # average over generations: the linear, interaction, and jump terms
    # all leave a clearly positive slope on their feature
    from stratamatch.bench import generate_hyb20var

    w_sum = np.zeros(20)
    reps = 10
    for s in range(reps):
        d = generate_hyb20var(n_treated=50, n_control=1950, seed=s)
        w_sum += feature_weights(d)
    w = w_sum / reps
    names = ["x1", "x2", "x4", "x6", "x7"]
    floors = [0.3, 0.15, 2.0, 0.3, 0.05]
    for name, floor in zip(names, floors):
        assert w[int(name[1:]) - 1] > floor, name
