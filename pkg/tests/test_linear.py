import numpy as np
import pytest

from core.errors import ShapeMismatchError, SingularSystemError
from hashfn.linear import (INCREMENTAL_VARIANTS, LinearHashFunction, apply, fit_base, fit_incremental,
                           ridge_objective)


def ridge_gradient(x, codes, w, lam, gamma=0.0, w_old=None, variant=0):
    grad = 2 * x.T @ (x @ w - codes) + 2 * lam * w
    if variant in (1, 3):
        grad += 2 * gamma * (w - w_old)
    if variant in (2, 3):
        grad += 2 * gamma * x.T @ x @ (w - w_old)
    return grad


def gradient_descent(x, codes, lam, gamma=0.0, w_old=None, variant=0, tol=1e-11):
    """Independent solver: fixed-step descent on the same objective."""
    d = x.shape[1]
    hessian = 2 * (x.T @ x + lam * np.eye(d))
    if variant in (1, 3):
        hessian += 2 * gamma * np.eye(d)
    if variant in (2, 3):
        hessian += 2 * gamma * x.T @ x
    step = 1.0 / np.linalg.eigvalsh(hessian).max()
    w = np.zeros((d, codes.shape[1]))
    for _ in range(200000):
        grad = ridge_gradient(x, codes, w, lam, gamma, w_old, variant)
        if np.linalg.norm(grad) < tol:
            break
        w = w - step * grad
    return w


def random_problem(seed, n=30, d=5, q=4):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    codes = rng.uniform(-1, 1, (n, q))
    old = LinearHashFunction(rng.standard_normal((d, q)), 1.0)
    return x, codes, old


# --- fit_base ---

def test_fit_base_identity_features_returns_codes():
    codes = np.array([[0.5, -1.0], [0.25, 0.0], [-0.75, 1.0]])
    f = fit_base(np.eye(3), codes, 0.0)
    np.testing.assert_allclose(f.weights, codes, atol=1e-14)


def test_fit_base_zero_codes_gives_zero_weights(rng):
    f = fit_base(rng.standard_normal((10, 3)), np.zeros((10, 2)), 0.5)
    np.testing.assert_array_equal(f.weights, 0.0)


def test_fit_base_is_stationary(rng):
    x, a = rng.standard_normal((20, 4)), rng.uniform(-1, 1, (20, 1))
    f = fit_base(x, a, 0.1)
    assert np.linalg.norm(ridge_gradient(x, a, f.weights, 0.1)) < 1e-8 * (1 + np.linalg.norm(a))


def test_fit_base_singular_without_ridge_term(rng):
    x = rng.standard_normal((10, 3))
    x = np.hstack([x, x[:, :1]])
    with pytest.raises(SingularSystemError):
        fit_base(x, rng.uniform(-1, 1, (10, 2)), 0.0)


def test_fit_base_rejects_row_mismatch():
    with pytest.raises(ShapeMismatchError):
        fit_base(np.ones((4, 2)), np.ones((3, 2)), 1.0)


def test_fit_is_independent_per_bit(rng):
    x, codes = rng.standard_normal((25, 6)), rng.uniform(-1, 1, (25, 5))
    joint = fit_base(x, codes, 0.3).weights
    for l in range(codes.shape[1]):
        single = fit_base(x, codes[:, l:l + 1], 0.3).weights
        np.testing.assert_allclose(joint[:, l:l + 1], single, rtol=1e-10, atol=1e-12)


# --- fit_incremental ---

@pytest.mark.parametrize("variant", INCREMENTAL_VARIANTS)
def test_zero_gamma_collapses_to_base_fit(variant):
    x, codes, old = random_problem(0)
    base = fit_base(x, codes, 0.7).weights
    np.testing.assert_allclose(fit_incremental(x, codes, old, 0.7, 0.0, variant).weights, base,
                               rtol=1e-12, atol=1e-12)


def test_large_gamma_pins_variant_one_to_previous_weights():
    x, codes, old = random_problem(1)
    f = fit_incremental(x, codes, old, 1.0, 1e8, 1)
    assert np.linalg.norm(f.weights - old.weights) / np.linalg.norm(old.weights) < 1e-4


@pytest.mark.parametrize("variant", INCREMENTAL_VARIANTS)
def test_incremental_fit_is_stationary_under_finite_differences(variant):
    x, codes, old = random_problem(2)
    lam, gamma = 0.4, 0.9
    w = fit_incremental(x, codes, old, lam, gamma, variant).weights
    step = 1e-5
    numeric = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        plus, minus = w.copy(), w.copy()
        plus[idx] += step
        minus[idx] -= step
        numeric[idx] = (ridge_objective(x, codes, plus, lam, gamma, old.weights, variant)
                        - ridge_objective(x, codes, minus, lam, gamma, old.weights, variant)) / (2 * step)
    assert np.linalg.norm(numeric) < 1e-6 * (1 + np.linalg.norm(codes))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("variant", (0,) + INCREMENTAL_VARIANTS)
def test_closed_form_matches_iterative_solver(seed, variant):
    x, codes, old = random_problem(seed, n=30, d=4, q=2)
    rng = np.random.default_rng(100 + seed)
    lam, gamma = float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.1, 2.0))
    if variant == 0:
        w = fit_base(x, codes, lam).weights
        gamma = 0.0
    else:
        w = fit_incremental(x, codes, old, lam, gamma, variant).weights

    grad = ridge_gradient(x, codes, w, lam, gamma, old.weights, variant)
    assert np.linalg.norm(grad) < 1e-6 * (1 + np.linalg.norm(x.T @ codes))

    reference = gradient_descent(x, codes, lam, gamma, old.weights, variant)
    assert np.linalg.norm(w - reference) <= 1e-6 * np.linalg.norm(reference)


@pytest.mark.parametrize("variant", INCREMENTAL_VARIANTS)
def test_solution_approaches_base_fit_as_gamma_shrinks(variant):
    x, codes, old = random_problem(3)
    base = fit_base(x, codes, 0.5).weights
    gaps = [np.linalg.norm(fit_incremental(x, codes, old, 0.5, g, variant).weights - base)
            for g in (1.0, 1e-2, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_fit_incremental_rejects_bad_arguments():
    x, codes, old = random_problem(4)
    with pytest.raises(ValueError, match="variant"):
        fit_incremental(x, codes, old, 1.0, 1.0, 4)
    with pytest.raises(ValueError, match="gamma"):
        fit_incremental(x, codes, old, 1.0, -1.0, 1)
    with pytest.raises(ShapeMismatchError):
        fit_incremental(x[:, :3], codes, old, 1.0, 1.0, 1)


def test_fitted_function_records_hyperparameters():
    x, codes, old = random_problem(5)
    f = fit_incremental(x, codes, old, 0.25, 3.0, 2)
    assert (f.reg_lambda, f.variant_gamma, f.variant) == (0.25, 3.0, 2)


# --- apply ---

def test_apply_passthrough_signs():
    f = LinearHashFunction(np.eye(2), 1.0)
    np.testing.assert_array_equal(apply(f, [[0.5, -2.0]]), [[1, -1]])


def test_apply_zero_weights_gives_all_ones():
    f = LinearHashFunction(np.zeros((3, 4)), 1.0)
    np.testing.assert_array_equal(apply(f, np.ones((2, 3))), np.ones((2, 4)))


def test_apply_matches_naive_loops(rng):
    w, x = rng.standard_normal((4, 3)), rng.standard_normal((5, 4))
    expected = np.empty((5, 3))
    for i in range(5):
        for l in range(3):
            value = sum(x[i, k] * w[k, l] for k in range(4))
            expected[i, l] = 1 if value >= 0 else -1
    np.testing.assert_array_equal(apply(LinearHashFunction(w, 1.0), x), expected)


def test_apply_rejects_wrong_dimension():
    with pytest.raises(ShapeMismatchError):
        apply(LinearHashFunction(np.eye(3), 1.0), np.ones((2, 2)))


def test_save_and_load(tmp_path, rng):
    f = LinearHashFunction(rng.standard_normal((3, 2)), 0.1, 2.5, 3)
    f.save(tmp_path, "fx")
    loaded = LinearHashFunction.load(tmp_path, "fx")
    np.testing.assert_allclose(loaded.weights, f.weights, rtol=1e-12)
    assert (loaded.reg_lambda, loaded.variant_gamma, loaded.variant) == (0.1, 2.5, 3)
