import warnings

import numpy as np
import pytest

from helpers import check_projection_identity
from kenvreg.data import DataSet
from kenvreg.kenv import (
    FORMAT_VERSION,
    KenvModel,
    LambdaPath,
    default_lambda_grid,
    envelope_penalty,
    envelope_penalty_by_rows,
    kenv_fit,
    kenv_fit_fixed_basis,
    kenv_path,
    kenv_predict,
    krr_as_kenv,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from kenvreg.kernels import KernelSpec, gram, kernel_matrix
from kenvreg.krr import krr_fit, krr_predict
from kenvreg.linalg import EnvelopeBasis, haar_orthogonal, orthonormalize, projection_distance
from kenvreg.simulate import gen_envelope_data, model1_spec, model2_spec
from oracles import generic_subspace_oracle, kernel_loop, krr_predict_oracle, moments_oracle, penalized_coef_oracle

GAUSS = KernelSpec.gaussian(2.0)


def _toy(n=30, r=3, p=1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, (n, p))
    Y = np.column_stack([np.sin(X[:, 0]) * (j + 1) for j in range(r)]) + rng.standard_normal((n, r))
    return DataSet(Y, X)


# --- KRR -------------------------------------------------------------------


def test_krr_matches_dense_oracle():
    data = _toy(5)
    model = krr_fit(data, GAUSS, 0.3)
    K = kernel_loop("gaussian", 2.0, data.X, data.X)
    Yc = data.Y - data.Y.mean(axis=0)
    np.testing.assert_allclose(model.dual_coefs, np.linalg.solve(K + 0.3 * np.eye(5), Yc), atol=1e-10)
    # dual-coefficient optimality
    resid = (K + 0.3 * np.eye(5)) @ model.dual_coefs - Yc
    assert np.linalg.norm(resid) <= 1e-9 * np.linalg.norm(Yc)


def test_krr_prediction_matches_loop_oracle():
    data = _toy(12, seed=1)
    model = krr_fit(data, GAUSS, 0.5)
    Xq = np.random.default_rng(2).uniform(-3, 3, (4, 1))
    want = krr_predict_oracle(kernel_loop("gaussian", 2.0, data.X, data.X),
                              kernel_loop("gaussian", 2.0, Xq, data.X), data.Y, 0.5)
    np.testing.assert_allclose(krr_predict(model, Xq), want, atol=1e-10)


def test_krr_limits():
    data = _toy(10, seed=3)
    heavy = krr_fit(data, GAUSS, 1e12)
    np.testing.assert_allclose(krr_predict(heavy, data.X), np.tile(data.Y.mean(axis=0), (10, 1)), atol=1e-3)
    sharp = krr_fit(data, KernelSpec.gaussian(0.05), 1e-10)
    np.testing.assert_allclose(krr_predict(sharp, data.X), data.Y, atol=1e-4)
    assert krr_predict(heavy, np.empty((0, 1))).shape == (0, 3)


def test_linear_kernel_krr_is_ridge():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((40, 3))
    Bcoef = rng.standard_normal((3, 2))
    Y = X @ Bcoef
    model = krr_fit(DataSet(Y, X), KernelSpec.linear(), 1e-8, center=False)
    primal = np.linalg.solve(X.T @ X + 1e-8 * np.eye(3), X.T @ Y)
    np.testing.assert_allclose(krr_predict(model, X), X @ primal, atol=1e-6)


def test_krr_input_checks():
    data = _toy(6)
    with pytest.raises(ValueError):
        krr_fit(data, GAUSS, 0.0)
    with pytest.raises(ValueError):
        krr_predict(krr_fit(data, GAUSS, 1.0), np.ones((2, 2)))
    with pytest.raises(ValueError):
        krr_fit(data.subset([0]), GAUSS, 1.0)


# --- KENV ------------------------------------------------------------------


def test_full_dimension_equals_krr():
    data = _toy(25, seed=5)
    model = kenv_fit(data, GAUSS, 3, 0.4)
    np.testing.assert_allclose(model.predict(data.X), krr_predict(krr_fit(data, GAUSS, 0.4), data.X), atol=1e-8)
    _, S_YK = moments_oracle(data.Y, gram(GAUSS, data.X).values, 0.4)
    np.testing.assert_allclose(model.cov.Sigma, S_YK, atol=1e-8)
    check_projection_identity(model, data)


@pytest.mark.parametrize("u", [1, 2])
def test_dual_coefficients_and_projection(u):
    data = _toy(25, seed=6)
    model = kenv_fit(data, GAUSS, u, 0.4)
    krr = krr_fit(data, GAUSS, 0.4)
    np.testing.assert_allclose(model.dual_coefs, model.basis.G.T @ krr.dual_coefs.T, atol=1e-10)
    Xq = np.linspace(-4, 4, 9)[:, None]
    check_projection_identity(model, data, Xq)
    assert model.predict(np.empty((0, 1))).shape == (0, 3)


def test_prediction_matches_explicit_formula():
    data = _toy(15, seed=7)
    model = kenv_fit(data, GAUSS, 1, 0.2)
    Xq = np.random.default_rng(8).uniform(-3, 3, (3, 1))
    K = kernel_loop("gaussian", 2.0, data.X, data.X)
    Yc = data.Y - data.Y.mean(axis=0)
    G = model.basis.G
    A = G.T @ Yc.T @ np.linalg.inv(K + 0.2 * np.eye(15))
    want = (G @ A @ kernel_loop("gaussian", 2.0, Xq, data.X).T).T + data.Y.mean(axis=0)
    np.testing.assert_allclose(kenv_predict(model, Xq), want, atol=1e-10)


def test_covariance_estimates():
    data = _toy(30, seed=9)
    model = kenv_fit(data, GAUSS, 1, 0.5)
    S_Y, S_YK = moments_oracle(data.Y, gram(GAUSS, data.X).values, 0.5)
    G, G0 = model.basis.G, model.basis.G0
    np.testing.assert_allclose(model.cov.Omega, G.T @ S_YK @ G, atol=1e-10)
    np.testing.assert_allclose(model.cov.Omega0, G0.T @ S_Y @ G0, atol=1e-10)
    np.testing.assert_allclose(model.cov.Sigma, G @ model.cov.Omega @ G.T + G0 @ model.cov.Omega0 @ G0.T, atol=1e-12)


def test_rotation_invariance_of_fixed_basis_fit():
    data = _toy(20, seed=10)
    rng = np.random.default_rng(11)
    basis = orthonormalize(rng.standard_normal((3, 2)))
    O = haar_orthogonal(2, rng)
    rotated = EnvelopeBasis(basis.G @ O, basis.G0)
    a = kenv_fit_fixed_basis(data, GAUSS, basis, 0.3)
    b = kenv_fit_fixed_basis(data, GAUSS, rotated, 0.3)
    np.testing.assert_allclose(a.predict(data.X), b.predict(data.X), atol=1e-9)
    check_projection_identity(a, data)


def test_fixed_basis_examples():
    draw = gen_envelope_data(model1_spec(60, seed=12))
    data, truth = draw.data, draw.truth
    full = kenv_fit_fixed_basis(data, GAUSS, EnvelopeBasis.identity(3), 0.3)
    np.testing.assert_allclose(full.predict(data.X), krr_predict(krr_fit(data, GAUSS, 0.3), data.X), atol=1e-10)
    true = kenv_fit_fixed_basis(data, GAUSS, EnvelopeBasis(truth.Gamma, truth.Gamma0), 0.3)
    check_projection_identity(true, data, tol=1e-10)
    with pytest.raises(ValueError):
        kenv_fit_fixed_basis(data, GAUSS, EnvelopeBasis.identity(2), 0.3)


def test_immaterial_basis_fits_only_the_mean():
    draw = gen_envelope_data(model2_spec(400, seed=13))
    data, truth = draw.data, draw.truth
    model = kenv_fit_fixed_basis(data, GAUSS, EnvelopeBasis.from_columns(truth.Gamma0), 1.0)
    centered = model.predict(data.X) - model.y_mean
    signal = truth.f(data.X)
    # the immaterial directions carry pure noise, so the fitted variation is small next to the signal
    assert np.mean(np.sum(centered**2, axis=1)) < 0.1 * np.mean(np.sum((signal - signal.mean(0)) ** 2, axis=1))
    check_projection_identity(model, data)


def test_oracle_basis_beats_krr_in_sample():
    wins = 0
    for rep in range(100):
        draw = gen_envelope_data(model2_spec(400, seed=1000 + rep))
        data, truth = draw.data, draw.truth
        f_X = truth.f(data.X)
        kenv = kenv_fit_fixed_basis(data, GAUSS, EnvelopeBasis(truth.Gamma, truth.Gamma0), 0.5)
        krr = krr_fit(data, GAUSS, 0.5)
        wins += np.sum((kenv.predict(data.X) - f_X) ** 2) < np.sum((krr_predict(krr, data.X) - f_X) ** 2)
    assert wins >= 95


def test_linear_kernel_matches_generic_subspace_oracle():
    rng = np.random.default_rng(14)
    n, r, p, u = 200, 4, 3, 1
    V = haar_orthogonal(r, rng)
    Gamma, Gamma0 = V[:, :u], V[:, u:]
    X = rng.standard_normal((n, p))
    eta = rng.standard_normal((u, p)) * 2
    Sigma = Gamma @ Gamma.T + Gamma0 @ np.diag([4.0, 2.0, 1.0]) @ Gamma0.T
    Y = X @ eta.T @ Gamma.T + rng.multivariate_normal(np.zeros(r), Sigma, n)
    data = DataSet(Y, X)
    model = kenv_fit(data, KernelSpec.linear(), u, 1.0)
    S_Y, S_YK = moments_oracle(Y, X @ X.T, 1.0)
    G_oracle, _ = generic_subspace_oracle(S_Y, S_YK, u, starts=20)
    assert projection_distance(model.basis.G, G_oracle) < 1e-3
    check_projection_identity(model, data)


def test_coefficients_minimize_penalized_criterion():
    data = _toy(5, r=3, seed=15)
    model = kenv_fit(data, GAUSS, 2, 0.3)
    K = gram(GAUSS, data.X).values
    A = penalized_coef_oracle(data.Y - data.Y.mean(axis=0), K, model.basis.G, model.cov.Omega, 0.3)
    np.testing.assert_allclose(model.dual_coefs, A, atol=1e-6)


def test_representer_property():
    # with a linear kernel the coefficient function is W = A X; adding a direction
    # orthogonal to every training input leaves the fit unchanged and raises the penalty
    rng = np.random.default_rng(16)
    X = rng.standard_normal((2, 3))
    data = DataSet(rng.standard_normal((2, 2)), X)
    model = kenv_fit(data, KernelSpec.linear(), 1, 0.5)
    W = model.dual_coefs @ X
    v = np.cross(X[0], X[1])
    v /= np.linalg.norm(v)
    Z = model.basis.G.T @ (data.Y - model.y_mean).T
    Oi = np.linalg.inv(model.cov.Omega)

    def criterion(W):
        R = Z - W @ X.T
        return float(np.trace(R.T @ Oi @ R) + 0.5 * np.trace(W @ W.T @ Oi))

    for t in (1e-3, 0.1, 1.0):
        bumped = W + t * np.ones((1, 1)) * v[None, :]
        np.testing.assert_allclose(bumped @ X.T, W @ X.T, atol=1e-12)
        assert criterion(bumped) > criterion(W)
    # predictions see new inputs only through their kernel rows
    Xq = rng.standard_normal((4, 3))
    np.testing.assert_allclose(model.predict(Xq), kernel_matrix(KernelSpec.linear(), Xq, X) @ model.dual_coefs.T
                               @ model.basis.G.T + model.y_mean, atol=1e-12)


def test_penalty_two_ways():
    data = _toy(20, seed=17)
    for u in (1, 2, 3):
        model = kenv_fit(data, GAUSS, u, 0.3)
        assert envelope_penalty(model) == pytest.approx(envelope_penalty_by_rows(model), rel=1e-8)


def test_input_validation():
    data = _toy(10)
    for bad in ((0, 1.0), (4, 1.0), (1, 0.0)):
        with pytest.raises(ValueError):
            kenv_fit(data, GAUSS, *bad)
    with pytest.raises(ValueError):
        kenv_fit(data.subset([0]), GAUSS, 1, 1.0)
    with pytest.raises(ValueError):
        kenv_fit(data, GAUSS, 1, 1.0).predict(np.ones((2, 2)))


# --- lambda path -------------------------------------------------------------


def test_single_point_path_equals_fit():
    data = _toy(20, seed=18)
    path = kenv_path(data, GAUSS, 1, [0.5])
    fit = kenv_fit(data, GAUSS, 1, 0.5)
    np.testing.assert_array_equal(path.models[0].predict(data.X), fit.predict(data.X))


def test_path_contract():
    data = gen_envelope_data(model1_spec(80, seed=19)).data
    lams = default_lambda_grid(gram(GAUSS, data.X), 15)
    path = kenv_path(data, GAUSS, 2, lams)
    assert len({m.gram_fingerprint for m in path.models}) == 1
    for lam, m in zip(lams, path.models):
        cold = kenv_fit(data, GAUSS, 2, lam)
        assert m.objective_value <= cold.objective_value + 1e-9
        check_projection_identity(m, data)


def test_path_rejects_bad_grids():
    data = _toy(10)
    for bad in ([0.1, 0.5], [0.5, 0.5], [], [1.0, -1.0]):
        with pytest.raises(ValueError):
            kenv_path(data, GAUSS, 1, bad)
    with pytest.raises(ValueError):
        LambdaPath(np.array([1.0, 2.0]), [])


def test_default_lambda_grid():
    K = np.diag([2.0, 4.0])
    grid = default_lambda_grid(K)
    assert len(grid) == 30 and grid[0] == pytest.approx(3.0) and grid[-1] == pytest.approx(3e-4)
    assert np.all(np.diff(grid) < 0)


# --- persistence -----------------------------------------------------------


def test_json_round_trip_is_exact(tmp_path):
    data = _toy(20, seed=20)
    model = kenv_fit(data, KernelSpec.laplacian(1.5), 2, 0.25)
    path = tmp_path / "m.json"
    save_model(model, path)
    loaded = load_model(path)
    Xq = np.linspace(-3, 3, 7)[:, None]
    assert np.array_equal(loaded.predict(Xq), model.predict(Xq))
    d = model_to_dict(model)
    assert d["version"] == FORMAT_VERSION
    for key in ("kernel", "lambda", "u", "y_mean", "basis", "dual_coefs", "X_train", "cov"):
        assert key in d
    with pytest.raises(ValueError):
        model_from_dict({**d, "version": 99})


def test_krr_as_kenv_is_tagged():
    data = _toy(15, seed=21)
    model = krr_as_kenv(data, GAUSS, 0.5)
    assert isinstance(model, KenvModel) and model.method == "krr" and model.u == 3
    np.testing.assert_allclose(model.predict(data.X), krr_predict(krr_fit(data, GAUSS, 0.5), data.X), atol=1e-10)


def test_no_spurious_convergence_warnings():
    data = _toy(30, seed=22)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kenv_fit(data, GAUSS, 1, 0.5)
