import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kenvreg.linalg import (
    CovEstimates,
    EnvelopeBasis,
    NotPositiveDefinite,
    SpectralGram,
    canonical_signs,
    complement,
    haar_orthogonal,
    logdet_psd,
    orthonormalize,
    projection_distance,
    psd_inverse,
    solve_regularized,
)
from oracles import random_spd


def test_basis_validation():
    EnvelopeBasis.identity(3)
    with pytest.raises(ValueError):
        EnvelopeBasis(np.array([[1.0], [1.0]]), np.array([[1.0], [-1.0]]))
    with pytest.raises(ValueError):
        EnvelopeBasis(np.eye(3)[:, :1], np.eye(3)[:, 1:2])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_complement_is_orthonormal_completion(r, seed):
    rng = np.random.default_rng(seed)
    u = int(rng.integers(1, r + 1))
    G = orthonormalize(rng.standard_normal((r, u))).G
    basis = EnvelopeBasis.from_columns(G)
    full = np.hstack([basis.G, basis.G0])
    np.testing.assert_allclose(full.T @ full, np.eye(r), atol=1e-12)
    assert complement(G).shape == (r, r - u)


def test_orthonormalize_rejects_rank_deficient():
    with pytest.raises(ValueError):
        orthonormalize(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


def test_canonical_signs():
    M = canonical_signs(np.array([[0.0, -1.0], [-2.0, 3.0]]))
    assert M[1, 0] == 2.0 and M[0, 1] == 1.0


def test_projection_distance_rotation_invariant():
    rng = np.random.default_rng(1)
    G = orthonormalize(rng.standard_normal((5, 2))).G
    O = haar_orthogonal(2, rng)
    assert projection_distance(G, G @ O) < 1e-12
    assert projection_distance(G, complement(G)[:, :2]) == pytest.approx(2.0)


def test_haar_orthogonal_properties():
    rng = np.random.default_rng(2)
    draws = np.array([haar_orthogonal(3, rng) for _ in range(4000)])
    for V in draws[:5]:
        np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)
    # Haar: each entry has mean 0 and second moment 1/r
    assert abs(draws[:, 0, 0].mean()) < 0.03
    assert abs((draws[:, 0, 0] ** 2).mean() - 1 / 3) < 0.02
    assert np.array_equal(haar_orthogonal(4, 7), haar_orthogonal(4, 7))


def test_logdet_and_failures():
    rng = np.random.default_rng(3)
    S = random_spd(4, rng)
    assert logdet_psd(S) == pytest.approx(np.linalg.slogdet(S)[1], rel=1e-12)
    assert logdet_psd(np.zeros((0, 0))) == 0.0
    with pytest.raises(NotPositiveDefinite):
        logdet_psd(np.diag([1.0, -1.0]))
    assert np.isfinite(logdet_psd(np.zeros((2, 2)), jitter=1e-3))


def test_regularized_solves_agree():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 2))
    K = X @ X.T
    B = rng.standard_normal((30, 3))
    want = np.linalg.solve(K + 0.3 * np.eye(30), B)
    np.testing.assert_allclose(solve_regularized(K, 0.3, B), want, rtol=1e-9, atol=1e-10)
    sg = SpectralGram(K)
    np.testing.assert_allclose(sg.solve(0.3, B), want, rtol=1e-8, atol=1e-9)
    M = K @ np.linalg.inv(K + 0.3 * np.eye(30))
    assert sg.shrinkage_trace(0.3) == pytest.approx(np.trace(M @ M), rel=1e-9)
    with pytest.raises(ValueError):
        solve_regularized(K, 0.0, B)


def test_psd_inverse_jitter_only_when_needed():
    S = np.diag([2.0, 4.0])
    inv, jitter = psd_inverse(S)
    assert jitter == 0.0
    np.testing.assert_allclose(inv, np.diag([0.5, 0.25]))
    inv, jitter = psd_inverse(np.diag([1.0, 0.0]))
    assert jitter > 0 and np.all(np.isfinite(inv))


def test_cov_estimates_compose():
    rng = np.random.default_rng(5)
    basis = orthonormalize(rng.standard_normal((4, 2)))
    S_Y, S_YK = random_spd(4, rng), random_spd(4, rng)
    cov = CovEstimates.from_moments(basis, S_YK, S_Y)
    np.testing.assert_allclose(cov.Sigma, basis.G @ cov.Omega @ basis.G.T + basis.G0 @ cov.Omega0 @ basis.G0.T)
    full = CovEstimates.from_moments(EnvelopeBasis.identity(4), S_YK, S_Y)
    np.testing.assert_allclose(full.Sigma, 0.5 * (S_YK + S_YK.T), atol=1e-14)
