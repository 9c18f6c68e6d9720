"""Linear algebra used by the envelope estimator.

Semi-orthogonal bases and their complements, log-determinants, regularized
Gram solves and Haar-distributed orthogonal matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

ORTHO_TOL = 1e-8


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A matrix that must be positive definite failed to factor."""


def _values(K):
    return np.asarray(getattr(K, "values", K), dtype=float)


def canonical_signs(M):
    """Flip columns so the first non-negligible entry of each is positive."""
    M = np.array(M, dtype=float, copy=True)
    for j in range(M.shape[1]):
        col = M[:, j]
        scale = np.max(np.abs(col)) if col.size else 0.0
        if scale == 0:
            continue
        idx = np.flatnonzero(np.abs(col) > 1e-12 * scale)[0]
        if col[idx] < 0:
            M[:, j] = -col
    return M


@dataclass(frozen=True)
class EnvelopeBasis:
    """Semi-orthogonal basis ``G`` (r x u) and its complement ``G0`` (r x (r-u))."""

    G: np.ndarray
    G0: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        r = G.shape[0]
        G0 = np.asarray(self.G0, dtype=float).reshape(r, -1)
        u = G.shape[1]
        if not 1 <= u <= r or G0.shape[1] != r - u:
            raise ValueError(f"inconsistent basis shapes {G.shape} and {G0.shape}")
        full = np.hstack([G, G0])
        if np.max(np.abs(full.T @ full - np.eye(r))) > ORTHO_TOL:
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "G0", G0)

    @property
    def r(self):
        return self.G.shape[0]

    @property
    def u(self):
        return self.G.shape[1]

    @property
    def projection(self):
        return self.G @ self.G.T

    @classmethod
    def identity(cls, r):
        return cls(np.eye(r), np.zeros((r, 0)))

    @classmethod
    def from_columns(cls, G):
        """Wrap an already semi-orthogonal ``G`` and build its complement."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape[0] == 1 and G.shape[1] > 1:
            G = G.T
        return cls(G, complement(G))


def complement(G):
    """Orthonormal basis of the orthogonal complement of span(G)."""
    r, u = G.shape
    if u == r:
        return np.zeros((r, 0))
    Q, _ = np.linalg.qr(G, mode="complete")
    return canonical_signs(Q[:, u:])


def orthonormalize(B) -> EnvelopeBasis:
    """Orthonormal basis for span(B) plus its complement."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    r, u = B.shape
    if u > r or u < 1:
        raise ValueError(f"need 1 <= u <= r, got a {r}x{u} block")
    Q, R = np.linalg.qr(B, mode="complete")
    d = np.abs(np.diag(R))
    if d.min() <= 1e-12 * max(d.max(), 1e-300):
        raise ValueError("input block is rank deficient")
    return EnvelopeBasis(canonical_signs(Q[:, :u]), canonical_signs(Q[:, u:]))


def projection_distance(G1, G2) -> float:
    """Frobenius distance between the orthogonal projections onto two subspaces."""
    G1 = getattr(G1, "G", G1)
    G2 = getattr(G2, "G", G2)
    return float(np.linalg.norm(G1 @ G1.T - G2 @ G2.T))


def haar_orthogonal(r, rng=None) -> np.ndarray:
    """Haar-distributed r x r orthogonal matrix.

    QR of a standard normal block, with the columns of Q rescaled by the
    signs of diag(R) so the law is exactly Haar.
    """
    if r < 1:
        raise ValueError("dimension must be positive")
    rng = np.random.default_rng(rng)
    Z = rng.standard_normal((r, r))
    Q, R = np.linalg.qr(Z)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def logdet_psd(M, jitter=0.0) -> float:
    """log|M + jitter*I| from a Cholesky factor."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    if M.size == 0:
        return 0.0
    A = M + jitter * np.eye(M.shape[0]) if jitter else M
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    d = np.diag(L)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotPositiveDefinite("non-positive Cholesky pivot")
    return float(2.0 * np.sum(np.log(d)))


def solve_regularized(K, lam, B) -> np.ndarray:
    """``(K + lam*I)^{-1} B`` through a Cholesky factorization."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    K = _values(K)
    B = np.asarray(B, dtype=float)
    A = K + lam * np.eye(K.shape[0])
    try:
        c = sla.cho_factor(A, lower=True, check_finite=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefinite("K + lambda*I failed to factor") from exc
    return sla.cho_solve(c, B)


def psd_inverse(S, jitter_scale=1e-8):
    """Inverse of a symmetric PD matrix; jitter only if plain Cholesky fails.

    Returns ``(inverse, jitter_used)``.
    """
    S = np.asarray(S, dtype=float)
    r = S.shape[0]
    jitter = 0.0
    try:
        c = sla.cho_factor(S, lower=True)
    except sla.LinAlgError:
        jitter = jitter_scale * np.trace(S) / r
        try:
            c = sla.cho_factor(S + jitter * np.eye(r), lower=True)
        except sla.LinAlgError as exc:
            raise NotPositiveDefinite("matrix is not positive definite even after jitter") from exc
    inv = sla.cho_solve(c, np.eye(r))
    return 0.5 * (inv + inv.T), jitter


class SpectralGram:
    """Eigendecomposition of a Gram matrix, reused across a lambda path.

    With ``K = Q diag(gamma) Q^T``, ``(K + lam I)^{-1} B`` costs two matrix
    products per lambda instead of a fresh factorization.
    """

    def __init__(self, K):
        K = _values(K)
        gamma, Q = np.linalg.eigh(K)
        self.gamma = np.clip(gamma, 0.0, None)
        self.Q = Q
        self.n = K.shape[0]

    def solve(self, lam, B):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        B = np.asarray(B, dtype=float)
        QtB = self.Q.T @ B
        scale = 1.0 / (self.gamma + lam)
        return self.Q @ (QtB * scale.reshape((-1,) + (1,) * (QtB.ndim - 1)))

    def shrinkage_trace(self, lam):
        """``tr{K (K + lam I)^{-2} K}``."""
        return float(np.sum((self.gamma / (self.gamma + lam)) ** 2))


@dataclass(frozen=True)
class CovEstimates:
    """Material, immaterial and full response covariance estimates."""

    Omega: np.ndarray
    Omega0: np.ndarray
    Sigma: np.ndarray

    @classmethod
    def from_moments(cls, basis: EnvelopeBasis, S_YK, S_Y):
        G, G0 = basis.G, basis.G0
        Omega = G.T @ S_YK @ G
        Omega0 = G0.T @ S_Y @ G0
        Omega = 0.5 * (Omega + Omega.T)
        Omega0 = 0.5 * (Omega0 + Omega0.T)
        Sigma = G @ Omega @ G.T + G0 @ Omega0 @ G0.T
        return cls(Omega, Omega0, 0.5 * (Sigma + Sigma.T))
