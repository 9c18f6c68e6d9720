"""Kernel evaluation, Gram matrices and cross-kernel rows.

All pairwise values go through :func:`kernel_matrix`, so a Gram matrix row
and a prediction-time kernel row are produced by the same arithmetic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist, pdist


class KernelFamily(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


PARAMETER_FREE = (KernelFamily.EXPONENTIAL, KernelFamily.LINEAR)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its single hyperparameter.

    ``param`` is the bandwidth for Gaussian/Laplacian kernels and the
    (integer) degree for the polynomial kernel. It is ignored for the
    linear and exponential kernels.
    """

    family: KernelFamily
    param: float | None = None

    def __post_init__(self):
        family = KernelFamily(self.family)
        object.__setattr__(self, "family", family)
        if family in (KernelFamily.GAUSSIAN, KernelFamily.LAPLACIAN):
            if self.param is None or not np.isfinite(self.param) or self.param <= 0:
                raise ValueError(f"{family.value} kernel needs a positive bandwidth, got {self.param!r}")
            object.__setattr__(self, "param", float(self.param))
        elif family is KernelFamily.POLYNOMIAL:
            if self.param is None or int(self.param) != self.param or self.param < 1:
                raise ValueError(f"polynomial degree must be a positive integer, got {self.param!r}")
            object.__setattr__(self, "param", int(self.param))
        else:
            object.__setattr__(self, "param", None)

    @classmethod
    def gaussian(cls, sigma):
        return cls(KernelFamily.GAUSSIAN, sigma)

    @classmethod
    def laplacian(cls, sigma):
        return cls(KernelFamily.LAPLACIAN, sigma)

    @classmethod
    def polynomial(cls, degree):
        return cls(KernelFamily.POLYNOMIAL, degree)

    @classmethod
    def exponential(cls):
        return cls(KernelFamily.EXPONENTIAL)

    @classmethod
    def linear(cls):
        return cls(KernelFamily.LINEAR)

    def to_dict(self):
        return {"family": self.family.value, "param": self.param}

    @classmethod
    def from_dict(cls, d):
        return cls(KernelFamily(d["family"]), d.get("param"))


def _as_block(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D block, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def eval_kernel(spec: KernelSpec, x, x_prime) -> float:
    """Evaluate ``K(x, x')`` for two p-vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.ndim != 1 or x.shape != x_prime.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_prime))):
        raise ValueError("non-finite input coordinates")
    fam = spec.family
    if fam is KernelFamily.GAUSSIAN:
        d = x - x_prime
        return float(np.exp(-np.sum(d * d) / spec.param**2))
    if fam is KernelFamily.LAPLACIAN:
        d = x - x_prime
        return float(np.exp(-np.sqrt(np.sum(d * d)) / spec.param))
    dot = float(np.sum(x * x_prime))
    if fam is KernelFamily.POLYNOMIAL:
        return (dot + 1.0) ** spec.param
    if fam is KernelFamily.EXPONENTIAL:
        return float(np.exp(dot))
    return dot


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Cross-kernel block with entry ``(i, j) = K(a_i, b_j)``."""
    A = _as_block(A, "A")
    B = _as_block(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} predictors")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    fam = spec.family
    if fam is KernelFamily.GAUSSIAN:
        return np.exp(-cdist(A, B, "sqeuclidean") / spec.param**2)
    if fam is KernelFamily.LAPLACIAN:
        return np.exp(-cdist(A, B, "euclidean") / spec.param)
    dots = A @ B.T
    if fam is KernelFamily.POLYNOMIAL:
        return (dots + 1.0) ** spec.param
    if fam is KernelFamily.EXPONENTIAL:
        return np.exp(dots)
    return dots


def fingerprint(X) -> str:
    X = np.ascontiguousarray(X, dtype=float)
    h = hashlib.sha1(str(X.shape).encode())
    h.update(X.tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    kernel: KernelSpec
    fingerprint: str = field(default="")

    @property
    def n(self):
        return self.values.shape[0]


def gram(spec: KernelSpec, X) -> GramMatrix:
    """Gram matrix over the rows of ``X``.

    The upper triangle is evaluated and mirrored, so the result is
    bit-exactly symmetric.
    """
    X = _as_block(X)
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    K = kernel_matrix(spec, X, X)
    K = np.triu(K) + np.triu(K, 1).T
    if not np.all(np.isfinite(K)):
        raise ValueError("Gram matrix has non-finite entries")
    K.setflags(write=False)
    return GramMatrix(K, spec, fingerprint(X))


def kernel_row(spec: KernelSpec, X_train, x_new) -> np.ndarray:
    """``[K(x_new, x_1), ..., K(x_new, x_n)]`` as a length-n vector."""
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    if x_new.ndim != 1:
        raise ValueError("x_new must be a single p-vector")
    return kernel_matrix(spec, x_new[None, :], X_train)[0]


def median_heuristic_bandwidth(X) -> float:
    """Median pairwise Euclidean distance over all pairs ``i < j``."""
    X = _as_block(X)
    if X.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    med = float(np.median(pdist(X)))
    if med <= 0:
        raise ValueError("median pairwise distance is zero; cannot set a bandwidth")
    return med


def default_sigma_grid(X, factors=(0.25, 0.5, 1.0, 2.0, 4.0)):
    med = median_heuristic_bandwidth(X)
    return [med * f for f in factors]
