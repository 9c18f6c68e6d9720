"""Synthetic envelope-structured regression data.

Responses follow ``y = Gamma g(x) + eps`` with
``eps ~ N(0, Gamma Omega Gamma^T + Gamma0 Omega0 Gamma0^T)`` where
``[Gamma, Gamma0]`` is a Haar-random orthogonal matrix split by an index set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import DataSet
from .linalg import haar_orthogonal

N_RFG_TERMS = 20


def model1_g(x):
    """Two-component mean function of the first single-predictor model."""
    x = np.asarray(x, dtype=float)
    g1 = 2 * np.sin(x) + x**2 / 5 - x / 2
    g2 = np.cos(x) - x**2 / 10 + x / 3
    return np.stack([g1, g2], axis=-1)


def model2_g(x):
    """One-component mean function of the second single-predictor model."""
    x = np.asarray(x, dtype=float)
    return (2 * np.sin(x) + x**2 / 5 - x / 2)[..., None]


def _scalar_predictor(fn):
    def g(X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("this mean function takes a single predictor")
            X = X[:, 0]
        return fn(X)

    g.__name__ = fn.__name__
    return g


@dataclass
class _Bump:
    coef: float
    idx: np.ndarray
    mu: np.ndarray
    V: np.ndarray


class RandomFunction:
    """Sum-of-Gaussian-bumps mean function (Friedman's random function generator).

    Component ``j`` is ``sum_l a_jl exp(-(x_S - mu)^T V (x_S - mu) / 2)`` over
    20 bumps, each acting on a random subset ``S`` of the predictors.
    """

    def __init__(self, components, p):
        self.components = components
        self.p = p

    @property
    def u(self):
        return len(self.components)

    def bumps(self, X):
        """Individual bump values, shape (m, u, 20)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.p:
            raise ValueError(f"expected {self.p} predictors, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.u, N_RFG_TERMS))
        for j, terms in enumerate(self.components):
            for l, t in enumerate(terms):
                D = X[:, t.idx] - t.mu
                out[:, j, l] = np.exp(-0.5 * np.einsum("ij,jk,ik->i", D, t.V, D))
        return out

    def __call__(self, X):
        coefs = np.array([[t.coef for t in terms] for terms in self.components])
        return np.einsum("mjl,jl->mj", self.bumps(X), coefs)

    def to_dict(self):
        return {
            "p": self.p,
            "components": [
                [{"coef": t.coef, "idx": t.idx.tolist(), "mu": t.mu.tolist(), "V": t.V.tolist()} for t in terms]
                for terms in self.components
            ],
        }


def rfg_build(p, u, seed=None) -> RandomFunction:
    """Draw a random u-component mean function of p predictors."""
    if p < 1 or u < 1:
        raise ValueError("p and u must be positive")
    rng = np.random.default_rng(seed)
    components = []
    for _ in range(u):
        terms = []
        for _ in range(N_RFG_TERMS):
            # Exp(0.5) read as rate 0.5, i.e. mean 2
            size = min(int(np.floor(1.5 + rng.exponential(scale=2.0))), p)
            idx = np.sort(rng.choice(p, size=size, replace=False))
            coef = float(rng.uniform(-10, 10))
            mu = rng.standard_normal(size)
            U = haar_orthogonal(size, rng)
            d = rng.uniform(0.1, 2.0, size) ** 2
            terms.append(_Bump(coef, idx, mu, (U * d) @ U.T))
        components.append(terms)
    return RandomFunction(components, p)


def gen_ar1_predictors(n, p, rho, seed=None):
    """Rows i.i.d. N(0, Sigma_x) with ``[Sigma_x]_ij = rho^|i-j|``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    scale = np.sqrt(1 - rho**2)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + scale * Z[:, j]
    return X


def gen_uniform_predictors(n, p, seed=None, low=-5.0, high=5.0):
    return np.random.default_rng(seed).uniform(low, high, (n, p))


def eval_metrics(f_hat, f_true) -> dict:
    """Squared and absolute errors summed over coordinates, averaged over rows."""
    f_hat = np.asarray(f_hat, dtype=float)
    f_true = np.asarray(f_true, dtype=float)
    if f_hat.shape != f_true.shape:
        raise ValueError(f"shape mismatch: {f_hat.shape} vs {f_true.shape}")
    m = f_hat.shape[0]
    d = (f_hat - f_true).reshape(m, -1)
    return {"mse": float(np.sum(d * d) / m), "mae": float(np.sum(np.abs(d)) / m)}


def _check_pd(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
        raise ValueError(f"{name} must be square and symmetric")
    if M.size and np.linalg.eigvalsh(M).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M


@dataclass
class SimSpec:
    """Full description of a synthetic regime.

    ``g`` is ``"model1"``, ``"model2"``, ``"rfg"`` (built from the
    replication's seed) or a callable mapping an (m, p) block to (m, u).
    ``P`` holds zero-based indices of the Haar columns spanning the envelope.
    """

    r: int
    u: int
    p: int
    n: int
    Omega: np.ndarray
    Omega0: np.ndarray
    g: str | Callable = "model1"
    predictor_law: str = "uniform"
    rho: float = 0.0
    P: tuple | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 1 <= self.u < self.r:
            raise ValueError("need 1 <= u < r")
        self.Omega = _check_pd(self.Omega, "Omega")
        self.Omega0 = _check_pd(self.Omega0, "Omega0")
        if self.Omega.shape != (self.u, self.u) or self.Omega0.shape != (self.r - self.u, self.r - self.u):
            raise ValueError("Omega/Omega0 shapes disagree with r and u")
        if self.P is None:
            self.P = tuple(range(self.u))
        P = tuple(int(i) for i in self.P)
        if len(P) != self.u or len(set(P)) != self.u or min(P) < 0 or max(P) >= self.r:
            raise ValueError(f"P must hold {self.u} distinct indices in [0, {self.r})")
        self.P = P
        if self.predictor_law not in ("uniform", "ar1"):
            raise ValueError("predictor_law must be 'uniform' or 'ar1'")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.g in ("model1", "model2") and self.p != 1:
            raise ValueError("model1/model2 take a single predictor")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")


@dataclass
class Truth:
    Gamma: np.ndarray
    Gamma0: np.ndarray
    Omega: np.ndarray
    Omega0: np.ndarray
    Sigma: np.ndarray
    g: Callable

    def f(self, X):
        return self.g(X) @ self.Gamma.T


@dataclass
class SimDraw:
    data: DataSet
    truth: Truth
    spec: SimSpec = field(repr=False, default=None)
    streams: dict = field(repr=False, default_factory=dict)


def _streams(seed):
    names = ("V", "eps", "X", "rfg", "test")
    if isinstance(seed, np.random.SeedSequence):
        # rebuild so repeated calls spawn the same children regardless of prior spawns
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    else:
        ss = np.random.SeedSequence(seed)
    return dict(zip(names, ss.spawn(len(names))))


def resolve_g(spec: SimSpec, rfg_seed=None):
    if callable(spec.g):
        return spec.g
    if spec.g == "model1":
        return _scalar_predictor(model1_g)
    if spec.g == "model2":
        return _scalar_predictor(model2_g)
    if spec.g == "rfg":
        return rfg_build(spec.p, spec.u, rfg_seed)
    raise ValueError(f"unknown mean function {spec.g!r}")


def envelope_structure(spec: SimSpec, rng):
    """Haar ``V`` split into ``(Gamma, Gamma0)`` and the implied ``Sigma``."""
    V = haar_orthogonal(spec.r, rng)
    rest = [i for i in range(spec.r) if i not in spec.P]
    Gamma, Gamma0 = V[:, list(spec.P)], V[:, rest]
    Sigma = Gamma @ spec.Omega @ Gamma.T + Gamma0 @ spec.Omega0 @ Gamma0.T
    return Gamma, Gamma0, 0.5 * (Sigma + Sigma.T)


def draw_predictors(spec: SimSpec, n, rng):
    if spec.predictor_law == "uniform":
        return gen_uniform_predictors(n, spec.p, rng)
    return gen_ar1_predictors(n, spec.p, spec.rho, rng)


def draw_errors(Sigma, n, rng):
    """N(0, Sigma) rows via the symmetric square root of Sigma."""
    vals, vecs = np.linalg.eigh(Sigma)
    root = (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T
    return np.random.default_rng(rng).standard_normal((n, Sigma.shape[0])) @ root


def draw_responses(truth: Truth, X, rng):
    return truth.f(X) + draw_errors(truth.Sigma, X.shape[0], rng)


def gen_envelope_data(spec: SimSpec) -> SimDraw:
    """One replication: independent seed substreams drive V, eps, X and the RFG."""
    streams = _streams(spec.seed)
    g = resolve_g(spec, streams["rfg"])
    Gamma, Gamma0, Sigma = envelope_structure(spec, np.random.default_rng(streams["V"]))
    truth = Truth(Gamma, Gamma0, spec.Omega, spec.Omega0, Sigma, g)
    X = draw_predictors(spec, spec.n, np.random.default_rng(streams["X"]))
    Y = draw_responses(truth, X, np.random.default_rng(streams["eps"]))
    return SimDraw(DataSet(Y, X), truth, spec, streams)


def draw_test_predictors(draw: SimDraw, n_test):
    """Fresh predictors from the replication's dedicated test substream."""
    return draw_predictors(draw.spec, n_test, np.random.default_rng(draw.streams["test"]))


MODEL2_OMEGA0 = np.diag([5.0, 2.0, 1.0])


def model1_spec(n, seed=None) -> SimSpec:
    return SimSpec(3, 2, 1, n, np.diag([4.0, 2.0]), np.array([[5.0]]), "model1", seed=seed)


def model2_spec(n, seed=None) -> SimSpec:
    return SimSpec(4, 1, 1, n, np.array([[4.0]]), MODEL2_OMEGA0, "model2", seed=seed)


def rfg_spec(n, p, rho=0.0, seed=None) -> SimSpec:
    return SimSpec(4, 1, p, n, np.array([[4.0]]), MODEL2_OMEGA0, "rfg", "ar1", rho, seed=seed)


def scenario_spec(name, n, p=10, rho=0.0, seed=None) -> SimSpec:
    if name == "model1":
        return model1_spec(n, seed)
    if name == "model2":
        return model2_spec(n, seed)
    if name == "rfg":
        return rfg_spec(n, p, rho, seed)
    raise ValueError(f"unknown scenario {name!r}")


def truth_to_dict(draw: SimDraw) -> dict:
    t = draw.truth
    spec = draw.spec
    d = {
        "Gamma": t.Gamma.tolist(),
        "Gamma0": t.Gamma0.tolist(),
        "Omega": np.asarray(t.Omega).tolist(),
        "Omega0": np.asarray(t.Omega0).tolist(),
        "Sigma": t.Sigma.tolist(),
        "f_at_X": t.f(draw.data.X).tolist(),
    }
    if spec is not None:
        d["spec"] = {
            "r": spec.r, "u": spec.u, "p": spec.p, "n": spec.n,
            "g": spec.g if isinstance(spec.g, str) else getattr(spec.g, "__name__", "custom"),
            "predictor_law": spec.predictor_law, "rho": spec.rho, "P": list(spec.P),
            "seed": spec.seed if spec.seed is None or isinstance(spec.seed, int) else str(spec.seed),
        }
    if isinstance(t.g, RandomFunction):
        d["rfg"] = t.g.to_dict()
    return d
