"""Envelope subspace estimation on the Grassmannian.

The estimated envelope minimizes

    F(G) = log|G^T S_Y^{-1} G| + log|G^T S_{Y|K} G|

over semi-orthogonal r x u matrices G, where S_Y = Y^T Y / n and
S_{Y|K} = Y^T Y / n - Y^T K (K + lam I)^{-1} Y / n for centered Y.

The minimizer is built one direction at a time. With a partial basis and
an orthonormal basis ``C`` of its complement, the next direction is
``C w`` where the unit vector ``w`` minimizes

    phi(w) = log(w^T (C^T S_Y C)^{-1} w) + log(w^T C^T S_{Y|K} C w).

Each scalar problem is started from the best vector in an eigenvector
census and refined with majorize-minimize steps: since log is concave,
phi is majorized at ``w0`` by the quadratic ``w^T M(w0) w`` with
``M(w0) = A/(w0^T A w0) + B/(w0^T B w0)``, whose minimizer on the sphere is
the smallest eigenvector of ``M(w0)``. A short Riemannian gradient descent
on the full objective finishes the job.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    projection_distance,
    EnvelopeBasis,
    NotPositiveDefinite,
    SpectralGram,
    complement,
    orthonormalize,
    psd_inverse,
    solve_regularized,
)

DAMPING = 0.5
INNER_TOL = 1e-8
INNER_MAX_ITER = 200
TIE_TOL = 1e-12
# squared Riemannian gradient norm at which the polish stops
GRAD_TOL2 = 1e-14
# candidates closer than this polish into the same local minimum
SAME_SUBSPACE_TOL = 1e-6


@dataclass(frozen=True)
class EnvelopeObjectiveInputs:
    """Moment matrices defining the Grassmannian objective.

    ``A`` is the (possibly jittered) inverse of ``S_Y`` and ``B`` is
    ``S_{Y|K}``. ``S_Y`` is kept because the sequential scheme deflates it
    before inverting.
    """

    S_Y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    u: int
    jitter: float = 0.0

    @property
    def r(self):
        return self.S_Y.shape[0]

    def with_u(self, u):
        return EnvelopeObjectiveInputs(self.S_Y, self.A, self.B, u, self.jitter)


@dataclass(frozen=True)
class GrassmannSolution:
    basis: EnvelopeBasis
    objective_value: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, compare=False, repr=False)


def _symmetrize(M):
    return 0.5 * (M + M.T)


def moment_inputs(S_Y, S_YK, u) -> EnvelopeObjectiveInputs:
    """Objective inputs from precomputed ``S_Y`` and ``S_{Y|K}``."""
    S_Y = _symmetrize(np.asarray(S_Y, dtype=float))
    S_YK = _symmetrize(np.asarray(S_YK, dtype=float))
    r = S_Y.shape[0]
    if not 1 <= u <= r:
        raise ValueError(f"envelope dimension must satisfy 1 <= u <= r={r}, got {u}")
    A, jitter = psd_inverse(S_Y)
    if jitter:
        S_Y = S_Y + jitter * np.eye(r)
    return EnvelopeObjectiveInputs(S_Y, A, S_YK, int(u), jitter)


def conditional_moment(Y_c, H, lam):
    """``S_{Y|K}`` given ``H = (K + lam I)^{-1} Y_c``.

    Uses ``K H = Y_c - lam H``, so the difference of the two displayed
    terms is evaluated without cancellation.
    """
    n = Y_c.shape[0]
    return _symmetrize(lam * (Y_c.T @ H) / n)


def build_moment_matrices(Y_c, K, lam, u=None, solver=None) -> EnvelopeObjectiveInputs:
    """Build ``S_Y``, ``S_{Y|K}`` and the regularized inverse of ``S_Y``.

    Parameters
    ----------
    Y_c : (n, r) array
        Centered responses.
    K : GramMatrix or (n, n) array
    lam : float
        Ridge penalty, must be positive.
    u : int, optional
        Target envelope dimension; defaults to r.
    solver : SpectralGram, optional
        Reused eigendecomposition of ``K``; a Cholesky solve is used otherwise.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    Y_c = np.asarray(Y_c, dtype=float)
    n, r = Y_c.shape
    H = solver.solve(lam, Y_c) if solver is not None else solve_regularized(K, lam, Y_c)
    S_Y = Y_c.T @ Y_c / n
    return moment_inputs(S_Y, conditional_moment(Y_c, H, lam), r if u is None else u)


def _logdet(M):
    """log-determinant of a symmetric PSD block; ``inf`` unless it is PD."""
    if M.shape == (1, 1):
        v = M[0, 0]
        return float(np.log(v)) if v > 0 else np.inf
    sign, value = np.linalg.slogdet(M)
    if sign <= 0 or not np.isfinite(value):
        return np.inf
    return float(value)


def _full_objective(A, B, G):
    return _logdet(G.T @ A @ G) + _logdet(G.T @ B @ G)


def envelope_objective(inputs: EnvelopeObjectiveInputs, G) -> float:
    """``log|G^T A G| + log|G^T B G|``; ``inf`` if either block is singular."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[0] != inputs.r:
        G = G.T
    if G.shape[0] != inputs.r:
        raise ValueError(f"basis has {G.shape[0]} rows, expected {inputs.r}")
    if np.max(np.abs(G.T @ G - np.eye(G.shape[1]))) > 1e-8:
        raise ValueError("G is not semi-orthogonal")
    return _full_objective(inputs.A, inputs.B, G)


# ---------------------------------------------------------------------------
# scalar (one direction) problem


def _phis(A, B, W):
    """``phi`` for every column of ``W``."""
    a = np.einsum("ic,ij,jc->c", W, A, W)
    b = np.einsum("ic,ij,jc->c", W, B, W)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a) + np.log(b)
    out[(a <= 0) | (b <= 0) | ~np.isfinite(out)] = np.inf
    return out


def _mm_minimize(A, B, W, tol=INNER_TOL, max_iter=INNER_MAX_ITER):
    """Majorize-minimize refinement of ``phi`` from each unit column of ``W``.

    All starts are iterated together. Returns the refined columns, their
    objective values, the iteration count and a per-column convergence mask.
    """
    W = np.array(W, dtype=float, copy=True)
    f = _phis(A, B, W)
    active = np.isfinite(f)
    converged = ~active
    it = 0
    while it < max_iter and active.any():
        it += 1
        idx = np.flatnonzero(active)
        Wa = W[:, idx]
        a = np.einsum("ic,ij,jc->c", Wa, A, Wa)
        b = np.einsum("ic,ij,jc->c", Wa, B, Wa)
        M = A[None] / a[:, None, None] + B[None] / b[:, None, None]
        _, vecs = np.linalg.eigh(M)
        Wn = vecs[:, :, 0].T
        Wn *= np.where(np.sum(Wn * Wa, axis=0) < 0, -1.0, 1.0)
        fn = _phis(A, B, Wn)
        worse = ~(fn <= f[idx])
        if worse.any():
            Wd = DAMPING * Wa[:, worse] + (1 - DAMPING) * Wn[:, worse]
            Wd /= np.linalg.norm(Wd, axis=0)
            fd = _phis(A, B, Wd)
            ok = fd <= f[idx][worse]
            Wn[:, np.flatnonzero(worse)[ok]] = Wd[:, ok]
            fn[np.flatnonzero(worse)[ok]] = fd[ok]
            stuck = np.flatnonzero(worse)[~ok]
            # no descent even when damped: stationary to working precision
            Wn[:, stuck] = Wa[:, stuck]
            fn[stuck] = f[idx][stuck]
        done = np.abs(f[idx] - fn) <= tol * np.maximum(1.0, np.abs(fn))
        W[:, idx] = Wn
        f[idx] = fn
        converged[idx[done]] = True
        active[idx[done]] = False
    return W, f, it, converged


def _census(A_k, B_k):
    _, va = np.linalg.eigh(A_k)
    _, vb = np.linalg.eigh(B_k)
    return [va[:, i] for i in range(va.shape[1])] + [vb[:, i] for i in range(vb.shape[1])]


def _one_direction_sweep(S_Y, B, u, init_G=None, n_starts=None):
    """Sequential construction of a u-dimensional basis.

    Returns ``(G, iterations, converged, history)``.
    """
    r = S_Y.shape[0]
    C = np.eye(r)
    cols = []
    total_it = 0
    converged = True
    history = []
    for k in range(u):
        A_k, _ = psd_inverse(C.T @ S_Y @ C)
        B_k = _symmetrize(C.T @ B @ C)
        cands = _census(A_k, B_k)
        if init_G is not None:
            P = C.T @ init_G
            U_, s, _ = np.linalg.svd(P, full_matrices=False)
            cands += [U_[:, i] for i in range(len(s)) if s[i] > 1e-8]
        Wc = np.column_stack(cands)
        phis = _phis(A_k, B_k, Wc)
        order = sorted(range(len(cands)), key=lambda i: (phis[i], i))
        if n_starts is not None:
            order = order[:n_starts]
        order = [i for i in order if np.isfinite(phis[i])]
        if order:
            W, f, it, conv = _mm_minimize(A_k, B_k, Wc[:, order])
            total_it += it
            near = np.flatnonzero(f <= np.min(f) + TIE_TOL)
            j = near[np.argmin([order[i] for i in near])]
            best_w, best_f, best_idx, step_conv = W[:, j], f[j], order[j], bool(conv[j])
        else:
            # every candidate degenerate: fall back to the first census vector
            best_w, best_f, best_idx, step_conv = Wc[:, 0], np.inf, 0, False
        history.append({"step": k, "phi": best_f, "start": best_idx, "candidate_phis": phis})
        cols.append(C @ best_w)
        converged = step_conv
        C = C @ complement(best_w[:, None])
    return np.column_stack(cols), total_it, converged, history


# ---------------------------------------------------------------------------
# full-objective polish


def _retract(G):
    """Polar retraction ``G (G^T G)^{-1/2}`` back onto the Stiefel manifold."""
    vals, vecs = np.linalg.eigh(G.T @ G)
    return G @ ((vecs / np.sqrt(vals)) @ vecs.T)


def _rgrad(A, B, G):
    AG, BG = A @ G, B @ G
    egrad = 2.0 * (np.linalg.solve(G.T @ AG, AG.T).T + np.linalg.solve(G.T @ BG, BG.T).T)
    return egrad - G @ (G.T @ egrad)


def _polish(A, B, G, max_iter=100, tol=1e-12):
    """Riemannian gradient descent on the full objective; never increases F.

    Barzilai-Borwein trial steps, safeguarded by Armijo backtracking.
    """
    f = _full_objective(A, B, G)
    if not np.isfinite(f):
        return G, f, 0
    g = _rgrad(A, B, G)
    t = 0.1
    it = 0
    for it in range(1, max_iter + 1):
        gnorm2 = float(np.sum(g * g))
        if gnorm2 < GRAD_TOL2:
            break
        while t > 1e-14:
            G_new = _retract(G - t * g)
            f_new = _full_objective(A, B, G_new)
            if f_new <= f - 1e-4 * t * gnorm2:
                break
            t *= 0.5
        else:
            break
        g_new = _rgrad(A, B, G_new)
        s_step = G_new - G
        y_step = g_new - g
        sy = float(np.sum(s_step * y_step))
        t = float(np.sum(s_step * s_step)) / sy if sy > 0 else 2.0 * t
        t = min(max(t, 1e-10), 1e3)
        done = f - f_new <= tol * max(1.0, abs(f))
        G, f, g = G_new, f_new, g_new
        if done:
            break
    return G, f, it


def _finish(inputs, G, iterations, converged, history):
    basis = orthonormalize(G)
    value = _full_objective(inputs.A, inputs.B, basis.G)
    return GrassmannSolution(basis, value, iterations, converged, history)


def estimate_envelope(
    inputs: EnvelopeObjectiveInputs,
    init: EnvelopeBasis | None = None,
    polish: bool = True,
    n_starts: int | None = None,
) -> GrassmannSolution:
    """Minimize the envelope objective over u-dimensional subspaces.

    Parameters
    ----------
    inputs : EnvelopeObjectiveInputs
    init : EnvelopeBasis, optional
        Warm start. Its projection onto each deflated complement joins the
        eigenvector census, and the basis itself is kept as a candidate; the
        cold-started answer is always computed too and the best is returned.
    polish : bool
        Finish each candidate with gradient descent on the full objective.
    n_starts : int, optional
        Number of best census vectors refined per direction (all by default).

    Returns
    -------
    GrassmannSolution
    """
    r, u = inputs.r, inputs.u
    if not 1 <= u <= r:
        raise ValueError(f"envelope dimension must satisfy 1 <= u <= r={r}, got {u}")
    if u == r:
        G = np.eye(r)
        return GrassmannSolution(EnvelopeBasis.identity(r), _full_objective(inputs.A, inputs.B, G), 0, True)

    A, B = inputs.A, inputs.B
    candidates = []
    G, it, conv, hist = _one_direction_sweep(inputs.S_Y, B, u, n_starts=n_starts)
    candidates.append((G, it, conv, hist))
    if init is not None:
        if init.G.shape != (r, u):
            raise ValueError(f"warm start has shape {init.G.shape}, expected {(r, u)}")
        G, it, conv, hist = _one_direction_sweep(inputs.S_Y, B, u, init_G=init.G, n_starts=n_starts)
        candidates.append((G, it, conv, hist))
        candidates.append((init.G, 0, True, []))

    best = None
    seen = []
    for G, it, conv, hist in candidates:
        # candidates spanning an already-polished subspace would polish to the same answer
        if any(projection_distance(G, H) < SAME_SUBSPACE_TOL for H in seen):
            continue
        seen.append(G)
        if polish:
            G, _, pit = _polish(A, B, G)
            it += pit
        sol = _finish(inputs, G, it, conv, hist)
        if best is None or sol.objective_value < best.objective_value - 1e-12:
            best = sol
    return best


def estimate_envelope_from_data(Y_c, K, lam, u, init=None, solver=None, **kwargs) -> GrassmannSolution:
    return estimate_envelope(build_moment_matrices(Y_c, K, lam, u, solver=solver), init=init, **kwargs)


__all__ = [
    "EnvelopeObjectiveInputs",
    "GrassmannSolution",
    "NotPositiveDefinite",
    "SpectralGram",
    "build_moment_matrices",
    "conditional_moment",
    "envelope_objective",
    "estimate_envelope",
    "estimate_envelope_from_data",
    "moment_inputs",
]
