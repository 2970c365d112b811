"""Lawson-Hanson active-set solver for non-negative least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class NnlsSolution:
    weights: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def kkt_residual(A, b, w) -> float:
    """Largest violation of the NNLS optimality conditions at ``w``.

    With ``g = A^T (A w - b)``: free weights need ``g = 0``, zero weights
    need ``g >= 0``, and every weight must be ``>= 0``.
    """
    A = np.asarray(A, dtype=float)
    w = np.asarray(w, dtype=float)
    g = A.T @ (A @ w - np.asarray(b, dtype=float))
    free = w > 0
    worst = 0.0
    if free.any():
        worst = max(worst, float(np.abs(g[free]).max()))
    if (~free).any():
        worst = max(worst, float(np.maximum(-g[~free], 0.0).max()))
    if (w < 0).any():
        worst = max(worst, float(-w.min()))
    return worst


def nnls(A, b, tol: float | None = None, max_iter: int | None = None) -> NnlsSolution:
    """Minimize ``||A w - b||_2`` subject to ``w >= 0``.

    Parameters
    ----------
    A : (n, p) array
    b : (n,) array
    tol : float, optional
        Dual-feasibility tolerance; default ``1e-10 * ||A^T A||_inf``.
    max_iter : int, optional
        Cap on outer (variable-adding) iterations; default ``10 * p``.
        Hitting it returns the current iterate with ``converged=False``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise DataError(f"incompatible shapes {A.shape} and {b.shape}")
    n, p = A.shape
    if n < 1 or p < 1:
        raise DataError("empty system")
    if not (np.isfinite(A).all() and np.isfinite(b).all()):
        raise DataError("non-finite entries in NNLS input")

    AtA = A.T @ A
    Atb = A.T @ b
    if tol is None:
        tol = 1e-10 * float(np.abs(AtA).sum(axis=1).max())
    if max_iter is None:
        max_iter = 10 * p

    w = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    # indices whose entry was numerically rejected since the last real step
    blocked = np.zeros(p, dtype=bool)
    grad = Atb.copy()  # A^T (b - A w)
    iterations = 0
    converged = True

    while True:
        cand = ~passive & ~blocked
        if not cand.any() or grad[cand].max() <= tol:
            break
        if iterations >= max_iter:
            converged = False
            break
        iterations += 1
        t = int(np.flatnonzero(cand)[np.argmax(grad[cand])])
        passive[t] = True

        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(p)
            z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if (z[idx] > 0).all():
                w = z
                break
            if w[t] == 0 and z[t] <= 0:
                # the entering variable cannot move off its bound; reject it
                passive[t] = False
                blocked[t] = True
                break
            neg = idx[z[idx] <= 0]
            alpha = np.min(w[neg] / (w[neg] - z[neg]))
            w = w + alpha * (z - w)
            w[passive & (w <= 0)] = 0.0
            passive &= w > 0
            if not passive.any():
                break
        w[~passive] = 0.0
        if passive[t]:
            blocked[:] = False
        grad = Atb - AtA @ w

    resid = float(np.linalg.norm(A @ w - b))
    return NnlsSolution(w, resid, iterations, converged)
