"""Minimum-norm point of the convex hull of a finite point set.

Subgradient oracles return finite samples whose hull describes the
subdifferential exactly in the 1-D and polyhedral cases, so the distance
from the origin to that hull is the exact stationarity residual there.
"""

from __future__ import annotations

import numpy as np


def min_norm_point(points: np.ndarray, tol: float = 1e-13, max_iter: int = 500) -> np.ndarray:
    """Return argmin{||p|| : p in conv(points)}.

    points : (n, d) array. Uses interval clamping for d == 1 and Wolfe's
    corral algorithm otherwise; both are exact up to float accuracy for
    the small candidate sets produced by the oracles.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("need a nonempty (n, d) sample")
    n, d = P.shape
    if n == 1:
        return P[0].copy()
    if d == 1:
        lo, hi = float(P.min()), float(P.max())
        return np.array([min(max(0.0, lo), hi)])
    return _wolfe(P, tol, max_iter)


def hull_distance(points: np.ndarray) -> float:
    """dist(0; conv(points))."""
    return float(np.linalg.norm(min_norm_point(points)))


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    # min ||Q^T a|| subject to sum(a) = 1, via the KKT system
    m = Q.shape[0]
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = Q @ Q.T
    K[:m, m] = 1.0
    K[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:m]


def _wolfe(P: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    norms2 = np.einsum("ij,ij->i", P, P)
    corral = [int(np.argmin(norms2))]
    lam = np.array([1.0])
    x = P[corral[0]].copy()
    scale = max(1.0, float(np.sqrt(norms2.max())))
    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        if dots[j] >= x @ x - tol * scale**2:
            break
        if j in corral:
            break
        corral.append(j)
        lam = np.append(lam, 0.0)
        # minor cycle: move to the affine minimizer, dropping vertices
        # whose barycentric weight would turn negative
        while True:
            a = _affine_minimizer(P[corral])
            if np.all(a > 1e-14):
                lam = a
                x = P[corral].T @ a
                break
            step = a - lam
            neg = step < -1e-16
            theta = 1.0
            if np.any(neg):
                theta = min(1.0, float(np.min(-lam[neg] / step[neg])))
            lam = lam + theta * step
            keep = lam > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(lam))] = True
            corral = [c for c, k in zip(corral, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = P[corral].T @ lam
            if len(corral) == 1:
                break
    return x
