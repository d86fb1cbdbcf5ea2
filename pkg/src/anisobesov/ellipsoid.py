"""Minimal enclosing ellipsoids (Khachiyan barycentric iteration)."""

from __future__ import annotations

import numpy as np

from .errors import FitDegenerate


def min_enclosing_ellipsoid_centered(points, tol: float = 1e-7, max_iter: int = 100_000):
    """Minimum-volume origin-centered ellipsoid containing a symmetric point set.

    Returns the PD matrix H of E = {x : x^T H x <= 1} with all points inside
    (up to ``tol``).  ``points`` is (N, m) and is treated as symmetric
    (each p counts for +-p, which leaves the centered problem unchanged).

    Multiplicative barycentric updates: with M(u) = sum_i u_i p_i p_i^T on the
    simplex, the optimum has H = M(u*)^{-1} / m and max_i p_i^T M^{-1} p_i = m.
    """
    pts = np.asarray(points, dtype=float)
    n, m = pts.shape
    if n < m:
        raise FitDegenerate(f"need at least {m} points, got {n}")
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        mat = (pts * u[:, None]).T @ pts
        try:
            sol = np.linalg.solve(mat, pts.T)
        except np.linalg.LinAlgError:
            raise FitDegenerate("ellipsoid fit collapsed to a degenerate form")
        w = np.einsum("ij,ji->i", pts, sol)
        err = w.max() / m - 1.0
        if err <= tol:
            break
        u *= w / m
        u /= u.sum()
    else:
        raise FitDegenerate("ellipsoid fit did not converge")
    mat = (pts * u[:, None]).T @ pts
    h = np.linalg.inv(mat) / m
    # Guarantee containment of every input point despite roundoff.
    quad = np.einsum("ij,jk,ik->i", pts, h, pts)
    h /= max(quad.max(), 1e-300)
    return 0.5 * (h + h.T)
