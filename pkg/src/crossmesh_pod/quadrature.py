"""Quadrature rules on the unit interval and on triangles."""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_interval(npts):
    """Gauss-Legendre nodes and weights on [0, 1] (exact to degree 2*npts - 1)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    Returns barycentric coordinates ``(nq, 3)`` and weights summing to 1, so
    that ``area * sum(w * f(points))`` integrates a polynomial of total
    degree ``<= degree`` exactly.
    """
    n = max(1, (degree + 2) // 2 + 1)
    u, wu = gauss_interval(n)
    v, wv = gauss_interval(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv) * (1.0 - uu)
    # (u, v) in the unit square -> (s, t) = (u, (1 - u) v) in the reference triangle
    s = uu.ravel()
    t = ((1.0 - uu) * vv).ravel()
    bary = np.column_stack([1.0 - s - t, s, t])
    w = 2.0 * ww.ravel()
    return bary, w


def triangle_points(corners, degree):
    """Physical quadrature points and area-scaled weights for many triangles.

    Parameters
    ----------
    corners : (K, 3, 2) ndarray
    degree : int

    Returns
    -------
    points : (K, nq, 2) ndarray
    weights : (K, nq) ndarray
    """
    bary, w = triangle_rule(degree)
    corners = np.asarray(corners, dtype=float)
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    points = np.einsum("qi,kid->kqd", bary, corners)
    return points, area[:, None] * w[None, :]
