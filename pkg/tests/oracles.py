"""Independent reference implementations used by the tests.

None of these call into the package's geometry or quadrature code; they
are slow, direct and meant to be obviously right.
"""
from math import factorial

import numpy as np
from scipy.spatial import ConvexHull


def ref_triangle_monomial(i, j):
    """Exact ``int x^i y^j`` over the reference triangle (0,0),(1,0),(0,1)."""
    return factorial(i) * factorial(j) / factorial(i + j + 2)


def duffy_rule(n):
    """Collapsed tensor Gauss rule on the reference triangle, exact to degree ``2n - 2``."""
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1)
    w = 0.5 * w
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    x = u.ravel()
    y = (v * (1 - u)).ravel()
    return np.column_stack([x, y]), (wu * wv * (1 - u)).ravel()


def triangle_integral(corners, f, n=8):
    """``int_T f`` for a vectorised ``f(points)`` on the triangle ``corners`` (3, 2)."""
    a, b, c = np.asarray(corners, dtype=float)
    J = np.column_stack([b - a, c - a])
    ref, w = duffy_rule(n)
    pts = a + ref @ J.T
    return abs(np.linalg.det(J)) * float(np.dot(w, f(pts)))


def fan_integral(vertices, f, n=8):
    """Integral over a convex polygon by fan subtriangulation from vertex 0."""
    v = np.asarray(vertices, dtype=float)
    return sum(triangle_integral(np.array([v[0], v[k], v[k + 1]]), f, n) for k in range(1, len(v) - 1))


def poly_eval(coeffs, x):
    """Evaluate ``sum c_ij x0^i x1^j`` given a dict ``(i, j) -> c``."""
    x = np.asarray(x, dtype=float)
    return sum(c * x[..., 0] ** i * x[..., 1] ** j for (i, j), c in coeffs.items())


def _inside(tri, p, tol=1e-12):
    a, b, c = tri
    d = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1])
    l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / d
    l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / d
    return min(l0, l1, 1 - l0 - l1) >= -tol


def _segment_hits(p, q, r, s):
    d = (q[0] - p[0]) * (s[1] - r[1]) - (q[1] - p[1]) * (s[0] - r[0])
    if d == 0:
        return []
    t = ((r[0] - p[0]) * (s[1] - r[1]) - (r[1] - p[1]) * (s[0] - r[0])) / d
    u = ((r[0] - p[0]) * (q[1] - p[1]) - (r[1] - p[1]) * (q[0] - p[0])) / d
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return [p + t * (q - p)]
    return []


def intersection_hull(ta, tb):
    """Intersection of two triangles as the convex hull of all candidate points.

    Candidates are vertices of one triangle inside the other plus all
    edge/edge crossings.  Returns ``(vertices ccw, area)``; area 0 when empty.
    """
    ta = np.asarray(ta, dtype=float)
    tb = np.asarray(tb, dtype=float)
    pts = [p for p in ta if _inside(tb, p)] + [p for p in tb if _inside(ta, p)]
    for i in range(3):
        for j in range(3):
            pts += _segment_hits(ta[i], ta[(i + 1) % 3], tb[j], tb[(j + 1) % 3])
    if len(pts) < 3:
        return np.zeros((0, 2)), 0.0
    pts = np.array(pts)
    try:
        hull = ConvexHull(pts)
    except Exception:   # collinear set
        return np.zeros((0, 2)), 0.0
    return pts[hull.vertices], float(hull.volume)


def brute_locate(points, triangles, x, tol=1e-12):
    """First triangle (lowest index) containing ``x`` and its barycentric coordinates."""
    for k, t in enumerate(triangles):
        a, b, c = points[t]
        T = np.column_stack([b - a, c - a])
        l12 = np.linalg.solve(T, np.asarray(x) - a)
        lam = np.array([1 - l12.sum(), l12[0], l12[1]])
        if lam.min() >= -tol:
            return k, lam
    return None, None


def p1_matrices(points, triangles):
    """Dense P1 mass and stiffness by element loops with explicit formulas."""
    n = len(points)
    M = np.zeros((n, n))
    A = np.zeros((n, n))
    for t in triangles:
        p = points[t]
        B = np.array([p[1] - p[0], p[2] - p[0]]).T
        area = 0.5 * abs(np.linalg.det(B))
        G = np.linalg.inv(B).T @ np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        Ml = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
        Al = area * G.T @ G
        for a in range(3):
            for b in range(3):
                M[t[a], t[b]] += Ml[a, b]
                A[t[a], t[b]] += Al[a, b]
    return M, A


def weighted_svd_eigs(Y, M, weights):
    """Squared singular values of ``L^T Y diag(sqrt w)`` where ``M = L L^T``."""
    L = np.linalg.cholesky(M)
    W = L.T @ Y @ np.diag(np.sqrt(weights))
    return np.linalg.svd(W, compute_uv=False) ** 2
