"""Cross-mesh geometry: collision detection, triangle clipping, polygon integration.

Integrals over a convex polygon ``P`` are evaluated with the boundary
representation: for a polynomial ``f`` homogeneous of degree ``q``,

    int_P f dx = 1/(2+q) * sum_i (b_i/|a_i|) int_{E_i} f ds,

where edge ``E_i`` lies on the line ``a_i . x = b_i`` with outward normal
``a_i``.  Mixed-degree polynomials are split into monomials, so each
monomial moment ``int_P x0^i x1^j`` is one boundary sum.  Edge integrals
use 4-point Gauss-Legendre quadrature (exact to degree 7).

Moments are always taken in coordinates centred on the piece to keep the
boundary sums well conditioned.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as _k
from .quadrature import gauss_interval, triangle_rule

__all__ = [
    "MAX_DEGREE",
    "DEGENERATE_AREA",
    "Poly2",
    "ConvexPolygon",
    "monomials",
    "polygon_moments",
    "integrate_polygon",
    "intersect_triangles",
    "bbox_collide",
    "Overlay",
    "overlay",
    "basis_affine",
    "integrate_products",
    "integrate_basis_product",
]

MAX_DEGREE = 6
DEGENERATE_AREA = 1e-14
EDGE_GAUSS_POINTS = 4


@lru_cache(maxsize=None)
def monomials(degree):
    """Exponent pairs ``(i, j)`` of all monomials of total degree <= ``degree``.

    Ordered by total degree, then by decreasing power of ``x0``.
    """
    return tuple((q - j, j) for q in range(degree + 1) for j in range(q + 1))


@lru_cache(maxsize=None)
def _mono_index(degree):
    return {m: k for k, m in enumerate(monomials(degree))}


@lru_cache(maxsize=None)
def _mono_arrays(degree):
    m = np.array(monomials(degree), dtype=np.int64).reshape(-1, 2)
    return np.ascontiguousarray(m[:, 0]), np.ascontiguousarray(m[:, 1])


@lru_cache(maxsize=None)
def _affine_shift_maps(degree):
    """Target indices in degree+1 of ``m``, ``m*x0`` and ``m*x1`` for ``m`` of degree <= degree."""
    idx = _mono_index(degree + 1)
    mons = monomials(degree)
    return (np.array([idx[(i, j)] for i, j in mons]),
            np.array([idx[(i + 1, j)] for i, j in mons]),
            np.array([idx[(i, j + 1)] for i, j in mons]))


class Poly2:
    """Bivariate polynomial ``sum c_ij x0^i x1^j`` of total degree <= 6.

    Parameters
    ----------
    coeffs : dict or array_like
        Either a mapping ``(i, j) -> coefficient`` or a dense vector
        ordered as :func:`monomials`.
    degree : int, optional
        Degree bookkeeping for dense input; inferred for dict input.
    """

    def __init__(self, coeffs, degree=None):
        if isinstance(coeffs, dict):
            deg = max((i + j for (i, j), c in coeffs.items()), default=0)
            deg = deg if degree is None else degree
            dense = np.zeros(len(monomials(deg)))
            idx = _mono_index(deg)
            for (i, j), c in coeffs.items():
                dense[idx[(int(i), int(j))]] += float(c)
        else:
            dense = np.asarray(coeffs, dtype=float).copy()
            deg = 0
            while len(monomials(deg)) < len(dense):
                deg += 1
            if len(monomials(deg)) != len(dense):
                raise ValueError("dense coefficient length does not match a total degree")
        if deg > MAX_DEGREE:
            raise ValueError(f"degree {deg} exceeds supported maximum {MAX_DEGREE}")
        if not np.all(np.isfinite(dense)):
            raise ValueError("coefficients must be finite")
        self.degree = deg
        self.coeffs = dense

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, (i, j) in zip(self.coeffs, monomials(self.degree)):
            if c:
                out += c * x[..., 0] ** i * x[..., 1] ** j
        return out

    def __add__(self, other):
        d = max(self.degree, other.degree)
        return Poly2(_pad(self.coeffs, d) + _pad(other.coeffs, d), d)

    def __mul__(self, other):
        if np.isscalar(other):
            return Poly2(self.coeffs * other, self.degree)
        d = self.degree + other.degree
        out = np.zeros(len(monomials(d)))
        idx = _mono_index(d)
        for a, (i, j) in zip(self.coeffs, monomials(self.degree)):
            for b, (k, l) in zip(other.coeffs, monomials(other.degree)):
                out[idx[(i + k, j + l)]] += a * b
        return Poly2(out, d)

    __rmul__ = __mul__

    def shifted(self, origin):
        """Coefficients of ``g(xi) = f(origin + xi)``."""
        from math import comb
        o0, o1 = map(float, origin)
        out = np.zeros_like(self.coeffs)
        idx = _mono_index(self.degree)
        for c, (i, j) in zip(self.coeffs, monomials(self.degree)):
            if not c:
                continue
            for a in range(i + 1):
                for b in range(j + 1):
                    out[idx[(a, b)]] += c * comb(i, a) * comb(j, b) * o0 ** (i - a) * o1 ** (j - b)
        return Poly2(out, self.degree)

    def homogeneous_parts(self):
        """Dict ``q -> Poly2`` of the degree-``q`` homogeneous components."""
        parts = {}
        for k, (i, j) in enumerate(monomials(self.degree)):
            if self.coeffs[k]:
                parts.setdefault(i + j, {})[(i, j)] = self.coeffs[k]
        return {q: Poly2(c, self.degree) for q, c in parts.items()}


def _pad(c, degree):
    out = np.zeros(len(monomials(degree)))
    out[: len(c)] = c
    return out


@dataclass
class ConvexPolygon:
    """Counterclockwise convex polygon; ``degenerate`` when its area is below 1e-14."""

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v):
            keep = np.ones(len(v), dtype=bool)
            for k in range(1, len(v)):
                keep[k] = np.max(np.abs(v[k] - v[k - 1])) > 1e-14
            if len(v) > 1 and np.max(np.abs(v[-1] - v[0])) <= 1e-14:
                keep[-1] = False
            v = v[keep]
        self.vertices = v

    @property
    def area(self):
        v = self.vertices
        if len(v) < 3:
            return 0.0
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def degenerate(self):
        return self.area < DEGENERATE_AREA


# -- boundary-representation moments ------------------------------------------

def polygon_moments(vertices, counts, degree):
    """Monomial moments of many convex polygons via the boundary formula.

    Parameters
    ----------
    vertices : (K, V, 2) ndarray
        Counterclockwise vertices, already expressed in local coordinates.
        Rows with fewer than ``V`` vertices are padded by any value;
        ``counts`` gives the number of valid vertices.
    counts : (K,) ndarray
    degree : int

    Returns
    -------
    (K, n_monomials) ndarray ordered as :func:`monomials`.
    """
    if degree > MAX_DEGREE:
        raise ValueError(f"degree {degree} exceeds supported maximum {MAX_DEGREE}")
    v = np.ascontiguousarray(vertices, dtype=float)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    mi, mj = _mono_arrays(degree)
    s, w = gauss_interval(EDGE_GAUSS_POINTS)
    return _k.boundary_moments(v, counts, np.zeros((len(v), 2)), mi, mj, s, w)


def integrate_polygon(polygon, f):
    """Integral of a :class:`Poly2` over a :class:`ConvexPolygon`.

    Degenerate polygons (area < 1e-14) integrate to 0.
    """
    if polygon.degenerate:
        return 0.0
    v = polygon.vertices
    origin = v.mean(axis=0)
    g = f.shifted(origin)
    mom = polygon_moments((v - origin)[None], np.array([len(v)]), g.degree)[0]
    return float(np.dot(mom, g.coeffs))


def _triangle_moments(corners, origin, degree):
    """Monomial moments over triangles by collapsed Gauss quadrature."""
    bary, w = triangle_rule(degree)
    c = corners - origin[:, None, :]
    area = 0.5 * np.abs((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1])
                        - (c[:, 1, 1] - c[:, 0, 1]) * (c[:, 2, 0] - c[:, 0, 0]))
    x = np.einsum("qi,kid->kqd", bary, c)
    mons = monomials(degree)
    out = np.empty((len(c), len(mons)))
    for m, (i, j) in enumerate(mons):
        out[:, m] = area * np.einsum("q,kq->k", w, x[..., 0] ** i * x[..., 1] ** j)
    return out


# -- clipping -----------------------------------------------------------------

def _clip_pairs(polys, counts, tris, ia, ib):
    """Clip ``polys[ia]`` by ``tris[ib]``; drops pieces below the degenerate area."""
    return _k.clip_pairs(np.ascontiguousarray(polys, dtype=float),
                         np.ascontiguousarray(counts, dtype=np.int64),
                         np.ascontiguousarray(tris, dtype=float),
                         np.ascontiguousarray(ia, dtype=np.int64),
                         np.ascontiguousarray(ib, dtype=np.int64), DEGENERATE_AREA)


def intersect_triangles(a, b):
    """Intersection of two counterclockwise triangles as a :class:`ConvexPolygon`.

    Computed by clipping ``a`` successively against the three edges of ``b``.
    """
    a = np.asarray(a, dtype=float).reshape(1, 3, 2)
    b = np.asarray(b, dtype=float).reshape(1, 3, 2)
    zero = np.zeros(1, dtype=np.int64)
    poly, n, _ = _clip_pairs(a, np.array([3]), b, zero, zero)
    if n[0] < 3:
        return ConvexPolygon(np.zeros((0, 2)))
    v = poly[0, : n[0]]
    return ConvexPolygon(v)


# -- collision detection ------------------------------------------------------

def _bboxes(polys, counts):
    nv = polys.shape[1]
    valid = np.arange(nv)[None, :] < counts[:, None]
    lo = np.where(valid[..., None], polys, np.inf).min(axis=1)
    hi = np.where(valid[..., None], polys, -np.inf).max(axis=1)
    return lo, hi


def _candidate_pairs(lo_a, hi_a, lo_b, hi_b):
    """Index pairs with overlapping bounding boxes, found through a uniform grid."""
    if not len(lo_a) or not len(lo_b):
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    origin = np.minimum(lo_a.min(axis=0), lo_b.min(axis=0))
    top = np.maximum(hi_a.max(axis=0), hi_b.max(axis=0))
    size = np.median(hi_b - lo_b, axis=0)
    extent = np.maximum(top - origin, 1e-300)
    shape = np.clip(np.ceil(extent / np.maximum(size, extent / 4096)), 1, 4096).astype(np.int64)
    cell = extent / shape
    ia, ib = _k.grid_candidates(np.ascontiguousarray(lo_a, dtype=float),
                                np.ascontiguousarray(hi_a, dtype=float),
                                np.ascontiguousarray(lo_b, dtype=float),
                                np.ascontiguousarray(hi_b, dtype=float),
                                origin.astype(float), cell.astype(float), shape,
                                float(1e-12 * extent.max()))
    order = np.lexsort((ib, ia))
    return ia[order], ib[order]


def bbox_collide(mesh_a, mesh_b):
    """Candidate pairs of active triangle ids whose bounding boxes overlap.

    Returns an ``(P, 2)`` integer array of ``(id in mesh_a, id in mesh_b)``.
    """
    ca, cb = mesh_a.corners, mesh_b.corners
    ia, ib = _candidate_pairs(ca.min(axis=1), ca.max(axis=1), cb.min(axis=1), cb.max(axis=1))
    return np.column_stack([mesh_a.triangle_ids[ia], mesh_b.triangle_ids[ib]])


# -- overlays -----------------------------------------------------------------

class Overlay:
    """Common refinement of several meshes into convex pieces.

    Attributes
    ----------
    meshes : tuple of Mesh
    parents : (K, len(meshes)) ndarray
        Local triangle index, per mesh, of the triangle containing each piece.
    polygons : (K, V, 2) ndarray, counts : (K,) ndarray
        Piece vertices (counterclockwise) in global coordinates.
    nested : bool
        True when pieces are whole triangles of one refinement family
        (the fast path); their moments come from triangle quadrature.
    """

    def __init__(self, meshes, parents, polygons, counts, nested, family_ids=None):
        self.meshes = tuple(meshes)
        self.parents = parents
        self.polygons = polygons
        self.counts = counts
        self.nested = nested
        self.family_ids = family_ids
        nv = polygons.shape[1]
        valid = np.arange(nv)[None, :] < counts[:, None]
        self.origin = (np.sum(np.where(valid[..., None], polygons, 0.0), axis=1)
                       / np.maximum(counts, 1)[:, None])
        self._moments = {}

    def __len__(self):
        return len(self.counts)

    def moments(self, degree):
        """Monomial moments in piece-centred coordinates, ``(K, n_monomials)``."""
        for d, mom in self._moments.items():
            if d >= degree:
                return mom[:, : len(monomials(degree))]
        if self.nested:
            mom = _triangle_moments(self.polygons[:, :3], self.origin, degree)
        else:
            mom = polygon_moments(self.polygons - self.origin[:, None, :], self.counts, degree)
        self._moments[degree] = mom
        return mom

    @property
    def areas(self):
        return self.moments(0)[:, 0]

    def affine(self, which, coeffs=None):
        """Affine coefficients ``(c0, c_x0, c_x1)`` on every piece.

        With ``coeffs=None`` returns the three local hat functions of
        ``meshes[which]``, shape ``(K, 3, 3)``; otherwise the restriction of
        the P1 field with nodal ``coeffs``, shape ``(K, 1, 3)``.
        """
        mesh = self.meshes[which]
        hats = basis_affine(mesh, self.parents[:, which], self.origin)
        if coeffs is None:
            return hats
        nodal = np.asarray(coeffs, dtype=float)[mesh.triangles[self.parents[:, which]]]
        return np.einsum("ki,kia->ka", nodal, hats)[:, None, :]


def basis_affine(mesh, tri, origin):
    """Hat functions of ``mesh`` on local triangles ``tri`` as affine maps around ``origin``.

    Returns ``(K, 3, 3)``: row ``i`` holds ``(lambda_i(origin), d/dx0, d/dx1)``.
    """
    g = mesh.gradients[tri]
    centroid = mesh.corners[tri].mean(axis=1)
    c0 = 1.0 / 3.0 + np.einsum("kid,kd->ki", g, origin - centroid)
    return np.concatenate([c0[..., None], g], axis=2)


def integrate_products(ov, factors):
    """Integrals over each piece of products of affine factors.

    Parameters
    ----------
    ov : Overlay
    factors : list of (K, r_k, 3) ndarrays
        Affine functions per piece in the piece-centred coordinates.

    Returns
    -------
    (K, r_1, ..., r_m) ndarray
    """
    if len(factors) == 2:
        # affine x affine: bilinear form with the matrix of moments up to degree 2
        m = ov.moments(2)
        mm = m[:, [0, 1, 2, 1, 3, 4, 2, 4, 5]].reshape(-1, 3, 3)
        return np.einsum("kap,kpq,kbq->kab", factors[0], mm, factors[1], optimize=True)
    n_scalar = 0
    while n_scalar < len(factors) and factors[n_scalar].shape[1] == 1:
        n_scalar += 1
    if len(factors) - n_scalar <= 2:
        return _products_gathered(ov, factors, n_scalar)
    return _products_expanded(ov, factors)


def _scalar_poly(ov, factors):
    """Monomial coefficients ``(K, n_monomials)`` of a product of scalar affine factors."""
    coef = np.ones((len(ov), 1))
    for deg, f in enumerate(factors):
        same, sx, sy = _affine_shift_maps(deg)
        new = np.zeros((len(ov), len(monomials(deg + 1))))
        new[:, same] += coef * f[:, 0, 0:1]
        new[:, sx] += coef * f[:, 0, 1:2]
        new[:, sy] += coef * f[:, 0, 2:3]
        coef = new
    return coef


@lru_cache(maxsize=None)
def _gather_table(degree, n_affine):
    """Moment indices of ``m * e_p (* e_q)`` with ``e = (1, x0, x1)``, ``m`` of degree <= degree."""
    idx = _mono_index(degree + n_affine)
    shifts = ((0, 0), (1, 0), (0, 1))
    mons = monomials(degree)
    if n_affine == 0:
        return np.arange(len(mons))
    if n_affine == 1:
        return np.array([[idx[(i + a, j + b)] for a, b in shifts] for i, j in mons])
    return np.array([[[idx[(i + a + c, j + b + d)] for c, d in shifts] for a, b in shifts]
                     for i, j in mons])


def _products_gathered(ov, factors, n_scalar):
    """Scalar factors folded into one polynomial, then contracted with gathered moments."""
    rest = factors[n_scalar:]
    deg = n_scalar
    p = _scalar_poly(ov, factors[:n_scalar])
    mom = ov.moments(deg + len(rest))
    G = mom[:, _gather_table(deg, len(rest))]
    if not rest:
        out = np.einsum("km,km->k", p, G)
    elif len(rest) == 1:
        out = np.einsum("km,kmp,kap->ka", p, G, rest[0], optimize=True)
    else:
        out = np.einsum("km,kmpq,kap,kbq->kab", p, G, rest[0], rest[1], optimize=True)
    return out.reshape((len(ov),) + (1,) * n_scalar + tuple(f.shape[1] for f in rest))


def _products_expanded(ov, factors):
    """General product by successive monomial expansion."""
    k = len(ov)
    coef = np.ones((k, 1))
    deg = 0
    for f in factors:
        r = f.shape[1]
        same, sx, sy = _affine_shift_maps(deg)
        nm = len(monomials(deg + 1))
        new = np.zeros(coef.shape[:-1] + (r, nm))
        shape = (k,) + (1,) * (coef.ndim - 2) + (r, 1)
        c = coef[..., None, :]
        new[..., same] += c * f[..., 0].reshape(shape)
        new[..., sx] += c * f[..., 1].reshape(shape)
        new[..., sy] += c * f[..., 2].reshape(shape)
        coef = new
        deg += 1
    mom = ov.moments(deg)
    return np.einsum("k...m,km->k...", coef, mom)


def _family_parent_array(family):
    return np.array(family.tparent, dtype=np.int64)


def _nested_pieces(ids_a, ids_b, parent):
    """Pieces of two disjoint covers by family triangles.

    Returns (family id of piece, index into ids_a, index into ids_b).
    """
    ids_a = np.asarray(ids_a)
    ids_b = np.asarray(ids_b)
    sa = np.argsort(ids_a)
    sb = np.argsort(ids_b)

    def lookup(sorted_idx, ids, x):
        pos = np.searchsorted(ids[sorted_idx], x)
        pos = np.minimum(pos, len(ids) - 1)
        hit = ids[sorted_idx][pos] == x
        return hit, sorted_idx[pos]

    pieces, pa, pb = [], [], []
    # b-triangles inside (or equal to) an a-triangle
    cur = ids_b.copy()
    owner = np.arange(len(ids_b))
    while len(cur):
        hit, idx = lookup(sa, ids_a, cur)
        pieces.append(ids_b[owner[hit]])
        pa.append(idx[hit])
        pb.append(owner[hit])
        cur, owner = parent[cur[~hit]], owner[~hit]
        keep = cur >= 0
        cur, owner = cur[keep], owner[keep]
    # a-triangles strictly inside a b-triangle
    cur = parent[ids_a]
    owner = np.arange(len(ids_a))
    keep = cur >= 0
    cur, owner = cur[keep], owner[keep]
    while len(cur):
        hit, idx = lookup(sb, ids_b, cur)
        pieces.append(ids_a[owner[hit]])
        pa.append(owner[hit])
        pb.append(idx[hit])
        cur, owner = parent[cur[~hit]], owner[~hit]
        keep = cur >= 0
        cur, owner = cur[keep], owner[keep]
    cat = np.concatenate
    return cat(pieces), cat(pa), cat(pb)


def overlay(meshes, method="auto"):
    """Overlay (common refinement) of two or more meshes.

    Parameters
    ----------
    meshes : sequence of Mesh
    method : {"auto", "nested", "clip"}
        ``"nested"`` requires all meshes to share one refinement family and
        uses the hierarchy; ``"clip"`` always clips triangles; ``"auto"``
        picks ``"nested"`` when possible.
    """
    meshes = list(meshes)
    if len(meshes) < 1:
        raise ValueError("need at least one mesh")
    same_family = all(m.family is meshes[0].family for m in meshes)
    if method == "auto":
        method = "nested" if same_family else "clip"
    if method == "nested" and not same_family:
        raise ValueError("nested overlay requires meshes from one refinement family")
    if method not in ("nested", "clip"):
        raise ValueError(f"unknown overlay method {method!r}")

    first = meshes[0]
    k = first.n_triangles
    parents = np.arange(k)[:, None]
    polys = first.corners.copy()
    counts = np.full(k, 3)
    if method == "nested":
        fam = first.family
        parent = _family_parent_array(fam)
        ids = first.triangle_ids.copy()
        for m in meshes[1:]:
            pieces, pa, pb = _nested_pieces(ids, m.triangle_ids, parent)
            order = np.lexsort((pieces,))
            pieces, pa, pb = pieces[order], pa[order], pb[order]
            parents = np.column_stack([parents[pa], pb])
            ids = pieces
        coords = np.array(fam.coords)
        tv = np.array([fam.tverts[t] for t in ids], dtype=np.int64).reshape(-1, 3)
        polys = coords[tv]
        counts = np.full(len(ids), 3)
        return Overlay(meshes, parents, polys, counts, nested=True, family_ids=ids)

    for m in meshes[1:]:
        lo, hi = _bboxes(polys, counts)
        cb = m.corners
        ia, ib = _candidate_pairs(lo, hi, cb.min(axis=1), cb.max(axis=1))
        out, n, _ = _clip_pairs(polys, counts, cb, ia, ib)
        keep = n >= 3
        counts = n[keep]
        polys = out[keep][:, : max(3, int(counts.max(initial=3)))]
        parents = np.column_stack([parents[ia[keep]], ib[keep]])
    return Overlay(meshes, parents, polys, counts, nested=False)


def integrate_basis_product(mesh_a, tri_a, local_a, mesh_b, tri_b, local_b, mode="L2"):
    """Integral over ``T_a cap T_b`` of ``v_a v_b`` (``"L2"``) or ``grad v_a . grad v_b`` (``"H1semi"``).

    ``tri_a``/``tri_b`` are active triangle ids and ``local_a``/``local_b``
    local vertex indices 0..2.  Arguments are put in a canonical order first
    so the result is symmetric bit for bit.
    """
    if (mesh_a.id, int(tri_a), int(local_a)) > (mesh_b.id, int(tri_b), int(local_b)):
        mesh_a, tri_a, local_a, mesh_b, tri_b, local_b = mesh_b, tri_b, local_b, mesh_a, tri_a, local_a
    ia = int(np.searchsorted(mesh_a.triangle_ids, tri_a))
    ib = int(np.searchsorted(mesh_b.triangle_ids, tri_b))
    if mesh_a.triangle_ids[ia] != tri_a or mesh_b.triangle_ids[ib] != tri_b:
        raise ValueError("triangle ids must be active in their meshes")
    piece = None
    if mesh_a.family is mesh_b.family:
        parent = mesh_a.family.tparent
        t = int(tri_b)
        while t >= 0 and t != tri_a:
            t = parent[t]
        if t == tri_a:
            piece = mesh_b.corners[ib]
        else:
            t = int(tri_a)
            while t >= 0 and t != tri_b:
                t = parent[t]
            piece = mesh_a.corners[ia] if t == tri_b else np.zeros((0, 2))
        nested = True
    else:
        poly = intersect_triangles(mesh_a.corners[ia], mesh_b.corners[ib])
        piece = poly.vertices
        nested = False
    if len(piece) < 3:
        return 0.0
    ov = Overlay((mesh_a, mesh_b), np.array([[ia, ib]]), piece[None], np.array([len(piece)]),
                 nested=nested)
    if ov.areas[0] < DEGENERATE_AREA:
        return 0.0
    if mode == "L2":
        fa = ov.affine(0)[:, [local_a]]
        fb = ov.affine(1)[:, [local_b]]
        return float(integrate_products(ov, [fa, fb])[0, 0, 0])
    if mode == "H1semi":
        ga = mesh_a.gradients[ia, local_a]
        gb = mesh_b.gradients[ib, local_b]
        return float(np.dot(ga, gb) * ov.areas[0])
    raise ValueError(f"unknown mode {mode!r}")
