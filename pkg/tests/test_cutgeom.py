import numpy as np
import pytest
from hypothesis import given, strategies as st

from crossmesh_pod.cutgeom import (ConvexPolygon, Poly2, bbox_collide, integrate_basis_product,
                                   integrate_polygon, integrate_products, intersect_triangles,
                                   monomials, overlay)
from crossmesh_pod.mesh import make_unit_square, refine
from oracles import fan_integral, intersection_hull, poly_eval

UNIT_SQUARE = ConvexPolygon(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))


def random_triangle(r, scale=1.0):
    while True:
        t = r.uniform(0, scale, (3, 2))
        d1, d2 = t[1] - t[0], t[2] - t[0]
        a = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(a) > 1e-3 * scale ** 2:
            return t if a > 0 else t[[0, 2, 1]]


def random_poly(r, degree):
    return {(i, j): r.standard_normal() for i, j in monomials(degree)}


def test_unit_square_constant_and_linear():
    assert integrate_polygon(UNIT_SQUARE, Poly2({(0, 0): 1.0})) == pytest.approx(1.0, abs=1e-14)
    assert integrate_polygon(UNIT_SQUARE, Poly2({(1, 0): 1.0})) == pytest.approx(0.5, abs=1e-14)
    assert integrate_polygon(UNIT_SQUARE, Poly2({(0, 1): 1.0})) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("degree", range(0, 7))
def test_unit_square_monomials(degree):
    for i, j in monomials(degree):
        if i + j != degree:
            continue
        got = integrate_polygon(UNIT_SQUARE, Poly2({(i, j): 1.0}))
        assert got == pytest.approx(1.0 / ((i + 1) * (j + 1)), rel=1e-13)


def test_degree_cap():
    with pytest.raises(ValueError):
        Poly2({(7, 0): 1.0})


def test_degenerate_polygon_integrates_to_zero():
    p = ConvexPolygon(np.array([[0, 0], [1, 0], [2, 0]], dtype=float))
    assert p.degenerate
    assert integrate_polygon(p, Poly2({(0, 0): 1.0})) == 0.0


def test_repeated_vertices_removed():
    p = ConvexPolygon(np.array([[0, 0], [1, 0], [1, 0], [0, 1], [0, 0]], dtype=float))
    assert len(p.vertices) == 3


@given(seed=st.integers(0, 100_000), degree=st.integers(0, 6))
def test_polygon_integral_matches_fan_oracle(seed, degree):
    r = np.random.default_rng(seed)
    poly = intersect_triangles(random_triangle(r), random_triangle(r))
    if poly.degenerate:
        return
    c = random_poly(r, degree)
    got = integrate_polygon(poly, Poly2(c))
    ref = fan_integral(poly.vertices, lambda x: poly_eval(c, x))
    scale = fan_integral(poly.vertices, lambda x: np.abs(poly_eval(c, x)))
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-13 * scale)


@given(seed=st.integers(0, 100_000))
def test_integral_linear_and_additive(seed):
    r = np.random.default_rng(seed)
    tri = random_triangle(r)
    P = ConvexPolygon(tri)
    f, g = random_poly(r, 3), random_poly(r, 3)
    a = r.standard_normal()
    lhs = integrate_polygon(P, Poly2(f) + Poly2(g) * a)
    rhs = integrate_polygon(P, Poly2(f)) + a * integrate_polygon(P, Poly2(g))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-13)
    # split through a median
    m = 0.5 * (tri[1] + tri[2])
    parts = [ConvexPolygon(np.array([tri[0], tri[1], m])), ConvexPolygon(np.array([tri[0], m, tri[2]]))]
    split = sum(integrate_polygon(q, Poly2(f)) for q in parts)
    assert split == pytest.approx(integrate_polygon(P, Poly2(f)), rel=1e-12, abs=1e-13)


def test_intersect_identical():
    a = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    p = intersect_triangles(a, a)
    assert p.area == pytest.approx(0.5, abs=1e-14)


def test_intersect_edge_sharing_is_degenerate():
    a = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    b = np.array([[1, 0], [1, 1], [0, 1]], dtype=float)
    assert intersect_triangles(a, b).degenerate


def test_intersect_shifted_right_triangle():
    a = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    b = a + [0.5, 0.0]
    verts, area = intersection_hull(a, b)
    p = intersect_triangles(a, b)
    assert p.area == pytest.approx(area, rel=1e-14)
    assert p.area == pytest.approx(0.125, rel=1e-14)


@given(seed=st.integers(0, 100_000))
def test_intersection_matches_hull_oracle(seed):
    r = np.random.default_rng(seed)
    a, b = random_triangle(r), random_triangle(r)
    p = intersect_triangles(a, b)
    _, area = intersection_hull(a, b)
    assert p.area == pytest.approx(area, rel=1e-10, abs=1e-14)
    if not p.degenerate:
        v = p.vertices
        e = np.roll(v, -1, axis=0) - v
        turn = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        assert turn.min() > -1e-12      # convex, counterclockwise


def _disturbed(m, r, amp=0.03):
    p = m.points.copy()
    inner = ~m.boundary
    p[inner] += r.uniform(-amp, amp, (inner.sum(), 2))
    return m.with_points(p)


@pytest.mark.parametrize("seed", range(4))
def test_bbox_candidates_superset_of_exhaustive(seed):
    r = np.random.default_rng(seed)
    a = _disturbed(make_unit_square(5), r)
    b = _disturbed(make_unit_square(4), r)
    cand = {tuple(p) for p in bbox_collide(a, b)}
    for i in range(a.n_triangles):
        for j in range(b.n_triangles):
            _, area = intersection_hull(a.corners[i], b.corners[j])
            if area > 1e-14:
                assert (a.triangle_ids[i], b.triangle_ids[j]) in cand
    for ta, tb in cand:
        ca = a.corners[np.searchsorted(a.triangle_ids, ta)]
        cb = b.corners[np.searchsorted(b.triangle_ids, tb)]
        assert np.all(ca.min(0) <= cb.max(0) + 1e-12) and np.all(cb.min(0) <= ca.max(0) + 1e-12)


def test_bbox_same_mesh_contains_diagonal():
    m = make_unit_square(1)
    cand = {tuple(p) for p in bbox_collide(m, m)}
    assert all((t, t) in cand for t in m.triangle_ids)


@pytest.mark.parametrize("seed", range(3))
def test_overlay_covers_domain(seed):
    r = np.random.default_rng(seed)
    a = _disturbed(make_unit_square(6), r)
    b = _disturbed(make_unit_square(5), r)
    ov = overlay([a, b])
    assert ov.areas.sum() == pytest.approx(1.0, rel=1e-10)
    # partition of unity: all hat products over one piece sum to its area
    ha, hb = ov.affine(0), ov.affine(1)
    prods = integrate_products(ov, [ha, hb])
    assert np.allclose(prods.sum(axis=(1, 2)), ov.areas, rtol=1e-12, atol=1e-16)


def test_nested_and_clip_overlays_agree():
    m0 = make_unit_square(3)
    m1 = refine(m0, m0.triangle_ids[::3])
    m2 = refine(m1, m1.triangle_ids[::2])
    for pair in [(m0, m2), (m1, m2), (m2, m2)]:
        on = overlay(pair, "nested")
        oc = overlay(pair, "clip")
        assert on.areas.sum() == pytest.approx(1.0, rel=1e-13)
        assert oc.areas.sum() == pytest.approx(1.0, rel=1e-13)
        an = integrate_products(on, [on.affine(0), on.affine(1)])
        ac = integrate_products(oc, [oc.affine(0), oc.affine(1)])
        n0, n1 = pair[0].n_vertices, pair[1].n_vertices

        def scatter(ov, local):
            out = np.zeros((n0, n1))
            ta = pair[0].triangles[ov.parents[:, 0]]
            tb = pair[1].triangles[ov.parents[:, 1]]
            np.add.at(out, (ta[:, :, None], tb[:, None, :]), local)
            return out
        assert np.allclose(scatter(on, an), scatter(oc, ac), atol=1e-15, rtol=1e-12)


def test_nested_requires_one_family():
    with pytest.raises(ValueError):
        overlay([make_unit_square(2), make_unit_square(2)], "nested")


def test_fast_product_path_matches_general(rng):
    a = _disturbed(make_unit_square(4), rng)
    b = _disturbed(make_unit_square(3), rng)
    ov = overlay([a, b])
    fa, fb = ov.affine(0), ov.affine(1)
    fast = integrate_products(ov, [fa, fb])
    ones = np.zeros((len(ov), 1, 3))
    ones[..., 0] = 1.0
    general = integrate_products(ov, [fa, fb, ones])[..., 0]
    assert np.allclose(fast, general, rtol=1e-12, atol=1e-17)


def test_basis_product_self_mass_entry():
    m = make_unit_square(2)
    t = m.triangle_ids[3]
    val = integrate_basis_product(m, t, 1, m, t, 1)
    assert val == pytest.approx(m.areas[3] / 6, rel=1e-14)
    off = integrate_basis_product(m, t, 0, m, t, 2)
    assert off == pytest.approx(m.areas[3] / 12, rel=1e-14)


def test_basis_product_edge_neighbours_zero():
    m = make_unit_square(1)
    t0, t1 = m.triangle_ids
    assert integrate_basis_product(m, t0, 0, m, t1, 0) == 0.0
    assert integrate_basis_product(m, t0, 0, m, t1, 0, mode="H1semi") == 0.0


def test_basis_product_symmetric_and_nested_matches_clip():
    m0 = make_unit_square(2)
    m1 = refine(m0, m0.triangle_ids[:2])
    parent = m0.triangle_ids[0]
    child = m0.triangle(parent).children[0]
    assert child in set(m1.triangle_ids)
    child_mesh = m1
    for mode in ("L2", "H1semi"):
        for la in range(3):
            for lb in range(3):
                v1 = integrate_basis_product(m0, parent, la, child_mesh, child, lb, mode)
                v2 = integrate_basis_product(child_mesh, child, lb, m0, parent, la, mode)
                assert v1 == v2
    # clip version via unrelated copies of the same geometry
    a = m0.with_points(m0.points)
    b = m1.with_points(m1.points)
    ia = int(np.searchsorted(m0.triangle_ids, parent))
    ib = int(np.searchsorted(m1.triangle_ids, child))
    for la in range(3):
        for lb in range(3):
            nested = integrate_basis_product(m0, parent, la, m1, child, lb)
            clip = integrate_basis_product(a, a.triangle_ids[ia], la, b, b.triangle_ids[ib], lb)
            assert nested == pytest.approx(clip, rel=1e-13, abs=1e-17)


def test_gathered_products_match_expansion(rng):
    from crossmesh_pod.cutgeom import _products_expanded
    a = _disturbed(make_unit_square(4), rng)
    b = _disturbed(make_unit_square(3), rng)
    c = _disturbed(make_unit_square(5), rng)
    ov = overlay([a, b, c])
    f = ov.affine(0, rng.standard_normal(a.n_vertices))
    hb, hc = ov.affine(1), ov.affine(2)
    for fac in ([f, f, hb, hc], [f, f, f, hc], [f, hb, hc], [f, f, f]):
        got = integrate_products(ov, fac)
        ref = _products_expanded(ov, fac)
        assert got.shape == ref.shape
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-15 * np.abs(ref).max())
