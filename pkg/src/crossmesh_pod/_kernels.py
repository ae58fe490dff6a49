"""Compiled inner loops for clipping and boundary-formula moments."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _clip_one(src, n, a, b, dst):
    """Sutherland-Hodgman step: keep the part of ``src[:n]`` left of ``a -> b``."""
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    length = np.sqrt(dx * dx + dy * dy)
    tol = 1e-14 * length
    m = 0
    px = src[n - 1, 0]
    py = src[n - 1, 1]
    sp = (dx * (py - a[1]) - dy * (px - a[0])) / length
    for i in range(n):
        cx = src[i, 0]
        cy = src[i, 1]
        sc = (dx * (cy - a[1]) - dy * (cx - a[0])) / length
        cin = sc >= -tol
        pin = sp >= -tol
        if cin != pin:
            t = sp / (sp - sc)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            dst[m, 0] = px + t * (cx - px)
            dst[m, 1] = py + t * (cy - py)
            m += 1
        if cin:
            dst[m, 0] = cx
            dst[m, 1] = cy
            m += 1
        px = cx
        py = cy
        sp = sc
    return m


@njit(cache=True, nogil=True)
def clip_pairs(subj, subj_n, tris, ia, ib, min_area):
    """Clip polygons ``subj[ia]`` by triangles ``tris[ib]``.

    Coordinates are shifted to the clipping triangle's centroid during the
    computation.  Returns padded polygons, vertex counts and areas; pieces
    below ``min_area`` get count 0.
    """
    npairs = ia.shape[0]
    vmax = subj.shape[1] + 3
    out = np.zeros((npairs, vmax, 2))
    counts = np.zeros(npairs, dtype=np.int64)
    areas = np.zeros(npairs)
    buf_a = np.empty((vmax, 2))
    buf_b = np.empty((vmax, 2))
    tri = np.empty((3, 2))
    for p in range(npairs):
        s = ia[p]
        t = ib[p]
        ox = (tris[t, 0, 0] + tris[t, 1, 0] + tris[t, 2, 0]) / 3.0
        oy = (tris[t, 0, 1] + tris[t, 1, 1] + tris[t, 2, 1]) / 3.0
        for k in range(3):
            tri[k, 0] = tris[t, k, 0] - ox
            tri[k, 1] = tris[t, k, 1] - oy
        n = subj_n[s]
        for k in range(n):
            buf_a[k, 0] = subj[s, k, 0] - ox
            buf_a[k, 1] = subj[s, k, 1] - oy
        for e in range(3):
            if n < 3:
                n = 0
                break
            e2 = e + 1 if e < 2 else 0
            if e % 2 == 0:
                n = _clip_one(buf_a, n, tri[e], tri[e2], buf_b)
            else:
                n = _clip_one(buf_b, n, tri[e], tri[e2], buf_a)
        # after three steps the result sits in buf_b
        if n < 3:
            continue
        area = 0.0
        for k in range(n):
            k2 = k + 1 if k + 1 < n else 0
            area += buf_b[k, 0] * buf_b[k2, 1] - buf_b[k2, 0] * buf_b[k, 1]
        area *= 0.5
        if area < min_area:
            continue
        counts[p] = n
        areas[p] = area
        for k in range(n):
            out[p, k, 0] = buf_b[k, 0] + ox
            out[p, k, 1] = buf_b[k, 1] + oy
    return out, counts, areas


@njit(cache=True, nogil=True)
def boundary_moments(verts, counts, origin, mono_i, mono_j, gs, gw):
    """Monomial moments via the boundary formula, in coordinates centred on ``origin``."""
    k = verts.shape[0]
    nm = mono_i.shape[0]
    deg = 0
    for m in range(nm):
        if mono_i[m] + mono_j[m] > deg:
            deg = mono_i[m] + mono_j[m]
    out = np.zeros((k, nm))
    p0 = np.empty(deg + 1)
    p1 = np.empty(deg + 1)
    for r in range(k):
        n = counts[r]
        if n < 3:
            continue
        for e in range(n):
            e2 = e + 1 if e + 1 < n else 0
            ax = verts[r, e, 0] - origin[r, 0]
            ay = verts[r, e, 1] - origin[r, 1]
            bx = verts[r, e2, 0] - origin[r, 0]
            by = verts[r, e2, 1] - origin[r, 1]
            cr = ax * by - ay * bx
            if cr == 0.0:
                continue
            for g in range(gs.shape[0]):
                x = ax + gs[g] * (bx - ax)
                y = ay + gs[g] * (by - ay)
                p0[0] = 1.0
                p1[0] = 1.0
                for d in range(1, deg + 1):
                    p0[d] = p0[d - 1] * x
                    p1[d] = p1[d - 1] * y
                wc = gw[g] * cr
                for m in range(nm):
                    out[r, m] += wc * p0[mono_i[m]] * p1[mono_j[m]]
        for m in range(nm):
            out[r, m] /= 2.0 + mono_i[m] + mono_j[m]
    return out


@njit(cache=True, nogil=True)
def grid_candidates(lo_a, hi_a, lo_b, hi_b, origin, cell, shape, tol):
    """Pairs ``(i, j)`` with overlapping boxes, using a uniform bucket grid over ``b``."""
    nb = lo_b.shape[0]
    na = lo_a.shape[0]
    ncell = shape[0] * shape[1]
    start = np.zeros(ncell + 1, dtype=np.int64)
    cb = np.empty((nb, 4), dtype=np.int64)
    for j in range(nb):
        for d in range(2):
            c0 = int(np.floor((lo_b[j, d] - tol - origin[d]) / cell[d]))
            c1 = int(np.floor((hi_b[j, d] + tol - origin[d]) / cell[d]))
            cb[j, 2 * d] = min(max(c0, 0), shape[d] - 1)
            cb[j, 2 * d + 1] = min(max(c1, 0), shape[d] - 1)
        for ci in range(cb[j, 0], cb[j, 1] + 1):
            for cj in range(cb[j, 2], cb[j, 3] + 1):
                start[ci * shape[1] + cj + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    items = np.empty(start[ncell], dtype=np.int64)
    for j in range(nb):
        for ci in range(cb[j, 0], cb[j, 1] + 1):
            for cj in range(cb[j, 2], cb[j, 3] + 1):
                c = ci * shape[1] + cj
                items[fill[c]] = j
                fill[c] += 1
    seen = np.full(nb, -1, dtype=np.int64)
    cap = 8 * (na + nb) + 16
    out_i = np.empty(cap, dtype=np.int64)
    out_j = np.empty(cap, dtype=np.int64)
    m = 0
    for i in range(na):
        i0 = min(max(int(np.floor((lo_a[i, 0] - tol - origin[0]) / cell[0])), 0), shape[0] - 1)
        i1 = min(max(int(np.floor((hi_a[i, 0] + tol - origin[0]) / cell[0])), 0), shape[0] - 1)
        j0 = min(max(int(np.floor((lo_a[i, 1] - tol - origin[1]) / cell[1])), 0), shape[1] - 1)
        j1 = min(max(int(np.floor((hi_a[i, 1] + tol - origin[1]) / cell[1])), 0), shape[1] - 1)
        for ci in range(i0, i1 + 1):
            for cj in range(j0, j1 + 1):
                c = ci * shape[1] + cj
                for q in range(start[c], start[c + 1]):
                    j = items[q]
                    if seen[j] == i:
                        continue
                    seen[j] = i
                    if (lo_a[i, 0] <= hi_b[j, 0] + tol and lo_b[j, 0] <= hi_a[i, 0] + tol
                            and lo_a[i, 1] <= hi_b[j, 1] + tol and lo_b[j, 1] <= hi_a[i, 1] + tol):
                        if m == cap:
                            cap *= 2
                            ni = np.empty(cap, dtype=np.int64)
                            nj = np.empty(cap, dtype=np.int64)
                            ni[:m] = out_i[:m]
                            nj[:m] = out_j[:m]
                            out_i = ni
                            out_j = nj
                        out_i[m] = i
                        out_j[m] = j
                        m += 1
    return out_i[:m], out_j[:m]
