"""Conforming 2D triangulations with newest-vertex bisection.

Every mesh belongs to a *refinement family*: an append-only forest of
triangles created from one initial triangulation by bisection.  A mesh is
an immutable view on the family given by its set of active (leaf)
triangles.  Two meshes of the same family are nested in the sense that any
two of their active triangles either overlap in one of them or only along
a set of measure zero; the cross-mesh integration uses that fact.

Examples
--------
>>> m = make_unit_square(2, 2)
>>> fine = refine(m, m.triangle_ids[:2])
>>> fine.n_vertices > m.n_vertices
True
"""
import itertools
import json
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import PointNotFoundError

__all__ = [
    "Vertex",
    "Triangle",
    "Mesh",
    "make_unit_square",
    "refine",
    "coarsen",
    "locate",
    "check_conformity",
    "load_mesh",
    "save_mesh",
]

_mesh_ids = itertools.count()
_mesh_id_lock = threading.Lock()

LOCATE_TOL = 1e-12


def _next_mesh_id():
    with _mesh_id_lock:
        return next(_mesh_ids)


def _reserve_mesh_id(value):
    """Make sure freshly created ids stay above an id read from disk."""
    global _mesh_ids
    with _mesh_id_lock:
        current = next(_mesh_ids)
        _mesh_ids = itertools.count(max(current, value + 1))


@dataclass(frozen=True)
class Vertex:
    id: int
    x: tuple
    boundary: bool


@dataclass(frozen=True)
class Triangle:
    id: int
    vertices: tuple
    refinement_edge: int
    parent: int | None
    children: tuple | None
    generation: int


class _Family:
    """Append-only forest of triangles shared by all meshes of one family."""

    def __init__(self, points, boundary, triangles, refinement_edges):
        self.coords = [tuple(map(float, p)) for p in points]
        self.vboundary = [bool(b) for b in boundary]
        self.tverts = [tuple(int(v) for v in t) for t in triangles]
        self.tref = [int(r) for r in refinement_edges]
        self.tparent = [-1] * len(self.tverts)
        self.tchildren = [None] * len(self.tverts)
        self.tgen = [0] * len(self.tverts)
        self.tnewest = [-1] * len(self.tverts)
        self.midpoints = {}
        self.lock = threading.Lock()

    def refinement_edge_key(self, t):
        v = self.tverts[t]
        r = self.tref[t]
        a, b = v[(r + 1) % 3], v[(r + 2) % 3]
        return (a, b) if a < b else (b, a)

    def bisect(self, t, boundary_edge):
        """Children of ``t``, created on first use and reused afterwards."""
        if self.tchildren[t] is not None:
            return self.tchildren[t]
        v = self.tverts[t]
        r = self.tref[t]
        a, b, c = v[r], v[(r + 1) % 3], v[(r + 2) % 3]
        key = (b, c) if b < c else (c, b)
        m = self.midpoints.get(key)
        if m is None:
            pb, pc = self.coords[b], self.coords[c]
            self.coords.append((0.5 * (pb[0] + pc[0]), 0.5 * (pb[1] + pc[1])))
            self.vboundary.append(bool(boundary_edge))
            m = len(self.coords) - 1
            self.midpoints[key] = m
        # refinement edge of each child is the edge opposite the new vertex
        first = len(self.tverts)
        self.tverts.extend([(a, b, m), (a, m, c)])
        self.tref.extend([2, 1])
        self.tparent.extend([t, t])
        self.tchildren.extend([None, None])
        g = self.tgen[t] + 1
        self.tgen.extend([g, g])
        self.tnewest.extend([m, m])
        self.tchildren[t] = (first, first + 1)
        return self.tchildren[t]


class Mesh:
    """Active triangles of a refinement family.

    Vertices are numbered locally ``0..n_vertices-1`` in increasing order of
    their family index; triangles are ordered by increasing triangle id, so
    "lowest triangle id" and "lowest local index" coincide.
    """

    def __init__(self, family, leaves, mesh_id=None):
        self.family = family
        self.triangle_ids = np.array(sorted(int(t) for t in leaves), dtype=np.int64)
        self.id = _next_mesh_id() if mesh_id is None else int(mesh_id)
        tv = np.array([family.tverts[t] for t in self.triangle_ids], dtype=np.int64)
        self.vertex_ids, inverse = np.unique(tv.ravel(), return_inverse=True)
        self.triangles = inverse.reshape(-1, 3)
        coords = np.array(family.coords, dtype=float)
        self.points = coords[self.vertex_ids]
        self.boundary = np.array([family.vboundary[v] for v in self.vertex_ids], dtype=bool)
        self.points.setflags(write=False)
        self.triangles.setflags(write=False)
        self.boundary.setflags(write=False)

    @classmethod
    def from_arrays(cls, points, triangles, boundary=None, refinement_edges=None,
                    mesh_id=None):
        """Build a generation-0 mesh from raw arrays.

        Triangles are reoriented counterclockwise.  Without explicit
        refinement edges the longest edge of each triangle is used.
        """
        points = np.asarray(points, dtype=float)
        tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise ValueError("vertex coordinates must be finite")
        p = points[tris]
        area2 = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        if np.any(area2 == 0.0):
            raise ValueError("degenerate triangle in input")
        flip = area2 < 0
        if refinement_edges is None:
            tris[flip] = tris[flip][:, [0, 2, 1]]
            p = points[tris]
            lengths = np.stack([
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            ], axis=1)
            ref = np.argmax(lengths >= lengths.max(axis=1, keepdims=True) * (1 - 1e-12), axis=1)
        else:
            ref = np.asarray(refinement_edges, dtype=np.int64).copy()
            # swapping local vertices 1 and 2 keeps the opposite-vertex labels of 0
            tris[flip] = tris[flip][:, [0, 2, 1]]
            swap = {0: 0, 1: 2, 2: 1}
            ref[flip] = [swap[int(r)] for r in ref[flip]]
        if boundary is None:
            boundary = _boundary_vertices(len(points), tris)
        family = _Family(points, boundary, tris, ref)
        return cls(family, range(len(tris)), mesh_id=mesh_id)

    # -- basic sizes -----------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def __repr__(self):
        return f"Mesh(id={self.id}, vertices={self.n_vertices}, triangles={self.n_triangles})"

    def vertex(self, i):
        return Vertex(int(i), tuple(self.points[i]), bool(self.boundary[i]))

    def triangle(self, tid):
        f = self.family
        tid = int(tid)
        parent = f.tparent[tid]
        return Triangle(tid, f.tverts[tid], f.tref[tid], None if parent < 0 else parent,
                        f.tchildren[tid], f.tgen[tid])

    @cached_property
    def generations(self):
        return np.array([self.family.tgen[t] for t in self.triangle_ids], dtype=np.int64)

    @cached_property
    def corners(self):
        """Triangle corner coordinates, shape ``(K, 3, 2)``."""
        return self.points[self.triangles]

    @cached_property
    def areas(self):
        c = self.corners
        return 0.5 * _cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @property
    def area(self):
        return float(np.sum(self.areas))

    @cached_property
    def gradients(self):
        """Constant gradients of the three local hat functions, ``(K, 3, 2)``."""
        c = self.corners
        twice = 2.0 * self.areas
        # grad lambda_i = rot90(p_{i+2} - p_{i+1}) / (2 |T|)
        e = np.stack([c[:, 2] - c[:, 1], c[:, 0] - c[:, 2], c[:, 1] - c[:, 0]], axis=1)
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / twice[:, None, None]

    @cached_property
    def edges(self):
        """Unique edges ``(E, 2)`` and the map ``(K, 3)`` from local edge to edge.

        Local edge ``k`` of a triangle is the edge opposite its vertex ``k``.
        """
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    @cached_property
    def edge_triangles(self):
        """For each edge, the (up to two) incident triangles; ``-1`` pads."""
        uniq, t2e = self.edges
        flat = t2e.ravel()
        tri = np.repeat(np.arange(len(t2e)), 3)
        order = np.lexsort((tri, flat))
        flat, tri = flat[order], tri[order]
        first = np.r_[True, flat[1:] != flat[:-1]]
        out = -np.ones((len(uniq), 2), dtype=np.int64)
        out[flat[first], 0] = tri[first]
        out[flat[~first], 1] = tri[~first]
        return out

    @cached_property
    def interior_vertices(self):
        return np.flatnonzero(~self.boundary)

    @cached_property
    def _index(self):
        return _GridIndex(self)

    def locate_points(self, points, tol=LOCATE_TOL):
        """Vectorised point location.

        Returns
        -------
        tri : (M,) ndarray of local triangle indices (lowest id on ties)
        bary : (M, 3) ndarray of barycentric coordinates
        """
        return self._index.locate(np.atleast_2d(np.asarray(points, dtype=float)), tol)

    def with_points(self, points):
        """Same connectivity, relocated vertices, in a fresh refinement family."""
        points = np.asarray(points, dtype=float)
        refs = [self.family.tref[t] for t in self.triangle_ids]
        p = points[self.triangles]
        if np.any(_cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]) <= 0):
            raise ValueError("relocated mesh has inverted or degenerate triangles")
        return Mesh.from_arrays(points, self.triangles, boundary=self.boundary,
                                refinement_edges=refs)

    def to_dict(self):
        return {
            "id": int(self.id),
            "vertices": self.points.tolist(),
            "boundary": [bool(b) for b in self.boundary],
            "triangles": self.triangles.tolist(),
        }


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _boundary_vertices(n, tris):
    e = np.sort(np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    flags = np.zeros(n, dtype=bool)
    flags[uniq[counts == 1].ravel()] = True
    return flags


class _GridIndex:
    """Uniform-grid bucket index over triangle bounding boxes."""

    def __init__(self, mesh):
        c = mesh.corners
        self.corners = c
        lo = c.min(axis=1)
        hi = c.max(axis=1)
        self.origin = mesh.points.min(axis=0)
        extent = np.maximum(mesh.points.max(axis=0) - self.origin, 1e-300)
        k = len(c)
        self.shape = (max(1, int(np.sqrt(k))),) * 2
        self.cell = extent / np.array(self.shape)
        i0, j0 = self._cell_of(lo - 1e-12 * extent)
        i1, j1 = self._cell_of(hi + 1e-12 * extent)
        tri_list, cell_list = [], []
        nx, ny = self.shape
        ni = i1 - i0 + 1
        nj = j1 - j0 + 1
        total = ni * nj
        tri_list = np.repeat(np.arange(k), total)
        offs = np.arange(total.sum()) - np.repeat(np.cumsum(total) - total, total)
        ii = np.repeat(i0, total) + offs // np.repeat(nj, total)
        jj = np.repeat(j0, total) + offs % np.repeat(nj, total)
        cell_list = ii * ny + jj
        order = np.lexsort((tri_list, cell_list))
        self.cell_tris = tri_list[order]
        self.cell_start = np.searchsorted(cell_list[order], np.arange(nx * ny + 1))
        p0 = c[:, 0]
        m = np.stack([c[:, 1] - p0, c[:, 2] - p0], axis=2)
        self.p0 = p0
        self.inv = np.linalg.inv(m)

    def _cell_of(self, x):
        ij = np.floor((x - self.origin) / self.cell).astype(np.int64)
        ij[:, 0] = np.clip(ij[:, 0], 0, self.shape[0] - 1)
        ij[:, 1] = np.clip(ij[:, 1], 0, self.shape[1] - 1)
        return ij[:, 0], ij[:, 1]

    def bary(self, tri, x):
        lam = np.einsum("kij,kj->ki", self.inv[tri], x - self.p0[tri])
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def locate(self, x, tol):
        m = len(x)
        i, j = self._cell_of(x)
        cell = i * self.shape[1] + j
        start = self.cell_start[cell]
        count = self.cell_start[cell + 1] - start
        result = -np.ones(m, dtype=np.int64)
        bary = np.zeros((m, 3))
        for slot in range(int(count.max()) if m else 0):
            todo = (result < 0) & (slot < count)
            if not todo.any():
                break
            rows = np.flatnonzero(todo)
            tri = self.cell_tris[start[rows] + slot]
            b = self.bary(tri, x[rows])
            ok = np.all(b >= -tol, axis=1) & np.all(b <= 1 + tol, axis=1)
            result[rows[ok]] = tri[ok]
            bary[rows[ok]] = b[ok]
        if np.any(result < 0):
            bad = x[np.flatnonzero(result < 0)[0]]
            raise PointNotFoundError(f"point {tuple(bad)} lies outside the mesh")
        return result, bary


# -- construction --------------------------------------------------------------

def make_unit_square(nx, ny=None):
    """Structured triangulation of ``[0, 1]^2`` with ``2 nx ny`` right triangles.

    Each cell is split along its diagonal, which is the refinement edge of
    both halves.
    """
    ny = nx if ny is None else ny
    if int(nx) < 1 or int(ny) < 1:
        raise ValueError("cell counts must be at least 1")
    nx, ny = int(nx), int(ny)
    xs, ys = np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    points = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris, refs = [], []
    for j in range(ny):
        for i in range(nx):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            refs.append(1)
            tris.append((v00, v11, v01))
            refs.append(2)
    boundary = (np.isclose(points[:, 0], 0) | np.isclose(points[:, 0], 1)
                | np.isclose(points[:, 1], 0) | np.isclose(points[:, 1], 1))
    return Mesh.from_arrays(points, tris, boundary=boundary, refinement_edges=refs)


class _Workspace:
    """Mutable leaf set with edge adjacency, used while refining/coarsening."""

    def __init__(self, mesh):
        self.f = mesh.family
        self.leaves = set(int(t) for t in mesh.triangle_ids)
        self.edge_map = {}
        for t in self.leaves:
            self._add(t)

    def _edge_keys(self, t):
        a, b, c = self.f.tverts[t]
        return [tuple(sorted(e)) for e in ((b, c), (c, a), (a, b))]

    def _add(self, t):
        for k in self._edge_keys(t):
            self.edge_map.setdefault(k, []).append(t)

    def _remove(self, t):
        for k in self._edge_keys(t):
            lst = self.edge_map[k]
            lst.remove(t)
            if not lst:
                del self.edge_map[k]

    def bisect(self, t):
        key = self.f.refinement_edge_key(t)
        children = self.f.bisect(t, boundary_edge=len(self.edge_map.get(key, ())) == 1)
        self._remove(t)
        self.leaves.discard(t)
        for ch in children:
            self._add(ch)
            self.leaves.add(ch)

    def refine_leaf(self, t, depth=0):
        if depth > 200:
            raise RuntimeError("refinement closure did not terminate")
        while t in self.leaves:
            key = self.f.refinement_edge_key(t)
            others = [u for u in self.edge_map.get(key, ()) if u != t]
            if not others:
                self.bisect(t)
                return
            u = others[0]
            if self.f.refinement_edge_key(u) == key:
                self.bisect(t)
                self.bisect(u)
                return
            self.refine_leaf(u, depth + 1)


def refine(mesh, marked):
    """Bisect the marked active triangles plus the closure needed for conformity.

    Parameters
    ----------
    mesh : Mesh
    marked : iterable of int
        Active triangle ids.

    Returns
    -------
    Mesh
        A new mesh (fresh id) of the same refinement family.
    """
    marked = sorted(set(int(t) for t in marked))
    active = set(int(t) for t in mesh.triangle_ids)
    bad = [t for t in marked if t not in active]
    if bad:
        raise ValueError(f"triangle ids {bad[:5]} are not active in mesh {mesh.id}")
    with mesh.family.lock:
        ws = _Workspace(mesh)
        for t in marked:
            ws.refine_leaf(t)
        return Mesh(mesh.family, ws.leaves)


def coarsen(mesh, marked):
    """Merge marked sibling pairs back into their parents where conformity permits.

    A newest vertex is removed only when every active triangle around it is
    marked and was created by the bisection that introduced that vertex
    (two triangles on the boundary, four inside).  Ineligible marks are
    skipped silently.
    """
    f = mesh.family
    marked = set(int(t) for t in marked)
    active = set(int(t) for t in mesh.triangle_ids)
    marked &= active
    incident = {}
    for t in active:
        for v in f.tverts[t]:
            incident.setdefault(v, []).append(t)
    leaves = set(active)
    changed = False
    for m in sorted({f.tnewest[t] for t in marked if f.tparent[t] >= 0}):
        around = incident[m]
        if len(around) not in (2, 4):
            continue
        if not all(t in marked and f.tnewest[t] == m for t in around):
            continue
        parents = {f.tparent[t] for t in around}
        if len(parents) * 2 != len(around):
            continue
        if not all(set(f.tchildren[p]) <= set(around) for p in parents):
            continue
        for t in around:
            leaves.discard(t)
        leaves.update(parents)
        changed = True
    if not changed:
        return mesh
    return Mesh(f, leaves)


def locate(mesh, point, tol=LOCATE_TOL):
    """Active triangle id containing ``point`` and its barycentric coordinates."""
    tri, bary = mesh.locate_points(np.asarray(point, dtype=float)[None, :], tol)
    return int(mesh.triangle_ids[tri[0]]), bary[0]


def check_conformity(mesh):
    """Raise ``AssertionError`` if the mesh has a hanging node.

    Every edge must have one or two incident triangles, and no vertex may
    lie strictly inside an edge that has only one incident triangle.
    """
    et = mesh.edge_triangles
    uniq, _ = mesh.edges
    n_inc = np.sum(et >= 0, axis=1)
    assert np.all(n_inc >= 1)
    single = uniq[n_inc == 1]
    pts = mesh.points
    for chunk in np.array_split(single, max(1, len(single) // 256)):
        if not len(chunk):
            continue
        a = pts[chunk[:, 0]][:, None, :]
        d = (pts[chunk[:, 1]] - pts[chunk[:, 0]])[:, None, :]
        w = pts[None, :, :] - a
        length2 = np.sum(d * d, axis=2)
        s = np.sum(w * d, axis=2) / length2
        off = np.abs(_cross(d, w)) / np.sqrt(length2)
        inside = (s > 1e-9) & (s < 1 - 1e-9) & (off < 1e-12)
        assert not inside.any(), "hanging node detected"


def save_mesh(mesh, path):
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)


def load_mesh(path):
    with open(path) as fh:
        data = json.load(fh)
    _reserve_mesh_id(int(data["id"]))
    return Mesh.from_arrays(data["vertices"], data["triangles"], boundary=data["boundary"],
                            mesh_id=data["id"])
