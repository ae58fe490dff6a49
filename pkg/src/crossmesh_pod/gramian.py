"""Snapshot gramian and cross matrices assembled directly across meshes.

Snapshots are grouped by mesh.  For every pair of meshes ``(u, w)`` a sparse
coupling matrix ``C_uw[k, l] = <v_k^u, v_l^w>`` is built once from the
overlay of the two meshes, and the whole block of the gramian follows as
``Y_u^T C_uw Y_w``, so a snapshot set on few meshes costs few overlays no
matter how many snapshots it holds.  Coupling matrices can additionally be
cached per mesh-id pair across calls (:class:`CouplingCache`).  Mesh pairs are always processed with the smaller id first, which
makes the result exactly symmetric and independent of scheduling.
"""
from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import cutgeom
from .fem import FeFunction, assemble_mass, assemble_stiffness
from .quadrature import triangle_rule

__all__ = [
    "InnerProductTag",
    "Gramian",
    "CrossMatrix",
    "CouplingCache",
    "coupling_matrix",
    "assemble_gramian",
    "assemble_stiffness_cross",
    "assemble_all",
    "couplings",
    "project_function",
    "project_exact",
    "assemble_nonlin_cross",
]


class InnerProductTag(str, Enum):
    """Inner product of the snapshot space: ``L2`` or full ``H1``."""

    L2 = "L2"
    H1 = "H1"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown inner product {value!r}; use 'L2' or 'H1'") from None


@dataclass(eq=False)
class Gramian:
    """Weighted snapshot correlation matrix ``K_ij = sqrt(a_i a_j) <y_i, y_j>_X``."""

    matrix: np.ndarray
    tag: InnerProductTag
    snapshot_ref: object = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tag = InnerProductTag.parse(self.tag)


@dataclass(eq=False)
class CrossMatrix:
    """Weighted cross matrix, e.g. ``sqrt(a_i a_j) a(y_i, y_j)`` for ``role="stiffness"``."""

    matrix: np.ndarray
    role: str
    snapshot_ref: object = None
    info: dict = field(default_factory=dict)


class CouplingCache:
    """Thread-safe cache of coupling matrices keyed by ``(id_a, id_b, kind, method)``.

    Concurrent misses may compute the same entry twice; the first insert wins.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def get(self, key, compute):
        with self._lock:
            hit = self._data.get(key)
        if hit is not None:
            return hit
        value = compute()
        with self._lock:
            return self._data.setdefault(key, value)

    def peek(self, key):
        with self._lock:
            return self._data.get(key)

    def __len__(self):
        return len(self._data)

    def clear(self):
        with self._lock:
            self._data.clear()


def _scatter(rows, cols, local, shape):
    r = np.repeat(rows, cols.shape[1], axis=1).ravel()
    c = np.tile(cols, (1, rows.shape[1])).ravel()
    return sp.csr_matrix((local.ravel(), (r, c)), shape=shape)


def _couplings_uncached(mesh_a, mesh_b, kinds, method):
    """Coupling matrices of several kinds from one overlay."""
    if mesh_a is mesh_b and method == "auto":
        ops = {"L2": assemble_mass, "H1semi": assemble_stiffness}
        return {k: ops[k](mesh_a, eliminate=False) for k in kinds}
    ov = cutgeom.overlay([mesh_a, mesh_b], method=method)
    pa, pb = ov.parents[:, 0], ov.parents[:, 1]
    rows, cols = mesh_a.triangles[pa], mesh_b.triangles[pb]
    shape = (mesh_a.n_vertices, mesh_b.n_vertices)
    out = {}
    for kind in kinds:
        if kind == "L2":
            local = cutgeom.integrate_products(ov, [ov.affine(0), ov.affine(1)])
        else:
            ga = mesh_a.gradients[pa]
            gb = mesh_b.gradients[pb]
            local = ov.areas[:, None, None] * np.einsum("kid,kjd->kij", ga, gb)
        out[kind] = _scatter(rows, cols, local, shape)
    return out


def _base_kinds(kinds):
    base = []
    for k in kinds:
        for b in (("L2", "H1semi") if k == "H1" else (k,)):
            if b not in ("L2", "H1semi"):
                raise ValueError(f"unknown coupling kind {k!r}")
            if b not in base:
                base.append(b)
    return tuple(base)


def couplings(mesh_a, mesh_b, kinds=("L2",), method="auto", cache=None):
    """Dict ``kind -> coupling_matrix(mesh_a, mesh_b, kind)`` sharing one overlay."""
    base = _base_kinds(kinds)
    flip = mesh_b.id < mesh_a.id
    a, b = (mesh_b, mesh_a) if flip else (mesh_a, mesh_b)
    if cache is None:
        got = _couplings_uncached(a, b, base, method)
    else:
        # ids alone are not unique across processes' families; pin the objects too
        got = {}
        missing = []
        for k in base:
            key = (a.id, b.id, id(a), id(b), k, method)
            hit = cache.peek(key)
            if hit is None:
                missing.append(k)
            else:
                got[k] = hit
        if missing:
            fresh = _couplings_uncached(a, b, tuple(missing), method)
            for k in missing:
                got[k] = cache.get((a.id, b.id, id(a), id(b), k, method), lambda k=k: fresh[k])
    if flip:
        got = {k: v.T.tocsr() for k, v in got.items()}
    out = {}
    for k in kinds:
        out[k] = got["L2"] + got["H1semi"] if k == "H1" else got[k]
    return out


def coupling_matrix(mesh_a, mesh_b, kind="L2", method="auto", cache=None):
    """Sparse matrix of basis products ``<v_k^a, v_l^b>`` between two meshes.

    Parameters
    ----------
    kind : {"L2", "H1semi", "H1"}
    method : {"auto", "nested", "clip"}
        Overlay construction; ``"auto"`` uses the mesh operators directly
        when both meshes are the same object.
    cache : CouplingCache, optional
        Shared cache; without one every call recomputes.
    """
    return couplings(mesh_a, mesh_b, (kind,), method, cache)[kind]


def _groups(s):
    """Snapshot indices grouped by mesh, groups ordered by mesh id."""
    groups = {}
    for j, y in enumerate(s.snapshots):
        groups.setdefault(y.mesh_id, []).append(j)
    out = []
    for mid in sorted(groups):
        idx = np.array(groups[mid])
        mesh = s.mesh(mid)
        Y = np.column_stack([s.snapshots[j].coeffs for j in idx])
        out.append((mesh, idx, Y))
    return out


def _pairwise(s, kinds, method, workers, cache):
    groups = _groups(s)
    n = len(s)
    out = {k: np.zeros((n, n)) for k in kinds}
    pairs = [(u, w) for u in range(len(groups)) for w in range(u, len(groups))]

    def block(pair):
        u, w = pair
        mu, iu, Yu = groups[u]
        mw, iw, Yw = groups[w]
        res = {}
        for k, C in couplings(mu, mw, kinds, method, cache).items():
            B = Yu.T @ (C @ Yw)
            res[k] = 0.5 * (B + B.T) if u == w else B
        return res

    t0 = time.perf_counter()
    if workers and workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(block, pairs))
    else:
        blocks = [block(p) for p in pairs]
    for (u, w), res in zip(pairs, blocks):
        iu, iw = groups[u][1], groups[w][1]
        for k, B in res.items():
            out[k][np.ix_(iu, iw)] = B
            out[k][np.ix_(iw, iu)] = B.T
    sa = np.sqrt(s.weights)
    info = {"mesh_pairs": len(pairs), "entries": n * (n + 1) // 2,
            "seconds": time.perf_counter() - t0, "workers": int(workers or 1)}
    return {k: sa[:, None] * G * sa[None, :] for k, G in out.items()}, info


def assemble_gramian(s, tag="L2", workers=1, method="auto", cache=None):
    """Gramian of a snapshot set in ``L2`` or ``H1``.

    Parameters
    ----------
    s : SnapshotSet
    tag : InnerProductTag or str
    workers : int
        Thread count for mesh-pair blocks.
    method : {"auto", "nested", "clip"}
        Overlay path, mainly for cross-checking the two paths.
    """
    tag = InnerProductTag.parse(tag)
    mats, info = _pairwise(s, (tag.value,), method, workers, cache)
    return Gramian(mats[tag.value], tag, s, info)


def assemble_stiffness_cross(s, workers=1, method="auto", cache=None):
    """``sqrt(a_i a_j) int grad y_i . grad y_j`` for all snapshot pairs."""
    mats, info = _pairwise(s, ("H1semi",), method, workers, cache)
    return CrossMatrix(mats["H1semi"], "stiffness", s, info)


def assemble_all(s, tag="L2", workers=1, method="auto", cache=None):
    """Gramian in ``tag``, the L2 gramian and the stiffness cross matrix in one pass.

    Each mesh pair is overlaid once.  Returns ``(gramian, mass, stiffness)``;
    for ``tag="L2"`` the first two are the same object.
    """
    tag = InnerProductTag.parse(tag)
    mats, info = _pairwise(s, ("L2", "H1semi"), method, workers, cache)
    mass = Gramian(mats["L2"], InnerProductTag.L2, s, dict(info))
    stiff = CrossMatrix(mats["H1semi"], "stiffness", s, dict(info))
    if tag is InnerProductTag.L2:
        return mass, mass, stiff
    return Gramian(mats["L2"] + mats["H1semi"], tag, s, dict(info)), mass, stiff


def project_function(s, w, tag="L2", t=None, cache=None, degree=8):
    """Weighted projections ``sqrt(a_j) <w, y_j>_X``.

    ``w`` is either an :class:`FeFunction` on any mesh, or a callable
    (called as ``w(t, x)`` when ``t`` is given, else ``w(x)``).  For a
    callable the L2 part is integrated with a degree-``degree`` triangle
    rule on each snapshot mesh; the H1 seminorm part (tag H1 only) uses
    the nodal interpolant.

    Notes
    -----
    Interpolating ``w`` separately on every snapshot mesh would give a
    slightly different functional per mesh.  The small-eigenvalue modes
    amplify that mismatch by ``1/sqrt(lambda)``, so the quadrature form
    is used.
    """
    tag = InnerProductTag.parse(tag)
    if not isinstance(w, FeFunction):
        fn = w if t is None else (lambda x: w(t, x))
        out, _ = project_exact(s, fn, degree)
        if tag is InnerProductTag.H1:
            for mesh, idx, Y in _groups(s):
                vals = np.asarray(fn(mesh.points), dtype=float)
                out[idx] += (assemble_stiffness(mesh, eliminate=False) @ vals) @ Y
        return np.sqrt(s.weights) * out
    out = np.zeros(len(s))
    for mesh, idx, Y in _groups(s):
        C = coupling_matrix(w.mesh, mesh, tag.value, cache=cache)
        out[idx] = (C.T @ w.coeffs) @ Y
    return np.sqrt(s.weights) * out


def project_exact(s, fn, degree=8):
    """``<fn, y_j>_{L2}`` (unweighted) by high-order quadrature on each snapshot mesh.

    ``fn`` maps points ``(M, 2)`` to values.  Also returns ``||fn||^2``
    estimated on the first snapshot's mesh.
    """
    bary, wq = triangle_rule(degree)
    out = np.zeros(len(s))
    norm2 = None
    for mesh, idx, Y in _groups(s):
        x = np.einsum("qi,kid->kqd", bary, mesh.corners)
        fv = np.asarray(fn(x.reshape(-1, 2)), dtype=float).reshape(x.shape[:2])
        aw = mesh.areas[:, None] * wq[None, :]
        local = np.einsum("kq,qi->ki", aw * fv, bary)
        vec = np.bincount(mesh.triangles.ravel(), local.ravel(), minlength=mesh.n_vertices)
        out[idx] = vec @ Y
        if norm2 is None:
            norm2 = float(np.sum(aw * fv ** 2))
    return out, norm2


def _fe_affine(ov, which, y):
    return ov.affine(which, y.coeffs)


def assemble_nonlin_cross(s, j, c, cache=None):
    """Cross terms of the cubic nonlinearity ``N(y) = c y^3`` linearised at ``y_j``.

    Returns
    -------
    N : (n+1,) ndarray
        ``N_k = <c y_j^3, sqrt(a_k) y_k>``.
    Ny : (n+1,) ndarray
        ``<N'(y_j) y_j, sqrt(a_k) y_k> = 3 N``.
    NY : (n+1, n+1) ndarray
        ``NY_rp = <3 c y_j^2 sqrt(a_p) y_p, sqrt(a_r) y_r>``, symmetric.

    ``y_j^3`` is the exact cube of the P1 field; all integrands are
    polynomials of degree 4 on the cut pieces.
    """
    n = len(s)
    if c == 0:
        return np.zeros(n), np.zeros(n), np.zeros((n, n))
    yj = s.snapshots[j]
    mj = yj.mesh
    groups = _groups(s)
    sa = np.sqrt(s.weights)
    N = np.zeros(n)
    for mesh, idx, Y in groups:
        ov = cutgeom.overlay([mj, mesh]) if mesh is not mj else cutgeom.overlay([mj])
        f = _fe_affine(ov, 0, yj)
        hats = ov.affine(len(ov.meshes) - 1)
        local = cutgeom.integrate_products(ov, [f, f, f, hats])[:, 0, 0, 0, :]
        rows = mesh.triangles[ov.parents[:, -1]]
        vec = np.bincount(rows.ravel(), local.ravel(), minlength=mesh.n_vertices)
        N[idx] = c * (vec @ Y)
    N *= sa
    NY = np.zeros((n, n))
    for u in range(len(groups)):
        for w in range(u, len(groups)):
            mu, iu, Yu = groups[u]
            mw, iw, Yw = groups[w]
            distinct = []
            for m in (mj, mu, mw):
                if all(m is not d for d in distinct):
                    distinct.append(m)
            ov = cutgeom.overlay(distinct)
            pos = {id(m): k for k, m in enumerate(distinct)}
            f = _fe_affine(ov, pos[id(mj)], yj)
            hu = ov.affine(pos[id(mu)])
            hw = ov.affine(pos[id(mw)])
            local = cutgeom.integrate_products(ov, [f, f, hu, hw])[:, 0, 0]
            C = _scatter(mu.triangles[ov.parents[:, pos[id(mu)]]],
                         mw.triangles[ov.parents[:, pos[id(mw)]]], local,
                         (mu.n_vertices, mw.n_vertices))
            B = 3.0 * c * (Yu.T @ (C @ Yw))
            if u == w:
                B = 0.5 * (B + B.T)
            NY[np.ix_(iu, iw)] = B
            NY[np.ix_(iw, iu)] = B.T
    NY = sa[:, None] * NY * sa[None, :]
    return N, 3.0 * N, NY
