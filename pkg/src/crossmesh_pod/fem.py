"""P1 finite elements and implicit Euler for the semilinear heat equation.

The model problem is

    y_t - Laplace(y) + c y^3 = f   in (0, T) x Omega,   y = 0 on the boundary,
    y(0) = g,

discretised with continuous piecewise linear elements and implicit Euler.
The load ``int f(t) v_i`` is integrated by triangle quadrature.  Each snapshot may live on its own mesh; moving
between meshes uses nodal (Lagrange) interpolation.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import mesh as _mesh
from .errors import NewtonError
from .quadrature import triangle_rule

__all__ = [
    "FeFunction",
    "TimeGrid",
    "SnapshotSet",
    "HeatProblem",
    "trapezoidal_weights",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load",
    "assemble_cubic",
    "interpolate",
    "nodal_interpolant",
    "step_implicit_euler",
    "edge_jumps",
    "error_indicator",
    "mark_bulk",
    "solve_fixed",
    "solve_adaptive",
    "solve_disturbed",
    "disturb_points",
    "l2_error",
]

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 25


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Nodal P1 coefficients bound to one mesh."""

    mesh: _mesh.Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def mesh_id(self):
        return self.mesh.id

    def __call__(self, points):
        """Evaluate at points; raises PointNotFoundError outside the mesh."""
        tri, bary = self.mesh.locate_points(points)
        return np.einsum("mi,mi->m", self.coeffs[self.mesh.triangles[tri]], bary)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time instances ``t_0 < ... < t_n``."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if len(t) < 2:
            raise ValueError("a time grid needs at least two instances")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ValueError("time instances must be finite and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T, n, t0=0.0):
        return cls(t0 + (T - t0) * np.arange(n + 1) / n)

    @property
    def steps(self):
        return np.diff(self.times)

    @property
    def n(self):
        return len(self.times) - 1

    @property
    def T(self):
        return float(self.times[-1] - self.times[0])

    def __len__(self):
        return len(self.times)


def trapezoidal_weights(times):
    """Trapezoidal weights ``alpha_j`` on a (possibly nonuniform) grid.

    Examples
    --------
    >>> trapezoidal_weights([0.0, 1.0, 3.0])
    array([0.5, 1.5, 1. ])
    """
    dt = np.diff(np.asarray(times, dtype=float))
    w = np.zeros(len(dt) + 1)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


@dataclass(eq=False)
class SnapshotSet:
    """Snapshots ``y_0..y_n`` on per-instance meshes.

    ``meshes`` maps mesh id to mesh; entries may share meshes.
    """

    grid: TimeGrid
    snapshots: list
    meshes: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.snapshots) != len(self.grid):
            raise ValueError(f"{len(self.snapshots)} snapshots for {len(self.grid)} time instances")
        for y in self.snapshots:
            self.meshes.setdefault(y.mesh_id, y.mesh)
            if self.meshes[y.mesh_id] is not y.mesh:
                raise ValueError(f"two different meshes registered under id {y.mesh_id}")
        self.weights = trapezoidal_weights(self.grid.times)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, j):
        return self.snapshots[j]

    @property
    def mesh_ids(self):
        return [y.mesh_id for y in self.snapshots]

    @property
    def vertex_counts(self):
        return [y.mesh.n_vertices for y in self.snapshots]

    def mesh(self, mesh_id):
        try:
            return self.meshes[mesh_id]
        except KeyError:
            raise ValueError(f"mesh {mesh_id} is not registered in this snapshot set") from None


@dataclass
class HeatProblem:
    """Data of the semilinear heat equation with homogeneous Dirichlet conditions.

    ``forcing(t, x)`` and ``initial(x)`` take points of shape ``(M, 2)``.
    """

    c: float
    forcing: Callable
    initial: Callable
    analytic: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError("cubic coefficient c must be nonnegative")


# -- assembly -----------------------------------------------------------------

_OPS = weakref.WeakKeyDictionary()


def _ops(mesh):
    ops = _OPS.get(mesh)
    if ops is None:
        ops = _OPS[mesh] = {}
    return ops


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _restrict(a, mesh, eliminate):
    if not eliminate:
        return a
    keep = mesh.interior_vertices
    return a[keep][:, keep].tocsr()


def assemble_mass(mesh, eliminate=True):
    """P1 mass matrix; boundary rows and columns removed when ``eliminate``."""
    ops = _ops(mesh)
    if "M" not in ops:
        local = mesh.areas[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
        ops["M"] = _scatter(mesh, local)
    return _restrict(ops["M"], mesh, eliminate)


def assemble_stiffness(mesh, eliminate=True):
    """P1 stiffness matrix of ``int grad u . grad v``."""
    ops = _ops(mesh)
    if "A" not in ops:
        g = mesh.gradients
        local = mesh.areas[:, None, None] * np.einsum("kid,kjd->kij", g, g)
        ops["A"] = _scatter(mesh, local)
    return _restrict(ops["A"], mesh, eliminate)


def assemble_load(mesh, t, forcing, eliminate=True, degree=8):
    """Load vector ``int f(t) v_i`` by degree-``degree`` triangle quadrature.

    The reduced model projects ``f`` with the same rule, so a full-rank
    reduced model sees exactly the FE load functional.
    """
    bary, w = triangle_rule(degree)
    x = np.einsum("qi,kid->kqd", bary, mesh.corners)
    fv = np.asarray(forcing(t, x.reshape(-1, 2)), dtype=float).reshape(x.shape[:2])
    vec = np.einsum("kq,qi->ki", mesh.areas[:, None] * w[None, :] * fv, bary)
    b = np.bincount(mesh.triangles.ravel(), vec.ravel(), minlength=mesh.n_vertices)
    return b[mesh.interior_vertices] if eliminate else b


def assemble_cubic(mesh, coeffs, jacobian=True):
    """Cubic term ``int y^3 v_i`` and its Jacobian ``3 int y^2 v_i v_k``.

    Integrated exactly (degree 5) on every triangle.  Returns full-size
    arrays; the caller restricts to interior dofs.
    """
    bary, w = triangle_rule(5)
    nodal = np.asarray(coeffs)[mesh.triangles]          # (K, 3)
    yq = nodal @ bary.T                                 # (K, nq)
    aw = mesh.areas[:, None] * w[None, :]
    vec = np.einsum("kq,qi->ki", aw * yq ** 3, bary)
    n = mesh.n_vertices
    out = np.bincount(mesh.triangles.ravel(), vec.ravel(), minlength=n)
    if not jacobian:
        return out
    local = 3.0 * np.einsum("kq,qi,qj->kij", aw * yq ** 2, bary, bary)
    return out, _scatter(mesh, local)


# -- interpolation ------------------------------------------------------------

def nodal_interpolant(mesh, g, t=None):
    """Lagrange interpolant of ``g`` with boundary values set to zero."""
    x = mesh.points
    vals = np.asarray(g(x) if t is None else g(t, x), dtype=float).copy()
    vals[mesh.boundary] = 0.0
    return FeFunction(mesh, vals)


def interpolate(y, target):
    """Lagrange interpolation of ``y`` onto the nodes of mesh ``target``."""
    if target is y.mesh:
        return FeFunction(target, y.coeffs)
    vals = y(target.points)
    vals[target.boundary] = 0.0
    return FeFunction(target, vals)


# -- time stepping ------------------------------------------------------------

def _linear_factor(mesh, dt):
    ops = _ops(mesh)
    key = ("lu", float(dt))
    if key not in ops:
        lhs = (assemble_mass(mesh) / dt + assemble_stiffness(mesh)).tocsc()
        ops[key] = spla.splu(lhs)
    return ops[key]


def step_implicit_euler(mesh, y_prev, t, dt, problem):
    """One implicit Euler step on ``mesh``.

    ``y_prev`` must already live on ``mesh``.  With ``problem.c > 0`` the
    cubic term is handled by plain Newton iteration.

    Raises
    ------
    NewtonError
        If the residual does not drop below ``1e-10 * max(1, |rhs|)``
        within 25 iterations.
    """
    if y_prev.mesh is not mesh:
        raise ValueError("previous iterate must be interpolated onto the current mesh first")
    inner = mesh.interior_vertices
    M = assemble_mass(mesh)
    rhs = M @ y_prev.coeffs[inner] / dt + assemble_load(mesh, t, problem.forcing)
    full = np.zeros(mesh.n_vertices)
    if problem.c == 0:
        full[inner] = _linear_factor(mesh, dt).solve(rhs)
        return FeFunction(mesh, full)

    lhs = M / dt + assemble_stiffness(mesh)
    full[inner] = y_prev.coeffs[inner]
    scale = max(1.0, float(np.linalg.norm(rhs)))
    res = np.inf
    for _ in range(NEWTON_MAXITER):
        nl, jac = assemble_cubic(mesh, full)
        r = lhs @ full[inner] + problem.c * nl[inner] - rhs
        res = float(np.linalg.norm(r))
        if res <= NEWTON_TOL * scale:
            return FeFunction(mesh, full)
        J = (lhs + problem.c * jac[inner][:, inner]).tocsc()
        full[inner] -= spla.spsolve(J, r)
    nl = assemble_cubic(mesh, full, jacobian=False)
    res = float(np.linalg.norm(lhs @ full[inner] + problem.c * nl[inner] - rhs))
    if res <= NEWTON_TOL * scale:
        return FeFunction(mesh, full)
    raise NewtonError(f"Newton did not converge at t={t:g} (residual {res:.3e})", res)


# -- a posteriori indicator and marking -----------------------------------------

def edge_jumps(mesh, y):
    """Normal-derivative jump ``[grad y] . nu`` on every interior edge.

    Returns ``(edge index, jump)``; the sign follows the edge orientation.
    """
    uniq, _ = mesh.edges
    et = mesh.edge_triangles
    inner = np.flatnonzero(et[:, 1] >= 0)
    g = np.einsum("ki,kid->kd", np.asarray(y.coeffs)[mesh.triangles], mesh.gradients)
    p = mesh.points[uniq[inner]]
    tangent = p[:, 1] - p[:, 0]
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    jump = np.einsum("ed,ed->e", g[et[inner, 0]] - g[et[inner, 1]], normal)
    return inner, jump


def error_indicator(mesh, y):
    """Edge-jump indicator accumulated per triangle.

    For P1 the gradient jump is constant along an edge, so
    ``eta_E = sqrt(h_E) * ||jump||_{L2(E)} = h_E |jump|``.  Each edge
    contributes half of ``eta_E`` to both neighbours.
    """
    inner, jump = edge_jumps(mesh, y)
    uniq, _ = mesh.edges
    p = mesh.points[uniq[inner]]
    h = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    eta = h * np.abs(jump)
    et = mesh.edge_triangles[inner]
    out = np.zeros(mesh.n_triangles)
    np.add.at(out, et[:, 0], 0.5 * eta)
    np.add.at(out, et[:, 1], 0.5 * eta)
    return out


def mark_bulk(eta, refine_fraction, coarsen_fraction):
    """Bulk marking on ``eta**2``.

    Refinement gets the smallest set of largest indicators carrying at least
    ``refine_fraction`` of the total; coarsening gets the largest set of
    smallest indicators carrying at most ``coarsen_fraction``.  Returns two
    index arrays, disjoint.
    """
    for name, frac in (("refine_fraction", refine_fraction), ("coarsen_fraction", coarsen_fraction)):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    e2 = np.asarray(eta, dtype=float) ** 2
    total = e2.sum()
    empty = np.zeros(0, dtype=np.int64)
    if total <= 0:
        return empty, empty
    order = np.argsort(-e2, kind="stable")
    refine_set = empty
    if refine_fraction > 0:
        csum = np.cumsum(e2[order])
        k = int(np.searchsorted(csum, refine_fraction * total * (1 - 1e-12))) + 1
        refine_set = order[:min(k, len(order))]
    coarsen_set = empty
    if coarsen_fraction > 0:
        asc = order[::-1]
        csum = np.cumsum(e2[asc])
        k = int(np.searchsorted(csum, coarsen_fraction * total, side="right"))
        coarsen_set = np.setdiff1d(asc[:k], refine_set)
    return np.sort(refine_set), np.sort(coarsen_set)


def _adapt(mesh, y, refine_fraction, coarsen_fraction, max_generation):
    eta = error_indicator(mesh, y)
    ref, coa = mark_bulk(eta, refine_fraction, coarsen_fraction)
    if max_generation is not None:
        ref = ref[mesh.generations[ref] < max_generation]
    if not len(ref) and not len(coa):
        return mesh
    out = _mesh.refine(mesh, mesh.triangle_ids[ref]) if len(ref) else mesh
    if len(coa):
        ids = np.intersect1d(mesh.triangle_ids[coa], out.triangle_ids)
        if len(ids):
            out = _mesh.coarsen(out, ids)
    if np.array_equal(out.triangle_ids, mesh.triangle_ids):
        return mesh
    return out


# -- drivers ------------------------------------------------------------------

def solve_fixed(problem, grid, mesh):
    """Implicit Euler on one fixed mesh."""
    y = nodal_interpolant(mesh, problem.initial)
    out = [y]
    for t, dt in zip(grid.times[1:], grid.steps):
        y = step_implicit_euler(mesh, y, t, dt, problem)
        out.append(y)
    return SnapshotSet(grid, out)


def solve_adaptive(problem, grid, initial_mesh, refine_fraction=0.0, coarsen_fraction=0.0,
                   max_generation=None):
    """Implicit Euler with one adapt-and-resolve cycle per time step.

    Every step interpolates the previous snapshot onto the current mesh,
    solves, marks with :func:`mark_bulk`, adapts, and (if the mesh changed)
    solves once more from the previous snapshot interpolated onto the
    adapted mesh.  The initial condition is adapted the same way.  With zero
    fractions this reproduces :func:`solve_fixed` bit for bit.
    """
    fr, fc = refine_fraction, coarsen_fraction
    mark_bulk(np.zeros(1), fr, fc)
    mesh = initial_mesh
    y = nodal_interpolant(mesh, problem.initial)
    new = _adapt(mesh, y, fr, fc, max_generation)
    if new is not mesh:
        mesh = new
        y = nodal_interpolant(mesh, problem.initial)
    out = [y]
    for t, dt in zip(grid.times[1:], grid.steps):
        prev = y
        y = step_implicit_euler(mesh, interpolate(prev, mesh), t, dt, problem)
        new = _adapt(mesh, y, fr, fc, max_generation)
        if new is not mesh:
            mesh = new
            y = step_implicit_euler(mesh, interpolate(prev, mesh), t, dt, problem)
        out.append(y)
    return SnapshotSet(grid, out)


def disturb_points(points, theta, dt):
    """One node relocation step ``x0 += theta x0 (x0-1) dt/10``, ``x1 += theta/2 x1 (x1-1) dt/10``."""
    p = np.array(points, dtype=float)
    s = theta * dt / 10.0
    p[:, 0] += s * p[:, 0] * (p[:, 0] - 1.0)
    p[:, 1] += 0.5 * s * p[:, 1] * (p[:, 1] - 1.0)
    return p


def solve_disturbed(problem, grid, base_mesh, theta):
    """Implicit Euler where every step relocates the mesh nodes.

    Nodes move cumulatively by :func:`disturb_points`; the previous solution is
    interpolated onto the relocated mesh.  ``theta=0`` reuses ``base_mesh``.

    Raises
    ------
    ValueError
        When a relocated interior node leaves the open unit square or a
        triangle inverts.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    mesh = base_mesh
    y = nodal_interpolant(mesh, problem.initial)
    out = [y]
    inner = base_mesh.interior_vertices
    for t, dt in zip(grid.times[1:], grid.steps):
        if theta:
            pts = disturb_points(mesh.points, theta, dt)
            q = pts[inner]
            if np.any(q <= 0.0) or np.any(q >= 1.0):
                raise ValueError(f"theta={theta} moves interior nodes out of the unit square")
            mesh = mesh.with_points(pts)
        y = step_implicit_euler(mesh, interpolate(y, mesh), t, dt, problem)
        out.append(y)
    return SnapshotSet(grid, out)


def l2_error(y, exact, degree=6):
    """``||y - exact||_{L2}`` by triangle quadrature on ``y``'s mesh."""
    m = y.mesh
    bary, w = triangle_rule(degree)
    x = np.einsum("qi,kid->kqd", bary, m.corners)
    uh = np.asarray(y.coeffs)[m.triangles] @ bary.T
    ex = np.asarray(exact(x.reshape(-1, 2)), dtype=float).reshape(uh.shape)
    return float(np.sqrt(np.sum(m.areas[:, None] * w[None, :] * (uh - ex) ** 2)))
