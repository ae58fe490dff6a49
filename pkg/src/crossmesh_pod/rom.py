"""Galerkin reduced-order model in POD coordinates.

With ``D = diag(1/sqrt(lambda))`` and ``Phi`` the retained eigenvectors,
the reduced implicit Euler step reads

    M_r (eta^j - eta^{j-1}) / dt_j + A_r eta^j + DN(eta^j) = F_j,

where ``M_r = D Phi^T K Phi D`` (L2 gramian), ``A_r = D Phi^T S Phi D``
(stiffness cross matrix) and ``F_j = D Phi^T Y* f(t_j)`` with
``(Y* f)_s = sqrt(alpha_s) <f, y_s>`` integrated by quadrature.  Everything is
built from gramian-level matrices; no common mesh is ever formed.

For ``c y^3`` the nonlinearity is linearised around the FE snapshot
``y_j`` and projected:

    DN(eta^j) ~ D Phi^T N^j + D Phi^T NY^j Phi D eta^j - D Phi^T Ny^j,

so each step is still one ``ell x ell`` linear solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gramian as _gr
from .errors import SingularSystemError
from .pod import information_content, pod_coefficients, projection_error

__all__ = ["RomSystem", "RomTrajectory", "build_rom", "project_loads", "step_rom", "solve_rom",
           "relative_errors", "exact_products", "rom_error_report"]

COND_LIMIT = 1e14


@dataclass(eq=False)
class RomSystem:
    """Reduced matrices for one rank ``ell``.

    ``F`` holds one reduced load per time instance (row ``j`` for ``t_j``);
    ``nl_matrix``/``nl_vector`` hold the projected linearisation per step
    when ``nonlin == "linearized"``.
    """

    M_r: np.ndarray
    A_r: np.ndarray
    D: np.ndarray
    F: np.ndarray
    eta0_rhs: np.ndarray
    grid: object
    nonlin: str = "none"
    nl_matrix: np.ndarray = None
    nl_vector: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def ell(self):
        return len(self.D)

    def index_of(self, t):
        j = int(np.argmin(np.abs(self.grid.times - t)))
        if not np.isclose(self.grid.times[j], t, rtol=0, atol=1e-12 * max(1.0, abs(t))):
            raise ValueError(f"time {t} is not on the snapshot grid")
        return j


@dataclass(eq=False)
class RomTrajectory:
    """Mode coefficients ``eta`` of shape ``(n+1, ell)`` on ``grid``."""

    grid: object
    eta: np.ndarray


def _check_tags(s, basis, mass, stiffness):
    if basis.snapshot_ref is not s:
        raise ValueError("basis was computed from a different snapshot set")
    if mass is not None:
        if mass.tag is not _gr.InnerProductTag.L2:
            raise ValueError(f"mass gramian must be L2, got {mass.tag.value}")
        if mass.snapshot_ref is not s:
            raise ValueError("mass gramian belongs to a different snapshot set")
    if stiffness is not None:
        if getattr(stiffness, "role", None) != "stiffness":
            raise ValueError(f"expected a stiffness cross matrix, got {type(stiffness).__name__}")
        if stiffness.snapshot_ref is not s:
            raise ValueError("stiffness cross matrix belongs to a different snapshot set")


def build_rom(s, basis, ell, problem, nonlin="none", mass=None, stiffness=None,
              loads=None, workers=1, cache=None):
    """Assemble the reduced system of rank ``ell``.

    Parameters
    ----------
    s : SnapshotSet
    basis : PodBasis
    ell : int
    problem : HeatProblem
    nonlin : {"none", "linearized"}
    mass : Gramian, optional
        L2 gramian; defaults to ``basis.gramian`` when that is L2, else
        it is assembled.
    stiffness : CrossMatrix, optional
    loads : (n+1, n+1) ndarray, optional
        Precomputed ``Y* f(t_j)`` rows, reusable across ranks.
    """
    if nonlin not in ("none", "linearized"):
        raise ValueError(f"unknown nonlinearity handler {nonlin!r}")
    basis._check(ell)
    if ell < 1:
        raise ValueError("a reduced model needs ell >= 1")
    if mass is None and basis.tag is _gr.InnerProductTag.L2:
        mass = basis.gramian
    _check_tags(s, basis, mass, stiffness)
    if mass is None:
        mass = _gr.assemble_gramian(s, "L2", workers=workers, cache=cache)
    if stiffness is None:
        stiffness = _gr.assemble_stiffness_cross(s, workers=workers, cache=cache)
    Phi = basis.eigenvectors[:, :ell]
    D = 1.0 / np.sqrt(basis.eigenvalues[:ell])
    PD = Phi * D[None, :]
    M_r = PD.T @ mass.matrix @ PD
    A_r = PD.T @ stiffness.matrix @ PD
    if loads is None:
        loads = project_loads(s, problem)
    F = loads @ PD
    g0 = _gr.project_function(s, problem.initial, "L2")
    sysm = RomSystem(0.5 * (M_r + M_r.T), 0.5 * (A_r + A_r.T), D, F, PD.T @ g0, s.grid, nonlin)
    if nonlin == "linearized" and problem.c != 0:
        n = len(s)
        mats = np.zeros((n, ell, ell))
        vecs = np.zeros((n, ell))
        for j in range(1, n):
            N, Ny, NY = _gr.assemble_nonlin_cross(s, j, problem.c)
            mats[j] = PD.T @ NY @ PD
            vecs[j] = PD.T @ (N - Ny)
        sysm.nl_matrix, sysm.nl_vector = mats, vecs
    return sysm


def project_loads(s, problem):
    """Rows ``Y* f(t_j)`` for every time instance."""
    return np.array([_gr.project_function(s, problem.forcing, "L2", t=t) for t in s.grid.times])


def _solve(lhs, rhs):
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(f"reduced system is singular (condition {cond:.3e})", cond)
    return np.linalg.solve(lhs, rhs)


def step_rom(sysm, eta_prev, t, dt):
    """One reduced implicit Euler step to time ``t``."""
    j = sysm.index_of(t)
    lhs = sysm.M_r / dt + sysm.A_r
    rhs = sysm.M_r @ eta_prev / dt + sysm.F[j]
    if sysm.nonlin == "linearized" and sysm.nl_matrix is not None:
        lhs = lhs + sysm.nl_matrix[j]
        rhs = rhs - sysm.nl_vector[j]
    return _solve(lhs, rhs)


def solve_rom(sysm, grid=None):
    """Full trajectory; ``eta^0`` solves ``M_r eta^0 = D Phi^T Y* g``."""
    grid = sysm.grid if grid is None else grid
    eta = np.zeros((len(grid), sysm.ell))
    eta[0] = _solve(sysm.M_r, sysm.eta0_rhs)
    for j in range(1, len(grid)):
        eta[j] = step_rom(sysm, eta[j - 1], grid.times[j], grid.times[j] - grid.times[j - 1])
    return RomTrajectory(grid, eta)


def relative_errors(s, basis, eta, mass, exact=None):
    """Relative discrete ``L2(0,T; L2)`` errors of a reduced trajectory.

    Parameters
    ----------
    eta : (n+1, ell) ndarray
    mass : Gramian (L2)
    exact : tuple (B, norms), optional
        ``B[j, s] = <y(t_j), y_s>`` and ``norms[j] = ||y(t_j)||^2``.

    Returns ``(eps_fe, eps_true)``; ``eps_true`` is None without ``exact``.
    """
    a = s.weights
    sa = np.sqrt(a)
    Yg = mass.matrix / np.outer(sa, sa)
    ell = eta.shape[1]
    X = eta @ pod_coefficients(basis, ell).T if ell else np.zeros((len(s), len(s)))
    quad = np.einsum("js,st,jt->j", X, Yg, X)
    cross_fe = np.einsum("js,js->j", Yg, X)
    own = np.diag(Yg)
    err_fe = own - 2 * cross_fe + quad
    eps_fe = float(np.sqrt(max(np.sum(a * err_fe), 0.0) / np.sum(a * own)))
    if exact is None:
        return eps_fe, None
    B, norms = exact
    err_true = norms - 2 * np.einsum("js,js->j", B, X) + quad
    eps_true = float(np.sqrt(max(np.sum(a * err_true), 0.0) / np.sum(a * norms)))
    return eps_fe, eps_true


def exact_products(s, analytic, degree=8):
    """``B[j, s] = <y(t_j), y_s>`` and ``||y(t_j)||^2`` by quadrature on the snapshot meshes."""
    n = len(s)
    B = np.zeros((n, n))
    norms = np.zeros(n)
    for j, t in enumerate(s.grid.times):
        B[j], _ = _gr.project_exact(s, lambda x, t=t: analytic(t, x), degree)
        norms[j] = _exact_norm2(s.snapshots[j].mesh, lambda x, t=t: analytic(t, x), degree)
    return B, norms


def _exact_norm2(mesh, fn, degree):
    from .quadrature import triangle_rule
    bary, w = triangle_rule(degree)
    x = np.einsum("qi,kid->kqd", bary, mesh.corners)
    fv = np.asarray(fn(x.reshape(-1, 2)), dtype=float).reshape(x.shape[:2])
    return float(np.sum(mesh.areas[:, None] * w[None, :] * fv ** 2))


def rom_error_report(s, basis, trajectories, problem, mass=None):
    """Error table rows ``(ell, eps_fe, eps_true, tail, Gamma)``.

    ``trajectories`` maps ``ell`` to a :class:`RomTrajectory` (or an
    ``eta`` array).  ``ell = 0`` may be included with an empty trajectory.
    ``eps_true`` is NaN when the problem has no analytic solution.
    """
    mass = basis.gramian if mass is None else mass
    if mass.tag is not _gr.InnerProductTag.L2:
        raise ValueError("error report needs the L2 gramian")
    exact = exact_products(s, problem.analytic) if problem.analytic is not None else None
    rows = []
    for ell in sorted(trajectories):
        tr = trajectories[ell]
        eta = tr.eta if isinstance(tr, RomTrajectory) else np.asarray(tr, dtype=float)
        eta = eta.reshape(len(s), ell)
        fe, true = relative_errors(s, basis, eta, mass, exact)
        rows.append((ell, fe, np.nan if true is None else true,
                     projection_error(basis, ell), information_content(basis, ell)))
    return rows
