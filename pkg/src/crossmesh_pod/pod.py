"""POD by the method of snapshots.

The basis is never stored as mesh functions.  With eigenpairs
``(lambda_i, phi_i)`` of the gramian ``K`` the modes are

    psi_i = 1/sqrt(lambda_i) * sum_j sqrt(alpha_j) (phi_i)_j y_j,

so every quantity downstream is expressed through ``K``, ``Phi`` and the
snapshot weights.  Modes are evaluated only on request
(:func:`reconstruct`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import FeFunction

__all__ = [
    "PodBasis",
    "jacobi_eigh",
    "eig_sym",
    "pod_coefficients",
    "mode_gram",
    "projection_error",
    "projection_error_direct",
    "information_content",
    "select_rank",
    "snapshot_values",
    "reconstruct",
]

RANK_CUTOFF = 1e-13
JACOBI_TOL = 1e-14
SYMMETRY_TOL = 1e-12


def _round_robin(m):
    """Pairings for a round-robin tournament of ``m`` (even) players."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        rounds.append((np.array(players[: m // 2]), np.array(players[m // 2:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in parallel (round-robin) order: each round
    rotates ``m/2`` disjoint index pairs at once.  Sweeps stop when the
    off-diagonal Frobenius norm drops below ``tol * ||a||_F``.

    Returns
    -------
    w : (n,) ndarray, descending
    v : (n, n) ndarray, eigenvectors in columns
    sweeps : int
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    m = n + (n % 2)
    A = np.zeros((m, m))
    A[:n, :n] = a
    V = np.eye(m)
    fro = np.linalg.norm(a)
    rounds = _round_robin(m) if m > 1 else []
    sweeps = 0
    mask = ~np.eye(m, dtype=bool)

    def off(x):
        return np.sqrt(np.sum(x[mask] ** 2))

    while off(A) > tol * fro and fro > 0:
        if sweeps >= max_sweeps:
            raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            active = np.abs(apq) > 0.0
            theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            t = np.where(active, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            t = np.where(active & (theta == 0), 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # columns then rows: A <- J^T A J
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
        sweeps += 1
    w = np.diag(A)[:n].copy()
    V = V[:n, :n]
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order], sweeps


def _fix_signs(v):
    """Make the first component with magnitude above 1e-8 of each column positive."""
    v = v.copy()
    for k in range(v.shape[1]):
        big = np.flatnonzero(np.abs(v[:, k]) > 1e-8)
        if len(big) and v[big[0], k] < 0:
            v[:, k] = -v[:, k]
    return v


@dataclass(eq=False)
class PodBasis:
    """Retained eigenpairs of a gramian.

    Attributes
    ----------
    eigenvalues : (d,) ndarray
        ``lambda_1 >= ... >= lambda_d > cutoff * lambda_1``.
    eigenvectors : (n+1, d) ndarray
    spectrum : (n+1,) ndarray
        All computed eigenvalues, descending, before the cutoff.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gramian: object
    spectrum: np.ndarray = None
    cutoff: float = RANK_CUTOFF
    info: dict = field(default_factory=dict)

    @property
    def d(self):
        return len(self.eigenvalues)

    @property
    def tag(self):
        return self.gramian.tag

    @property
    def snapshot_ref(self):
        return self.gramian.snapshot_ref

    @property
    def weights(self):
        return self.snapshot_ref.weights

    def _check(self, ell):
        if not 0 <= ell <= self.d:
            raise ValueError(f"rank {ell} outside [0, {self.d}]")


def eig_sym(g, cutoff=RANK_CUTOFF):
    """Eigenpairs of a gramian with ranks below ``cutoff * lambda_1`` dropped.

    Raises ValueError when the matrix is asymmetric beyond ``1e-12`` times
    its largest entry.
    """
    K = np.asarray(g.matrix, dtype=float)
    scale = np.max(np.abs(K)) if K.size else 0.0
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("gramian must be square")
    if np.max(np.abs(K - K.T), initial=0.0) > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise ValueError("gramian is not symmetric")
    w, v, sweeps = jacobi_eigh(0.5 * (K + K.T))
    v = _fix_signs(v)
    lam1 = w[0] if len(w) else 0.0
    keep = w > cutoff * lam1 if lam1 > 0 else np.zeros(len(w), dtype=bool)
    return PodBasis(w[keep], v[:, keep], g, spectrum=w, cutoff=cutoff,
                    info={"sweeps": sweeps})


def pod_coefficients(basis, ell):
    """Snapshot coefficients of the modes: ``psi_i = sum_j C[j, i] y_j``."""
    basis._check(ell)
    sa = np.sqrt(basis.weights)
    return sa[:, None] * basis.eigenvectors[:, :ell] / np.sqrt(basis.eigenvalues[:ell])[None, :]


def mode_gram(basis, ell):
    """``<psi_i, psi_k>_X = phi_i^T K phi_k / sqrt(lambda_i lambda_k)``."""
    basis._check(ell)
    Phi = basis.eigenvectors[:, :ell]
    D = 1.0 / np.sqrt(basis.eigenvalues[:ell])
    return D[:, None] * (Phi.T @ basis.gramian.matrix @ Phi) * D[None, :]


def projection_error(basis, ell, verify=False, rtol=1e-9):
    """Tail eigenvalue sum ``sum_{i>ell} lambda_i``.

    With ``verify=True`` the weighted projection error is recomputed from
    the gramian (:func:`projection_error_direct`) and an ArithmeticError
    is raised on a mismatch beyond ``rtol`` relative to the total.
    """
    basis._check(ell)
    tail = float(np.sum(basis.eigenvalues[ell:]))
    if verify:
        direct = projection_error_direct(basis, ell)
        total = float(np.sum(basis.eigenvalues))
        if abs(direct - tail) > rtol * max(tail, total * 1e-6):
            raise ArithmeticError(f"projection error mismatch: tail {tail!r} vs direct {direct!r}")
    return tail


def projection_error_direct(basis, ell):
    """``sum_j alpha_j ||y_j - sum_i <y_j, psi_i> psi_i||^2`` via gramian algebra.

    Uses ``<y_j, y_s> = K_js / sqrt(alpha_j alpha_s)`` and does not assume
    the modes are orthonormal.
    """
    basis._check(ell)
    K = basis.gramian.matrix
    C = pod_coefficients(basis, ell)
    a = basis.weights
    sa = np.sqrt(a)
    Yg = K / np.outer(sa, sa)                    # <y_j, y_s>
    P = Yg @ C                                   # <y_j, psi_i>
    G = C.T @ Yg @ C                             # <psi_i, psi_k>
    err = np.diag(Yg) - 2 * np.sum(P * P, axis=1) + np.einsum("ji,ik,jk->j", P, G, P)
    return float(np.sum(a * err))


def information_content(basis, ell):
    """``Gamma(ell) = sum_{i<=ell} lambda_i / sum_{i<=d} lambda_i``."""
    basis._check(ell)
    c = np.concatenate([[0.0], np.cumsum(basis.eigenvalues)])
    return float(c[ell] / c[-1]) if c[-1] > 0 else 1.0


def select_rank(basis, p):
    """Smallest ``ell`` with ``Gamma(ell) > 1 - p``; ``d`` if none qualifies."""
    for ell in range(1, basis.d + 1):
        if information_content(basis, ell) > 1.0 - p:
            return ell
    return basis.d


def snapshot_values(s, points):
    """Matrix ``S[j, m] = y_j(points[m])``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((len(s), len(pts)))
    for mid in sorted(set(s.mesh_ids)):
        idx = [j for j, y in enumerate(s.snapshots) if y.mesh_id == mid]
        mesh = s.mesh(mid)
        tri, bary = mesh.locate_points(pts)
        verts = mesh.triangles[tri]
        for j in idx:
            out[j] = np.einsum("mi,mi->m", s.snapshots[j].coeffs[verts], bary)
    return out


def reconstruct(basis, ell, eta, query):
    """Evaluate ``y(t_j, Q) = sum_i eta[j, i] psi_i(Q)``.

    Parameters
    ----------
    eta : (n_t, ell) or (ell,) array_like
    query : Mesh or (M, 2) array_like
        A mesh gives one :class:`FeFunction` per row of ``eta`` (values at
        its nodes); points give an ``(n_t, M)`` array.

    Raises PointNotFoundError for points outside the domain.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    if eta.shape[1] != ell:
        raise ValueError(f"eta has {eta.shape[1]} columns, expected {ell}")
    C = pod_coefficients(basis, ell)
    s = basis.snapshot_ref
    is_mesh = hasattr(query, "triangles")
    S = snapshot_values(s, query.points if is_mesh else query)
    vals = eta @ (C.T @ S)
    if is_mesh:
        return [FeFunction(query, v) for v in vals]
    return vals
