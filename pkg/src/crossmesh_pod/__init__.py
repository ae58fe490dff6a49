"""POD reduced-order models from finite-element snapshots on different meshes.

The snapshot gramian is assembled directly from cross-mesh inner products
(overlay of triangulations, cut-cell quadrature), so snapshots never have
to be interpolated onto a common reference mesh.
"""
from .errors import NewtonError, PointNotFoundError, SingularSystemError, StageDependencyError
from .mesh import Mesh, check_conformity, coarsen, locate, make_unit_square, refine
from .fem import FeFunction, HeatProblem, SnapshotSet, TimeGrid
from .gramian import InnerProductTag, assemble_all, assemble_gramian, assemble_stiffness_cross
from .pod import PodBasis, eig_sym
from .rom import build_rom, solve_rom

__version__ = "0.1.0"

__all__ = [
    "Mesh", "make_unit_square", "refine", "coarsen", "locate", "check_conformity",
    "FeFunction", "HeatProblem", "SnapshotSet", "TimeGrid",
    "InnerProductTag", "assemble_gramian", "assemble_stiffness_cross", "assemble_all",
    "PodBasis", "eig_sym", "build_rom", "solve_rom",
    "NewtonError", "PointNotFoundError", "SingularSystemError", "StageDependencyError",
]
