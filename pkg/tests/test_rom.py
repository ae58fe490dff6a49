import numpy as np
import pytest

from conftest import nested_family, random_snapshots
from crossmesh_pod import fem, problems
from crossmesh_pod import gramian as gr
from crossmesh_pod.errors import SingularSystemError
from crossmesh_pod.fem import FeFunction, HeatProblem, SnapshotSet, TimeGrid
from crossmesh_pod.mesh import make_unit_square
from crossmesh_pod.pod import eig_sym
from crossmesh_pod.rom import (RomSystem, build_rom, project_loads, relative_errors,
                               rom_error_report, solve_rom)


def _pipeline(problem, s):
    K, M, S = gr.assemble_all(s, "L2")
    return eig_sym(K), M, S


def _fe_initial(problem, mesh):
    """Copy of ``problem`` whose initial condition is its own P1 interpolant."""
    g = fem.nodal_interpolant(mesh, problem.initial)
    return HeatProblem(problem.c, problem.forcing, g, problem.analytic, problem.name)


@pytest.fixture(scope="module")
def ex63():
    m = make_unit_square(10)
    pb = problems.oscillating()
    s = fem.solve_fixed(pb, TimeGrid.uniform(1.0, 20), m)
    b, M, S = _pipeline(pb, s)
    return pb, s, b, M, S


def test_reduced_mass_is_identity(ex63):
    pb, s, b, M, S = ex63
    # rounding in Phi^T K Phi is amplified by lambda_1 / lambda_ell, so the
    # identity is checked on the well-conditioned leading modes
    ell = int(np.sum(b.eigenvalues >= 1e-5 * b.eigenvalues[0]))
    sysm = build_rom(s, b, ell, pb, mass=M, stiffness=S)
    assert np.abs(sysm.M_r - np.eye(ell)).max() <= 1e-10
    full = build_rom(s, b, b.d, pb, mass=M, stiffness=S).M_r
    bound = 1e-15 * len(s) * b.eigenvalues[0] / b.eigenvalues[-1]
    assert np.abs(full - np.eye(b.d)).max() <= max(bound, 1e-10)
    assert np.allclose(sysm.A_r, sysm.A_r.T)
    assert np.linalg.eigvalsh(sysm.A_r).min() > 0


def test_constant_snapshots_have_zero_reduced_stiffness():
    m = make_unit_square(3)
    one = FeFunction(m, np.ones(m.n_vertices))
    s = SnapshotSet(TimeGrid.uniform(1.0, 4), [one] * 5)
    pb = HeatProblem(0.0, lambda t, x: np.zeros(len(x)), lambda x: np.ones(len(x)))
    b = eig_sym(gr.assemble_gramian(s, "L2"))
    assert b.d == 1
    sysm = build_rom(s, b, 1, pb)
    assert abs(sysm.A_r[0, 0]) < 1e-14
    eta = solve_rom(sysm).eta
    # f = 0 and A_r = 0 keep the trajectory constant
    assert np.allclose(eta, eta[0], rtol=0, atol=1e-14)
    assert eta[0, 0] == pytest.approx(1.0, rel=1e-12)      # psi_1 = 1, g = 1


def test_full_rank_reproduces_fe_when_initial_in_span():
    m = make_unit_square(10)
    for pb in (problems.oscillating(), problems.manufactured(0.0), problems.manufactured(1.0)):
        pb = _fe_initial(pb, m)
        s = fem.solve_fixed(pb, TimeGrid.uniform(1.0, 10), m)
        b, M, S = _pipeline(pb, s)
        sysm = build_rom(s, b, b.d, pb, nonlin="linearized", mass=M, stiffness=S)
        fe, _ = relative_errors(s, b, solve_rom(sysm).eta, M)
        assert fe <= 1e-6, pb.name


def test_galerkin_residual_vanishes(ex63):
    pb, s, b, M, S = ex63
    sysm = build_rom(s, b, b.d, pb, mass=M, stiffness=S)
    eta = solve_rom(sysm).eta
    dt = s.grid.steps
    for j in range(1, len(s)):
        r = sysm.M_r @ (eta[j] - eta[j - 1]) / dt[j - 1] + sysm.A_r @ eta[j] - sysm.F[j]
        assert np.linalg.norm(r) <= 1e-9 * max(1.0, np.linalg.norm(sysm.F[j]))
    assert np.allclose(sysm.M_r @ eta[0], sysm.eta0_rhs, atol=1e-12)


def test_full_rank_error_on_fixed_mesh(ex63):
    pb, s, b, M, S = ex63
    traj = {ell: solve_rom(build_rom(s, b, ell, pb, mass=M, stiffness=S)) for ell in (1, 2, 3, b.d)}
    traj[0] = np.zeros((len(s), 0))
    rows = rom_error_report(s, b, traj, pb)
    assert rows[0][1] == 1.0 and rows[0][2] == 1.0
    fe = [r[1] for r in rows]
    assert fe[-1] <= 1e-2
    # nonincreasing up to 5 %
    assert all(b_ <= 1.05 * a for a, b_ in zip(fe, fe[1:]))
    true = [r[2] for r in rows]
    assert true[-1] < 0.1


def test_decaying_mode_single_mode():
    m = make_unit_square(12)
    pb = _fe_initial(problems.decaying_mode(), m)
    s = fem.solve_fixed(pb, TimeGrid.uniform(0.1, 10), m)
    b, M, S = _pipeline(pb, s)
    eta = solve_rom(build_rom(s, b, 1, pb, mass=M, stiffness=S)).eta
    fe, _ = relative_errors(s, b, eta, M)
    assert fe <= 1e-3


def test_loads_match_fe_load_vectors():
    m = make_unit_square(6)
    pb = problems.manufactured()
    s = fem.solve_fixed(pb, TimeGrid.uniform(1.0, 4), m)
    L = project_loads(s, pb)
    Y = np.column_stack([y.coeffs for y in s.snapshots])
    for j, t in enumerate(s.grid.times):
        ref = np.sqrt(s.weights) * (Y.T @ fem.assemble_load(m, t, pb.forcing, eliminate=False))
        assert np.allclose(L[j], ref, rtol=1e-12, atol=1e-15)


def test_rom_on_nested_family_runs():
    meshes = nested_family(4, levels=3, seed=2)
    s = random_snapshots(meshes, 8, seed=2)
    pb = problems.oscillating()
    b, M, S = _pipeline(pb, s)
    for ell in (1, b.d):
        eta = solve_rom(build_rom(s, b, ell, pb, mass=M, stiffness=S)).eta
        assert eta.shape == (8, ell) and np.all(np.isfinite(eta))


def test_singular_system_raises():
    grid = TimeGrid.uniform(1.0, 2)
    sysm = RomSystem(np.zeros((2, 2)), np.zeros((2, 2)), np.ones(2), np.zeros((3, 2)),
                     np.ones(2), grid)
    with pytest.raises(SingularSystemError) as e:
        solve_rom(sysm)
    assert e.value.condition > 1e14


def test_mismatched_inputs_rejected(ex63):
    pb, s, b, M, S = ex63
    H = gr.assemble_gramian(s, "H1")
    with pytest.raises(ValueError):
        build_rom(s, b, 2, pb, mass=H, stiffness=S)
    with pytest.raises(ValueError):
        build_rom(s, b, 2, pb, mass=M, stiffness=M)
    other = fem.solve_fixed(pb, TimeGrid.uniform(1.0, 20), make_unit_square(4))
    with pytest.raises(ValueError):
        build_rom(other, b, 2, pb)
    with pytest.raises(ValueError):
        build_rom(s, b, b.d + 1, pb, mass=M, stiffness=S)
    with pytest.raises(ValueError):
        build_rom(s, b, 0, pb, mass=M, stiffness=S)
    with pytest.raises(ValueError):
        build_rom(s, b, 1, pb, nonlin="deim", mass=M, stiffness=S)
    sysm = build_rom(s, b, 1, pb, mass=M, stiffness=S)
    with pytest.raises(ValueError):
        sysm.index_of(0.123)


def test_h1_basis_still_uses_l2_mass(ex63):
    pb, s, b, M, S = ex63
    bh = eig_sym(gr.assemble_gramian(s, "H1"))
    sysm = build_rom(s, bh, bh.d, pb, mass=M, stiffness=S)
    fe, _ = relative_errors(s, bh, solve_rom(sysm).eta, M)
    assert fe <= 1e-2
