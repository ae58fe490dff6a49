import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


def nested_family(nx=4, levels=3, frac=0.3, seed=0):
    """A few meshes of one family obtained by random local refinement."""
    from crossmesh_pod.mesh import make_unit_square, refine

    r = np.random.default_rng(seed)
    meshes = [make_unit_square(nx)]
    for _ in range(levels - 1):
        m = meshes[-1]
        k = max(1, int(frac * m.n_triangles))
        meshes.append(refine(m, r.choice(m.triangle_ids, size=k, replace=False)))
    return meshes


def common_refinement(meshes):
    """Uniform refinement of the family to the deepest generation present."""
    from crossmesh_pod.mesh import refine

    f = meshes[0]
    gmax = max(m.generations.max() for m in meshes)
    while (f.generations < gmax).any():
        f = refine(f, f.triangle_ids[f.generations < gmax])
    return f


def random_snapshots(meshes, n, seed=0, zero_boundary=True):
    """Snapshot set with random smooth-ish coefficients on randomly chosen meshes."""
    from crossmesh_pod.fem import FeFunction, SnapshotSet, TimeGrid

    r = np.random.default_rng(seed)
    times = np.cumsum(np.r_[0.0, r.uniform(0.5, 1.5, n - 1)]) / n
    ys = []
    for j in range(n):
        m = meshes[r.integers(len(meshes))]
        x = m.points
        c = (np.sin(np.pi * x[:, 0] * r.uniform(0.5, 3)) * np.sin(np.pi * x[:, 1] * r.uniform(0.5, 3))
             + 0.1 * r.standard_normal(m.n_vertices))
        if zero_boundary:
            c[m.boundary] = 0.0
        ys.append(FeFunction(m, c))
    return SnapshotSet(TimeGrid(times), ys)
