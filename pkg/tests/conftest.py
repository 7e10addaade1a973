"""Shared fixtures.

Discretizations are expensive to build, so a session-scoped cache hands the
same instance to every test that asks for identical parameters.  Tests must
treat cached objects as read-only.
"""

import numpy as np
import pytest

from migfem.field import Discretization
from migfem.mesh import (build_structured_tri_mesh, compute_topology,
                         perturb_interior_nodes)
from migfem.recon import build_all_patch_maps

UNIT_BOX = (-1.0, 1.0, -1.0, 1.0)


@pytest.fixture(scope="session")
def make_disc():
    cache: dict = {}

    def build(n=11, p=3, ncomp=1, box=UNIT_BOX, delta=0.0, seed=0,
              depth=None) -> Discretization:
        key = (n, p, ncomp, box, delta, seed, depth)
        if key not in cache:
            mesh = build_structured_tri_mesh(n, n, box)
            if delta > 0.0:
                mesh = perturb_interior_nodes(mesh, delta, seed)
            topo = compute_topology(mesh)
            patches, maps = build_all_patch_maps(mesh, topo, p, depth=depth,
                                                 ncomp=ncomp)
            cache[key] = Discretization(mesh=mesh, topo=topo, patches=patches,
                                        maps=maps, p=p, ncomp=ncomp)
        return cache[key]

    return build


@pytest.fixture(scope="session")
def make_mesh():
    cache: dict = {}

    def build(n=11, box=UNIT_BOX, delta=0.0, seed=0):
        key = (n, box, delta, seed)
        if key not in cache:
            mesh = build_structured_tri_mesh(n, n, box)
            if delta > 0.0:
                mesh = perturb_interior_nodes(mesh, delta, seed)
            cache[key] = (mesh, compute_topology(mesh))
        return cache[key]

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
