"""Shared small meshes and level contexts.

Session scope keeps the turek hierarchy builds (the slowest fixtures)
to one per run.
"""

import numpy as np
import pytest

from fsi_gcsi import mesh as msh, multigrid as mg


@pytest.fixture(scope="session")
def geometry():
    return msh.GeometryParams()


@pytest.fixture(scope="session")
def turek_hier1(geometry):
    return msh.build_turek_hierarchy(geometry, 1)


@pytest.fixture(scope="session")
def channel_ctx1(turek_hier1):
    return mg.build_level_context(
        turek_hier1, dirichlet_tags=(msh.INFLOW, msh.WALLS, msh.CYLINDER))


@pytest.fixture(scope="session")
def turek_hier0(geometry):
    return msh.build_turek_hierarchy(geometry, 0)


@pytest.fixture(scope="session")
def channel_ctx0(turek_hier0):
    return mg.build_level_context(
        turek_hier0, dirichlet_tags=(msh.INFLOW, msh.WALLS, msh.CYLINDER))


@pytest.fixture(scope="session")
def square_ctx1():
    """Unit square, 4x4 coarse cells, one refinement, enclosed flow setup."""
    hier = msh.build_hierarchy(msh.build_rect(4, 4), 1)
    return mg.build_level_context(
        hier, dirichlet_tags=(msh.INFLOW, msh.OUTFLOW, msh.WALLS),
        pin_pressure=True)
