import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from torqflow.geometry import boundary_points, disk, ellipse
from torqflow.mesh import triangulate
from torqflow.torsion import solve_torsion

settings.register_profile(
    "torqflow", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("torqflow")


@functools.lru_cache(maxsize=None)
def body_mesh(kind: str, n: int = 256, target: float = 0.05, scale: float = 1.0):
    if kind == "disk":
        p = disk(scale, n)
    elif kind == "ellipse":
        p = ellipse(1.2 * scale, 0.8 * scale, n)
    else:
        raise ValueError(kind)
    return p, triangulate(boundary_points(p).points, target)


@functools.lru_cache(maxsize=None)
def solved(kind: str, q: float, n: int = 256, target: float = 0.05, scale: float = 1.0):
    p, mesh = body_mesh(kind, n, target, scale)
    return p, solve_torsion(mesh, q)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)
