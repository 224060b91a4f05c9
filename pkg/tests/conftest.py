import numpy as np
import pytest

from kmf.geometry import INTERIOR, OUTER, WALL, PointCloud, build_stencils, generate_naca_cloud


def lattice_cloud(n: int = 5, h: float = 1.0, classify_boundary: bool = False) -> PointCloud:
    """n x n uniform lattice; optionally the rim is flagged as outer."""
    xs, ys = np.meshgrid(np.arange(n) * h, np.arange(n) * h, indexing="ij")
    x = xs.ravel()
    y = ys.ravel()
    flag = np.full(x.size, INTERIOR, dtype=np.int64)
    nx = np.zeros(x.size)
    ny = np.zeros(x.size)
    if classify_boundary:
        lim = (n - 1) * h
        rim = (x == 0.0) | (y == 0.0) | (x == lim) | (y == lim)
        flag[rim] = OUTER
        # outward normals; corners get diagonals, normalized below
        nx[x == 0.0] -= 1.0
        nx[x == lim] += 1.0
        ny[y == 0.0] -= 1.0
        ny[y == lim] += 1.0
        norm = np.hypot(nx, ny)
        good = norm > 0
        nx[good] /= norm[good]
        ny[good] /= norm[good]
    return PointCloud(x, y, flag, nx, ny)


@pytest.fixture(scope="session")
def small_naca():
    return generate_naca_cloud(80, 30, 1.15, 20.0)


@pytest.fixture(scope="session")
def small_naca_conn(small_naca):
    return build_stencils(small_naca)


@pytest.fixture(scope="session")
def desk_naca():
    cloud = generate_naca_cloud(150, 40, 1.15, 20.0)
    assert cloud.n_points == 6000
    return cloud


@pytest.fixture(scope="session")
def desk_naca_conn(desk_naca):
    return build_stencils(desk_naca)
