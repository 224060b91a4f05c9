"""Least-squares gradient operators: exactness, conditioning, and order."""

import numpy as np
import pytest

from kmf.geometry import OUTER, PointCloud, build_stencils
from kmf.lsq import (
    ConditioningError,
    compute_q_derivatives,
    defect_corrected_gradient,
    first_order_q_gradients,
    lsq_gradient_first_order,
    lsq_gradient_quadratic,
)

from conftest import lattice_cloud


def jittered_cloud(n=7, h=1.0, amp=0.3, seed=0):
    """Lattice with interior points jittered; rim flagged outer."""
    rng = np.random.default_rng(seed)
    cloud = lattice_cloud(n, h, classify_boundary=True)
    interior = cloud.flag == 0
    cloud.x[interior] += rng.uniform(-amp * h, amp * h, interior.sum())
    cloud.y[interior] += rng.uniform(-amp * h, amp * h, interior.sum())
    return cloud


def test_first_order_exact_on_linear_fields():
    rng = np.random.default_rng(3)
    for trial in range(20):
        cloud = jittered_cloud(seed=trial)
        conn = build_stencils(cloud, k=8)
        a, b, c = rng.uniform(-2, 2, 3)
        f = a + b * cloud.x + c * cloud.y
        for i in cloud.interior[:10]:
            g = lsq_gradient_first_order(int(i), f, conn)
            assert abs(g.fx - b) < 1e-10
            assert abs(g.fy - c) < 1e-10


def test_first_order_split_stencils_also_linear_exact():
    cloud = jittered_cloud(seed=41)
    conn = build_stencils(cloud, k=10)
    f = 0.7 - 1.3 * cloud.x + 2.1 * cloud.y
    i = int(cloud.interior[cloud.interior.size // 2])
    for kind in ("x+", "x-", "y+", "y-"):
        g = lsq_gradient_first_order(i, f, conn, stencil=kind)
        assert abs(g.fx + 1.3) < 1e-10
        assert abs(g.fy - 2.1) < 1e-10


def test_defect_correction_exact_on_quadratics():
    rng = np.random.default_rng(7)
    for trial in range(20):
        cloud = jittered_cloud(seed=100 + trial)
        conn = build_stencils(cloud, k=8)
        a, b, c, d, e, g2 = rng.uniform(-1.5, 1.5, 6)
        x, y = cloud.x, cloud.y
        f = a + b * x + c * y + d * x * x + e * x * y + g2 * y * y
        fx = b + 2 * d * x + e * y
        fy = c + e * x + 2 * g2 * y
        for i in cloud.interior[:10]:
            g = defect_corrected_gradient(int(i), f, (fx, fy), conn)
            assert abs(g.fx - fx[i]) < 1e-10
            assert abs(g.fy - fy[i]) < 1e-10


def test_defect_correction_with_zero_gradients_is_first_order():
    cloud = jittered_cloud(seed=9)
    conn = build_stencils(cloud, k=8)
    f = np.sin(cloud.x) * np.cos(cloud.y)
    zeros = np.zeros_like(f)
    for i in cloud.interior[:8]:
        g1 = lsq_gradient_first_order(int(i), f, conn)
        g2 = defect_corrected_gradient(int(i), f, (zeros, zeros), conn)
        assert g1 == g2


def test_quadratic_reconstruction_and_conditioning_guard():
    cloud = jittered_cloud(seed=23)
    conn = build_stencils(cloud, k=10)
    x, y = cloud.x, cloud.y
    f = 0.3 + 1.1 * x - 0.4 * y + 0.8 * x * x - 0.5 * x * y + 0.25 * y * y
    i = int(cloud.interior[0])
    coeff = lsq_gradient_quadratic(i, f, conn)
    fx = 1.1 + 1.6 * x[i] - 0.5 * y[i]
    fy = -0.4 - 0.5 * x[i] + 0.5 * y[i]
    assert np.allclose(coeff, [fx, fy, 1.6, -0.5, 0.5], atol=1e-9)

    # squash the cloud to near-collinearity: the 5x5 normal equations blow up
    squashed = PointCloud(cloud.x, cloud.y * 1e-9, cloud.flag, cloud.nx, cloud.ny)
    # stencil build may itself flag degeneracy; bypass by reusing geometry
    with pytest.raises((ConditioningError, Exception)):
        conn2 = build_stencils(squashed, k=10)
        lsq_gradient_quadratic(i, f, conn2)


def test_inner_sweeps_require_at_least_one():
    cloud = jittered_cloud(seed=2)
    conn = build_stencils(cloud, k=8)
    q = np.zeros((4, cloud.n_points))
    with pytest.raises(ValueError, match="at least 1"):
        compute_q_derivatives(q, conn, n_inner=0)


def test_inner_sweep_updates_shrink():
    # the Jacobi iteration for the implicit gradient relation contracts on
    # a smooth field: each sweep moves the iterate less than the one before
    cloud = jittered_cloud(n=9, seed=77)
    conn = build_stencils(cloud, k=8)
    x, y = cloud.x, cloud.y
    q = np.stack([np.sin(0.6 * x + 0.3 * y), np.cos(0.5 * x) * y, x * y, -np.exp(0.1 * x)])
    grads = compute_q_derivatives(q, conn, n_inner=6)
    r = grads.inner_residuals
    assert len(r) == 6
    assert all(r[k + 1] < r[k] for k in range(len(r) - 1))


def test_sweeps_match_unblocked_reference_bitwise():
    cloud = jittered_cloud(n=8, seed=5)
    conn = build_stencils(cloud, k=9)
    rng = np.random.default_rng(0)
    q = rng.normal(size=(4, cloud.n_points))

    calls = []

    def block_map(fn, n):
        # deliberately odd block boundaries
        cuts = [0, 7, 19, 40, n]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi > lo:
                fn(lo, hi)
        calls.append(len(cuts) - 1)

    a = compute_q_derivatives(q, conn, n_inner=3)
    b = compute_q_derivatives(q, conn, n_inner=3, block_map=block_map)
    assert calls and np.array_equal(a.qx, b.qx) and np.array_equal(a.qy, b.qy)


def test_defect_corrected_gradient_is_second_order():
    # smooth non-polynomial field on self-similar refinements of the same
    # jittered pattern, recentered so the probe point stays at a fixed
    # location; the corrected gradient error there must shrink ~h^2
    errs = []
    hs = (0.2, 0.1, 0.05)
    for h in hs:
        cloud = jittered_cloud(n=9, h=h, seed=13)
        center = int(cloud.interior[cloud.interior.size // 2])
        cloud.x += 0.35 - cloud.x[center]
        cloud.y += 0.20 - cloud.y[center]
        conn = build_stencils(cloud, k=8)
        x, y = cloud.x, cloud.y
        f = np.sin(x + 2.0 * y)
        fx = np.cos(x + 2.0 * y)
        fy = 2.0 * np.cos(x + 2.0 * y)
        g = defect_corrected_gradient(center, f, (fx, fy), conn)
        errs.append(np.hypot(g.fx - fx[center], g.fy - fy[center]))
    order = np.log2(errs[0] / errs[2]) / 2.0
    assert order > 1.9, (errs, order)


def test_first_order_gradients_vectorized_match_pointwise():
    cloud = jittered_cloud(n=6, seed=31)
    conn = build_stencils(cloud, k=8)
    rng = np.random.default_rng(8)
    q = rng.normal(size=(4, cloud.n_points))
    grads = first_order_q_gradients(q, conn)
    for i in (int(cloud.interior[0]), int(cloud.interior[-1])):
        for comp in range(4):
            g = lsq_gradient_first_order(i, q[comp], conn)
            assert np.isclose(grads.qx[comp, i], g.fx, rtol=1e-13, atol=1e-15)
            assert np.isclose(grads.qy[comp, i], g.fy, rtol=1e-13, atol=1e-15)
