"""End-to-end acceptance gate: eleven checks, one printed line each.

Run `pytest -s tests/test_acceptance.py` to watch the lines appear as the
checks complete.  The airfoil checks share two full desk-scale runs (AoA 2
and AoA 0), so the whole gate takes several minutes; everything else is
seconds.
"""

import math
import time

import numpy as np
import pytest

from kmf.bench import BenchmarkReport, speedup
from kmf.geometry import build_stencils, generate_naca_cloud
from kmf.kinetics import full_flux, moment_oracle, split_flux
from kmf.lsq import defect_corrected_gradient, lsq_gradient_first_order
from kmf.solver import SolverConfig, solve, state_update_rk
from kmf.state import (
    Primitives,
    free_stream,
    primitives_to_conserved,
    primitives_to_q,
    q_to_primitives,
)

from test_lsq import jittered_cloud
from test_solver import perturbed_state

DESK_CFL = 0.2


def _line(num, ok, detail):
    print(f"\n[check {num:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"check {num}: {detail}"


def _random_states(rng, n):
    return Primitives(
        rho=rng.uniform(0.2, 3.0, n),
        u1=rng.uniform(-2.5, 2.5, n),
        u2=rng.uniform(-2.5, 2.5, n),
        p=rng.uniform(0.2, 3.0, n),
    )


def _speed_ratio_states():
    # beta = 1, so u1 is the normal speed ratio directly
    return [Primitives(2.0, s, 0.3, 1.0) for s in (0.0, 0.5, -0.5, 2.0, -2.0, 8.0, -8.0)]


@pytest.fixture(scope="module")
def cloud_25k():
    cloud = generate_naca_cloud(84, 30, 1.15, 20.0)
    assert cloud.n_points == 2520
    return cloud, build_stencils(cloud)


@pytest.fixture(scope="module")
def airfoil_runs(desk_naca, desk_naca_conn):
    """One instrumented desk run at AoA 2 and one at AoA 0, shared below."""
    cfg = SolverConfig(
        mach=0.63, aoa_deg=2.0, cfl=DESK_CFL, n_outer=1000, n_inner=3, threads=1
    )
    t0 = time.perf_counter()
    run2 = solve(cfg, desk_naca, conn=desk_naca_conn, instrument=True)
    elapsed = time.perf_counter() - t0
    cfg0 = SolverConfig(
        mach=0.63, aoa_deg=0.0, cfl=DESK_CFL, n_outer=1000, n_inner=3, threads=1
    )
    run0 = solve(cfg0, desk_naca, conn=desk_naca_conn, instrument=False)
    return {
        "cfg": cfg,
        "conn": desk_naca_conn,
        "run2": run2,
        "elapsed": elapsed,
        "run0": run0,
    }


def _wall_ring_ds(cloud):
    # the generator emits wall points ring-ordered around the closed surface
    w = cloud.wall
    px, py = cloud.x[w], cloud.y[w]
    ahead = np.hypot(np.roll(px, -1) - px, np.roll(py, -1) - py)
    return 0.5 * (ahead + np.roll(ahead, 1))


def test_01_moment_consistency():
    rng = np.random.default_rng(101)
    prims = _random_states(rng, 50)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        p = prims.take([i])
        U = primitives_to_conserved(p)
        G = full_flux(p, "x")
        for w in range(4):
            worst = max(worst, abs(moment_oracle(p, w, "full", "1") - float(U[w, 0])))
            worst = max(worst, abs(moment_oracle(p, w, "full", "v1") - float(G[w, 0])))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30.0
    _line(1, ok, f"moment consistency: max err {worst:.2e}, {elapsed:.1f}s (50 states)")


def test_02_split_flux_vs_oracle():
    rng = np.random.default_rng(202)
    states = [_random_states(rng, 1) for _ in range(50)] + _speed_ratio_states()
    restrict = {("x", "+"): "v1>0", ("x", "-"): "v1<0", ("y", "+"): "v2>0", ("y", "-"): "v2<0"}
    worst = 0.0
    worst_split = 0.0
    for p in states:
        p = p.take([0])
        for axis in ("x", "y"):
            plus = split_flux(p, axis, "+")
            minus = split_flux(p, axis, "-")
            full = full_flux(p, axis)
            scale = float(np.max(np.abs(full))) + 1.0
            worst_split = max(worst_split, float(np.max(np.abs(plus + minus - full))) / scale)
            mult = "v1" if axis == "x" else "v2"
            for sign, g in (("+", plus), ("-", minus)):
                for w in range(4):
                    ref = moment_oracle(p, w, restrict[axis, sign], mult)
                    worst = max(worst, abs(float(g[w, 0]) - ref))
    ok = worst <= 1e-8 and worst_split <= 1e-13
    _line(2, ok, f"split fluxes: oracle err {worst:.2e}, splitting defect {worst_split:.2e}")


def test_03_k_exactness():
    rng = np.random.default_rng(303)
    worst1 = worst2 = 0.0
    checked = 0
    for seed in range(5):
        cloud = jittered_cloud(n=9, seed=seed)
        conn = build_stencils(cloud)
        a, b, c = rng.uniform(-2, 2, 3)
        d, e, f = rng.uniform(-1, 1, 3)
        lin = a + b * cloud.x + c * cloud.y
        quad = lin + d * cloud.x**2 + e * cloud.x * cloud.y + f * cloud.y**2
        gx = b + 2 * d * cloud.x + e * cloud.y
        gy = c + e * cloud.x + 2 * f * cloud.y
        pts = rng.choice(cloud.interior, size=20, replace=False)
        for i in pts:
            g1 = lsq_gradient_first_order(int(i), lin, conn)
            worst1 = max(worst1, abs(g1.fx - b), abs(g1.fy - c))
            g2 = defect_corrected_gradient(int(i), quad, (gx, gy), conn)
            worst2 = max(worst2, abs(g2.fx - gx[i]), abs(g2.fy - gy[i]))
            checked += 1
    ok = checked == 100 and worst1 <= 1e-10 and worst2 <= 1e-10
    _line(3, ok, f"k-exactness on {checked} stencils: linear {worst1:.2e}, quadratic {worst2:.2e}")


def test_04_q_round_trip():
    rng = np.random.default_rng(404)
    p = _random_states(rng, 1000)
    q = primitives_to_q(p)
    p2 = q_to_primitives(q)
    q2 = primitives_to_q(p2)
    worst = 0.0
    for a, b in ((p.rho, p2.rho), (p.u1, p2.u1), (p.u2, p2.u2), (p.p, p2.p)):
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1.0))))
    worst = max(worst, float(np.max(np.abs(q - q2) / np.maximum(np.abs(q), 1.0))))
    ok = worst <= 1e-13
    _line(4, ok, f"q round trips on 1000 states: max rel err {worst:.2e}")


def test_05_free_stream_preservation(desk_naca, desk_naca_conn):
    cfg = SolverConfig(mach=0.63, aoa_deg=2.0, cfl=0.5, n_outer=50, n_inner=3)
    uniform = free_stream(cfg.mach, cfg.aoa_deg, cfg.gamma, n=desk_naca.n_points)
    result = solve(
        cfg, desk_naca, conn=desk_naca_conn, initial_state=uniform, instrument=False
    )
    worst = float(np.max(result.residue_history))
    ok = worst <= 1e-10
    _line(5, ok, f"free-stream preservation, 50 iterations: max residue {worst:.2e}")


def test_06_integrator_order():
    def integrate(dt):
        U = np.array([[1.0], [0.0], [0.0], [0.0]])
        for _ in range(round(1.0 / dt)):
            U_outer = U
            for stage in (1, 2, 3, 4):
                U = state_update_rk(U_outer, U, stage, np.array([dt]), U)
        return float(U[0, 0])

    errs = [abs(integrate(dt) - math.exp(-1.0)) for dt in (0.1, 0.05, 0.025)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = min(orders) >= 2.9
    _line(6, ok, f"integrator order on linear decay: observed {min(orders):.3f}")


def test_07_mode_equivalence(cloud_25k):
    cloud, conn = cloud_25k
    init = perturbed_state(cloud)
    histories = {}
    for mode in ("fused", "split4"):
        cfg = SolverConfig(mach=0.63, aoa_deg=2.0, cfl=0.2, n_outer=30, n_inner=3, mode=mode)
        histories[mode] = solve(
            cfg, cloud, conn=conn, initial_state=init.copy(), instrument=False
        ).residue_history
    identical = np.array_equal(histories["fused"], histories["split4"])
    _line(7, identical, "mode equivalence: fused and split4 histories bit-identical over 30 iterations")


def test_08_thread_determinism(cloud_25k):
    cloud, conn = cloud_25k
    init = perturbed_state(cloud)
    histories = []
    for threads in (1, 2, 8):
        cfg = SolverConfig(
            mach=0.63, aoa_deg=2.0, cfl=0.2, n_outer=30, n_inner=3, threads=threads
        )
        histories.append(
            solve(cfg, cloud, conn=conn, initial_state=init.copy(), instrument=False).residue_history
        )
    identical = all(np.array_equal(histories[0], h) for h in histories[1:])
    _line(8, identical, "determinism: thread counts 1/2/8 give bit-identical histories")


def test_09_desk_airfoil_run(desk_naca, airfoil_runs):
    run2 = airfoil_runs["run2"]
    elapsed = airfoil_runs["elapsed"]
    h = run2.residue_history
    peak = float(np.max(h[50:]))
    drop = peak / float(h[-1])

    pr = run2.primitives
    positive = float(pr.rho.min()) > 0.0 and float(pr.p.min()) > 0.0

    # net kinetic mass flux through the wall faces: incoming half-range
    # stream of the wall-point state plus the outgoing stream of its
    # specular image, evaluated in each point's wall frame
    fs = free_stream(0.63, 2.0)
    ds = _wall_ring_ds(desk_naca)
    frame = airfoil_runs["conn"].wall_frame
    w = frame.points
    ut = pr.u1[w] * frame.tx + pr.u2[w] * frame.ty
    un = pr.u1[w] * frame.nx + pr.u2[w] * frame.ny
    incoming = split_flux(Primitives(pr.rho[w], ut, un, pr.p[w]), "y", "-")
    outgoing = split_flux(Primitives(pr.rho[w], ut, -un, pr.p[w]), "y", "+")
    mass_scale = float(fs.rho[0]) * float(fs.speed[0]) * float(np.sum(ds))
    wall_flux = abs(float(np.sum((incoming[0] + outgoing[0]) * ds))) / mass_scale

    run0 = airfoil_runs["run0"]
    pr0 = run0.primitives
    fs0 = free_stream(0.63, 0.0)
    dyn = 0.5 * float(fs0.rho[0]) * float(fs0.speed[0]) ** 2
    cp0 = (pr0.p[w] - float(fs0.p[0])) / dyn
    lift_proxy = abs(float(np.sum(cp0 * desk_naca.ny[w] * ds)))

    ok = (
        elapsed < 600.0
        and drop >= 1e3
        and positive
        and wall_flux <= 1e-6
        and lift_proxy <= 1e-6
    )
    _line(
        9,
        ok,
        f"desk airfoil: {elapsed:.0f}s/1000 iters, residue drop {drop:.1f}x, "
        f"positive={positive}, wall mass flux {wall_flux:.2e}, "
        f"AoA0 lift proxy {lift_proxy:.2e}",
    )


def test_10_rdp_and_speedup_arithmetic():
    rep = BenchmarkReport.from_timing(points=625000, iterations=1000, wall_seconds=10.0)
    exact = rep.rdp == 10.0 / (1000 * 625000) == 1.6e-8
    slow = BenchmarkReport.from_timing(
        points=2**20, iterations=2**10, wall_seconds=14.4090e-8 * 2**30
    )
    fast = BenchmarkReport.from_timing(
        points=2**20, iterations=2**10, wall_seconds=5.1200e-8 * 2**30
    )
    sp = speedup(fast, slow)
    pair_ok = sp == 14.4090e-8 / 5.1200e-8 and abs(sp - 2.814) <= 1e-3
    ok = exact and pair_ok
    _line(10, ok, f"timing arithmetic: rdp {rep.rdp:.3g} exact, published-pair speedup {sp:.6f}")


def test_11_stage_shares(airfoil_runs):
    stages = airfoil_runs["run2"].stage_seconds
    total = sum(stages.values())
    shares = {k: v / total for k, v in stages.items()}
    top = max(shares, key=shares.get)
    ok = top == "flux_residual"
    ordered = ", ".join(f"{k} {100 * v:.0f}%" for k, v in sorted(shares.items(), key=lambda kv: -kv[1]))
    _line(11, ok, f"stage shares: {ordered}")
