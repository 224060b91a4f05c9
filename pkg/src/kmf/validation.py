"""Invariant and oracle check suites runnable against an arbitrary cloud.

Each check returns (name, passed, detail); the CLI validate subcommand
aggregates them into an exit code.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from kmf import kinetics, lsq, solver, state
from kmf.geometry import Connectivity


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _random_states(rng, n):
    return state.Primitives(
        rho=rng.uniform(0.2, 3.0, n),
        u1=rng.uniform(-2.5, 2.5, n),
        u2=rng.uniform(-2.5, 2.5, n),
        p=rng.uniform(0.2, 3.0, n),
    )


def check_moment_consistency(rng, n_states: int = 12, tol: float = 1e-8) -> CheckResult:
    """<Psi, F> reproduces U and <Psi, v1 F> the x flux, by quadrature."""
    prims = _random_states(rng, n_states)
    worst = 0.0
    for i in range(n_states):
        p = prims.take([i])
        U = state.primitives_to_conserved(p)
        G = kinetics.full_flux(p, "x")
        for w in range(4):
            m = kinetics.moment_oracle(p, w, "full", "1")
            worst = max(worst, abs(m - float(U[w, 0])))
            m = kinetics.moment_oracle(p, w, "full", "v1")
            worst = max(worst, abs(m - float(G[w, 0])))
    return CheckResult("moment-consistency", worst <= tol, f"max abs error {worst:.3e}")


def check_split_fluxes(rng, n_states: int = 8, tol: float = 1e-8) -> CheckResult:
    """Closed-form split fluxes match half-range quadrature; signs sum to
    the full flux."""
    prims = _random_states(rng, n_states)
    worst = 0.0
    worst_sum = 0.0
    for i in range(n_states):
        p = prims.take([i])
        for axis, mult in (("x", "v1"), ("y", "v2")):
            plus = kinetics.split_flux(p, axis, "+")
            minus = kinetics.split_flux(p, axis, "-")
            full = kinetics.full_flux(p, axis)
            scale = np.max(np.abs(full)) + 1.0
            worst_sum = max(worst_sum, float(np.max(np.abs(plus + minus - full)) / scale))
            for w in range(4):
                m = kinetics.moment_oracle(p, w, f"{mult}>0", mult)
                worst = max(worst, abs(m - float(plus[w, 0])))
    ok = worst <= tol and worst_sum <= 1e-13
    return CheckResult(
        "split-fluxes", ok, f"oracle error {worst:.3e}, splitting defect {worst_sum:.3e}"
    )


def check_k_exactness(conn: Connectivity, rng, tol: float = 1e-10) -> CheckResult:
    """First-order gradients exact on linear fields, defect-corrected on
    quadratics, over sampled stencils of this cloud."""
    cloud = conn.cloud
    a, b, c = rng.uniform(-2, 2, 3)
    lin = a + b * cloud.x + c * cloud.y
    d, e, f = rng.uniform(-1, 1, 3)
    quad = lin + d * cloud.x**2 + e * cloud.x * cloud.y + f * cloud.y**2
    gx = b + 2 * d * cloud.x + e * cloud.y
    gy = c + e * cloud.x + 2 * f * cloud.y
    pts = rng.choice(cloud.n_points, size=min(50, cloud.n_points), replace=False)
    worst = 0.0
    for i in pts:
        g1 = lsq.lsq_gradient_first_order(int(i), lin, conn)
        worst = max(worst, abs(g1.fx - b), abs(g1.fy - c))
        g2 = lsq.defect_corrected_gradient(int(i), quad, (gx, gy), conn)
        worst = max(worst, abs(g2.fx - gx[i]), abs(g2.fy - gy[i]))
    return CheckResult("k-exactness", worst <= tol, f"max abs error {worst:.3e}")


def check_cached_sums(conn: Connectivity) -> CheckResult:
    """Cached LS sums equal a direct recomputation from the stencil lists."""
    worst = 0.0
    fams = [("full", conn.full)] + [(k, s) for k, s in conn.split.items()]
    for name, s in fams:
        own = np.repeat(np.arange(s.n_owners), s.counts())
        sxx = np.bincount(own, weights=s.dx * s.dx, minlength=s.n_owners)
        sxy = np.bincount(own, weights=s.dx * s.dy, minlength=s.n_owners)
        syy = np.bincount(own, weights=s.dy * s.dy, minlength=s.n_owners)
        worst = max(
            worst,
            float(np.max(np.abs(sxx - s.sxx), initial=0.0)),
            float(np.max(np.abs(sxy - s.sxy), initial=0.0)),
            float(np.max(np.abs(syy - s.syy), initial=0.0)),
        )
    return CheckResult("cached-sums", worst == 0.0, f"max deviation {worst:.3e}")


def check_free_stream(conn: Connectivity, iters: int = 5, tol: float = 1e-10) -> CheckResult:
    """A uniform free stream stays a fixed point of the full update."""
    cfg = solver.SolverConfig(mach=0.63, aoa_deg=2.0, n_outer=iters)
    uniform = state.free_stream(cfg.mach, cfg.aoa_deg, cfg.gamma, n=conn.cloud.n_points)
    result = solver.solve(cfg, conn.cloud, conn=conn, initial_state=uniform, instrument=False)
    worst = float(np.max(result.residue_history))
    return CheckResult("free-stream", worst <= tol, f"max residue {worst:.3e}")


def run_all(conn: Connectivity, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [
        check_moment_consistency(rng),
        check_split_fluxes(rng),
        check_k_exactness(conn, rng),
        check_cached_sums(conn),
        check_free_stream(conn),
    ]
