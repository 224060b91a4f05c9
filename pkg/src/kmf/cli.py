"""Command-line entry points: generate, solve, bench, validate, info."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from kmf import bench as bench_mod
from kmf import validation
from kmf.geometry import build_stencils, generate_naca_cloud, read_point_cloud, write_point_cloud
from kmf.solver import SolverConfig, solve
from kmf.state import free_stream

ENV_THREADS = "KMF_THREADS"

CONFIG_DEFAULTS = {
    "mach": 0.63,
    "aoa": 0.0,
    "gamma": 1.4,
    "cfl": 0.2,
    "iters": 1000,
    "inner_iters": 3,
    "mode": "fused",
    "threads": None,  # resolved against KMF_THREADS, then 1
    "tol": None,
}

_FLOAT_KEYS = ("mach", "aoa", "gamma", "cfl", "tol")
_INT_KEYS = ("iters", "inner_iters", "threads")


def fmt(x) -> str:
    """Floats at 17 significant digits; everything else via str."""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def read_config_file(path) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if val.lower() == "none":
            out[key] = None
        elif key in _FLOAT_KEYS:
            out[key] = float(val)
        elif key in _INT_KEYS:
            out[key] = int(val)
        else:
            out[key] = val
    return out


def resolve_config(args) -> dict:
    """Merge precedence: command line > config file > defaults."""
    merged = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            merged[key] = cli_val
    if merged["threads"] is None:
        merged["threads"] = int(os.environ.get(ENV_THREADS, "1"))
    return merged


def write_config_echo(path, merged: dict) -> None:
    lines = [f"{key} = {fmt(merged[key])}" for key in sorted(merged)]
    Path(path).write_text("\n".join(lines) + "\n")


def solver_config(merged: dict, mode: str | None = None) -> SolverConfig:
    return SolverConfig(
        mach=merged["mach"],
        aoa_deg=merged["aoa"],
        gamma=merged["gamma"],
        cfl=merged["cfl"],
        n_outer=merged["iters"],
        n_inner=merged["inner_iters"],
        mode=mode or merged["mode"],
        threads=merged["threads"],
        convergence_tol=merged["tol"],
    )


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--mach", type=float)
    p.add_argument("--aoa", type=float, help="angle of attack, degrees")
    p.add_argument("--gamma", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--inner-iters", dest="inner_iters", type=int)
    p.add_argument("--mode", choices=("fused", "split4"))
    p.add_argument("--threads", type=int)
    p.add_argument("--tol", type=float, help="stop when the residue drops below this")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a body-fitted point cloud")
    g.add_argument("--chord-points", type=int, default=80)
    g.add_argument("--layers", type=int, default=30)
    g.add_argument("--growth", type=float, default=1.15)
    g.add_argument("--far-field", type=float, default=20.0)
    g.add_argument("--binary", action="store_true")
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run the flow solver on a grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True, help="output directory")
    _add_config_flags(s)

    b = sub.add_parser("bench", help="timed runs over modes and thread counts")
    b.add_argument("--grid")
    b.add_argument("--level", action="append", choices=sorted(bench_mod.POINT_LEVELS),
                   help="sweep preset cloud sizes instead of a fixed grid")
    b.add_argument("--modes", default="fused")
    b.add_argument("--thread-counts", default=None,
                   help="comma-separated worker counts, e.g. 1,4")
    b.add_argument("--warmup", type=int, default=bench_mod.WARMUP_DEFAULT)
    b.add_argument("--out", required=True, help="output directory")
    _add_config_flags(b)

    v = sub.add_parser("validate", help="run invariant suites against a grid")
    v.add_argument("--grid", required=True)
    v.add_argument("--seed", type=int, default=0)

    i = sub.add_parser("info", help="grid statistics")
    i.add_argument("--grid", required=True)

    return parser


def cmd_generate(args) -> int:
    cloud = generate_naca_cloud(args.chord_points, args.layers, args.growth, args.far_field)
    write_point_cloud(cloud, args.out, binary=args.binary)
    print(
        f"wrote {cloud.n_points} points ({cloud.wall.size} wall, "
        f"{cloud.outer.size} outer) to {args.out}"
    )
    return 0


def cmd_solve(args) -> int:
    merged = resolve_config(args)
    cloud = read_point_cloud(args.grid)
    cfg = solver_config(merged)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = solve(cfg, cloud)

    xs, ys = cloud.x, cloud.y
    pr = result.primitives
    with open(out / "solution.csv", "w") as fh:
        fh.write("x,y,rho,u1,u2,p\n")
        for i in range(cloud.n_points):
            fh.write(
                f"{fmt(xs[i])},{fmt(ys[i])},{fmt(pr.rho[i])},"
                f"{fmt(pr.u1[i])},{fmt(pr.u2[i])},{fmt(pr.p[i])}\n"
            )
    with open(out / "history.csv", "w") as fh:
        fh.write("iter,residue\n")
        for it, res in enumerate(result.residue_history, start=1):
            fh.write(f"{it},{fmt(float(res))}\n")
    fs = free_stream(cfg.mach, cfg.aoa_deg, cfg.gamma)
    dyn = 0.5 * float(fs.rho[0]) * float(fs.speed[0]) ** 2
    with open(out / "wall.csv", "w") as fh:
        fh.write("x,y,cp\n")
        for i in cloud.wall:
            cp = (pr.p[i] - float(fs.p[0])) / dyn
            fh.write(f"{fmt(xs[i])},{fmt(ys[i])},{fmt(cp)}\n")
    write_config_echo(out / "config.txt", merged)
    print(
        f"{result.iterations} iterations, final residue "
        f"{fmt(float(result.residue_history[-1]))}, outputs in {out}"
    )
    return 0


def cmd_bench(args) -> int:
    merged = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    threads = (
        [int(t) for t in args.thread_counts.split(",")]
        if args.thread_counts
        else [merged["threads"]]
    )

    cells = []
    if args.level:
        cfg = solver_config(merged)
        result = bench_mod.sweep(cfg, None, "points", args.level, warmup=args.warmup)
        cells.extend(result.cells)
    else:
        if not args.grid:
            print("bench needs --grid or --level", file=sys.stderr)
            return 2
        cloud = read_point_cloud(args.grid)
        conn = build_stencils(cloud)
        for mode in modes:
            for t in threads:
                label = f"{mode}/t{t}"
                try:
                    run_merged = dict(merged, mode=mode, threads=t)
                    report = bench_mod.timed_run(
                        solver_config(run_merged), cloud, conn=conn,
                        warmup=args.warmup, notes=label,
                    )
                    cells.append(bench_mod.SweepCell(label=label, report=report))
                except Exception as exc:  # cell failure must not kill the sweep
                    import traceback

                    cells.append(
                        bench_mod.SweepCell(label=label, error=traceback.format_exc())
                    )
                    print(f"cell {label} failed: {exc}", file=sys.stderr)

    reports = [c.report for c in cells if c.report is not None]
    bench_mod.write_reports_json(out / "reports.json", reports)
    bench_mod.write_summary_csv(out / "summary.csv", bench_mod.summary_rows(cells))
    write_config_echo(out / "config.txt", merged)
    for row in bench_mod.summary_rows(cells):
        print(
            f"{row['level']}: points={row['points']} rdp={row['rdp']} "
            f"speedup={row['speedup']}"
        )
    return 1 if any(c.failed for c in cells) else 0


def cmd_validate(args) -> int:
    cloud = read_point_cloud(args.grid)
    conn = build_stencils(cloud)
    results = validation.run_all(conn, seed=args.seed)
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        all_ok &= r.passed
        print(f"{status} {r.name}: {r.detail}")
    return 0 if all_ok else 1


def cmd_info(args) -> int:
    cloud = read_point_cloud(args.grid)
    kinds = {"interior": cloud.interior.size, "wall": cloud.wall.size, "outer": cloud.outer.size}
    print(f"points: {cloud.n_points}")
    for k, v in kinds.items():
        print(f"  {k}: {v}")
    print(f"x range: [{fmt(float(cloud.x.min()))}, {fmt(float(cloud.x.max()))}]")
    print(f"y range: [{fmt(float(cloud.y.min()))}, {fmt(float(cloud.y.max()))}]")
    if cloud.n_points > 1:
        conn = build_stencils(cloud)
        print(f"min spacing: {fmt(float(np.min(conn.d_min)))}")
        print(f"mean spacing: {fmt(float(np.mean(conn.d_mean)))}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "solve": cmd_solve,
        "bench": cmd_bench,
        "validate": cmd_validate,
        "info": cmd_info,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
