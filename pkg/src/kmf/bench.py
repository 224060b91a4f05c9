"""Performance harness: per-run reports, the rate-per-iteration-per-point
metric, and sweeps over threads, kernel mode, or cloud size.

The headline number is

    rdp = wall_seconds / (iterations * points),

the cost of updating one point for one iteration, which makes runs of
different sizes comparable; speedups are ratios of rdp values.  All timing
goes through an injectable clock so the arithmetic is testable exactly.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from kmf.geometry import PointCloud, build_stencils, generate_naca_cloud
from kmf.solver import SolverConfig, solve

WARMUP_DEFAULT = 10

# desk-scale cloud presets for the point-level sweep axis
# Chord counts and ring growth are paired so the first off-wall ring sits
# within a few surface spacings of the body; lopsided combinations starve
# the one-sided wall stencils.
POINT_LEVELS = {
    "2.5k": (84, 30, 1.15, 20.0),
    "10k": (200, 50, 1.15, 20.0),
    "40k": (400, 100, 1.06, 20.0),
}

SWEEP_AXES = ("threads", "mode", "points")

CSV_FIELDS = ("level", "points", "iters", "threads", "mode", "wall_s", "rdp", "speedup")


@dataclass
class BenchmarkReport:
    points: int
    iterations: int
    wall_seconds: float
    rdp: float
    stage_shares: dict
    mode: str
    threads: int
    config: dict
    host: dict
    notes: str = ""

    @classmethod
    def from_timing(
        cls,
        points: int,
        iterations: int,
        wall_seconds: float,
        stage_seconds: dict | None = None,
        mode: str = "fused",
        threads: int = 1,
        config: dict | None = None,
        notes: str = "",
    ) -> "BenchmarkReport":
        if points <= 0 or iterations <= 0:
            raise ValueError("points and iterations must be positive")
        if wall_seconds < 0.0:
            raise ValueError("wall_seconds must be nonnegative")
        stage_seconds = stage_seconds or {}
        shares = {
            k: (v / wall_seconds if wall_seconds > 0.0 else 0.0)
            for k, v in stage_seconds.items()
        }
        return cls(
            points=points,
            iterations=iterations,
            wall_seconds=wall_seconds,
            rdp=wall_seconds / (iterations * points),
            stage_shares=shares,
            mode=mode,
            threads=threads,
            config=config or {},
            host=host_fingerprint(),
            notes=notes,
        )

    def to_dict(self) -> dict:
        return {
            "points": self.points,
            "iterations": self.iterations,
            "wall_seconds": self.wall_seconds,
            "rdp": self.rdp,
            "stage_shares": dict(self.stage_shares),
            "mode": self.mode,
            "threads": self.threads,
            "config": dict(self.config),
            "host": dict(self.host),
            "notes": self.notes,
        }


def host_fingerprint() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpus": os.cpu_count() or 1,
    }


def timed_run(
    config: SolverConfig,
    cloud: PointCloud,
    conn=None,
    warmup: int = WARMUP_DEFAULT,
    clock=time.perf_counter,
    notes: str = "",
) -> BenchmarkReport:
    """Solve with instrumentation; the first ``warmup`` iterations do not
    count toward the timing or the rdp."""
    if warmup < 0 or warmup >= config.n_outer:
        raise ValueError("warmup must satisfy 0 <= warmup < n_outer")
    if conn is None:
        conn = build_stencils(cloud)
    result = solve(
        config, cloud, conn=conn, instrument=True, timing_skip=warmup, clock=clock
    )
    return BenchmarkReport.from_timing(
        points=cloud.n_points,
        iterations=result.timed_iterations,
        wall_seconds=result.wall_seconds,
        stage_seconds=result.stage_seconds,
        mode=config.mode,
        threads=config.threads,
        config=config.to_dict(),
        notes=notes,
    )


def speedup(report: BenchmarkReport, baseline: BenchmarkReport) -> float:
    """baseline.rdp / report.rdp; > 1 means ``report`` is faster."""
    if report.rdp <= 0.0:
        raise ValueError("candidate rdp must be positive")
    return baseline.rdp / report.rdp


@dataclass
class SweepCell:
    label: str
    report: BenchmarkReport | None = None
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.report is None


@dataclass
class SweepResult:
    axis: str
    cells: list
    rows: list = field(default_factory=list)

    @property
    def any_failed(self) -> bool:
        return any(c.failed for c in self.cells)


def sweep(
    config: SolverConfig,
    cloud: PointCloud | None,
    axis: str,
    values,
    warmup: int = WARMUP_DEFAULT,
    clock=time.perf_counter,
) -> SweepResult:
    """One timed run per value of ``axis``; failures are recorded per cell
    and do not abort the rest of the sweep.

    axis 'threads' and 'mode' reuse ``cloud``; axis 'points' regenerates a
    preset cloud per level name ('2.5k', '10k', '40k') or explicit
    (chord_points, layers, growth, far_field) tuple.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    cells = []
    shared_conn = None
    if axis != "points":
        if cloud is None:
            raise ValueError(f"axis {axis!r} needs a cloud")
        shared_conn = build_stencils(cloud)
    for value in values:
        label = str(value)
        try:
            cfg_kw = config.to_dict()
            run_cloud = cloud
            if axis == "threads":
                cfg_kw["threads"] = int(value)
            elif axis == "mode":
                cfg_kw["mode"] = str(value)
            else:
                params = POINT_LEVELS[value] if isinstance(value, str) else tuple(value)
                run_cloud = generate_naca_cloud(*params)
            run_cfg = SolverConfig(**cfg_kw)
            conn = shared_conn if axis != "points" else None
            report = timed_run(
                run_cfg, run_cloud, conn=conn, warmup=warmup, clock=clock, notes=f"{axis}={label}"
            )
            cells.append(SweepCell(label=label, report=report))
        except Exception:
            cells.append(SweepCell(label=label, error=traceback.format_exc()))
    rows = summary_rows(cells)
    return SweepResult(axis=axis, cells=cells, rows=rows)


def summary_rows(cells) -> list:
    """CSV-ready summary; speedup is relative to the first successful cell."""
    base = next((c.report for c in cells if c.report is not None), None)
    rows = []
    for c in cells:
        if c.report is None:
            rows.append(
                {k: "" for k in CSV_FIELDS} | {"level": c.label, "speedup": "failed"}
            )
            continue
        r = c.report
        rows.append(
            {
                "level": c.label,
                "points": r.points,
                "iters": r.iterations,
                "threads": r.threads,
                "mode": r.mode,
                "wall_s": f"{r.wall_seconds:.17g}",
                "rdp": f"{r.rdp:.17g}",
                "speedup": f"{speedup(r, base):.17g}",
            }
        )
    return rows


def write_reports_json(path, reports) -> None:
    payload = [r.to_dict() for r in reports]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
