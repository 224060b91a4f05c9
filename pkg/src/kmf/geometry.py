"""Point clouds, neighbor stencils, and the body-fitted cloud generator.

A cloud is a flat list of points with a class flag (0 interior, 1 wall,
2 outer) and unit normals on boundary points.  Connectivity holds, per
point, the full neighbor stencil plus the four sign-split stencils used by
the upwind flux derivatives, each with its cached least-squares geometry
sums.  Stencils serving the positive split flux in x contain the neighbors
with dx < 0 (the upwind side); ties dx == 0 join both x-split stencils.

Boundary points additionally get stencils in their local tangent/normal
frame: two tangent-split stencils (falling back to the full stencil when a
one-sided set is too thin) and a one-sided normal stencil on the fluid
side (wall) or interior side (outer).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

INTERIOR, WALL, OUTER = 0, 1, 2

_BINARY_MAGIC = b"KMF1"

SPLIT_KINDS = ("x+", "x-", "y+", "y-")

# degeneracy threshold for 2x2 LS determinants, scaled by local spacing^4
DEGENERACY_FACTOR = 1e-12

# radius search falls back to k-nearest when it finds fewer than this
RADIUS_MIN_NEIGHBORS = 8
KNN_DEFAULT = 15
KNN_CAP = 25


class StencilDeficiencyError(ValueError):
    """One or more stencils are unusable (too few points or degenerate).

    ``failures`` lists (point index, stencil kind, reason) for every
    offending stencil, not just the first.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        head = "; ".join(
            f"point {p} [{k}]: {r}" for p, k, r in self.failures[:8]
        )
        more = "" if len(self.failures) <= 8 else f" (+{len(self.failures) - 8} more)"
        super().__init__(f"{len(self.failures)} deficient stencil(s): {head}{more}")


@dataclass
class PointCloud:
    """Scattered 2D points with class flags and boundary normals."""

    x: np.ndarray
    y: np.ndarray
    flag: np.ndarray
    nx: np.ndarray
    ny: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.flag = np.asarray(self.flag, dtype=np.int64)
        self.nx = np.asarray(self.nx, dtype=np.float64)
        self.ny = np.asarray(self.ny, dtype=np.float64)

    @property
    def n_points(self) -> int:
        return self.x.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return np.nonzero(self.flag == INTERIOR)[0]

    @property
    def wall(self) -> np.ndarray:
        return np.nonzero(self.flag == WALL)[0]

    @property
    def outer(self) -> np.ndarray:
        return np.nonzero(self.flag == OUTER)[0]

    def validate(self) -> None:
        n = self.n_points
        for name, a in (("x", self.x), ("y", self.y), ("nx", self.nx), ("ny", self.ny)):
            if a.shape != (n,):
                raise ValueError(f"field {name} has shape {a.shape}, expected ({n},)")
            if not np.isfinite(a).all():
                raise ValueError(f"field {name} contains non-finite values")
        if self.flag.shape != (n,):
            raise ValueError("flag shape mismatch")
        bad = ~np.isin(self.flag, (INTERIOR, WALL, OUTER))
        if bad.any():
            raise ValueError(f"invalid class flag at point {np.nonzero(bad)[0][0]}")
        if not (self.flag == INTERIOR).any():
            raise ValueError("cloud has no interior points")
        bnd = self.flag != INTERIOR
        if bnd.any():
            norm = np.hypot(self.nx[bnd], self.ny[bnd])
            off = np.abs(norm - 1.0) > 1e-12
            if off.any():
                i = np.nonzero(bnd)[0][np.nonzero(off)[0][0]]
                raise ValueError(
                    f"boundary normal at point {i} is not unit length "
                    f"(|n| = {np.hypot(self.nx[i], self.ny[i]):.17g})"
                )


def read_point_cloud(source) -> PointCloud:
    """Read a cloud from a path, file object, or bytes; text or binary.

    Text format: first significant line is the point count, then one line
    per point with ``x y flag`` and, for boundary points, ``nx ny``.
    ``#`` starts a comment.  The binary twin starts with magic ``KMF1``.
    """
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode()
    if data[:4] == _BINARY_MAGIC:
        return _read_binary(data)
    return _read_text(data.decode())


def _read_text(text: str) -> PointCloud:
    rows = []
    n_expected = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n_expected is None:
            if len(parts) != 1:
                raise ValueError(f"line {lineno}: expected point count, got {raw!r}")
            n_expected = int(parts[0])
            if n_expected <= 0:
                raise ValueError(f"line {lineno}: point count must be positive")
            continue
        try:
            x, y = float(parts[0]), float(parts[1])
            flag = int(parts[2])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: malformed point record {raw!r}") from exc
        if flag == INTERIOR:
            if len(parts) != 3:
                raise ValueError(
                    f"line {lineno}: interior point takes exactly 'x y flag'"
                )
            nx = ny = 0.0
        else:
            if len(parts) != 5:
                raise ValueError(
                    f"line {lineno}: boundary point needs 'x y flag nx ny'"
                )
            nx, ny = float(parts[3]), float(parts[4])
        rows.append((x, y, flag, nx, ny))
    if n_expected is None:
        raise ValueError("empty grid file")
    if len(rows) != n_expected:
        raise ValueError(f"header says {n_expected} points, file has {len(rows)}")
    arr = np.array(rows, dtype=np.float64)
    cloud = PointCloud(arr[:, 0], arr[:, 1], arr[:, 2].astype(np.int64), arr[:, 3], arr[:, 4])
    cloud.validate()
    return cloud


def _read_binary(data: bytes) -> PointCloud:
    buf = data[len(_BINARY_MAGIC):]
    (n,) = np.frombuffer(buf[:8], dtype="<i8")
    n = int(n)
    body = np.frombuffer(buf[8:], dtype="<f8")
    if body.size != 5 * n:
        raise ValueError(f"binary grid: expected {5 * n} floats, found {body.size}")
    x, y, flag, nx, ny = body.reshape(5, n)
    fl = flag.astype(np.int64)
    if not np.all(flag == fl):
        raise ValueError("binary grid: non-integer class flag")
    cloud = PointCloud(x.copy(), y.copy(), fl, nx.copy(), ny.copy())
    cloud.validate()
    return cloud


def write_point_cloud(cloud: PointCloud, path, binary: bool = False) -> None:
    cloud.validate()
    path = Path(path)
    if binary:
        blocks = [
            cloud.x,
            cloud.y,
            cloud.flag.astype(np.float64),
            cloud.nx,
            cloud.ny,
        ]
        payload = np.concatenate(blocks).astype("<f8").tobytes()
        header = _BINARY_MAGIC + np.array([cloud.n_points], dtype="<i8").tobytes()
        path.write_bytes(header + payload)
        return
    out = io.StringIO()
    out.write(f"{cloud.n_points}\n")
    for i in range(cloud.n_points):
        if cloud.flag[i] == INTERIOR:
            out.write(f"{cloud.x[i]:.17g} {cloud.y[i]:.17g} 0\n")
        else:
            out.write(
                f"{cloud.x[i]:.17g} {cloud.y[i]:.17g} {int(cloud.flag[i])} "
                f"{cloud.nx[i]:.17g} {cloud.ny[i]:.17g}\n"
            )
    path.write_text(out.getvalue())


@dataclass
class StencilSet:
    """One family of stencils in CSR form with cached LS geometry.

    ``ptr`` has one entry per owner point plus one; ``idx`` holds neighbor
    point indices; ``dx``/``dy`` the offsets neighbor minus owner (rotated
    to the local frame for boundary families).  ``sxx``/``sxy``/``syy`` are
    the cached sums of dx*dx, dx*dy, dy*dy per owner and ``det`` their 2x2
    determinant.
    """

    ptr: np.ndarray
    idx: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    sxx: np.ndarray = field(default=None)
    sxy: np.ndarray = field(default=None)
    syy: np.ndarray = field(default=None)
    det: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.sxx is None:
            self._refresh_sums()

    def _refresh_sums(self):
        n = self.ptr.shape[0] - 1
        owner = np.repeat(np.arange(n), np.diff(self.ptr))
        self.sxx = np.bincount(owner, weights=self.dx * self.dx, minlength=n)
        self.sxy = np.bincount(owner, weights=self.dx * self.dy, minlength=n)
        self.syy = np.bincount(owner, weights=self.dy * self.dy, minlength=n)
        self.det = self.sxx * self.syy - self.sxy * self.sxy

    @property
    def n_owners(self) -> int:
        return self.ptr.shape[0] - 1

    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.idx[self.ptr[i]:self.ptr[i + 1]]

    def offsets(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(self.ptr[i], self.ptr[i + 1])
        return self.dx[sl], self.dy[sl]


@dataclass
class FrameStencils:
    """Rotated-frame stencils for one boundary class (wall or outer).

    ``points`` are global indices; ``tx/ty`` and ``nx/ny`` the unit tangent
    and normal per point.  The three StencilSets are owned by these points
    (local owner numbering) with dx = dt and dy = dn in the local frame.
    ``tplus`` serves the positive tangent split flux (neighbors with
    dt < 0 plus ties), ``tminus`` the negative one; ``normal`` is the
    one-sided stencil used for both normal-direction terms.
    ``fallback`` marks points whose tangent-split sets were replaced by the
    full stencil ('+', '-', or '+-').
    """

    points: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    tplus: StencilSet
    tminus: StencilSet
    normal: StencilSet
    fallback: dict


@dataclass
class Connectivity:
    """Full and split stencils for a cloud, with cached LS sums."""

    cloud: PointCloud
    full: StencilSet
    split: dict
    d_min: np.ndarray
    d_mean: np.ndarray
    wall_frame: FrameStencils | None = None
    outer_frame: FrameStencils | None = None
    # split determinants with boundary owners masked to 1 so interior
    # kernels can divide without warnings; boundary rows are overwritten
    det_safe: dict = field(default_factory=dict)

    def ls_matrix(self, i: int, kind: str = "full"):
        """Cached (sxx, sxy, syy, det) for point ``i`` and stencil ``kind``."""
        s = self.full if kind == "full" else self.split[kind]
        return s.sxx[i], s.sxy[i], s.syy[i], s.det[i]


def _knn_neighbors(x, y, k, subset=None):
    """Sorted k-nearest neighbor lists (self excluded) for all points or a subset.

    The count cut is tie-inclusive: every point exactly as far as the k-th
    neighbor is kept.  Index-order tie breaking would otherwise pick one
    member of an equidistant pair, which on a mirror-symmetric cloud hands
    the axis points asymmetric stencils.
    """
    n = x.shape[0]
    tree = cKDTree(np.column_stack([x, y]))
    query = np.arange(n) if subset is None else np.asarray(subset)
    k_eff = min(k + 1, n)
    pad = min(k_eff + 8, n)
    dist, idx = tree.query(np.column_stack([x[query], y[query]]), k=pad)
    dist, idx = np.atleast_2d(dist), np.atleast_2d(idx)
    out = []
    for q, d, row in zip(query, dist, idx):
        cut = d[k_eff - 1]
        take = d <= cut
        if pad < n and take.all():
            # every padded candidate ties with the cut; fall back to a
            # per-point query wide enough to see past the tie plateau
            wide = pad
            while True:
                wide = min(wide * 2, n)
                d, row = tree.query([x[q], y[q]], k=wide)
                take = d <= d[k_eff - 1]
                if wide == n or not take.all():
                    break
        sel = row[take]
        out.append(np.sort(sel[sel != q]))
    return out


def _radius_neighbors(x, y, eps):
    """Uniform-bin spatial hash: exact neighbor lists within radius eps."""
    n = x.shape[0]
    bx = np.floor(x / eps).astype(np.int64)
    by = np.floor(y / eps).astype(np.int64)
    order = np.lexsort((by, bx))
    keys = np.stack([bx[order], by[order]], axis=1)
    starts = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
    starts = np.concatenate([[0], starts, [n]])
    bins = {}
    for s, e in zip(starts[:-1], starts[1:]):
        bins[(keys[s, 0], keys[s, 1])] = order[s:e]
    eps2 = eps * eps
    neigh = []
    for i in range(n):
        cand = []
        for dbx in (-1, 0, 1):
            for dby in (-1, 0, 1):
                got = bins.get((bx[i] + dbx, by[i] + dby))
                if got is not None:
                    cand.append(got)
        cand = np.concatenate(cand)
        d2 = (x[cand] - x[i]) ** 2 + (y[cand] - y[i]) ** 2
        sel = cand[(d2 < eps2) & (cand != i)]
        neigh.append(np.sort(sel))
    return neigh


def _csr_from_lists(cloud, lists):
    counts = np.fromiter((len(v) for v in lists), dtype=np.int64, count=len(lists))
    ptr = np.concatenate([[0], np.cumsum(counts)])
    idx = np.concatenate(lists) if ptr[-1] else np.empty(0, dtype=np.int64)
    owner = np.repeat(np.arange(len(lists)), counts)
    dx = cloud.x[idx] - cloud.x[owner]
    dy = cloud.y[idx] - cloud.y[owner]
    return StencilSet(ptr=ptr, idx=idx.astype(np.int64), dx=dx, dy=dy)


def _subset_csr(full: StencilSet, mask: np.ndarray) -> StencilSet:
    counts = np.bincount(
        np.repeat(np.arange(full.n_owners), full.counts())[mask],
        minlength=full.n_owners,
    )
    ptr = np.concatenate([[0], np.cumsum(counts)])
    return StencilSet(ptr=ptr, idx=full.idx[mask], dx=full.dx[mask], dy=full.dy[mask])


def _visibility_filter(cloud, lists, owners=None):
    """Drop candidate edges that cut through the solid behind the wall.

    Near a thin trailing edge the metric distance between the two sides of
    the body is smaller than the stencil radius, so nearest-neighbor search
    happily pairs points across the solid.  Gradients built from such pairs
    couple the two surfaces through the wall and feed a violent aft
    flapping mode.  An edge is rejected when any of its quarter, mid, or
    three-quarter points lies behind the tangent plane of the nearest wall
    point by more than a tolerance; the slack keeps legitimate
    along-surface chords, whose sagitta on a convex body is far shallower.

    The tolerance is 0.2 local wall spacings, tightened to 0.45 of the
    local body thickness where the body is thinner than that (the thickness
    at a wall point is its distance to the nearest wall point whose normal
    opposes its own).  Without the tightening, edges linking the two sides
    of a sub-spacing-thick tail pass the plane test.

    ``lists[r]`` holds the candidate neighbors of point ``owners[r]``
    (``owners`` defaults to all points in order).
    """
    w = np.flatnonzero(cloud.flag == WALL)
    if w.size < 2:
        return lists
    wx, wy = cloud.x[w], cloud.y[w]
    wnx, wny = cloud.nx[w], cloud.ny[w]
    tree = cKDTree(np.column_stack([wx, wy]))
    gap, _ = tree.query(np.column_stack([wx, wy]), k=2)
    spacing = gap[:, 1]

    kq = min(16, w.size)
    dists, cand = tree.query(np.column_stack([wx, wy]), k=kq)
    opposing = (
        wnx[:, None] * wnx[cand] + wny[:, None] * wny[cand] < -0.5
    )
    thick = np.where(opposing, dists, np.inf).min(axis=1)
    tol = np.minimum(0.2 * spacing, 0.45 * thick)

    counts = np.fromiter((len(v) for v in lists), dtype=np.int64, count=len(lists))
    if not counts.sum():
        return lists
    idx = np.concatenate(lists).astype(np.int64)
    owner_pos = np.arange(len(lists)) if owners is None else np.asarray(owners)
    owner = np.repeat(owner_pos, counts)
    keep = np.ones(idx.shape[0], dtype=bool)
    for frac in (0.25, 0.5, 0.75):
        sx = cloud.x[owner] + frac * (cloud.x[idx] - cloud.x[owner])
        sy = cloud.y[owner] + frac * (cloud.y[idx] - cloud.y[owner])
        dist, near = tree.query(np.column_stack([sx, sy]))
        depth = (sx - wx[near]) * wnx[near] + (sy - wy[near]) * wny[near]
        keep &= (dist > 2.0 * spacing[near]) | (depth > -tol[near])
    if keep.all():
        return lists
    ptr = np.concatenate([[0], np.cumsum(counts)])
    return [idx[ptr[i]:ptr[i + 1]][keep[ptr[i]:ptr[i + 1]]] for i in range(len(lists))]


def build_stencils(
    cloud: PointCloud,
    epsilon: float | None = None,
    k: int | None = None,
) -> Connectivity:
    """Build full, split, and boundary-frame stencils with cached sums.

    Exactly one search mode applies: a radius ``epsilon`` (uniform-bin
    spatial hash, with k-nearest fallback where the ball holds fewer than
    8 points) or a neighbor count ``k``.  With neither given, k = 15.

    Raises
    ------
    StencilDeficiencyError
        Listing every interior stencil with fewer than 3 points or a
        near-singular LS matrix, and every boundary normal stencil that is
        unusable.  Boundary tangent-split stencils fall back to the full
        stencil instead of failing.
    """
    cloud.validate()
    if epsilon is not None and k is not None:
        raise ValueError("give either epsilon or k, not both")
    if epsilon is not None and epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if k is not None and k < 6:
        raise ValueError("k must be at least 6")

    if epsilon is not None:
        lists = _radius_neighbors(cloud.x, cloud.y, epsilon)
        thin = [i for i, v in enumerate(lists) if len(v) < RADIUS_MIN_NEIGHBORS]
        if thin:
            for i, row in zip(thin, _knn_neighbors(cloud.x, cloud.y, KNN_DEFAULT, thin)):
                lists[i] = row
    else:
        lists = _knn_neighbors(cloud.x, cloud.y, min(k or KNN_DEFAULT, KNN_CAP))

    lists = _visibility_filter(cloud, lists)
    parts = _assemble(cloud, lists)
    if parts.failures:
        # one-sided stencils come up short where the cloud is strongly
        # anisotropic (leading and trailing edges); widen those balls to
        # the cap before giving up
        widen = sorted({i for i, _, _ in parts.failures if len(lists[i]) < KNN_CAP})
        if widen:
            wide_rows = _knn_neighbors(cloud.x, cloud.y, KNN_CAP, widen)
            wide_rows = _visibility_filter(cloud, wide_rows, owners=widen)
            for i, row in zip(widen, wide_rows):
                lists[i] = row
            parts = _assemble(cloud, lists)
    if parts.failures:
        raise StencilDeficiencyError(parts.failures)

    interior = cloud.flag == INTERIOR
    det_safe = {
        kind: np.where(interior, s.det, 1.0) for kind, s in parts.split.items()
    }
    return Connectivity(
        cloud=cloud,
        full=parts.full,
        split=parts.split,
        d_min=parts.d_min,
        d_mean=parts.d_mean,
        wall_frame=parts.wall_frame,
        outer_frame=parts.outer_frame,
        det_safe=det_safe,
    )


@dataclass
class _Assembled:
    full: StencilSet
    split: dict
    d_min: np.ndarray
    d_mean: np.ndarray
    wall_frame: FrameStencils | None
    outer_frame: FrameStencils | None
    failures: list


def _assemble(cloud, lists) -> _Assembled:
    """CSR construction plus the full deficiency scan for one neighbor-list set."""
    full = _csr_from_lists(cloud, lists)
    n = cloud.n_points
    owner = np.repeat(np.arange(n), full.counts())
    dist = np.hypot(full.dx, full.dy)
    d_min = np.full(n, np.inf)
    np.minimum.at(d_min, owner, dist)
    d_sum = np.bincount(owner, weights=dist, minlength=n)
    cnt = np.maximum(full.counts(), 1)
    d_mean = d_sum / cnt

    split = {
        "x+": _subset_csr(full, full.dx <= 0.0),
        "x-": _subset_csr(full, full.dx >= 0.0),
        "y+": _subset_csr(full, full.dy <= 0.0),
        "y-": _subset_csr(full, full.dy >= 0.0),
    }

    failures = []
    interior = cloud.flag == INTERIOR
    thresh = DEGENERACY_FACTOR * d_mean**4
    for i in np.nonzero(full.counts() < 3)[0]:
        failures.append((int(i), "full", f"only {full.counts()[i]} neighbors"))
    ok_full = full.counts() >= 3
    degen = ok_full & (np.abs(full.det) < thresh)
    for i in np.nonzero(degen)[0]:
        failures.append((int(i), "full", f"degenerate LS matrix (det {full.det[i]:.3e})"))
    for kind, s in split.items():
        small = interior & (s.counts() < 3)
        for i in np.nonzero(small)[0]:
            failures.append((int(i), kind, f"only {s.counts()[i]} neighbors"))
        deg = interior & (s.counts() >= 3) & (np.abs(s.det) < thresh)
        for i in np.nonzero(deg)[0]:
            failures.append((int(i), kind, f"degenerate LS matrix (det {s.det[i]:.3e})"))

    wall_frame = _build_frame(cloud, full, thresh, cloud.wall, side=+1.0, failures=failures)
    outer_frame = _build_frame(cloud, full, thresh, cloud.outer, side=-1.0, failures=failures)
    return _Assembled(full, split, d_min, d_mean, wall_frame, outer_frame, failures)


def _build_frame(cloud, full, thresh, points, side, failures):
    """Rotated stencils for one boundary class.

    ``side`` selects the usable half space for the normal stencil: +1 keeps
    dn > 0 (wall: fluid lies along +n), -1 keeps dn < 0 (outer: interior
    lies along -n).  Ties dn == 0 are kept in both cases.
    """
    if points.size == 0:
        return None
    nx, ny = cloud.nx[points], cloud.ny[points]
    tx, ty = -ny, nx  # 90 degree rotation; orientation is immaterial
    kind_label = "wall" if side > 0 else "outer"

    tp_rows, tm_rows, nr_rows = [], [], []
    fallback = {}
    for local, gi in enumerate(points):
        sl = slice(full.ptr[gi], full.ptr[gi + 1])
        idx = full.idx[sl]
        dxg, dyg = full.dx[sl], full.dy[sl]
        dt = dxg * tx[local] + dyg * ty[local]
        dn = dxg * nx[local] + dyg * ny[local]
        rows = np.stack([idx.astype(np.float64), dt, dn], axis=1)

        def pick(mask):
            sub = rows[mask]
            stt = float(np.sum(sub[:, 1] ** 2))
            snn = float(np.sum(sub[:, 2] ** 2))
            stn = float(np.sum(sub[:, 1] * sub[:, 2]))
            det = stt * snn - stn * stn
            ok = sub.shape[0] >= 3 and abs(det) >= thresh[gi]
            return sub, ok

        tp, tp_ok = pick(dt <= 0.0)
        tm, tm_ok = pick(dt >= 0.0)
        fb = ""
        if not tp_ok:
            tp, _ = pick(np.ones_like(dt, dtype=bool))
            fb += "+"
        if not tm_ok:
            tm, _ = pick(np.ones_like(dt, dtype=bool))
            fb += "-"
        if fb:
            fallback[int(gi)] = fb
        nr, nr_ok = pick(dn >= 0.0 if side > 0 else dn <= 0.0)
        if not nr_ok:
            failures.append(
                (int(gi), f"{kind_label}-normal", f"unusable one-sided stencil ({nr.shape[0]} pts)")
            )
        tp_rows.append(tp)
        tm_rows.append(tm)
        nr_rows.append(nr)

    def assemble(rows):
        counts = np.array([r.shape[0] for r in rows], dtype=np.int64)
        ptr = np.concatenate([[0], np.cumsum(counts)])
        if ptr[-1]:
            cat = np.concatenate(rows, axis=0)
        else:
            cat = np.empty((0, 3))
        return StencilSet(
            ptr=ptr, idx=cat[:, 0].astype(np.int64), dx=cat[:, 1], dy=cat[:, 2]
        )

    return FrameStencils(
        points=points,
        tx=tx,
        ty=ty,
        nx=nx,
        ny=ny,
        tplus=assemble(tp_rows),
        tminus=assemble(tm_rows),
        normal=assemble(nr_rows),
        fallback=fallback,
    )


# ---------------------------------------------------------------------------
# body-fitted cloud generator

_T = 0.12  # NACA 0012 thickness ratio
# closed trailing edge: the x^4 coefficient makes the thickness vanish at x=1
_COEF = (0.2969, -0.1260, -0.3516, 0.2843, -0.1036)
_CLUSTER = 0.6  # arc-length clustering strength toward nose and trailing edge


def _thickness(xc):
    a0, a1, a2, a3, a4 = _COEF
    return 5.0 * _T * (
        a0 * np.sqrt(xc) + xc * (a1 + xc * (a2 + xc * (a3 + xc * a4)))
    )


def _thickness_slope(xc):
    a0, a1, a2, a3, a4 = _COEF
    return 5.0 * _T * (
        0.5 * a0 / np.sqrt(xc) + a1 + xc * (2.0 * a2 + xc * (3.0 * a3 + xc * 4.0 * a4))
    )


def generate_naca_cloud(
    chord_points: int = 80,
    layers: int = 30,
    growth: float = 1.15,
    far_field: float = 20.0,
) -> PointCloud:
    """O-type cloud around a NACA 0012 airfoil (unit chord from (0,0) to (1,0)).

    ``chord_points`` points wrap the closed surface with cosine clustering
    at both edges; ``layers`` rings blend outward to a far-field circle of
    radius ``far_field`` chords centered mid-chord, with spacing growing by
    ``growth`` per ring.  The innermost ring is the wall, the outermost the
    outer boundary.  The lower half is an exact mirror of the upper half,
    so the cloud is y-symmetric to the last bit.
    """
    if chord_points < 40:
        raise ValueError("chord_points must be at least 40")
    if chord_points % 2:
        raise ValueError("chord_points must be even (mirror-symmetric surface)")
    if layers < 4:
        raise ValueError("layers must be at least 4")
    if growth < 1.0:
        raise ValueError("growth must be >= 1")
    if far_field <= 2.0:
        raise ValueError("far_field must exceed 2 chords")

    m = chord_points
    half = m // 2
    # equal-arc-length sampling of the upper surface (TE toward LE).
    # Cosine-in-x clustering would put surface spacings two orders finer
    # than the first normal gap near the edges; that anisotropy poisons
    # the LS stencils.  A sqrt-stretched abscissa resolves the nose in
    # the arc-length table itself.
    fine = np.linspace(0.0, 1.0, 4001) ** 2
    arc = np.concatenate(
        [[0.0], np.cumsum(np.hypot(np.diff(fine), np.diff(_thickness(fine))))]
    )
    # mild clustering toward both ends of the arc (nose and trailing edge):
    # spacing ratio (1 - _CLUSTER) : (1 + _CLUSTER), smooth in between
    t = np.arange(1, half) / half
    s_targets = arc[-1] * (1.0 - (t - _CLUSTER * np.sin(2.0 * np.pi * t) / (2.0 * np.pi)))
    xs_up = np.interp(s_targets, arc, fine)
    ys_up = _thickness(xs_up)

    sx = np.concatenate([[1.0], xs_up, [0.0], xs_up[::-1]])
    sy = np.concatenate([[0.0], ys_up, [0.0], -ys_up[::-1]])

    slope_up = _thickness_slope(xs_up)
    nrm = np.hypot(slope_up, 1.0)
    nx_up = -slope_up / nrm
    ny_up = 1.0 / nrm
    wall_nx = np.concatenate([[1.0], nx_up, [-1.0], nx_up[::-1]])
    wall_ny = np.concatenate([[0.0], ny_up, [0.0], -ny_up[::-1]])

    # far-field circle: uniform angles, same exact mirroring
    phi_up = np.pi * np.arange(1, half) / half
    cx_up = 0.5 + far_field * np.cos(phi_up)
    cy_up = far_field * np.sin(phi_up)
    cx = np.concatenate([[0.5 + far_field], cx_up, [0.5 - far_field], cx_up[::-1]])
    cy = np.concatenate([[0.0], cy_up, [0.0], -cy_up[::-1]])
    outer_nx = np.concatenate(
        [[1.0], np.cos(phi_up), [-1.0], np.cos(phi_up)[::-1]]
    )
    outer_ny = np.concatenate(
        [[0.0], np.sin(phi_up), [0.0], -np.sin(phi_up)[::-1]]
    )

    # blend fractions with geometric gap growth
    gaps = growth ** np.arange(layers - 1)
    s = np.concatenate([[0.0], np.cumsum(gaps)]) / np.sum(gaps)

    xs, ys, flags, nxs, nys = [], [], [], [], []
    for j, sj in enumerate(s):
        px = (1.0 - sj) * sx + sj * cx
        py = (1.0 - sj) * sy + sj * cy
        xs.append(px)
        ys.append(py)
        if j == 0:
            flags.append(np.full(m, WALL, dtype=np.int64))
            nxs.append(wall_nx)
            nys.append(wall_ny)
        elif j == layers - 1:
            flags.append(np.full(m, OUTER, dtype=np.int64))
            nxs.append(outer_nx)
            nys.append(outer_ny)
        else:
            flags.append(np.full(m, INTERIOR, dtype=np.int64))
            nxs.append(np.zeros(m))
            nys.append(np.zeros(m))

    cloud = PointCloud(
        np.concatenate(xs),
        np.concatenate(ys),
        np.concatenate(flags),
        np.concatenate(nxs),
        np.concatenate(nys),
    )
    cloud.validate()
    return cloud
