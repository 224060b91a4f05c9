"""Least-squares derivative operators on scattered stencils.

The first-order gradient at P0 solves the 2x2 normal equations

    [sum dx^2   sum dx dy] [fx]   [sum dx df]
    [sum dx dy  sum dy^2 ] [fy] = [sum dy df]

over a stencil, using the geometry sums cached on the Connectivity.  The
defect-corrected variant replaces df by

    df~_i = df_i - (dx_i*(fx_i - fx_0) + dy_i*(fy_i - fy_0))/2,

which cancels the quadratic truncation term and makes the same 2x2 solve
exact on quadratics when the nodal gradients are exact.  For the entropy
variables the nodal gradients are themselves defined through the modified
differences, so they are computed by a fixed number of Jacobi sweeps of
the implicit formula, restarted from the plain first-order gradients at
every evaluation; see the solver for why the iterate is never carried
across evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from kmf.geometry import Connectivity, StencilSet


class Gradient2(NamedTuple):
    fx: float
    fy: float


class ConditioningError(ValueError):
    """Normal equations too ill-conditioned to trust."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


CONDITION_LIMIT = 1e12


@dataclass
class QGradients:
    """Nodal gradients of the entropy variables, shape (4, n) each.

    ``inner_residuals`` records the max update magnitude per Jacobi sweep
    of the last :func:`compute_q_derivatives` call that produced this
    object, as a convergence diagnostic.
    """

    qx: np.ndarray
    qy: np.ndarray
    inner_residuals: tuple = ()


def _stencil(conn: Connectivity, kind: str) -> StencilSet:
    return conn.full if kind == "full" else conn.split[kind]


def lsq_gradient_first_order(
    center: int, field_values, conn: Connectivity, stencil: str = "full"
) -> Gradient2:
    """First-order LS gradient of a scalar field at one point.

    ``stencil`` is 'full' or one of 'x+', 'x-', 'y+', 'y-'; split names
    refer to the flux they serve, so 'x+' holds the upwind (dx <= 0)
    neighbors.
    """
    s = _stencil(conn, stencil)
    sl = slice(s.ptr[center], s.ptr[center + 1])
    f = np.asarray(field_values, dtype=np.float64)
    df = f[s.idx[sl]] - f[center]
    sxf = float(np.sum(s.dx[sl] * df))
    syf = float(np.sum(s.dy[sl] * df))
    sxx, sxy, syy, det = conn.ls_matrix(center, stencil)
    return Gradient2((syy * sxf - sxy * syf) / det, (sxx * syf - sxy * sxf) / det)


def lsq_gradient_quadratic(center: int, field_values, conn: Connectivity) -> np.ndarray:
    """Five-term quadratic LS reconstruction (fx, fy, fxx, fxy, fyy).

    Solves the full 5x5 normal equations on the full stencil.  Exists as a
    diagnostic: the normal equations square the condition number, which is
    why the production path prefers defect correction.

    Raises
    ------
    ConditioningError
        If cond(A^T A) exceeds 1e12.
    """
    s = conn.full
    sl = slice(s.ptr[center], s.ptr[center + 1])
    dx, dy = s.dx[sl], s.dy[sl]
    f = np.asarray(field_values, dtype=np.float64)
    df = f[s.idx[sl]] - f[center]
    A = np.stack([dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy], axis=1)
    ata = A.T @ A
    cond = float(np.linalg.cond(ata))
    if cond > CONDITION_LIMIT:
        raise ConditioningError(
            f"quadratic normal equations condition {cond:.3e} exceeds "
            f"{CONDITION_LIMIT:g} at point {center}",
            condition=cond,
        )
    return np.linalg.solve(ata, A.T @ df)


def defect_corrected_gradient(
    center: int,
    field_values,
    nodal_gradients,
    conn: Connectivity,
    stencil: str = "full",
) -> Gradient2:
    """Second-order LS gradient using per-point nodal gradients.

    ``nodal_gradients`` is a pair of arrays (fx, fy) over all points.  With
    exact nodal gradients the result is exact for quadratic fields; with
    zero nodal gradients it reduces to the first-order operator.  The 2x2
    matrix is the same cached object the first-order solve uses.
    """
    s = _stencil(conn, stencil)
    sl = slice(s.ptr[center], s.ptr[center + 1])
    dx, dy = s.dx[sl], s.dy[sl]
    idx = s.idx[sl]
    f = np.asarray(field_values, dtype=np.float64)
    gx, gy = (np.asarray(g, dtype=np.float64) for g in nodal_gradients)
    df = f[idx] - f[center]
    df = df - 0.5 * (dx * (gx[idx] - gx[center]) + dy * (gy[idx] - gy[center]))
    sxf = float(np.sum(dx * df))
    syf = float(np.sum(dy * df))
    sxx, sxy, syy, det = conn.ls_matrix(center, stencil)
    return Gradient2((syy * sxf - sxy * syf) / det, (sxx * syf - sxy * sxf) / det)


def modified_pair(vals, gx, gy, s: StencilSet, owner_global=None):
    """Per-edge modified values (neighbor and owner sides) for a CSR family.

    For edge (P0, Pi) with offsets (dx, dy):

        v~_i = v_i - (dx*gx_i + dy*gy_i)/2
        v~_0 = v_0 - (dx*gx_0 + dy*gy_0)/2

    ``vals``/``gx``/``gy`` have shape (4, n) indexed by global point; the
    owner of each edge defaults to CSR position but boundary families own
    points listed in ``owner_global``.
    """
    counts = np.diff(s.ptr)
    own = np.repeat(
        np.arange(s.n_owners) if owner_global is None else owner_global, counts
    )
    idx = s.idx
    ti = vals[:, idx] - 0.5 * (s.dx * gx[:, idx] + s.dy * gy[:, idx])
    t0 = vals[:, own] - 0.5 * (s.dx * gx[:, own] + s.dy * gy[:, own])
    return ti, t0


def first_order_q_gradients(q: np.ndarray, conn: Connectivity) -> QGradients:
    """Plain LS gradients of all q components on the full stencil; the
    cold-start iterate for :func:`compute_q_derivatives`."""
    s = conn.full
    n = s.n_owners
    owner = np.repeat(np.arange(n), s.counts())
    dq = q[:, s.idx] - q[:, owner]
    sxf = _segment_sum(s.dx * dq, owner, n)
    syf = _segment_sum(s.dy * dq, owner, n)
    qx = (s.syy * sxf - s.sxy * syf) / s.det
    qy = (s.sxx * syf - s.sxy * sxf) / s.det
    return QGradients(qx=qx, qy=qy)


def _segment_sum(vals: np.ndarray, owner: np.ndarray, n: int) -> np.ndarray:
    if vals.ndim == 1:
        return np.bincount(owner, weights=vals, minlength=n)
    return np.stack([np.bincount(owner, weights=v, minlength=n) for v in vals])


def compute_q_derivatives(
    q: np.ndarray,
    conn: Connectivity,
    n_inner: int = 3,
    prev: QGradients | None = None,
    block_map: Callable | None = None,
) -> QGradients:
    """Solve the implicit defect-corrected gradient relation for q.

    Runs ``n_inner`` Jacobi sweeps of

        grad_new(P0) = LS solve of the modified differences built from
                       grad_old at P0 and its full-stencil neighbors,

    double-buffered so the result is independent of point ordering.  The
    start iterate is ``prev`` when given, else the first-order gradients;
    the production loop always cold-starts (a carried iterate converges to
    the compact gradients, whose upwind flux has no damping at the odd-even
    mode and destabilizes the time integration).

    ``block_map(fn, n_points)`` may parallelize each sweep over point
    blocks; the blocking never changes the arithmetic.
    """
    if n_inner < 1:
        raise ValueError("n_inner must be at least 1")
    cur = prev if prev is not None else first_order_q_gradients(q, conn)
    s = conn.full
    n = s.n_owners
    residuals = []

    def sweep_block(lo, hi, qx_old, qy_old, qx_new, qy_new):
        e0, e1 = s.ptr[lo], s.ptr[hi]
        idx = s.idx[e0:e1]
        dx, dy = s.dx[e0:e1], s.dy[e0:e1]
        own = np.repeat(np.arange(lo, hi), np.diff(s.ptr[lo:hi + 1]))
        ti = q[:, idx] - 0.5 * (dx * qx_old[:, idx] + dy * qy_old[:, idx])
        t0 = q[:, own] - 0.5 * (dx * qx_old[:, own] + dy * qy_old[:, own])
        dq = ti - t0
        local = own - lo
        m = hi - lo
        sxf = _segment_sum(dx * dq, local, m)
        syf = _segment_sum(dy * dq, local, m)
        qx_new[:, lo:hi] = (s.syy[lo:hi] * sxf - s.sxy[lo:hi] * syf) / s.det[lo:hi]
        qy_new[:, lo:hi] = (s.sxx[lo:hi] * syf - s.sxy[lo:hi] * sxf) / s.det[lo:hi]

    for _ in range(n_inner):
        qx_new = np.empty_like(cur.qx)
        qy_new = np.empty_like(cur.qy)
        if block_map is None:
            sweep_block(0, n, cur.qx, cur.qy, qx_new, qy_new)
        else:
            block_map(
                lambda lo, hi: sweep_block(lo, hi, cur.qx, cur.qy, qx_new, qy_new), n
            )
        residuals.append(
            max(
                float(np.max(np.abs(qx_new - cur.qx), initial=0.0)),
                float(np.max(np.abs(qy_new - cur.qy), initial=0.0)),
            )
        )
        cur = QGradients(qx=qx_new, qy=qy_new)
    return QGradients(qx=cur.qx, qy=cur.qy, inner_residuals=tuple(residuals))
