"""Flow-state representations and the exact transforms between them.

Three equivalent parameterizations of a calorically perfect gas state are
used throughout: primitive variables (rho, u1, u2, p), the conserved vector
(rho, rho*u1, rho*u2, rho*e) with

    e = p / (rho*(gamma - 1)) + (u1**2 + u2**2)/2,

and the entropy variables q used by the defect-correction machinery,

    q = [ln(rho) + ln(beta)/(gamma - 1) - beta*(u1**2 + u2**2),
         2*beta*u1, 2*beta*u2, -2*beta],        beta = rho/(2*p).

All transforms are bijections on the physical region rho > 0, p > 0 and are
exact up to rounding.  Scalar fields have shape (n,), four-vector fields
shape (4, n), so per-field blocks stay contiguous in memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA_DEFAULT = 1.4


class PositivityError(ValueError):
    """A state left, or would map to, the invalid region (rho <= 0, p <= 0,
    or an entropy vector with q4 >= 0).

    Carries the offending point indices so a diverging solve can report
    where it went wrong.
    """

    def __init__(self, message: str, indices=None):
        super().__init__(message)
        self.indices = None if indices is None else np.atleast_1d(indices)


def _as_f64(a) -> np.ndarray:
    # scalars promote to length-1 arrays so a state always has n_points >= 1
    return np.atleast_1d(np.asarray(a, dtype=np.float64))


@dataclass
class Primitives:
    """Structure-of-arrays primitive state (density, velocity, pressure)."""

    rho: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.rho = _as_f64(self.rho)
        self.u1 = _as_f64(self.u1)
        self.u2 = _as_f64(self.u2)
        self.p = _as_f64(self.p)

    @property
    def beta(self) -> np.ndarray:
        """Thermal parameter rho/(2 p); inverse square thermal speed."""
        return self.rho / (2.0 * self.p)

    @property
    def speed(self) -> np.ndarray:
        return np.sqrt(self.u1 * self.u1 + self.u2 * self.u2)

    @property
    def n_points(self) -> int:
        return int(self.rho.shape[0])

    def take(self, idx) -> "Primitives":
        return Primitives(self.rho[idx], self.u1[idx], self.u2[idx], self.p[idx])

    def copy(self) -> "Primitives":
        return Primitives(self.rho.copy(), self.u1.copy(), self.u2.copy(), self.p.copy())

    def validate(self, context: str = "state") -> None:
        bad = ~((self.rho > 0.0) & (self.p > 0.0))
        if bad.any():
            idx = np.nonzero(bad)[0]
            raise PositivityError(
                f"{context}: nonpositive density or pressure at "
                f"{idx.size} point(s), first index {idx[0]}",
                indices=idx,
            )


def primitives_to_conserved(prim: Primitives, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    """Map primitives to the conserved vector (rho, rho u1, rho u2, rho e)."""
    prim.validate("primitives_to_conserved")
    rho, u1, u2, p = prim.rho, prim.u1, prim.u2, prim.p
    e = p / (rho * (gamma - 1.0)) + 0.5 * (u1 * u1 + u2 * u2)
    return np.stack([rho, rho * u1, rho * u2, rho * e])


def conserved_to_primitives(U, gamma: float = GAMMA_DEFAULT) -> Primitives:
    """Invert :func:`primitives_to_conserved`.

    Raises
    ------
    PositivityError
        If any point decodes to nonpositive density or pressure.  The
        exception carries the offending indices.
    """
    U = _as_f64(U)
    rho = U[0]
    bad = ~(np.atleast_1d(rho) > 0.0)
    if bad.any():
        idx = np.nonzero(bad)[0]
        raise PositivityError(
            f"conserved_to_primitives: nonpositive density at {idx.size} point(s), "
            f"first index {idx[0]}",
            indices=idx,
        )
    u1 = U[1] / rho
    u2 = U[2] / rho
    p = (gamma - 1.0) * (U[3] - 0.5 * rho * (u1 * u1 + u2 * u2))
    bad = ~(np.atleast_1d(p) > 0.0)
    if bad.any():
        idx = np.nonzero(bad)[0]
        raise PositivityError(
            f"conserved_to_primitives: nonpositive pressure at {idx.size} point(s), "
            f"first index {idx[0]}",
            indices=idx,
        )
    return Primitives(rho, u1, u2, p)


def primitives_to_q(prim: Primitives, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    """Map primitives to entropy variables q (shape (4,) or (4, n))."""
    prim.validate("primitives_to_q")
    rho, u1, u2 = prim.rho, prim.u1, prim.u2
    beta = prim.beta
    q1 = np.log(rho) + np.log(beta) / (gamma - 1.0) - beta * (u1 * u1 + u2 * u2)
    return np.stack([q1, 2.0 * beta * u1, 2.0 * beta * u2, -2.0 * beta])


def q_to_primitives(q, gamma: float = GAMMA_DEFAULT) -> Primitives:
    """Invert :func:`primitives_to_q`.

    Raises
    ------
    PositivityError
        If any q4 >= 0, which corresponds to no physical state.
    """
    q = _as_f64(q)
    q4 = q[3]
    bad = ~(np.atleast_1d(q4) < 0.0)
    if bad.any():
        idx = np.nonzero(bad)[0]
        raise PositivityError(
            f"q_to_primitives: q4 >= 0 at {idx.size} point(s), first index {idx[0]}",
            indices=idx,
        )
    beta = -0.5 * q4
    u1 = q[1] / (2.0 * beta)
    u2 = q[2] / (2.0 * beta)
    rho = np.exp(q[0] - np.log(beta) / (gamma - 1.0) + beta * (u1 * u1 + u2 * u2))
    p = rho / (2.0 * beta)
    return Primitives(rho, u1, u2, p)


def sound_speed(prim: Primitives, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    return np.sqrt(gamma * prim.p / prim.rho)


def free_stream(
    mach: float,
    aoa_deg: float = 0.0,
    gamma: float = GAMMA_DEFAULT,
    n: int | None = None,
) -> Primitives:
    """Nondimensional free-stream state: rho = 1, p = 1/gamma, a = 1.

    The velocity is (M cos(alpha), M sin(alpha)).  With ``n`` given the
    fields are constant arrays of that length, otherwise scalars.
    """
    alpha = np.deg2rad(aoa_deg)
    vals = (1.0, mach * np.cos(alpha), mach * np.sin(alpha), 1.0 / gamma)
    if n is None:
        return Primitives(*vals)
    return Primitives(*(np.full(n, v) for v in vals))


@dataclass
class FlowState:
    """Per-point fields a residual evaluation needs: primitives, the entropy
    vector, and its nodal gradients (qx, qy, each shape (4, n))."""

    prims: Primitives
    q: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
