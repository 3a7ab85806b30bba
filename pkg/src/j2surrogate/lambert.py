"""Two-body Lambert arcs and Keplerian propagation (zero revolutions only)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .orbits import CartesianState, OrbitError


class LambertError(RuntimeError):
    """The boundary-value problem could not be solved.

    ``residual`` carries the last time-of-flight residual (s) when the
    failure was a convergence failure.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class LambertSolution:
    v1: np.ndarray
    v2: np.ndarray
    iterations: int


def solve_lambert(r1, r2, dt: float, mu: float, long_way: bool = False) -> LambertSolution:
    """Velocities of the zero-revolution arc from ``r1`` to ``r2`` in ``dt`` seconds.

    Parameters
    ----------
    r1, r2 : array_like, shape (3,)
        Endpoint positions (m).
    dt : float
        Time of flight (s), strictly positive.
    mu : float
        Gravitational parameter (m^3/s^2).
    long_way : bool
        Take the branch with transfer angle above pi.

    Raises
    ------
    ValueError
        Non-positive time of flight or a zero position vector.
    LambertError
        Transfer angle at 0 or pi (plane undefined), or no convergence.
    """
    if not dt > 0:
        raise ValueError(f"time of flight must be positive, got {dt}")
    r1 = np.asarray(r1, dtype=float).reshape(3)
    r2 = np.asarray(r2, dtype=float).reshape(3)
    if not (np.linalg.norm(r1) > 0 and np.linalg.norm(r2) > 0):
        raise ValueError("position vectors must be non-zero")
    *v, iters, resid, status = K.lambert(*r1, *r2, float(dt), float(mu), bool(long_way))
    if status == K.BAD_GEOMETRY:
        raise LambertError("transfer angle is singular (0 or pi); plane is undefined")
    if status != K.OK:
        raise LambertError(
            f"Lambert iteration did not converge in {iters} steps (residual {resid:.3g} s)",
            residual=resid,
        )
    return LambertSolution(np.array(v[:3]), np.array(v[3:]), int(iters))


def prograde_long_way(r1, r2, h_ref) -> bool:
    """Branch flag whose transfer-plane normal aligns with ``h_ref``."""
    return bool(K.prograde_long_way(*np.asarray(r1, float), *np.asarray(r2, float), *np.asarray(h_ref, float)))


def propagate_twobody(s: CartesianState, dt: float, mu: float) -> CartesianState:
    *x, status = K.twobody(*s.r, *s.v, float(dt), float(mu))
    if status == K.NOT_ELLIPTIC:
        raise OrbitError("two-body propagation needs an elliptic state")
    if status != K.OK:
        raise RuntimeError("universal-variable Kepler iteration did not converge")
    return CartesianState(np.array(x[:3]), np.array(x[3:]), s.epoch + dt)
