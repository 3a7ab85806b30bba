"""Transfer taxonomy by the drift of the node difference over the window."""

from __future__ import annotations

import enum
import math

from . import _kernels as K
from .orbits import EARTH, OrbitalElements, PhysicalConstants, j2_rates, propagate_j2, propagate_to


class TransferType(str, enum.Enum):
    CLOSING = "closing"
    INTERSECTING = "intersecting"
    SEPARATING = "separating"

    @classmethod
    def parse(cls, value) -> "TransferType":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(t.value for t in cls)
            raise ValueError(f"unknown transfer type {value!r} (expected one of {names})") from None

    def __str__(self):
        return self.value


def node_differences(
    dep: OrbitalElements, tgt: OrbitalElements, dt: float, k: PhysicalConstants = EARTH
) -> tuple[float, float, float]:
    """(delta0, deltaf, drift) of the node difference dep - tgt over ``dt``.

    delta0 and deltaf are principal values in (-pi, pi]; drift is the
    unwrapped change, (raan_rate_dep - raan_rate_tgt) * dt. ``tgt`` is first
    brought to the departure epoch.
    """
    tgt = propagate_to(tgt, dep.epoch, k)
    d0 = K.wrap_pi(dep.raan - tgt.raan)
    df = K.wrap_pi(propagate_j2(dep, dt, k).raan - propagate_j2(tgt, dt, k).raan)
    drift = (j2_rates(dep, k)[0] - j2_rates(tgt, k)[0]) * dt
    return d0, df, drift


def _crosses_zero(d0: float, drift: float) -> bool:
    # does the unwrapped path d0 -> d0 + drift pass a multiple of 2pi
    lo, hi = sorted((d0, d0 + drift))
    return math.floor(hi / K.TWO_PI) > math.floor(lo / K.TWO_PI)


def classify_transfer(
    dep: OrbitalElements, tgt: OrbitalElements, dt: float, k: PhysicalConstants = EARTH
) -> TransferType:
    """Closing, intersecting or separating, from the node difference at both ends.

    A sign change of the principal difference means the nodes crossed,
    unless the crossing went through +-pi (anti-aligned nodes), which counts
    as separating. Ties: aligned start is closing; a final difference of
    exactly zero after a non-zero start is intersecting; an unchanged
    magnitude is separating.
    """
    if not dt > 0:
        raise ValueError(f"transfer time must be positive, got {dt}")
    d0, df, drift = node_differences(dep, tgt, dt, k)
    if d0 == 0.0:
        return TransferType.CLOSING
    if df == 0.0:
        return TransferType.INTERSECTING
    if (d0 > 0) != (df > 0) and _crosses_zero(d0, drift):
        return TransferType.INTERSECTING
    if (d0 > 0) == (df > 0) and abs(df) < abs(d0):
        return TransferType.CLOSING
    return TransferType.SEPARATING
