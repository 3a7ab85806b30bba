"""Orbital elements, Cartesian states and secular J2 propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels as K

TWO_PI = 2.0 * math.pi


class OrbitError(ValueError):
    """Raised for states the toolkit cannot represent (non-elliptic, degenerate)."""


@dataclass(frozen=True)
class PhysicalConstants:
    mu: float = 398600.4418e9
    j2: float = 1.08262668e-3
    re: float = 6378137.0

    def __post_init__(self):
        for name in ("mu", "j2", "re"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "PhysicalConstants":
        """Read ``key = value`` lines (``mu``, ``j2``, ``re``); missing keys keep defaults.

        ``key: value`` and ``key value`` are accepted too, ``#`` starts a comment.
        """
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":", None):
                parts = line.split(sep, 1)
                if len(parts) == 2:
                    break
            else:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = parts[0].strip().lower(), parts[1].strip()
            if key not in ("mu", "j2", "re"):
                raise ValueError(f"{path}:{lineno}: unknown constant {key!r}")
            values[key] = float(value)
        return cls(**values)


EARTH = PhysicalConstants()


@dataclass(frozen=True)
class OrbitalElements:
    """Osculating Keplerian elements at ``epoch`` (s past the reference epoch).

    Angles are radians; raan, argp and mean_anomaly are stored normalized to
    [0, 2pi).
    """

    a: float
    e: float
    i: float
    raan: float
    argp: float
    mean_anomaly: float
    epoch: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise OrbitError(f"semi-major axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise OrbitError(f"eccentricity must lie in [0, 1), got {self.e}")
        if not 0.0 <= self.i <= math.pi:
            raise OrbitError(f"inclination must lie in [0, pi], got {self.i}")
        for name in ("raan", "argp", "mean_anomaly"):
            object.__setattr__(self, name, K.wrap_2pi(float(getattr(self, name))))

    @classmethod
    def from_true_anomaly(cls, a, e, i, raan, argp, true_anomaly, epoch=0.0):
        return cls(a, e, i, raan, argp, K.true_to_mean(true_anomaly, e), epoch)

    @classmethod
    def from_degrees(cls, a, e, i, raan, argp, anomaly, epoch=0.0, *, true_anomaly=True):
        """Build from (m, -, deg, deg, deg, deg) as tabulated in mission data."""
        args = (a, e, math.radians(i), math.radians(raan), math.radians(argp))
        if true_anomaly:
            return cls.from_true_anomaly(*args, math.radians(anomaly), epoch)
        return cls(*args, math.radians(anomaly), epoch)

    @property
    def semilatus_rectum(self) -> float:
        return self.a * (1.0 - self.e**2)

    def mean_motion(self, k: PhysicalConstants = EARTH) -> float:
        return math.sqrt(k.mu / self.a**3)

    def period(self, k: PhysicalConstants = EARTH) -> float:
        return TWO_PI / self.mean_motion(k)

    @property
    def true_anomaly(self) -> float:
        return K.mean_to_true(self.mean_anomaly, self.e)

    @property
    def argument_of_latitude(self) -> float:
        return K.wrap_2pi(self.argp + self.true_anomaly)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.e, self.i, self.raan, self.argp, self.mean_anomaly])

    def to_dict(self) -> dict:
        return {
            "a_m": self.a,
            "e": self.e,
            "i_rad": self.i,
            "raan_rad": self.raan,
            "argp_rad": self.argp,
            "mean_anom_rad": self.mean_anomaly,
            "epoch_s": self.epoch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrbitalElements":
        try:
            return cls(
                float(d["a_m"]),
                float(d["e"]),
                float(d["i_rad"]),
                float(d["raan_rad"]),
                float(d["argp_rad"]),
                float(d["mean_anom_rad"]),
                float(d.get("epoch_s", 0.0)),
            )
        except KeyError as exc:
            raise ValueError(f"element record is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class CartesianState:
    r: np.ndarray
    v: np.ndarray
    epoch: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if not np.linalg.norm(r) > 0:
            raise OrbitError("position vector must be non-zero")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)


def wrap_angle(x):
    """Signed principal value of an angle in (-pi, pi]."""
    return K.wrap_pi(float(x))


def solve_kepler(mean_anomaly: float, e: float) -> float:
    """Eccentric anomaly E with E - e sin E = M, in the branch containing M.

    The returned angle is congruent to M's branch: solving for M + 2pi k
    gives E + 2pi k.
    """
    if not 0.0 <= e < 1.0:
        raise OrbitError(f"eccentricity must lie in [0, 1), got {e}")
    M = float(mean_anomaly)
    E, status = K.kepler_eccentric(M, e)
    if status != K.OK:
        raise RuntimeError(f"Kepler iteration did not converge (M={M}, e={e})")
    # the kernel works on the principal branch of M
    return E + (M - K.wrap_pi(M))


def elements_to_cartesian(el: OrbitalElements, k: PhysicalConstants = EARTH) -> CartesianState:
    s = K.el2cart(el.a, el.e, el.i, el.raan, el.argp, el.mean_anomaly, k.mu)
    return CartesianState(np.array(s[:3]), np.array(s[3:]), el.epoch)


def cartesian_to_elements(s: CartesianState, k: PhysicalConstants = EARTH) -> OrbitalElements:
    a, e, i, raan, argp, M, status = K.cart2el(*s.r, *s.v, k.mu)
    if status == K.NOT_ELLIPTIC:
        raise OrbitError("state is not elliptic (specific energy >= 0)")
    if status == K.BAD_GEOMETRY:
        raise OrbitError("state is rectilinear (zero angular momentum)")
    return OrbitalElements(a, e, i, raan, argp, M, s.epoch)


def j2_rates(el: OrbitalElements, k: PhysicalConstants = EARTH) -> tuple[float, float, float]:
    """Secular rates (raan_dot, argp_dot, mean_anomaly_dot) in rad/s."""
    return K.j2_rates(el.a, el.e, el.i, k.mu, k.j2, k.re)


def raan_rate(el: OrbitalElements, k: PhysicalConstants = EARTH) -> float:
    return j2_rates(el, k)[0]


def propagate_j2(el: OrbitalElements, dt: float, k: PhysicalConstants = EARTH) -> OrbitalElements:
    """Advance the node, perigee and mean anomaly at their secular J2 rates.

    ``dt`` may be negative.
    """
    if dt == 0:
        return el
    raan, argp, M = K.j2_advance(
        el.a, el.e, el.i, el.raan, el.argp, el.mean_anomaly, float(dt), k.mu, k.j2, k.re
    )
    return replace(el, raan=raan, argp=argp, mean_anomaly=M, epoch=el.epoch + dt)


def propagate_to(el: OrbitalElements, epoch: float, k: PhysicalConstants = EARTH) -> OrbitalElements:
    return propagate_j2(el, epoch - el.epoch, k)


def state_j2(el: OrbitalElements, dt: float, k: PhysicalConstants = EARTH) -> CartesianState:
    return elements_to_cartesian(propagate_j2(el, dt, k), k)


def apply_impulse(s: CartesianState, dv) -> CartesianState:
    return CartesianState(s.r, s.v + np.asarray(dv, dtype=float), s.epoch)
