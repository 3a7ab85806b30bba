from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from j2surrogate.orbits import (EARTH, CartesianState, OrbitalElements, OrbitError, PhysicalConstants,
                                cartesian_to_elements, elements_to_cartesian, j2_rates, propagate_j2,
                                propagate_to, raan_rate, solve_kepler, wrap_angle)

DEG = math.pi / 180.0


def bisect_kepler(M, e):
    lo, hi = M - 1.0, M + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - e * math.sin(mid) - M > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def independent_node_rate(a, e, i, mu=EARTH.mu, j2=EARTH.j2, re=EARTH.re):
    p = a * (1 - e * e)
    n = math.sqrt(mu / a**3)
    return -1.5 * j2 * (re / p) ** 2 * n * math.cos(i)


elements = st.builds(
    OrbitalElements,
    a=st.floats(6.9e6, 7.3e6),
    e=st.floats(0.0, 0.02),
    i=st.floats(96 * DEG, 101 * DEG),
    raan=st.floats(0, 2 * math.pi),
    argp=st.floats(0, 2 * math.pi),
    mean_anomaly=st.floats(0, 2 * math.pi),
)


class TestKepler:
    def test_symmetric_points(self):
        assert solve_kepler(0.0, 0.5) == 0.0
        assert solve_kepler(math.pi, 0.9) == pytest.approx(math.pi, abs=1e-14)

    def test_matches_bisection(self):
        assert solve_kepler(1.0, 0.1) == pytest.approx(bisect_kepler(1.0, 0.1), abs=1e-13)

    @given(st.floats(-20, 20), st.floats(0, 0.95))
    def test_residual(self, M, e):
        E = solve_kepler(M, e)
        assert E - e * math.sin(E) == pytest.approx(M, abs=1e-11)

    def test_rejects_hyperbolic(self):
        with pytest.raises(OrbitError):
            solve_kepler(1.0, 1.2)


class TestConversion:
    def test_circular_equatorial(self):
        R = 7.0e6
        s = elements_to_cartesian(OrbitalElements(R, 0, 0, 0, 0, 0))
        np.testing.assert_allclose(s.r, [R, 0, 0], atol=1e-6)
        np.testing.assert_allclose(s.v, [0, math.sqrt(EARTH.mu / R), 0], atol=1e-9)

    def test_reference_departure_radius(self):
        el = OrbitalElements.from_degrees(7142116.504, 0.006172, 98.581, 96, 257.367, 135.368)
        r = np.linalg.norm(elements_to_cartesian(el).r)
        assert el.a * (1 - el.e) <= r <= el.a * (1 + el.e)

    @settings(max_examples=300)
    @given(elements)
    def test_round_trip(self, el):
        back = cartesian_to_elements(elements_to_cartesian(el))
        assert back.a == pytest.approx(el.a, rel=1e-9)
        assert back.e == pytest.approx(el.e, abs=1e-10)
        assert back.i == pytest.approx(el.i, abs=1e-10)
        # angles compared on the circle; argp and M are ill-conditioned as e -> 0,
        # their sum (argument of latitude) is not
        assert abs(wrap_angle(back.raan - el.raan)) < 1e-10
        assert abs(wrap_angle(back.argument_of_latitude - el.argument_of_latitude)) < 1e-9
        if el.e > 1e-3:
            assert abs(wrap_angle(back.argp - el.argp)) < 1e-6
            assert abs(wrap_angle(back.mean_anomaly - el.mean_anomaly)) < 1e-6

    @given(elements)
    def test_angular_momentum(self, el):
        s = elements_to_cartesian(el)
        h = np.linalg.norm(np.cross(s.r, s.v))
        assert h == pytest.approx(math.sqrt(EARTH.mu * el.semilatus_rectum), rel=1e-10)

    def test_hyperbolic_state_rejected(self):
        with pytest.raises(OrbitError):
            cartesian_to_elements(CartesianState([7e6, 0, 0], [0, 12000.0, 0]))

    def test_rectilinear_state_rejected(self):
        with pytest.raises(OrbitError):
            cartesian_to_elements(CartesianState([7e6, 0, 0], [10.0, 0, 0]))

    def test_element_validation(self):
        with pytest.raises(OrbitError):
            OrbitalElements(-1.0, 0, 0, 0, 0, 0)
        with pytest.raises(OrbitError):
            OrbitalElements(7e6, 1.0, 0, 0, 0, 0)
        with pytest.raises(OrbitError):
            OrbitalElements(7e6, 0, 4.0, 0, 0, 0)

    def test_dict_round_trip(self):
        el = OrbitalElements(7.1e6, 0.01, 1.7, 1.0, 2.0, 3.0, epoch=50.0)
        assert OrbitalElements.from_dict(el.to_dict()) == el
        with pytest.raises(ValueError, match="a_m"):
            OrbitalElements.from_dict({"e": 0.0})


class TestSecularJ2:
    def test_zero_step_is_identity(self):
        el = OrbitalElements(7e6, 0.001, 1.7, 1.0, 2.0, 3.0)
        assert propagate_j2(el, 0.0) is el

    def test_polar_node_frozen(self):
        el = OrbitalElements(7e6, 0.001, math.pi / 2, 1.0, 2.0, 3.0)
        assert propagate_j2(el, 5 * 86400).raan == pytest.approx(el.raan, abs=1e-15)
        assert raan_rate(el) == pytest.approx(0.0, abs=1e-20)

    def test_node_rate_sign(self):
        assert raan_rate(OrbitalElements(7e6, 0.001, 50 * DEG, 0, 0, 0)) < 0
        assert raan_rate(OrbitalElements(7e6, 0.001, 98 * DEG, 0, 0, 0)) > 0

    def test_node_advance_matches_formula(self):
        el = OrbitalElements(7_000_000.0, 0.001, 98 * DEG, 1.0, 0.5, 0.2)
        dt = 86400.0
        expected = independent_node_rate(el.a, el.e, el.i) * dt
        got = wrap_angle(propagate_j2(el, dt).raan - el.raan)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_sun_synchronous_class_rate(self):
        el = OrbitalElements(7_100_000.0, 0.001, 98 * DEG, 0, 0, 0)
        per_day = raan_rate(el) * 86400 / DEG
        assert per_day == pytest.approx(independent_node_rate(el.a, el.e, el.i) * 86400 / DEG, rel=1e-12)
        assert 0.8 < per_day < 1.2

    def test_all_three_rates(self):
        a, e, i = 7.05e6, 0.01, 97.5 * DEG
        p = a * (1 - e * e)
        n = math.sqrt(EARTH.mu / a**3)
        k = 1.5 * EARTH.j2 * (EARTH.re / p) ** 2 * n
        c = math.cos(i)
        expected = (-k * c, 0.5 * k * (5 * c * c - 1), n + 0.5 * k * math.sqrt(1 - e * e) * (3 * c * c - 1))
        np.testing.assert_allclose(j2_rates(OrbitalElements(a, e, i, 0, 0, 0)), expected, rtol=1e-13)

    @given(elements, st.floats(-3e6, 3e6), st.floats(-3e6, 3e6))
    def test_semigroup(self, el, t1, t2):
        one = propagate_j2(propagate_j2(el, t1), t2)
        two = propagate_j2(el, t1 + t2)
        for name in ("raan", "argp", "mean_anomaly"):
            assert abs(wrap_angle(getattr(one, name) - getattr(two, name))) < 1e-11

    @given(elements, st.floats(-3e6, 3e6))
    def test_reversible(self, el, t):
        back = propagate_j2(propagate_j2(el, t), -t)
        for name in ("raan", "argp", "mean_anomaly"):
            assert abs(wrap_angle(getattr(back, name) - getattr(el, name))) < 1e-12
        assert back.epoch == pytest.approx(el.epoch, abs=1e-6)

    @given(elements, st.floats(-3e6, 3e6))
    def test_conserves_shape(self, el, t):
        out = propagate_j2(el, t)
        assert (out.a, out.e, out.i) == (el.a, el.e, el.i)

    def test_propagate_to_epoch(self):
        el = OrbitalElements(7e6, 0.001, 1.7, 1.0, 2.0, 3.0, epoch=100.0)
        assert propagate_to(el, 400.0).epoch == 400.0


class TestConstants:
    def test_defaults(self):
        assert (EARTH.mu, EARTH.j2, EARTH.re) == (398600.4418e9, 1.08262668e-3, 6378137.0)

    def test_from_file(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("# comment\nmu = 3.986e14\nre: 6378000\n")
        k = PhysicalConstants.from_file(path)
        assert (k.mu, k.j2, k.re) == (3.986e14, EARTH.j2, 6378000.0)

    def test_bad_file(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("gm = 1\n")
        with pytest.raises(ValueError, match="unknown constant"):
            PhysicalConstants.from_file(path)

    def test_non_positive(self):
        with pytest.raises(ValueError):
            PhysicalConstants(mu=0.0)
