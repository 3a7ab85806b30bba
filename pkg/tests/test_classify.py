from __future__ import annotations

import math

import pytest

from j2surrogate.classify import TransferType, classify_transfer, node_differences
from j2surrogate.cli import reference_pair
from j2surrogate.orbits import OrbitalElements, j2_rates, propagate_j2

DAY = 86400.0


@pytest.fixture
def pair():
    return reference_pair()


def test_reference_pair_drifts_together(pair):
    dep, tgt = pair
    assert j2_rates(dep)[0] > j2_rates(tgt)[0]


@pytest.mark.parametrize("days", [1, 5, 20])
def test_reference_pair_closing(pair, days):
    assert classify_transfer(*pair, days * DAY) is TransferType.CLOSING


@pytest.mark.parametrize("days", [40, 80])
def test_reference_pair_intersecting(pair, days):
    assert classify_transfer(*pair, days * DAY) is TransferType.INTERSECTING


def test_swap_symmetry(pair):
    dep, tgt = pair
    for days in (1, 5, 20, 40):
        assert classify_transfer(tgt, dep, days * DAY) is classify_transfer(dep, tgt, days * DAY)


def test_aligned_start_is_closing():
    el = OrbitalElements(7e6, 0.001, math.radians(98), 1.0, 0.0, 0.0)
    assert classify_transfer(el, el, 3 * DAY) is TransferType.CLOSING


def test_growing_gap_is_separating(pair):
    dep, tgt = pair
    assert classify_transfer(tgt, OrbitalElements(dep.a, dep.e, dep.i, tgt.raan + 0.05, dep.argp,
                                                  dep.mean_anomaly), 5 * DAY) is TransferType.SEPARATING


def test_equal_magnitude_is_separating():
    # equal rates keep the gap fixed
    a = OrbitalElements(7e6, 0.001, math.radians(98), 1.0, 0.0, 0.0)
    b = OrbitalElements(7e6, 0.001, math.radians(98), 1.1, 2.0, 1.0)
    assert classify_transfer(a, b, 3 * DAY) is TransferType.SEPARATING


def test_crossing_through_anti_alignment_is_separating():
    # gap just below pi that grows past it flips sign without crossing zero
    a = OrbitalElements(6.9e6, 0.001, math.radians(101), math.pi - 0.001, 0.0, 0.0)
    b = OrbitalElements(7.3e6, 0.001, math.radians(96), 0.0, 0.0, 0.0)
    d0, df, drift = node_differences(a, b, 5 * DAY)
    assert d0 > 0 > df and abs(drift) < math.pi
    assert classify_transfer(a, b, 5 * DAY) is TransferType.SEPARATING


def test_node_differences_principal(pair):
    d0, df, drift = node_differences(*pair, 10 * DAY)
    assert d0 == pytest.approx(math.radians(-4.0), abs=1e-12)
    assert -math.pi < df <= math.pi
    assert df - d0 == pytest.approx(drift, abs=1e-12)


def test_target_epoch_aligned(pair):
    dep, tgt = pair
    moved = propagate_j2(tgt, 2 * DAY)
    assert node_differences(dep, moved, DAY)[0] == pytest.approx(node_differences(dep, tgt, DAY)[0], abs=1e-12)


def test_non_positive_window(pair):
    with pytest.raises(ValueError):
        classify_transfer(*pair, 0.0)


def test_parse():
    assert TransferType.parse(" Closing ") is TransferType.CLOSING
    assert str(TransferType.SEPARATING) == "separating"
    with pytest.raises(ValueError, match="unknown transfer type"):
        TransferType.parse("orbiting")
