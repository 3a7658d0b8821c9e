import math

import pytest

from conestokes.errors import DomainError
from conestokes.geometry import ConeSpec
from conestokes.pencil import (ISO, NOT_FREDHOLM, STATUSES, StokesPencilData, classify_weight,
                               discretized_pencil_spectrum, halfspace_shortcut, regularity_shift)


def test_halfspace_shortcut():
    assert halfspace_shortcut(ConeSpec(math.pi / 3)).lambda1_simple
    assert halfspace_shortcut(ConeSpec(math.pi / 2)).lambda1 == 1.0
    assert halfspace_shortcut(ConeSpec(2 * math.pi / 3)) is None


def test_pencil_data_invariants():
    with pytest.raises(DomainError):
        StokesPencilData(1.2, True)
    with pytest.raises(DomainError):
        StokesPencilData(0.9, True, 0.5)
    with pytest.raises(DomainError):
        StokesPencilData(0.9, True, None, d=1)


def test_spec_examples():
    assert classify_weight(0, StokesPencilData(0.8, True), 0.9).status == ISO
    assert classify_weight(0.5, StokesPencilData(1.0, True, 2.0), 1.0).status == NOT_FREDHOLM
    assert classify_weight(-1, StokesPencilData(1.0, True, 2.0), 1.0).status == ISO


def test_piecewise_constant_and_exclusive():
    pen = StokesPencilData(1.0, True, 1.8)
    mu2 = 2.5
    for b in [x / 100 for x in range(-400, 600)]:
        v = classify_weight(b, pen, mu2)
        assert v.status in STATUSES


def test_regularity_shift_examples():
    pen = StokesPencilData(1.0, True, 2.0)
    assert regularity_shift(0.3, 0.4, pen, 1.0) == "Transfers"
    assert regularity_shift(0.3, 0.5, pen, 1.0) == "NotCovered"
    assert regularity_shift(-1, 1, pen, 1.0, True) == "TransfersUpToConstantPressure"


def test_wide_cone_pencil():
    sp = discretized_pencil_spectrum(ConeSpec(2 * math.pi / 3), strip=(-2.0, 1.0), resolution=24)
    vals = sp.values()
    assert any(abs(v - 1) < 1e-4 for v in vals)
    lam1 = min(v.real for v in vals if v.real > 1e-6)
    assert lam1 < 1
    assert sp.mirror_error < 1e-6
