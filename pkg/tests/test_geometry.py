import math

import numpy as np
import pytest

from conestokes.errors import DomainError
from conestokes.geometry import (ConeSpec, SpatialPoint, WeightedNormSpec, cone_grid, cutoff_chi, cutoff_eta,
                                 distance_to_boundary, split_tangential, tail_rule, weighted_norm)


def test_cone_validation():
    with pytest.raises(DomainError):
        ConeSpec(0.0)
    with pytest.raises(DomainError):
        ConeSpec(math.pi / 3, delta_c=0.99)
    assert ConeSpec(math.pi / 3).delta_c == pytest.approx(0.5 * math.sin(math.pi / 3))


def test_distance_brute_force():
    cone = ConeSpec(math.pi / 3)
    assert distance_to_boundary(cone, 2.0, math.pi / 6) == pytest.approx(1.0, abs=1e-14)
    # brute force over boundary generators
    x = 2.0 * np.array([math.sin(math.pi / 6), 0, math.cos(math.pi / 6)])
    t = np.linspace(0, 5, 200001)
    b = np.stack([t * math.sin(math.pi / 3), 0 * t, t * math.cos(math.pi / 3)], -1)
    assert np.min(np.linalg.norm(b - x, axis=-1)) == pytest.approx(1.0, abs=1e-8)


def test_distance_homogeneous():
    cone = ConeSpec(2 * math.pi / 3)
    d1 = distance_to_boundary(cone, 1.0, 0.3)
    assert distance_to_boundary(cone, 3.0, 0.3) == pytest.approx(3 * d1)


def test_normal_split():
    cone = ConeSpec(math.pi / 2)
    p = SpatialPoint(math.hypot(1, 0.5), math.atan2(1, 0.5))
    vn, vt = split_tangential(cone, p, np.array([0, 0, 1.0]))
    assert vn == pytest.approx(1.0)
    assert np.allclose(vt, 0)


def test_cutoffs():
    assert cutoff_eta(0.4) == 0.0
    assert cutoff_eta(1.2) == 1.0
    cone = ConeSpec(math.pi / 3)
    assert cutoff_chi(cone, cone.delta_c / 4) == 1.0
    assert cutoff_chi(cone, cone.delta_c * 1.1) == 0.0


def test_weighted_norm_power():
    cone = ConeSpec(math.pi / 2)
    g = cone_grid(cone, 1, 2, n_r=16, n_theta=16, n_phi=4)
    v = weighted_norm(WeightedNormSpec("V", 0, 0.0), g, lambda p: np.linalg.norm(p, axis=-1) ** -2)
    assert v ** 2 == pytest.approx(math.pi, rel=1e-12)


def test_tail_rule():
    r, w = tail_rule(2.0, 16, 8)
    assert np.sum(w * r ** -3) == pytest.approx(1 / 8, rel=1e-10)
