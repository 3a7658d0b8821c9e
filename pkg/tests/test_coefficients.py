import math

import numpy as np
import pytest

from conestokes.coefficients import (DataField, SmoothPart, orthogonality_pairing, coefficient, decompose,
                                     dual_depth, dual_pair, family_depth, singular_index_set, manufacture, volume_rule,
                                     VolumeRule)
from conestokes.errors import DataError, DomainError


def test_depths():
    assert dual_depth(1.467987, 1.0) == 1
    assert dual_depth(0.0, 1.0) == 0
    assert family_depth(1.467987, 2.2) == 0


def test_index_set_excluded(hemisphere):
    _, sp = hemisphere
    with pytest.raises(DomainError):
        singular_index_set(sp, 1.5, False)


def test_orthogonality_precondition(hemisphere):
    cone, sp = hemisphere
    with pytest.raises(DomainError):
        orthogonality_pairing(cone, 1, 1, 2, 1, 1.0, spectrum=sp, lambda1=1.0)


def test_orthogonality_cone60_diagonal(cone60):
    cone, sp = cone60
    rep = orthogonality_pairing(cone, 2, 1, 2, 1, 1.0, spectrum=sp, lambda1=1.0)
    # FD eigenprofiles off the hemisphere: error must sit inside the reported extrapolation bar
    assert rep["error"] <= rep["extrapolation_error"]
    assert rep["error"] < 1e-5 * abs(rep["expected"])
    assert rep["flatness"] < 1e-12
    for args in ((2, 1, 2, 2), (3, 1, 2, 1)):
        assert orthogonality_pairing(cone, *args, 1.0, spectrum=sp, lambda1=1.0)["error"] < 1e-12


def test_decompose_smooth_data(hemisphere):
    cone, sp = hemisphere
    data, _ = manufacture(cone, {(1, 1): 0.5 - 0.25j}, 1.0, depth=2, smooth=SmoothPart((0.2, 0.0, 1.4), 0.5),
                          spectrum=sp)
    cs, rem = decompose(data, 1.0, 1.0, spectrum=sp, n_r=12, n_theta=12)
    assert abs(cs.values[(1, 1)] - (0.5 - 0.25j)) < 1e-8
    doc = cs.to_dict()
    assert doc["citation"] == "coefficient-formula"


def test_data_validation(hemisphere):
    cone, _ = hemisphere
    with pytest.raises(DataError):
        DataField(cone)
    d = DataField(cone, f=lambda p: np.zeros(p.shape), g=lambda p: np.zeros(p.shape[:-1]), r_min=0.5, r_max=3.0)
    rule = volume_rule(cone, 1.0, 2.0)
    dual = dual_pair(cone, 1, 1, 1.0)
    with pytest.raises(DomainError):
        coefficient(1, 1, 1.0, d, dual, rule=rule)


def test_gamma_window(hemisphere):
    cone, sp = hemisphere
    data, _ = manufacture(cone, {}, 1.0, smooth=SmoothPart((0.2, 0.0, 1.4), 0.5), spectrum=sp)
    with pytest.raises(DomainError):
        decompose(data, 1.0, 1.7, spectrum=sp)
