import dataclasses
import math

import numpy as np
import pytest

from conestokes.errors import DomainError, NumericError
from conestokes.kernels import (ContourSpec, KINDS, TimeData, build_mollifier, invert_transform, kernel_terms,
                                sample_terms, time_term, vertical_line_inverse)


@pytest.fixture(scope="module")
def mol():
    return build_mollifier(2)


def _pt(r, th, ph):
    return r * np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def test_mollifier_moments(mol):
    m = mol.moments(2)
    assert m[0] == pytest.approx(1, abs=1e-13)
    assert abs(m[1]) < 1e-13 and abs(m[2]) < 1e-13
    with pytest.raises(DomainError):
        build_mollifier(13)


def test_known_pairs():
    for t in (0.1, 1.0, 10.0):
        v, err = invert_transform(lambda s: 1 / (s + 1), t)
        assert abs(v - math.exp(-t)) < 1e-12 and err < 1e-10


def test_full_contour_matches_symmetric():
    v1, _ = invert_transform(lambda s: 1 / (s + 0.5), 2.0)
    v2, _ = invert_transform(lambda s: 1 / (s + 0.5), 2.0, symmetric=False)
    assert abs(v1 - v2.real) < 1e-13 and abs(v2.imag) < 1e-13


def test_vertical_line_fallback():
    v = vertical_line_inverse(lambda s: 1 / (s + 1), 1.0, m=1)
    assert abs(v - math.exp(-1)) < 1e-3


def test_contour_split_agree(cone60, mol):
    cone, sp = cone60
    x, y = _pt(0.8, 0.95, 0.2), _pt(0.6, 0.97, 1.0)
    for kind in KINDS:
        kt = kernel_terms(kind, cone, 2, 1, x, y, spectrum=sp)
        for t in (1.5, 3.0):
            a = sample_terms(kt, t, mol, method="contour")[0]
            b = sample_terms(kt, t, mol, method="split")[0]
            assert np.max(np.abs(np.atleast_1d(a - b))) < 1e-10 * max(1, np.max(np.abs(b)))


def test_contour_needs_small_x(cone60, mol):
    cone, sp = cone60
    kt = kernel_terms("K_u", cone, 2, 1, _pt(2.0, 0.5, 0), _pt(1.0, 0.5, 0), spectrum=sp)
    with pytest.raises(DomainError):
        sample_terms(kt, 1.0, mol, method="contour")


def test_j1_pressure_kernel_closed_form(cone60, mol):
    cone, sp = cone60
    x, y = _pt(0.8, 0.95, 0.2), _pt(0.6, 0.97, 1.0)
    kt = kernel_terms("H_p", cone, 1, 1, x, y, spectrum=sp)
    (q, D, c), = kt.terms
    assert (q, D) == (1.0, 0.0)
    r2 = 0.64
    for t in (0.1, 0.3, 0.5, 0.9):
        v = sample_terms(kt, t, mol)[0]
        assert v == pytest.approx(-c.real * mol.value(t / r2, 1) / r2 ** 2, rel=1e-12, abs=1e-14)
    assert kernel_terms("K_u", cone, 1, 1, x, y, spectrum=sp).terms == []


def test_time_term_constant_data(cone60, mol):
    cone, sp = cone60
    ys = np.array([_pt(0.5, 0.4, 0.0), _pt(0.7, 0.6, 2.0)])
    W = [0.1, 0.1]
    d = TimeData(np.linspace(0, 1, 5), ys, W, np.ones((5, 2, 3)), np.ones((5, 2)))
    x, t = _pt(0.4, 0.5, 0.3), 1.0
    for term, (fk, gk) in (("S", ("K_u", "H_u")), ("T", ("K_p", "H_p"))):
        ref = 0
        for iy, y in enumerate(ys):
            for kind, is_f in ((fk, True), (gk, False)):
                kt = kernel_terms(kind, cone, 2, 1, x, y, spectrum=sp)
                kt = dataclasses.replace(kt, terms=[(q - 1, D, c) for q, D, c in kt.terms])
                v = sample_terms(kt, t, mol, method="contour")[0]
                ref = ref + W[iy] * (v @ np.ones(3) if is_f else v)
        got = time_term(term, cone, 2, 1, x, t, d, mol, spectrum=sp)
        assert np.allclose(got, ref, rtol=1e-7, atol=0)


def test_time_term_guards(cone60):
    cone, sp = cone60
    d = TimeData([0, 1], [[0.1, 0, 0.5]], [1.0], np.zeros((2, 1, 3)), np.zeros((2, 1)))
    with pytest.raises(DomainError):
        time_term("S", cone, 2, 1, [0.1, 0, 0.4], 2.0, d, spectrum=sp)
    with pytest.raises(DomainError):
        time_term("X", cone, 2, 1, [0.1, 0, 0.4], 0.5, d, spectrum=sp)


def test_hemisphere_degree_one_kernel_support(hemisphere, mol):
    cone, sp = hemisphere
    x, y = np.array([0.3, 0.1, 0.6]), np.array([0.2, 0.1, 0.6])
    kt = kernel_terms("K_u", cone, 2, 1, x, y, spectrum=sp)
    assert {(q, D) for q, D, _ in kt.terms} == {(-1.0, 0.0)}
    r2 = float(x @ x)
    inside = sample_terms(kt, 0.5 * r2, mol)[0]
    assert np.max(np.abs(inside)) > 1e-3
    for t in (1.1 * r2, 2.0):
        assert np.max(np.abs(sample_terms(kt, t, mol)[0])) < 1e-13
