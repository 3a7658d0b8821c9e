import math

import numpy as np
import pytest

from conestokes.errors import DomainError
from conestokes.neumann import beltrami_residual, negative_branch, neumann_spectrum


def test_hemisphere_degrees(hemisphere):
    _, sp = hemisphere
    assert [round(e.mu, 8) for e in sp] == [0, 1, 2, 3]
    assert [e.multiplicity for e in sp] == [1, 2, 3, 4]
    assert sp[0].mu == 0.0


def test_cone60_degrees(cone60):
    _, sp = cone60
    assert sp[1].mu == pytest.approx(1.467987, abs=1e-6)
    assert sp[1].m_list == (1,) and sp[1].multiplicity == 2
    assert sp[2].mu == pytest.approx(2.752588, abs=1e-6)


def test_beltrami_residual(cone60):
    _, sp = cone60
    for e in sp:
        res, flux = beltrami_residual(e, e.profile(1))
        assert res < 1e-3 * max(1, e.beltrami_eigenvalue)
        assert flux < 1e-4


def test_negative_branch(cone60):
    _, sp = cone60
    n = negative_branch(sp[1])
    assert n.mu == pytest.approx(-1 - sp[1].mu)
    assert n.beltrami_eigenvalue == pytest.approx(sp[1].beltrami_eigenvalue)


def test_orthonormal_profiles(hemisphere):
    _, sp = hemisphere
    e = sp[2]
    th = np.linspace(0, math.pi / 2, 4001)
    for k in range(1, e.multiplicity + 1):
        p = e.profile(k)
        v = p.theta_factor(th)
        norm = np.trapezoid(v * v * np.sin(th), th) * (2 * math.pi if p.m == 0 else math.pi)
        assert norm == pytest.approx(1.0, rel=1e-5)
