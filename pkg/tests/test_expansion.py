import math

import numpy as np
import pytest

from conestokes.errors import DomainError
from conestokes.expansion import (build_expansion, evaluate, polynomial_identities, residual_fd, spectral_terms,
                                  stokes_data, RadialCut)
from conestokes.neumann import negative_branch
from conestokes.verify import residual_slopes


def _pts(cone, n=40, seed=0, rmin=0.3, rmax=3.0):
    rng = np.random.default_rng(seed)
    r = rng.uniform(rmin, rmax, n)
    th = rng.uniform(0, cone.theta0 - 1e-3, n)
    ph = rng.uniform(0, 2 * math.pi, n)
    return np.stack([r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)], -1)


def test_polynomials_exact():
    for k in range(11):
        assert polynomial_identities(k) == ([], [], [])


def test_boundary_trace_cone60(cone60):
    cone, sp = cone60
    r = np.geomspace(0.2, 5, 10)
    pts = np.stack([r * math.sin(cone.theta0), 0 * r, r * math.cos(cone.theta0)], -1)
    for N in range(3):
        U, _ = evaluate(build_expansion(sp[1], 1, N, 2 + 1j, cone, spectrum=sp), pts)
        assert np.max(np.abs(U)) < 1e-10


def test_exact_data_matches_differences(cone60):
    cone, sp = cone60
    ex = build_expansion(sp[1], 1, 1, 1.0, cone, spectrum=sp)
    rng = np.random.default_rng(2)
    r = rng.uniform(1.2, 3, 30)
    th = rng.uniform(cone.theta0 - 0.15, cone.theta0 - 0.05, 30)
    pts = np.stack([r * np.sin(th), 0 * r, r * np.cos(th)], -1)
    f, g = stokes_data(ex, pts)
    F, D, _ = residual_fd(ex, pts)
    assert np.max(np.abs(f - F)) < 1e-6 * np.max(np.abs(F))
    assert np.max(np.abs(g + D)) < 1e-6 * max(np.max(np.abs(D)), 1e-12)


def test_spectral_terms_reproduce(cone60):
    cone, sp = cone60
    s = 1.5 + 0.5j
    ex = build_expansion(negative_branch(sp[1]), 1, 1, s, cone, spectrum=sp)
    for p in _pts(cone, 8, 3):
        U_t, P_t = spectral_terms(ex, p)
        U, P = evaluate(ex, p[None], s)
        u = sum(c * s ** q * np.exp(-D * np.sqrt(s)) for q, D, c in U_t)
        pp = sum(c * s ** q * np.exp(-D * np.sqrt(s)) for q, D, c in P_t)
        assert np.allclose(u, U[0], atol=1e-12 * (1 + np.abs(U).max()))
        assert abs(pp - P[0]) < 1e-12 * (1 + abs(P[0]))


def test_asymptotic_residual_window():
    for row in residual_slopes((10.0, 100.0)):
        assert abs(row["fitted"] - row["predicted"]) <= 0.1


def test_rescaling_identity(cone60):
    cone, sp = cone60
    pts = _pts(cone)
    e = sp[2]
    ex = build_expansion(e, 1, 1, 4j, cone, spectrum=sp)
    ex1 = build_expansion(e, 1, 1, 1j, cone, spectrum=sp)
    U, P = evaluate(ex, pts)
    U1, P1 = evaluate(ex1, 2 * pts)
    assert np.allclose(U, 4 ** (-(e.mu + 1) / 2) * U1, rtol=1e-12, atol=0)
    assert np.allclose(P, 4 ** (-e.mu / 2) * P1, rtol=1e-12, atol=0)


def test_invalid_depth(cone60):
    cone, sp = cone60
    with pytest.raises(DomainError):
        build_expansion(sp[1], 1, -1, 1.0, cone, spectrum=sp)
