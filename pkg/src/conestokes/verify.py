"""Acceptance property suite.  Each check returns a dict with ``passed``,
``runtime``, ``limit`` and check-specific details; ``run_all`` collects them.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .coefficients import (SmoothPart, DataField, VolumeRule, orthogonality_pairing, coefficient,
                           dual_depth, dual_pair, manufacture, volume_rule)
from .errors import DomainError
from .expansion import build_expansion, weighted_norm_bounds, evaluate, polynomial_identities, residual
from .geometry import ConeSpec
from .kernels import KINDS, ContourSpec, PREDICTED_T_EXPONENT, envelope_check, invert_transform
from .neumann import beltrami_oracle, mu_from_beltrami, negative_branch, neumann_spectrum
from .pencil import (COKERNEL, ISO, ISO_ZERO_MEAN, KERNEL, NOT_FREDHOLM, OUTSIDE, StokesPencilData,
                     classify_weight, discretized_pencil_spectrum)

__all__ = ["CHECKS", "CLASSIFIER_TABLE", "run_all", "run_check"]

HALF_PI = math.pi / 2


def _timed(limit):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            out = fn()
            out["runtime"] = time.perf_counter() - t0
            out["limit"] = limit
            out["within_time"] = out["runtime"] <= limit
            out["passed"] = bool(out["passed"] and out["within_time"])
            return out
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1.0)
def polynomial_identity_check():
    """Boundary polynomial identities in exact rational arithmetic, k = 0..10."""
    bad = [k for k in range(11) if any(polynomial_identities(k))]
    return {"passed": not bad, "failing_k": bad, "citation": "boundary-polynomials"}


@_timed(30.0)
def hemisphere_spectrum_check():
    """Hemisphere Neumann degrees up to 4 against a dense collocation oracle."""
    cone = ConeSpec(HALF_PI)
    spec = neumann_spectrum(cone, 4.0)
    mus = [e.mu for e in spec]
    mults = [e.multiplicity for e in spec]
    worst = 0.0
    for e in spec:
        for m in e.m_list:
            M = beltrami_oracle(cone.theta0, m, 80)
            oracle = [mu_from_beltrami(v) for v in M if v > -0.5]
            worst = max(worst, min(abs(e.mu - o) for o in oracle))
    both = mus + [-1 - v for v in mus]
    gap = not any(-1 < v < 0 for v in both)
    ok = (len(mus) == 5 and all(abs(a - b) < 1e-8 for a, b in zip(mus, range(5)))
          and mults == [1, 2, 3, 4, 5] and worst < 1e-8 and mus[0] == 0.0 and gap)
    return {"passed": ok, "mu": mus, "multiplicity": mults, "oracle_error": worst, "mu1_exact": mus[0] == 0.0,
            "gap_empty": gap, "citation": "neumann-spectrum"}


@_timed(300.0)
def pencil_sanity_check():
    """Discretized Stokes pencil: 1 and -2 present, nothing else in [-2, 1]."""
    rows = []
    ok = True
    for th in (math.pi / 3, HALF_PI):
        sp = discretized_pencil_spectrum(ConeSpec(th), strip=(-2.0, 1.0))
        vals = sp.values()
        real = [v for v in vals if abs(v.imag) < 1e-8 and -2 - 1e-4 <= v.real <= 1 + 1e-4]
        has1 = any(abs(v - 1) < 1e-4 for v in real)
        has2 = any(abs(v + 2) < 1e-4 for v in real)
        other = [v.real for v in real if abs(v - 1) >= 1e-4 and abs(v + 2) >= 1e-4]
        good = has1 and has2 and not other and not sp.undecided
        ok &= good
        rows.append({"theta0": th, "roots": [[v.real, v.imag] for v in vals], "found_1": has1,
                     "found_minus2": has2, "others": other, "undecided": len(sp.undecided)})
    return {"passed": ok, "cases": rows, "citation": "stokes-pencil"}


# (lambda1, simple, Re lambda2, mu2, beta, expected): interval arithmetic by hand
_G = (0.8, True, None, 0.9)
_S1 = (1.0, True, 2.0, 1.0)
_S2 = (1.0, True, 1.8, 2.5)
_S3 = (1.0, True, 2.0, 0.5)
_S4 = (1.0, True, 1.5, 3.5)
CLASSIFIER_TABLE = [
    _G + (0.0, ISO), _G + (-0.29, ISO), _G + (0.49, ISO), _G + (0.5, NOT_FREDHOLM),
    _G + (0.51, ISO_ZERO_MEAN), _G + (1.0, ISO_ZERO_MEAN), _G + (1.39, ISO_ZERO_MEAN),
    _G + (1.4, NOT_FREDHOLM), _G + (-0.3, NOT_FREDHOLM), _G + (-0.5, NOT_FREDHOLM),
    _G + (2.3, NOT_FREDHOLM), _G + (1.6, OUTSIDE), _G + (-1.4, NOT_FREDHOLM),
    _S1 + (-1.0, ISO), _S1 + (0.0, ISO), _S1 + (-1.4, ISO), _S1 + (0.4, ISO),
    _S1 + (1.0, ISO_ZERO_MEAN), _S1 + (0.6, ISO_ZERO_MEAN), _S1 + (2.0, COKERNEL), _S1 + (3.0, COKERNEL),
    _S1 + (2.5, NOT_FREDHOLM), _S1 + (-2.0, OUTSIDE), _S1 + (1.5, NOT_FREDHOLM),
    _S1 + (-1.5, NOT_FREDHOLM), _S1 + (0.5, NOT_FREDHOLM), _S1 + (-0.5, NOT_FREDHOLM),
    _S2 + (0.0, ISO), _S2 + (-1.0, ISO), _S2 + (2.0, ISO_ZERO_MEAN), _S2 + (2.8, ISO),
    _S2 + (-2.0, COKERNEL), _S2 + (3.1, COKERNEL), _S2 + (-3.2, OUTSIDE), _S2 + (5.0, OUTSIDE),
    _S2 + (3.0, NOT_FREDHOLM), _S2 + (-1.3, NOT_FREDHOLM), _S2 + (2.5, NOT_FREDHOLM),
    _S3 + (-1.2, KERNEL), _S4 + (3.5, KERNEL),
]


@_timed(1.0)
def classifier_check():
    """Weight classifier against a hand-derived 40-case table."""
    wrong = []
    for l1, simple, l2, mu2, beta, want in CLASSIFIER_TABLE:
        got = classify_weight(beta, StokesPencilData(l1, simple, l2), mu2).status
        if got != want:
            wrong.append({"lambda1": l1, "re_lambda2": l2, "mu2": mu2, "beta": beta, "expected": want, "got": got})
    return {"passed": len(CLASSIFIER_TABLE) == 40 and not wrong, "cases": len(CLASSIFIER_TABLE),
            "mismatches": wrong, "citation": "weight-classification"}


@_timed(10.0)
def boundary_trace_check():
    """U_N vanishes on the lateral boundary (hemisphere, mu in {0, 1}, N <= 2)."""
    cone = ConeSpec(HALF_PI)
    spec = neumann_spectrum(cone, 1.5)
    r, ph = np.meshgrid(np.geomspace(0.1, 10, 10), np.linspace(0, 2 * math.pi, 10, endpoint=False))
    pts = np.stack([r * np.cos(ph), r * np.sin(ph), np.zeros_like(r)], axis=-1).reshape(-1, 3)
    worst = 0.0
    for e in spec[:2]:
        for N in range(3):
            for k in range(1, e.multiplicity + 1):
                ex = build_expansion(e, k, N, 1.0, cone, spectrum=spec)
                U, _ = evaluate(ex, pts)
                worst = max(worst, float(np.max(np.abs(U))))
    return {"passed": worst <= 1e-10, "max_trace": worst, "samples": len(pts), "citation": "singular-expansion"}


def _core_slope(ex, lo, hi, s=1.0, n_r=10, n_theta=40, margin=0.02):
    cone = ex.cone
    a = abs(s) ** -0.5
    r = np.geomspace(lo * a, hi * a, n_r)
    th = np.linspace(cone.theta0 - math.asin(cone.delta_c / 2) + margin, cone.theta0, n_theta)
    best = np.zeros(n_r)
    for ph in (0.0, math.pi / (2 * max(ex.m, 1))):
        out = residual(ex, r, th, phi=ph, s=s)
        best = np.maximum(best, out["force"].max(axis=1))
    return float(np.polyfit(np.log(r), np.log(best), 1)[0])


def residual_slopes(window=(1.0, 10.0), s=1.0):
    """Fitted r-exponents of the residual for theta0 = pi/3, mu_2, N = 0, 1, 2."""
    cone = ConeSpec(math.pi / 3)
    spec = neumann_spectrum(cone, 2.0)
    e = spec[1]
    rows = []
    for N in range(3):
        ex = build_expansion(e, 1, N, s, cone, spectrum=spec)
        slope = _core_slope(ex, *window, s=s)
        rows.append({"N": N, "fitted": slope, "predicted": e.mu - N - 2})
    return rows


@_timed(120.0)
def residual_envelope_check():
    """Residual r-exponent on r |s|^(1/2) in [1, 10] and the |s|-scaling of the cut residual norms."""
    rows = residual_slopes((1.0, 10.0))
    slope_ok = all(abs(r["fitted"] - r["predicted"]) <= 0.1 for r in rows)
    cone = ConeSpec(HALF_PI)
    spec = neumann_spectrum(cone, 1.5)
    ex = build_expansion(spec[1], 1, 1, 1.0, cone, spectrum=spec)
    rep = weighted_norm_bounds(ex, 0.0)
    norm_ok = abs(rep["exponent"] - rep["predicted"]) <= 0.1
    return {"passed": slope_ok and norm_ok, "window": [1.0, 10.0], "slopes": rows, "slope_ok": slope_ok,
            "norm_exponent": rep["exponent"], "norm_predicted": rep["predicted"], "norm_ok": norm_ok,
            "citation": "residual-envelopes"}


@_timed(60.0)
def biorthogonality_check():
    """Surface pairing limits on the hemisphere for indices 1, 2."""
    cone = ConeSpec(HALF_PI)
    spec = neumann_spectrum(cone, 3.5)
    rows, ok = [], True
    for s in (1.0, 3 + 4j):
        for i in (1, 2):
            for j in (1, 2):
                for l in range(1, spec[i - 1].multiplicity + 1):
                    for k in range(1, spec[j - 1].multiplicity + 1):
                        try:
                            rep = orthogonality_pairing(cone, i, l, j, k, s, spectrum=spec, lambda1=1.0)
                        except DomainError as exc:
                            rows.append({"i": i, "l": l, "j": j, "k": k, "s": [s.real, s.imag] if isinstance(s, complex)
                                         else [s, 0.0], "skipped": exc.message})
                            continue
                        diag = (i, l) == (j, k)
                        good = rep["error"] <= (1e-6 if diag else 1e-4)
                        ok &= good
                        rows.append({"i": i, "l": l, "j": j, "k": k, "s": [complex(s).real, complex(s).imag],
                                     "limit": [rep["limit"].real, rep["limit"].imag], "error": rep["error"],
                                     "diagonal": diag, "ok": good})
    return {"passed": ok and any("limit" in r for r in rows), "pairs": rows, "citation": "biorthogonality"}


def leading_coefficient_recovery(s=1.0, n_r=12):
    cone = ConeSpec(HALF_PI)
    spec = neumann_spectrum(cone, 3.5)
    data, _ = manufacture(cone, {(1, 1): 1.0}, s, depth=2, smooth=SmoothPart((0.3, 0.0, 1.5), 0.6), spectrum=spec)
    c, _ = coefficient(1, 1, s, data, dual_pair(cone, 1, 1, s, spectrum=spec), n_r=n_r, n_theta=12)
    return c


def decomposition_errors(s=1.0, scales=(64.0, 128.0)):
    cone = ConeSpec(math.pi / 3)
    spec = neumann_spectrum(cone, 3.5)
    dual = dual_pair(cone, 2, 1, s, lambda1=1.0, spectrum=spec)
    errs = []
    for q in scales:
        data, _ = manufacture(cone, {(2, 1): 1.0}, s, gamma=2.2, rho=q / math.sqrt(abs(s)), spectrum=spec)
        c, _ = coefficient(2, 1, s, data, dual, n_r=10, n_theta=10)
        errs.append(abs(c - 1))
    return errs, dual.depth, spec[1].mu


@_timed(120.0)
def coefficient_recovery_check():
    """Seeded coefficients: exact recovery for the first family, convergence rate in the cut radius for the second."""
    lead = [(s, leading_coefficient_recovery(s)) for s in (1.0, 2 + 1j)]
    lead_err = max(abs(c - 1) for _, c in lead)
    errs, M, mu2 = decomposition_errors(1.0)
    rate = math.log2(errs[1] / errs[0])
    predicted = -(M + 1)
    ok = lead_err <= 1e-8 and abs(rate - predicted) <= 0.2
    return {"passed": ok, "leading_error": lead_err, "decomposition_errors": errs, "cut_radii": [64.0, 128.0], "rate": rate,
            "predicted_rate": predicted, "dual_depth": M, "mu2": mu2, "citation": "coefficient-formula"}


@_timed(10.0)
def inverse_laplace_check():
    """Known transform pairs on [0.1, 10] and invariance under ray truncation."""
    ts = np.geomspace(0.1, 10.0, 13)
    pairs = [(lambda s, a=a: 1 / (s + a), lambda t, a=a: math.exp(-a * t)) for a in (0.5, 2.0)]
    pairs.append((lambda s: 1 / s ** 2, lambda t: t))
    pairs.append((lambda s: 1 / np.sqrt(s), lambda t: 1 / math.sqrt(math.pi * t)))
    worst = 0.0
    for F, f in pairs:
        for t in ts:
            worst = max(worst, abs(invert_transform(F, t)[0] - f(t)))
    inv = []
    for t in (0.1, 1.0, 10.0):
        F = pairs[0][0]
        full = invert_transform(F, t)[0]
        short = ContourSpec(t, tol=1e-6)
        sm = short.ray_end()
        bound = short.tail_bound() / (math.pi * t * math.sin(short.delta) * abs(sm * np.exp(1j * (HALF_PI + 0.3)) + 0.5))
        diff = abs(invert_transform(F, t, short)[0] - full)
        inv.append({"t": t, "sigma_max": sm, "difference": diff, "tail_bound": bound, "ok": diff <= bound})
    ok = worst <= 1e-10 and all(r["ok"] for r in inv)
    return {"passed": ok, "max_error": worst, "truncation": inv, "citation": "inverse-laplace"}


@_timed(300.0)
def kernel_envelope_check():
    """Time exponents of the four kernels on theta0 = pi/3, j = 2."""
    cone = ConeSpec(math.pi / 3)
    spec = neumann_spectrum(cone, 3.5)
    rows = {}
    ok = True
    for kind in KINDS:
        rep = envelope_check(kind, cone, 2, 1, spectrum=spec, lambda1=1.0)
        fits = [r["t_exponent"] for r in rep["lattice"]]
        rows[kind] = {"predicted": PREDICTED_T_EXPONENT[kind], "min": min(fits), "max": max(fits), "ok": rep["ok"]}
        ok &= rep["ok"]
    return {"passed": ok, "kernels": rows, "citation": "kernel-envelopes"}


@_timed(30.0)
def scaling_check():
    """c(s) = |s|^(-mu/2) c(s/|s|) and U_N(x, s) = |s|^(-(mu+1)/2) U_N(|s|^(1/2) x, s/|s|)."""
    cone = ConeSpec(math.pi / 3)
    spec = neumann_spectrum(cone, 3.5)
    sm = SmoothPart((0.3, 0.1, 1.4), 0.5, axis=(0.2, 1.0, 0.3))
    c_err = 0.0
    for j in (2, 3):
        mu = spec[j - 1].mu
        for s in (4.0, 2 + 3j):
            a = abs(s)
            sh = s / a
            ra = math.sqrt(a)
            f1 = lambda p, sh=sh: sm.data(p, sh)  # noqa: E731
            fs = lambda p, sh=sh, a=a, ra=ra: (a * sm.data(ra * p, sh)[0], ra * sm.data(ra * p, sh)[1])  # noqa: E731
            d1 = DataField(cone, f=lambda p: f1(p)[0], g=lambda p: f1(p)[1], fg=f1, r_min=0.9, r_max=1.9, m_max=2)
            ds = DataField(cone, f=lambda p: fs(p)[0], g=lambda p: fs(p)[1], fg=fs, r_min=0.9 / ra, r_max=1.9 / ra,
                           m_max=2)
            r1 = volume_rule(cone, 0.9, 1.9, (math.sqrt(0.5), 1.0), n_phi=12)
            rs = VolumeRule(r1.points / ra, r1.weights / a ** 1.5, (0.9 / ra, 1.9 / ra))
            c1, _ = coefficient(j, 1, sh, d1, dual_pair(cone, j, 1, sh, spectrum=spec), rule=r1)
            cs, _ = coefficient(j, 1, s, ds, dual_pair(cone, j, 1, s, spectrum=spec), rule=rs)
            c_err = max(c_err, abs(cs - a ** (-mu / 2) * c1) / abs(cs))
    rng = np.random.default_rng(1)
    r = rng.uniform(0.2, 3, 50)
    th = rng.uniform(0, cone.theta0 - 1e-3, 50)
    ph = rng.uniform(0, 2 * math.pi, 50)
    pts = np.stack([r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)], axis=-1)
    u_err = 0.0
    for e in (spec[1], negative_branch(spec[1]), spec[2]):
        for N in (0, 1, 2):
            for s in (4.0, 9 * (0.6 + 0.8j)):
                a = abs(s)
                ex = build_expansion(e, 1, N, s, cone, spectrum=spec)
                ex1 = build_expansion(e, 1, N, s / a, cone, spectrum=spec)
                if ex.realized_log:
                    continue
                U, P = evaluate(ex, pts)
                U1, P1 = evaluate(ex1, math.sqrt(a) * pts)
                u_err = max(u_err, np.max(np.abs(U - a ** (-(e.mu + 1) / 2) * U1)) / np.max(np.abs(U)),
                            np.max(np.abs(P - a ** (-e.mu / 2) * P1)) / np.max(np.abs(P)))
    return {"passed": c_err <= 1e-8 and u_err <= 1e-8, "coefficient_error": float(c_err),
            "expansion_error": float(u_err), "citation": "scaling-laws"}


CHECKS = [
    (1, "polynomial identities", polynomial_identity_check),
    (2, "hemisphere Neumann spectrum", hemisphere_spectrum_check),
    (3, "Stokes pencil sanity", pencil_sanity_check),
    (4, "weight classifier", classifier_check),
    (5, "boundary trace", boundary_trace_check),
    (6, "residual envelopes", residual_envelope_check),
    (7, "biorthogonality", biorthogonality_check),
    (8, "coefficient recovery", coefficient_recovery_check),
    (9, "inverse Laplace", inverse_laplace_check),
    (10, "kernel envelopes", kernel_envelope_check),
    (11, "scaling laws", scaling_check),
]


def run_check(number):
    for n, name, fn in CHECKS:
        if n == number:
            out = fn()
            out.update({"criterion": n, "name": name})
            return out
    raise DomainError("unknown criterion", criterion=number)


def run_all(only=None):
    return [run_check(n) for n, _, _ in CHECKS if only is None or n in only]
