"""Coefficients of the singular part of solutions to the Stokes resolvent
problem on a cone.

A solution with data (f, g) splits near infinity into a finite sum
c_{j,k}(s) eta_s U^{(-j,k)} plus a remainder in the weighted space of weight
gamma.  The coefficients are read off by pairing the data with dual singular
pairs (V, Q):

    c_{j,k}(s) = -s / (1 + 2 mu_j) * int_K (f . V + g Q) dx.

For j = 1 the dual pair is the constant pressure |Omega|^-1/2 and exact.  For
j >= 2 it is replaced by eta_s U_M^{(j,k)}; the error bar is the integral of
the data against the first dropped layer of the expansion.

The biorthogonality of the primal and dual families is checked through the
surface form

    A_R = int_{S_R} (U2 . d_r U1 - U1 . d_r U2 + (P2 U1 - P1 U2) . x / R) dsigma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError, DomainError, NumericError
from .expansion import Expansion, Field, RadialCut, build_expansion, evaluate, stokes_data
from .geometry import ConeSpec, QuadratureGrid, cutoff_eta, tail_rule, to_spherical
from .neumann import negative_branch, neumann_spectrum

__all__ = [
    "DualSingularPair", "DataField", "CoefficientSet", "SmoothPart",
    "first_pencil_eigenvalue", "dual_depth", "family_depth", "singular_index_set",
    "dual_pair", "singular_family", "theta_rule", "pairing_form", "pairing_form_limit",
    "orthogonality_pairing", "volume_rule", "coefficient", "decompose",
    "manufacture", "point_estimate_check", "EXCLUDED_TOL",
]

EXCLUDED_TOL = 1e-8


# -- depths and index sets ---------------------------------------------------

def first_pencil_eigenvalue(cone: ConeSpec):
    """Smallest positive Stokes pencil eigenvalue; 1 for caps inside a half-sphere."""
    from .pencil import discretized_pencil_spectrum, halfspace_shortcut
    hs = halfspace_shortcut(cone)
    if hs is not None:
        return hs.lambda1
    spec = discretized_pencil_spectrum(cone, strip=(0.0, 1.0), resolution=32)
    pos = [r.value.real for r in spec.roots if r.value.real > 1e-8 and abs(r.value.imag) < 1e-8]
    if not pos:
        raise NumericError("no positive pencil eigenvalue in (0, 1]", theta0=cone.theta0)
    return min(pos)


def _smallest_int_above(x):
    return max(0, int(math.floor(x)) + 1)


def dual_depth(mu_j, lambda1):
    """Smallest integer exceeding mu_j - lambda1 (at least 0)."""
    return _smallest_int_above(mu_j - lambda1 + 1e-12)


def family_depth(mu_i, gamma):
    """Smallest integer exceeding gamma - mu_i - 3/2 (at least 0)."""
    return _smallest_int_above(gamma - mu_i - 1.5 + 1e-12)


def _check_gamma(spectrum, gamma):
    for e in spectrum:
        if abs(gamma - 0.5 - e.mu) < EXCLUDED_TOL:
            raise DomainError("gamma - 1/2 is a Neumann eigenvalue (excluded weight)",
                              gamma=gamma, mu=e.mu, j=e.index)


def singular_index_set(spectrum, gamma, zero_mean=False):
    """Indices j with 0 <= mu_j < gamma - 1/2, without 1 in the zero-mean variant."""
    _check_gamma(spectrum, gamma)
    out = [e.index for e in spectrum if 0 <= e.mu < gamma - 0.5]
    if zero_mean:
        out = [j for j in out if j != 1]
    return out


def _spectrum_for(cone, spectrum, mu_max=3.5):
    if spectrum is not None:
        return spectrum
    return neumann_spectrum(cone, mu_max)


def _eigen(cone, j, spectrum):
    for e in spectrum:
        if e.index == j:
            return e
    raise DomainError("eigenvalue index not in spectrum", j=j, available=[e.index for e in spectrum])


# -- dual and primal families ------------------------------------------------

@dataclass
class DualSingularPair:
    """(V, Q) = eta_s (U_N^{(j,k)}, P_N^{(j,k)}); the constant pair for j = 1."""

    index: tuple
    mu: float
    depth: int
    expansion: Expansion
    exact: bool
    next_layer: Expansion | None = field(default=None, repr=False)

    def fields(self, points, s=None, radial_derivative=False, expansion=None):
        """V, Q (and d_r V) at Cartesian points, with the eta_s cut for j >= 2."""
        exp = self.expansion if expansion is None else expansion
        s = exp.s if s is None else complex(s)
        out = evaluate(exp, points, s, radial_derivative)
        if self.exact:
            return out
        r = np.linalg.norm(np.asarray(points, float), axis=-1)
        x = abs(s) * r ** 2
        c = cutoff_eta(x)
        V, Q = c[..., None] * out[0], c * out[1]
        if not radial_derivative:
            return V, Q
        c1 = cutoff_eta(x, 1) * 2 * abs(s) * r
        return V, Q, c[..., None] * out[2] + c1[..., None] * out[0]

    def dropped(self, points, s=None):
        """First dropped layer eta_s (U_{N+1} - U_N) used for the error bar."""
        if self.exact or self.next_layer is None:
            z = np.zeros(np.shape(points)[:-1])
            return np.zeros(np.shape(points), complex), z.astype(complex)
        V1, Q1 = self.fields(points, s, expansion=self.next_layer)
        V0, Q0 = self.fields(points, s)
        return V1 - V0, Q1 - Q0

    def to_dict(self):
        return {"j": self.index[0], "k": self.index[1], "mu": self.mu, "depth": self.depth,
                "exact": self.exact, "V_atoms": [] if self.exact else self.expansion.velocity_atoms(),
                "Q_atoms": self.expansion.pressure_atoms()}


def dual_pair(cone: ConeSpec, j, k=1, s=1.0, depth=None, lambda1=None, spectrum=None,
              n_collar=32, n_x=40):
    """Dual pair for (j, k): exact for j = 1, truncated at ``depth`` otherwise."""
    spectrum = _spectrum_for(cone, spectrum)
    e = _eigen(cone, j, spectrum)
    if not 1 <= k <= e.multiplicity:
        raise DomainError("k out of range", j=j, k=k, multiplicity=e.multiplicity)
    if j == 1:
        exp = build_expansion(e, k, 0, s, cone, n_collar, n_x)
        return DualSingularPair((j, k), e.mu, 0, exp, True)
    if depth is None:
        lam1 = first_pencil_eigenvalue(cone) if lambda1 is None else lambda1
        depth = dual_depth(e.mu, lam1)
    exp = build_expansion(e, k, depth, s, cone, n_collar, n_x, spectrum)
    nxt = build_expansion(e, k, depth + 1, s, cone, n_collar, n_x, spectrum) if depth < 8 else None
    return DualSingularPair((j, k), e.mu, depth, exp, False, nxt)


def singular_family(cone: ConeSpec, i, l=1, s=1.0, gamma=None, depth=None, spectrum=None,
                    n_collar=32, n_x=40):
    """U^{(-i,l)} at depth M_{i,gamma} (or the given depth)."""
    spectrum = _spectrum_for(cone, spectrum)
    e = _eigen(cone, i, spectrum)
    if not 1 <= l <= e.multiplicity:
        raise DomainError("l out of range", i=i, l=l, multiplicity=e.multiplicity)
    if depth is None:
        depth = 0 if gamma is None else family_depth(e.mu, gamma)
    return build_expansion(negative_branch(e), l, depth, s, cone, n_collar, n_x, spectrum)


# -- surface form --------------------------------------------------------------

def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def theta_rule(cone: ConeSpec, n=16, panels=14, ratio=0.3):
    """Composite Gauss rule in theta with breaks at the chi kinks and geometric
    panels toward the lateral surface; weights include sin(theta)."""
    t0, d = cone.theta0, cone.delta_c
    a1 = max(0.0, t0 - math.asin(min(d, 1.0)))
    a2 = t0 - math.asin(min(d / 2, 1.0))
    edges = {0.0, a1, a2, t0}
    w = t0 - a2
    for _ in range(panels):
        w *= ratio
        edges.add(t0 - w)
    edges = sorted(edges)
    th, wt = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0:
            continue
        t, ww = _gl(n, a, b)
        th.append(t)
        wt.append(ww * np.sin(t))
    return np.concatenate(th), np.concatenate(wt)


def _phi_count(*exps):
    m = sum(e.m for e in exps)
    return 4 * m + 4


def _pair_fields(pair, pts, s):
    if isinstance(pair, DualSingularPair):
        return pair.fields(pts, s, radial_derivative=True)
    return evaluate(pair, pts, s, radial_derivative=True)


def _pair_exp(pair):
    return pair.expansion if isinstance(pair, DualSingularPair) else pair


def pairing_form(pair1, pair2, R, s=None, n_theta=16, n_phi=None):
    """Surface form A_R of two pairs (Expansion or DualSingularPair) on S_R."""
    e1, e2 = _pair_exp(pair1), _pair_exp(pair2)
    s = e1.s if s is None else complex(s)
    th, wt = theta_rule(e1.cone, n_theta)
    n_phi = _phi_count(e1, e2) if n_phi is None else n_phi
    ph = 2 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    x = np.stack([R * np.sin(T) * np.cos(P), R * np.sin(T) * np.sin(P), R * np.cos(T)], axis=-1)
    U1, P1, D1 = _pair_fields(pair1, x, s)
    U2, P2, D2 = _pair_fields(pair2, x, s)
    er = x / R
    integ = np.sum(U2 * D1 - U1 * D2, axis=-1) + P2 * np.sum(U1 * er, axis=-1) - P1 * np.sum(U2 * er, axis=-1)
    return complex(np.sum(integ * wt[:, None]) * (2 * np.pi / n_phi) * R ** 2)


def _aitken(v):
    """Limit and geometric ratio from the last three terms of a sequence."""
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if abs(d1) < 1e-300 or abs(d2) < 1e-15 * max(1.0, abs(v[-1])):
        return v[-1], 0.0
    q = d2 / d1
    if abs(q) >= 1:
        return v[-1], abs(q)
    return v[-1] + d2 * q / (1 - q), abs(q)


def pairing_form_limit(pair1, pair2, radii, s=None, n_theta=16):
    """A_R along increasing radii (ratio 2) and its extrapolated limit."""
    vals = [pairing_form(pair1, pair2, R, s, n_theta) for R in radii]
    lim, q = _aitken(vals)
    rate = -math.log2(q) if q > 0 else math.inf
    err = abs(vals[-1] - lim)
    return {"radii": list(map(float, radii)), "values": vals, "limit": lim, "rate": rate, "error": err}


def _leading(exp: Expansion):
    """Harmonic leading part (r^mu phi, -grad(r^mu phi)/s) of an expansion."""
    c = exp.layer_u.collar
    return Expansion(exp.cone, exp.mu, exp.m, exp.parity, exp.index, 0, exp.s, exp.global_atoms[:1],
                     Field(c, exp.mu, exp.m, True), Field(c, exp.mu, exp.m, False), trivial=exp.trivial)


def orthogonality_pairing(cone: ConeSpec, i, l, j, k, s=1.0, radii=None, spectrum=None,
                            lambda1=None, primal_depth=3, r_scale=8.0):
    """Biorthogonality of the dual pair (j,k) against the family U^{(-i,l)}.

    The default radii are {2, 4, 8, 16} * r_scale / sqrt|s|; the pairing is
    extrapolated from the last three values.  ``flatness`` is the spread of
    A_R over the radii for the leading harmonic parts, which is exactly
    R-independent.
    """
    s = complex(s)
    spectrum = _spectrum_for(cone, spectrum)
    ej, ei = _eigen(cone, j, spectrum), _eigen(cone, i, spectrum)
    if not ej.mu < ei.mu + 1:
        raise DomainError("biorthogonality needs mu_j < mu_i + 1", mu_j=ej.mu, mu_i=ei.mu)
    if radii is None:
        radii = [q * r_scale / math.sqrt(abs(s)) for q in (2, 4, 8, 16)]
    lam1 = 1.0 if j == 1 else (first_pencil_eigenvalue(cone) if lambda1 is None else lambda1)
    dual = dual_pair(cone, j, k, s, lambda1=lam1, spectrum=spectrum)
    prim = singular_family(cone, i, l, s, depth=primal_depth, spectrum=spectrum)
    res = pairing_form_limit(dual, prim, radii, s)
    lead = [pairing_form(_leading(dual.expansion), _leading(prim), R, s) for R in radii]
    expected = -(2 * ej.mu + 1) / s if (i == j and k == l) else 0.0
    flat = max(abs(a - lead[0]) for a in lead)
    return {"i": i, "l": l, "j": j, "k": k, "mu_i": ei.mu, "mu_j": ej.mu, "s": s,
            "radii": res["radii"], "A_R": res["values"], "limit": res["limit"], "expected": expected,
            "error": abs(res["limit"] - expected), "extrapolation_error": res["error"],
            "rate": res["rate"], "B_R_exponent": ej.mu - ei.mu - 1, "leading_A_R": lead,
            "flatness": flat, "dual_depth": dual.depth, "primal_depth": prim.depth,
            "citation": "biorthogonality"}


# -- data and volume quadrature ------------------------------------------------

@dataclass
class DataField:
    """Data (f, g) on the cone: callables on Cartesian points, or gridded values.

    ``r_min``/``r_max`` bound the radial support (r_max may be inf);
    ``breaks`` lists radii where the data lose smoothness.
    """

    cone: ConeSpec
    f: Callable | None = None
    g: Callable | None = None
    r_min: float = 0.0
    r_max: float = math.inf
    breaks: tuple = ()
    zero_mean: bool = False
    m_max: int = 0
    grid: QuadratureGrid | None = None
    f_values: np.ndarray | None = None
    g_values: np.ndarray | None = None
    truth: dict | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)
    fg: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        gridded = self.grid is not None
        if gridded and (self.f_values is None or self.g_values is None):
            raise DataError("gridded data need f_values and g_values")
        if not gridded and (self.f is None or self.g is None):
            raise DataError("data need callables f and g or a grid")
        if gridded:
            n = self.grid.counts
            if np.shape(self.f_values) != n + (3,) or np.shape(self.g_values) != n:
                raise DataError("gridded values do not match the grid", grid=list(n))
            if np.max(self.grid.theta) > self.cone.theta0 + 1e-12:
                raise DataError("grid leaves the cone")

    def evaluate(self, pts):
        if self.fg is not None:
            f, g = self.fg(pts)
        else:
            f, g = self.f(pts), self.g(pts)
        return np.asarray(f, complex), np.asarray(g, complex)


@dataclass
class VolumeRule:
    points: np.ndarray
    weights: np.ndarray
    r_range: tuple


def volume_rule(cone: ConeSpec, r_min, r_max, breaks=(), n_r=12, n_theta=12, n_phi=1,
                ratio=2.0, tail_panels=10, theta_panels=18):
    """Composite rule on {r_min < |x| < r_max} in K with radial breaks.

    Between breaks the radial panels grow geometrically by at most ``ratio``;
    an infinite r_max adds a tail rule beyond 4 times the last break.
    """
    if not r_min > 0:
        raise DomainError("volume rule needs r_min > 0", r_min=r_min)
    pts = sorted({float(b) for b in breaks if r_min < b < r_max} | {float(r_min)})
    if math.isinf(r_max):
        pts.append(4 * pts[-1])
    else:
        pts.append(float(r_max))
    rs, ws = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(math.ceil(math.log(b / a) / math.log(ratio))))
        edges = np.geomspace(a, b, k + 1)
        for ea, eb in zip(edges[:-1], edges[1:]):
            x, w = _gl(n_r, ea, eb)
            rs.append(x)
            ws.append(w)
    if math.isinf(r_max):
        x, w = tail_rule(pts[-1], n_r, tail_panels)
        rs.append(x)
        ws.append(w)
    r, wr = np.concatenate(rs), np.concatenate(ws)
    th, wt = theta_rule(cone, n_theta, theta_panels)
    ph = 2 * np.pi * np.arange(n_phi) / n_phi
    R, T, P = np.meshgrid(r, th, ph, indexing="ij")
    x = np.stack([R * np.sin(T) * np.cos(P), R * np.sin(T) * np.sin(P), R * np.cos(T)], axis=-1)
    w = (wr * r ** 2)[:, None, None] * wt[None, :, None] * np.full(n_phi, 2 * np.pi / n_phi)
    return VolumeRule(x, w, (float(r_min), float(r_max)))


def _data_rule(data: DataField, s, dual_breaks=(), rule=None, **kw):
    if data.grid is not None:
        pts = data.grid.points()
        return VolumeRule(pts, data.grid.volume_weights(), (float(data.grid.r[0]), float(data.grid.r[-1]))), \
            np.asarray(data.f_values, complex), np.asarray(data.g_values, complex)
    if rule is None:
        n_phi = kw.pop("n_phi", 4 * data.m_max + 4)
        lo = data.r_min if data.r_min > 0 else 1e-3 / math.sqrt(abs(s))
        rule = volume_rule(data.cone, lo, data.r_max, tuple(data.breaks) + tuple(dual_breaks), n_phi=n_phi, **kw)
    elif rule.r_range[0] > data.r_min * (1 + 1e-12) or rule.r_range[1] < data.r_max:
        raise DomainError("data support exceeds the quadrature domain",
                          support=[data.r_min, data.r_max], grid=list(rule.r_range))
    f, g = data.evaluate(rule.points)
    return rule, f, g


@dataclass
class CoefficientSet:
    gamma: float
    s: complex
    values: dict
    error_bars: dict
    zero_mean: bool = False

    def to_dict(self):
        return {"gamma": self.gamma, "s": [self.s.real, self.s.imag], "zero_mean": self.zero_mean,
                "citation": "coefficient-formula",
                "coefficients": {f"{j},{k}": {"re": v.real, "im": v.imag, "error_bar": self.error_bars[(j, k)]}
                                 for (j, k), v in sorted(self.values.items())}}


def coefficient(j, k, s, data: DataField, dual: DualSingularPair, rule: VolumeRule = None, **kw):
    """c_{j,k}(s) = -s/(1+2 mu_j) int (f.V + g Q) and a truncation error bar."""
    s = complex(s)
    if s == 0 or s.real < -1e-15:
        raise DomainError("need Re s >= 0 and s != 0", s=[s.real, s.imag])
    if dual.index != (j, k):
        raise DomainError("dual pair does not match (j, k)", dual=list(dual.index), j=j, k=k)
    cut = () if dual.exact else (math.sqrt(0.5 / abs(s)), 1 / math.sqrt(abs(s)))
    rule, f, g = _data_rule(data, s, cut, rule, **kw)
    fac = -s / (1 + 2 * dual.mu)
    V, Q = dual.fields(rule.points, s)
    val = fac * np.sum(rule.weights * (np.sum(f * V, axis=-1) + g * Q))
    err = 0.0
    if not dual.exact:
        dV, dQ = dual.dropped(rule.points, s)
        err = float(abs(fac) * np.sum(rule.weights * (np.linalg.norm(f, axis=-1) * np.linalg.norm(dV, axis=-1)
                                                      + np.abs(g) * np.abs(dQ))))
    return complex(val), err


def decompose(data: DataField, s, gamma, zero_mean_variant=False, spectrum=None, lambda1=None,
              dual_depths=None, **kw):
    """Coefficients for j in J_gamma (without 1 in the zero-mean variant) and,
    for manufactured data, a remainder evaluator."""
    s = complex(s)
    cone = data.cone
    if zero_mean_variant:
        if not data.zero_mean:
            raise DomainError("zero-mean variant needs data with zero-mean g")
        lam1 = first_pencil_eigenvalue(cone) if lambda1 is None else lambda1
        spectrum = _spectrum_for(cone, spectrum, max(3.5, gamma))
        mu2 = spectrum[1].mu if len(spectrum) > 1 else math.inf
        hi = min(lam1, mu2) + 1.5
    else:
        spectrum = _spectrum_for(cone, spectrum, max(3.5, gamma))
        hi = 1.5
    if not 0.5 < gamma < hi:
        raise DomainError("gamma outside the admissible interval", gamma=gamma, upper=hi)
    js = singular_index_set(spectrum, gamma, zero_mean_variant)
    values, bars, fams = {}, {}, {}
    for j in js:
        e = _eigen(cone, j, spectrum)
        for k in range(1, e.multiplicity + 1):
            depth = None if dual_depths is None else dual_depths.get(j)
            dual = dual_pair(cone, j, k, s, depth, lambda1, spectrum)
            values[(j, k)], bars[(j, k)] = coefficient(j, k, s, data, dual, **kw)
            fams[(j, k)] = singular_family(cone, j, k, s, gamma=gamma, spectrum=spectrum)
    cs = CoefficientSet(float(gamma), s, values, bars, zero_mean_variant)
    remainder = None
    if data.truth is not None:
        def remainder(points):
            u, p = data.truth["solution"](points)
            r = np.linalg.norm(np.asarray(points, float), axis=-1)
            eta = cutoff_eta(abs(s) * r ** 2)
            for key, c in values.items():
                U, P = evaluate(fams[key], points, s)
                u = u - c * eta[..., None] * U
                p = p - c * eta * P
            return u, p
    return cs, remainder


# -- manufactured solutions ----------------------------------------------------

@dataclass(frozen=True)
class SmoothPart:
    """v = grad(psi) x a, q = c_q psi with psi = (1 - |x - x_c|^2 / R^2)^n."""

    center: tuple
    radius: float
    axis: tuple = (0.0, 0.0, 1.0)
    pressure: float = 1.0
    power: int = 5

    def _psi(self, pts):
        d = np.asarray(pts, float) - np.asarray(self.center, float)
        t = np.sum(d * d, axis=-1) / self.radius ** 2
        a = np.clip(1 - t, 0, None)
        n, R2 = self.power, self.radius ** 2
        psi = a ** n
        psi_t = -n * a ** (n - 1) / R2
        psi_tt = n * (n - 1) * a ** (n - 2) / R2 ** 2
        return d, psi, psi_t, psi_tt

    def fields(self, pts):
        d, psi, pt, _ = self._psi(pts)
        grad = 2 * d * pt[..., None]
        return np.cross(grad, np.asarray(self.axis, float)), self.pressure * psi

    def data(self, pts, s):
        """(s - Delta) v + grad q and -div v = 0."""
        d, psi, pt, ptt = self._psi(pts)
        n, R2 = self.power, self.radius ** 2
        a = np.clip(1 - np.sum(d * d, axis=-1) / R2, 0, None)
        pttt = -n * (n - 1) * (n - 2) * a ** (n - 3) / R2 ** 3 if n >= 3 else 0 * a
        rho2 = np.sum(d * d, axis=-1)
        # Delta psi = 6 psi_t + 4 rho^2 psi_tt;  grad(Delta psi) = 2d (10 psi_tt + 4 rho^2 psi_ttt)
        glap = 2 * d * (10 * ptt + 4 * rho2 * pttt)[..., None]
        ax = np.asarray(self.axis, float)
        v = np.cross(2 * d * pt[..., None], ax)
        f = s * v - np.cross(glap, ax) + self.pressure * 2 * d * pt[..., None]
        return f, np.zeros(d.shape[:-1])

    def support(self):
        c = float(np.linalg.norm(self.center))
        return max(c - self.radius, 0.0), c + self.radius

    def inside(self, cone: ConeSpec):
        c = np.asarray(self.center, float)
        _, th, _ = to_spherical(c[None])
        ang = math.asin(min(1.0, self.radius / np.linalg.norm(c)))
        return th[0] + ang < cone.theta0 - 1e-12


def manufacture(cone: ConeSpec, seeds, s=1.0, gamma=None, smooth: SmoothPart = None, rho=None,
                depth=None, spectrum=None, n_collar=32, n_x=40):
    """Data (f, g) of (u, p) = cut * sum c0 (U^{(-j,k)}, P^{(-j,k)}) + smooth part.

    The cut is eta(r^2 / rho^2), rho = |s|^-1/2 by default; the seeded family
    has depth M_{j,gamma} unless ``depth`` is given.  Returns the data with
    the ground truth attached.
    """
    s = complex(s)
    if rho is None:
        rho = 1 / math.sqrt(abs(s))
    cut = RadialCut(rho)
    spectrum = _spectrum_for(cone, spectrum)
    fams = []
    for (j, k), c in sorted(seeds.items()):
        exp = singular_family(cone, j, k, s, gamma, depth, spectrum, n_collar, n_x)
        fams.append((c, exp))
    if smooth is not None and not smooth.inside(cone):
        raise DomainError("smooth part must be supported inside the cone")

    def f_fun(pts):
        pts = np.asarray(pts, float)
        f = np.zeros(pts.shape, complex)
        g = np.zeros(pts.shape[:-1], complex)
        for c, exp in fams:
            fi, gi = stokes_data(exp, pts, s, cut)
            f += c * fi
            g += c * gi
        if smooth is not None:
            fs, gs = smooth.data(pts, s)
            f += fs
            g += gs
        return f, g

    def solution(pts):
        pts = np.asarray(pts, float)
        r = np.linalg.norm(pts, axis=-1)
        e0 = cutoff_eta((r / rho) ** 2)
        u = np.zeros(pts.shape, complex)
        p = np.zeros(pts.shape[:-1], complex)
        for c, exp in fams:
            U, P = evaluate(exp, pts, s)
            u += c * e0[..., None] * U
            p += c * e0 * P
        if smooth is not None:
            v, q = smooth.fields(pts)
            u += v
            p += q
        return u, p

    breaks = [rho * math.sqrt(0.5), rho]
    r_min = rho * math.sqrt(0.5)
    if smooth is not None:
        lo, hi = smooth.support()
        breaks += [lo, hi]
        r_min = min(r_min, lo) if lo > 0 else r_min
    if not fams:
        lo, hi = smooth.support() if smooth is not None else (rho, 2 * rho)
        r_min, r_max = lo, hi
    else:
        r_max = math.inf
    m_max = max([exp.m for _, exp in fams] + [0]) + (2 if smooth is not None else 0)
    data = DataField(cone, lambda p: f_fun(p)[0], lambda p: f_fun(p)[1], r_min, r_max, tuple(breaks),
                     False, m_max, truth={"seeds": dict(seeds), "solution": solution, "s": s, "rho": rho},
                     meta={"kind": "manufactured", "rho": rho}, fg=f_fun)
    # zero-mean flag from quadrature of g
    rule = volume_rule(cone, r_min, r_max, breaks, n_phi=4 * m_max + 4)
    _, g = data.evaluate(rule.points)
    total = np.sum(rule.weights * g)
    scale = np.sum(rule.weights * np.abs(g))
    data.zero_mean = bool(abs(total) <= 1e-10 * max(scale, 1e-300)) if scale > 0 else True
    data.meta["g_integral"] = [float(total.real), float(total.imag)]
    return data, dict(seeds)


# -- point estimates -------------------------------------------------------------

def _slope(r, v):
    ok = v > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)[0])


def point_estimate_check(solution, cone: ConeSpec, s, lambda1, gamma, near=None, far=None,
                         n=12, phi=0.3, theta_frac=0.5):
    """Fitted r-exponents of |u| and |p| against the point-estimate envelopes.

    Near zone (2|s| r^2 < 1): |u| ~ r^lambda1 at most, |p| ~ r^(lambda1 - 1).
    Far zone (2|s| r^2 > 1): |u| <= c r^-2, |p| <= c r^-1.
    ``ok`` means the fitted exponent is not below the envelope by more than 0.1
    in the near zone and not above it by more than 0.1 in the far zone.
    """
    s = complex(s)
    r0 = 1 / math.sqrt(2 * abs(s))
    near = (r0 * 1e-3, r0 * 0.5) if near is None else near
    far = (r0 * 4, r0 * 400) if far is None else far
    th = cone.theta0 * theta_frac
    out = {"lambda1": lambda1, "gamma": gamma, "citation": "point-estimates"}
    for zone, (a, b), pred in (("near", near, (lambda1, lambda1 - 1)), ("far", far, (-2.0, -1.0))):
        r = np.geomspace(a, b, n)
        pts = np.stack([r * math.sin(th) * math.cos(phi), r * math.sin(th) * math.sin(phi),
                        r * math.cos(th) * np.ones_like(r)], axis=-1)
        u, p = solution(pts)
        su, sp = _slope(r, np.linalg.norm(u, axis=-1)), _slope(r, np.abs(p))
        if zone == "near":
            ok = [x is None or x >= y - 0.1 for x, y in ((su, pred[0]), (sp, pred[1]))]
        else:
            ok = [x is None or x <= y + 0.1 for x, y in ((su, pred[0]), (sp, pred[1]))]
        out[zone] = {"r": [a, b], "velocity": su, "pressure": sp, "predicted": list(pred), "ok": all(ok)}
    return out
