"""Singular solutions of the Stokes resolvent problem near infinity of a cone.

An expansion is a global part (a harmonic pressure G and velocity -grad G / s)
plus boundary-layer atoms living in the collar nu < delta_c r:

    U = -s^-1 grad G - chi(nu/r) L_u,    P = G - chi(nu/r) L_p.

Layer atoms have the form

    s^(ta/2) r^(mu - ro) (log r)^k z^i exp(-e z) Phi(theta) trig(m phi),   z = nu sqrt(s),

and are stored in a ``Field``: a dict keyed by (ta, ro, k, i, e) with the
angular profile Phi sampled on Chebyshev-Lobatto nodes of the collar.  The
r-, log- and z-dependence is handled exactly; only theta-derivatives are
numerical (Chebyshev).  Vector profiles hold (e_r, e_theta, e_phi)
components with azimuthal pattern (cos, cos, sin); scalars carry cos.  The
sin-parity eigenfunction is the same expansion rotated by pi / (2m).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C

from .cheb import bary_eval, cheb_interval, clenshaw_curtis_weights
from .errors import DomainError, NumericError, ResonanceError
from .geometry import ConeSpec, cutoff_chi, cutoff_eta, spherical_frame, to_spherical
from .neumann import NeumannEigenvalue, _roots_for_order, neumann_spectrum

__all__ = [
    "boundary_polynomials", "Collar", "Field", "GlobalProfile", "Expansion",
    "build_leading_pair", "build_expansion", "layer_corrector", "neumann_lift", "evaluate",
    "residual", "residual_fd", "weighted_norm_bounds", "collar_exp_integral", "log_budget",
    "stokes_data", "RadialCut", "spectral_terms", "RESONANCE_TOL",
]

RESONANCE_TOL = 1e-8
PRUNE_TOL = 1e-12


# -- boundary-layer polynomials --------------------------------------------

def boundary_polynomials(k):
    """Exact coefficient lists (ascending powers) of P1, P2, P3 for integer k >= 0."""
    if not 0 <= k <= 32:
        raise DomainError("boundary polynomial degree must be in [0, 32]", k=k)
    fk = math.factorial(k)
    P1 = [Fraction(-fk, math.factorial(j)) for j in range(k + 1)]
    P2 = [Fraction(0)] + [Fraction(fk * 2 ** j, 2 ** (k + 2) * math.factorial(j)) for j in range(1, k + 2)]
    P3 = [Fraction(-fk * (k - j + 1), math.factorial(j)) for j in range(k)]
    return P1, P2, P3


def _padd(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def _pder(a):
    return [i * a[i] for i in range(1, len(a))]


def _pscale(a, c):
    return [c * x for x in a]


def _ptrim(a):
    a = list(a)
    while a and a[-1] == 0:
        a.pop()
    return a


def polynomial_identities(k):
    """(P1' - P1 - nu^k, P2'' - 2 P2' + nu^k, P3' - P3 - P1'' + 2 P1'), each trimmed (all empty when exact)."""
    P1, P2, P3 = boundary_polynomials(k)
    mono = [Fraction(0)] * k + [Fraction(1)]
    e1 = _padd(_padd(_pder(P1), _pscale(P1, -1)), _pscale(mono, -1))
    e2 = _padd(_padd(_pder(_pder(P2)), _pscale(_pder(P2), -2)), mono)
    e3 = _padd(_padd(_pder(P3), _pscale(P3, -1)), _padd(_pscale(_pder(_pder(P1)), -1), _pscale(_pder(P1), 2)))
    return _ptrim(e1), _ptrim(e2), _ptrim(e3)


# -- collar discretization --------------------------------------------------

def _unique(a):
    """Distinct values of a and the inverse map back to the shape of a."""
    a = np.asarray(a, float)
    u, inv = np.unique(a, return_inverse=True)
    return u, inv.reshape(a.shape)


class Collar:
    """Chebyshev-Lobatto nodes on the collar [theta0 - asin(delta_c), theta0]."""

    def __init__(self, cone: ConeSpec, n=32):
        self.cone = cone
        self.n = n
        self.lo = cone.theta0 - cone.collar_angle
        self.hi = cone.theta0
        self.theta, _ = cheb_interval(n, self.lo, self.hi)
        t = self.theta
        self.sin = np.sin(t)
        self.cos = np.cos(t)
        self.nfun = np.sin(cone.theta0 - t)          # nu / r
        self.dnfun = -np.cos(cone.theta0 - t)        # d(nu/r)/dtheta
        self._V = C.chebvander(self._u(t), n)
        self._Vinv = np.linalg.inv(self._V)

    def _u(self, t):
        return (2 * np.asarray(t) - self.lo - self.hi) / (self.hi - self.lo)

    def diff(self, prof):
        """theta-derivative of profiles (last axis = nodes), with coefficient chopping."""
        c = prof @ self._Vinv.T
        scale = np.max(np.abs(c), axis=-1, keepdims=True)
        c = np.where(np.abs(c) < 1e-15 * scale, 0.0, c)
        dc = C.chebder(c, axis=-1) * (2 / (self.hi - self.lo))
        dc = np.concatenate([dc, np.zeros(prof.shape[:-1] + (1,))], axis=-1)
        return dc @ self._V.T

    def interp(self, prof, theta):
        """Evaluate profiles (last axis = nodes) at arbitrary theta."""
        c = prof @ self._Vinv.T
        th, inv = _unique(theta)
        if c.ndim > 1:
            return C.chebval(self._u(th), np.moveaxis(c, -1, 0))[..., inv]
        return C.chebval(self._u(th), c)[inv]


class Field:
    """Sum of collar atoms.  ``vector`` profiles have shape (3, n)."""

    def __init__(self, collar: Collar, mu, m, vector, data=None):
        self.collar = collar
        self.mu = mu
        self.m = m
        self.vector = vector
        self.data = {} if data is None else data

    def empty(self):
        return Field(self.collar, self.mu, self.m, self.vector)

    def like(self, vector):
        return Field(self.collar, self.mu, self.m, vector)

    def add(self, key, prof):
        if key in self.data:
            self.data[key] = self.data[key] + prof
        else:
            self.data[key] = np.array(prof, dtype=float)

    def __iadd__(self, other):
        for k, v in other.data.items():
            self.add(k, v)
        return self

    def __add__(self, other):
        out = self.copy()
        out += other
        return out

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def copy(self):
        return Field(self.collar, self.mu, self.m, self.vector, {k: v.copy() for k, v in self.data.items()})

    def scaled(self, c):
        return Field(self.collar, self.mu, self.m, self.vector, {k: c * v for k, v in self.data.items()})

    def shift(self, dta=0, dro=0):
        """Multiply by s^(dta/2) r^(-dro)."""
        return Field(self.collar, self.mu, self.m, self.vector,
                     {(ta + dta, ro + dro, k, i, e): v for (ta, ro, k, i, e), v in self.data.items()})

    def mul(self, g):
        return Field(self.collar, self.mu, self.m, self.vector, {k: v * g for k, v in self.data.items()})

    def select(self, pred):
        return Field(self.collar, self.mu, self.m, self.vector,
                     {k: v for k, v in self.data.items() if pred(k)})

    def component(self, c):
        out = self.like(False)
        for k, v in self.data.items():
            out.add(k, v[c])
        return out

    @staticmethod
    def assemble(r, t, p):
        """Vector field from three scalar fields."""
        out = r.like(True)
        n = r.collar.n + 1
        for idx, comp in enumerate((r, t, p)):
            for k, v in comp.data.items():
                prof = np.zeros((3, n))
                prof[idx] = v
                out.add(k, prof)
        return out

    def scale_norm(self):
        return max((float(np.max(np.abs(v))) for v in self.data.values()), default=0.0)

    def pruned(self, tol=PRUNE_TOL, ref=None):
        ref = self.scale_norm() if ref is None else ref
        return Field(self.collar, self.mu, self.m, self.vector,
                     {k: v for k, v in self.data.items() if np.max(np.abs(v)) > tol * max(ref, 1e-300)})

    def keys_sorted(self):
        return sorted(self.data)

    # -- calculus (component-wise; spherical basis is r-independent) --

    def d_r(self):
        out = self.empty()
        for (ta, ro, k, i, e), v in self.data.items():
            b = self.mu - ro
            out.add((ta, ro + 1, k, i, e), b * v)
            # derivatives of the layer factor give sqrt(s) grad(nu), r-component n
            if e:
                out.add((ta + 1, ro, k, i, e), -self.collar.nfun * v)
            if i:
                out.add((ta + 1, ro, k, i - 1, e), i * self.collar.nfun * v)
            if k:
                out.add((ta, ro + 1, k - 1, i, e), k * v)
        return out

    def d_theta(self):
        col = self.collar
        out = self.empty()
        for (ta, ro, k, i, e), v in self.data.items():
            out.add((ta, ro, k, i, e), col.diff(v))
            if e:
                out.add((ta + 1, ro - 1, k, i, e), -col.dnfun * v)
                if i:
                    out.add((ta + 1, ro - 1, k, i - 1, e), i * col.dnfun * v)
        return out

    # -- evaluation --

    def evaluate(self, r, theta, phi, s, rotate=0.0):
        """Values at points; vectors returned as spherical components (..., 3)."""
        col = self.collar
        r = np.asarray(r, float)
        theta = np.asarray(theta, float)
        phi = np.asarray(phi, float) - rotate
        sq = np.sqrt(complex(s))
        z = r * sq * np.sin(col.cone.theta0 - theta)
        logr = np.log(r)
        shape = np.broadcast(r, theta, phi).shape
        out = np.zeros(shape + ((3,) if self.vector else ()), complex)
        for (ta, ro, k, i, e), v in self.data.items():
            fac = sq ** ta * r ** (self.mu - ro) * logr ** k * z ** i
            if e:
                fac = fac * np.exp(-z)
            prof = col.interp(v, theta)
            if self.vector:
                out += fac[..., None] * np.moveaxis(np.asarray(prof), 0, -1)
            else:
                out += fac * prof
        mp = self.m * phi
        if self.vector:
            out[..., 0] *= np.cos(mp)
            out[..., 1] *= np.cos(mp)
            out[..., 2] *= np.sin(mp)
        else:
            out *= np.cos(mp)
        return out

    def to_ledger(self, kind):
        rows = []
        for (ta, ro, k, i, e) in self.keys_sorted():
            rows.append({"kind": kind, "s_power": Fraction(ta, 2).__str__(), "r_offset": ro,
                         "r_power": self.mu - ro, "log_power": k,
                         "layer": {"nu_power": i, "has_exp_decay": bool(e)}, "chi_wrapped": True,
                         "profile": np.asarray(self.data[(ta, ro, k, i, e)]).tolist()})
        return rows


def _nu_split(F: Field):
    """(F_nu scalar field, F_tau vector field) for a vector field in the collar."""
    col = F.collar
    fn = F.like(False)
    ft = F.like(True)
    for key, v in F.data.items():
        vn = col.nfun * v[0] + col.dnfun * v[1]
        fn.add(key, vn)
        ft.add(key, v - np.stack([col.nfun * vn, col.dnfun * vn, 0 * vn]))
    return fn, ft


def grad(S: Field):
    col = S.collar
    fr = S.d_r()
    ft = S.d_theta().shift(dro=1)
    fp = S.mul(-S.m / col.sin).shift(dro=1)
    return Field.assemble(fr, ft, fp)


def div(V: Field):
    col = V.collar
    vr, vt, vp = V.component(0), V.component(1), V.component(2)
    out = vr.d_r() + vr.scaled(2.0).shift(dro=1)
    out += vt.mul(col.sin).d_theta().mul(1 / col.sin).shift(dro=1)
    out += vp.mul(V.m / col.sin).shift(dro=1)
    return out


def lap_scalar(f: Field):
    col = f.collar
    fr = f.d_r()
    out = fr.d_r() + fr.scaled(2.0).shift(dro=1)
    ft = f.d_theta()
    ang = ft.d_theta() + ft.mul(col.cos / col.sin) + f.mul(-(f.m ** 2) / col.sin ** 2)
    return out + ang.shift(dro=2)


def lap_vector(V: Field):
    col = V.collar
    m = V.m
    s, c = col.sin, col.cos
    vr, vt, vp = V.component(0), V.component(1), V.component(2)
    lr = lap_scalar(vr) + (vr.scaled(-2.0) + vt.mul(s).d_theta().mul(-2 / s) + vp.mul(-2 * m / s)).shift(dro=2)
    lt = lap_scalar(vt) + (vt.mul(-1 / s ** 2) + vr.d_theta().scaled(2.0) + vp.mul(-2 * c * m / s ** 2)).shift(dro=2)
    lp = lap_scalar(vp) + (vp.mul(-1 / s ** 2) + vr.mul(-2 * m / s) + vt.mul(-2 * c * m / s ** 2)).shift(dro=2)
    return Field.assemble(lr, lt, lp)


def stokes_apply(U: Field, P: Field):
    """((s - Delta) U + grad P, div U) as atom fields (exact up to theta-derivatives)."""
    F = U.shift(dta=2) - lap_vector(U) + grad(P)
    return F, div(U)


# -- global (pole-regular) pressure profiles --------------------------------

class GlobalProfile:
    """psi(theta) = sin^m(theta) w(cos theta), w held on Chebyshev-Lobatto nodes in x."""

    def __init__(self, m, xnodes, w):
        self.m = m
        self.x = np.asarray(xnodes)
        self.w = np.asarray(w, float)
        a, b = self.x[0], self.x[-1]
        self._D = cheb_interval(len(self.x) - 1, a, b)[1]
        self.dw = self._D @ self.w

    def _wx(self, theta):
        x = np.cos(np.asarray(theta, float))
        xu, inv = _unique(x)
        return x, bary_eval(self.x, self.w, xu)[inv], bary_eval(self.x, self.dw, xu)[inv]

    def value(self, theta):
        x, w, _ = self._wx(theta)
        return np.sin(theta) ** self.m * w

    def dtheta(self, theta):
        x, w, dw = self._wx(theta)
        s = np.sin(theta)
        if self.m == 0:
            return -s * dw
        return s ** (self.m - 1) * (self.m * x * w - s ** 2 * dw)

    def over_sin(self, theta):
        """psi / sin(theta), finite at the pole for m >= 1 (zero returned for m = 0)."""
        if self.m == 0:
            return np.zeros_like(np.asarray(theta, float))
        x, w, _ = self._wx(theta)
        return np.sin(theta) ** (self.m - 1) * w

    def to_dict(self):
        return {"m": self.m, "x": self.x.tolist(), "w": self.w.tolist()}


def _xgrid(theta0, n):
    return cheb_interval(n, math.cos(theta0), 1.0)


def _beltrami_x_ops(m, x, D):
    Q = np.diag(1 - x ** 2)
    return Q @ D @ D - 2 * (m + 1) * np.diag(x) @ D - m * (m + 1) * np.eye(len(x))


def _bc_row(m, x, D):
    x0 = x[0]
    s0 = math.sqrt(1 - x0 ** 2)
    row = -s0 ** 2 * D[0]
    row = row.copy()
    row[0] += m * x0
    return s0 ** (m - 1) * row if m > 0 else -s0 * D[0]


def eigen_global_profile(mu, m, theta0, norm, n=40):
    """w-representation of the Neumann eigenfunction, w(1) = norm (pole normalization)."""
    x, D = _xgrid(theta0, n)
    A = _beltrami_x_ops(m, x, D) + mu * (mu + 1) * np.eye(n + 1)
    A[0] = _bc_row(m, x, D)
    e = np.zeros(n + 1)
    e[-1] = 1.0
    A = np.vstack([A, e])
    rhs = np.zeros(n + 2)
    rhs[-1] = norm
    w, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return GlobalProfile(m, x, w)


@dataclass
class GlobalAtom:
    """s^(ta/2) r^(mu - ro) (log r)^k psi(theta) cos(m phi)."""
    ta: int
    ro: int
    k: int
    profile: GlobalProfile


@lru_cache(maxsize=256)
def _order_degrees(theta0, m, mu_max):
    roots, _ = _roots_for_order(m, theta0, mu_max, 0.05)
    return tuple(roots)


def _resonant(lam, m, theta0):
    target = max(abs(lam), abs(-1 - lam)) + 1.0
    for mu in _order_degrees(theta0, m, math.ceil(target)):
        if abs(lam * (lam + 1) - mu * (mu + 1)) < RESONANCE_TOL:
            return mu
    return None


def neumann_lift(h, lam, m, theta0, interior=None, n=40):
    """Solve (delta + lam(lam+1)) psi_k = -(k+1)(2 lam+1) psi_{k+1} - (k+2)(k+1) psi_{k+2} + R_k
    with d psi_k / d theta (theta0) = h[k], for the log levels k of the harmonic
    r^lam sum_k (log r)^k psi_k (cos m phi).

    ``h``: list of boundary fluxes per log level; ``interior``: optional list of
    R_k / sin^m sampled on the x-grid.  At a resonance lam(lam+1) = M (same m)
    one more log level is added and fixed by solvability; the free multiple of
    the eigenfunction at level 0 is set by orthogonality.

    Returns (profiles list by level, resonant flag, residual).
    """
    x, D = _xgrid(theta0, n)
    N1 = n + 1
    K = len(h) - 1
    if interior is not None:
        K = max(K, len(interior) - 1)
    mu_res = _resonant(lam, m, theta0)
    levels = K + 2 if mu_res is not None else K + 1
    L = _beltrami_x_ops(m, x, D)
    bc = _bc_row(m, x, D)
    size = levels * N1
    A = np.zeros((size, size))
    b = np.zeros(size)
    I = np.eye(N1)
    for k in range(levels):
        r = slice(k * N1, (k + 1) * N1)
        A[r, r] = L + lam * (lam + 1) * I
        if k + 1 < levels:
            A[r, (k + 1) * N1:(k + 2) * N1] += (k + 1) * (2 * lam + 1) * I
        if k + 2 < levels:
            A[r, (k + 2) * N1:(k + 3) * N1] += (k + 2) * (k + 1) * I
        if interior is not None and k < len(interior):
            b[r] = interior[k]
        A[k * N1] = 0.0
        A[k * N1, r] = bc
        b[k * N1] = h[k] if k < len(h) else 0.0
    if mu_res is not None:
        # eigenfunction of order m at this degree, orthogonality of level 0 to it
        phi = eigen_global_profile(mu_res, m, theta0, 1.0, n).w
        wts = clenshaw_curtis_weights(n, x[0], 1.0) * (1 - x ** 2) ** m
        row = np.zeros(size)
        row[:N1] = wts * phi
        A = np.vstack([A, row])
        b = np.append(b, 0.0)
    sol, *_ = np.linalg.lstsq(A, b, rcond=1e-13)
    res = float(np.max(np.abs(A @ sol - b))) / max(1.0, float(np.max(np.abs(b))))
    if res > 1e-8:
        raise ResonanceError("Neumann lift: system not solvable to tolerance", residual=res, lam=lam, m=m)
    ws = [sol[k * N1:(k + 1) * N1] for k in range(levels)]
    while len(ws) > 1 and np.max(np.abs(ws[-1])) < 1e-12 * max(1.0, max(np.max(np.abs(w)) for w in ws)):
        ws.pop()
    return [GlobalProfile(m, x, w) for w in ws], mu_res is not None, res


def _collar_field_of(atoms, collar, mu, m):
    """Global pressure atoms restricted to the collar as an e = 0 field."""
    out = Field(collar, mu, m, False)
    for a in atoms:
        out.add((a.ta, a.ro, a.k, 0, 0), a.profile.value(collar.theta))
    return out


def layer_corrector(f1: Field, g1: Field):
    """Boundary-layer corrector for leading residual parts.

    f-atoms s^(ta/2) r^(mu-ro) (log r)^k z^i e^-z Phi are read as
    sqrt(s) e^-z z^i F and g-atoms as e^-z z^i G, and receive
      u = s^-1/2 e^-z (P1(z) G grad(nu) + P2(z) F_tau),
      p = e^-z (P3(z) G + P1(z) F_nu)
    with polynomial degree i.  Returns (u, p) fields.
    """
    col = f1.collar
    u = f1.like(True)
    p = f1.like(False)
    fn, ft = _nu_split(f1)
    for (ta, ro, k, i, e), v in ft.data.items():
        P1, P2, _ = boundary_polynomials(i)
        for j, cj in enumerate(P2):
            if cj:
                u.add((ta - 2, ro, k, j, 1), float(cj) * v)
        vn = fn.data[(ta, ro, k, i, e)]
        for j, cj in enumerate(P1):
            p.add((ta - 1, ro, k, j, 1), float(cj) * vn)
    gradnu = np.stack([col.nfun, col.dnfun, 0 * col.nfun])
    for (ta, ro, k, i, e), v in g1.data.items():
        P1, _, P3 = boundary_polynomials(i)
        for j, cj in enumerate(P1):
            u.add((ta - 1, ro, k, j, 1), float(cj) * v * gradnu)
        for j, cj in enumerate(P3):
            if cj:
                p.add((ta, ro, k, j, 1), float(cj) * v)
    return u, p


def corrector_remainders(f1: Field, g1: Field):
    """(u, p, R1, R2): R1 = (s-Delta)u + grad p - f1, R2 = div u - g1 (atoms of higher d)."""
    u, p = layer_corrector(f1, g1)
    F, G = stokes_apply(u, p)
    ref = max(F.scale_norm(), G.scale_norm())
    return u, p, (F - f1).pruned(1e-10, ref), (G - g1).pruned(1e-10, ref)


@dataclass
class Expansion:
    cone: ConeSpec
    mu: float
    m: int
    parity: str
    index: tuple
    depth: int
    s: complex
    global_atoms: list
    layer_u: Field
    layer_p: Field
    log_budget: int = 0
    realized_log: int = 0
    resonances: list = field(default_factory=list)
    trivial: bool = False
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def rotation(self):
        return 0.0 if self.parity == "cos" or self.m == 0 else math.pi / (2 * self.m)

    def velocity_atoms(self):
        rows = [{"kind": "velocity-global", "s_power": str(Fraction(a.ta - 2, 2)), "r_power": self.mu - a.ro - 1,
                 "log_power": a.k, "layer": None, "chi_wrapped": False, "from_pressure_atom": idx}
                for idx, a in enumerate(self.global_atoms)]
        return rows + self.layer_u.to_ledger("velocity-layer")

    def pressure_atoms(self):
        rows = [{"kind": "pressure-global", "s_power": str(Fraction(a.ta, 2)), "r_power": self.mu - a.ro,
                 "log_power": a.k, "layer": None, "chi_wrapped": False, "profile": a.profile.to_dict()}
                for a in self.global_atoms]
        return rows + self.layer_p.to_ledger("pressure-layer")

    def to_dict(self):
        return {"mu": self.mu, "m": self.m, "parity": self.parity, "index": list(self.index),
                "depth": self.depth, "s": [self.s.real, self.s.imag], "theta0": self.cone.theta0,
                "delta_c": self.cone.delta_c, "log_budget": self.log_budget,
                "realized_log": self.realized_log, "resonances": self.resonances,
                "velocity_atoms": self.velocity_atoms(), "pressure_atoms": self.pressure_atoms()}

    def scaled(self, c):
        """Expansion with every coefficient multiplied by c."""
        g = [GlobalAtom(a.ta, a.ro, a.k, GlobalProfile(a.profile.m, a.profile.x, c * a.profile.w))
             for a in self.global_atoms]
        return Expansion(self.cone, self.mu, self.m, self.parity, self.index, self.depth, self.s, g,
                         self.layer_u.scaled(c), self.layer_p.scaled(c), self.log_budget,
                         self.realized_log, list(self.resonances), self.trivial)


def log_budget(cone: ConeSpec, mu, N, spectrum=None):
    """Number of Neumann eigenvalues (both branches) in {mu-1, ..., mu-N}."""
    if N == 0:
        return 0
    if spectrum is None:
        spectrum = neumann_spectrum(cone, max(mu, 1.0) + 0.5)
    vals = [e.mu for e in spectrum] + [-1 - e.mu for e in spectrum]
    return sum(1 for n in range(1, N + 1) if any(abs(mu - n - v) < 1e-8 for v in vals))


def _check_args(s, N):
    s = complex(s)
    if s == 0:
        raise DomainError("s must be nonzero")
    if s.real < -1e-15:
        raise DomainError("Re s must be >= 0", s=[s.real, s.imag])
    if not 0 <= N <= 8:
        raise DomainError("depth N must be in [0, 8]", N=N)
    return s


def _start(cone, e: NeumannEigenvalue, k, s, n_collar, n_x):
    prof = e.profile(k)
    m = prof.m
    collar = Collar(cone, n_collar)
    gp = eigen_global_profile(e.mu, m, cone.theta0, prof.norm, n_x)
    g = [GlobalAtom(0, 0, 0, gp)]
    exp = Expansion(cone, e.mu, m, prof.parity, (e.index, k), 0, complex(s), g,
                    Field(collar, e.mu, m, True), Field(collar, e.mu, m, False))
    if abs(e.mu) < 1e-12:
        exp.trivial = True
        return exp
    _add_lift_layer(exp, g)
    return exp


def _add_lift_layer(exp, atoms):
    """L_u += s^-1 e^-z (-grad p')_tau for new global atoms p'."""
    P = _collar_field_of(atoms, exp.layer_u.collar, exp.mu, exp.m)
    v = -grad(P)
    _, vt = _nu_split(v)
    for (ta, ro, k, i, e), prof in vt.data.items():
        exp.layer_u.add((ta - 2, ro, k, 0, 1), prof)


def build_leading_pair(e: NeumannEigenvalue, k=1, s=1.0, cone: ConeSpec = None, n_collar=32, n_x=40):
    """Leading pair p0 = r^mu phi, u0 = s^-1 (v0 - chi e^{-nu sqrt s} v0_tau), v0 = -grad p0."""
    s = _check_args(s, 0)
    if cone is None:
        cone = ConeSpec(e.profile(k).theta0)
    return _start(cone, e, k, s, n_collar, n_x)


def core_residual(exp: Expansion):
    """Residual inside the collar core (chi = 1): f = -((s-Delta)L_u + grad L_p), g = -div L_u."""
    F, G = stokes_apply(exp.layer_u, exp.layer_p)
    return -F, -G


def build_expansion(e: NeumannEigenvalue, k=1, N=0, s=1.0, cone: ConeSpec = None, n_collar=32, n_x=40,
                spectrum=None):
    """Recursive singular pair (U_N, P_N) for the eigenfunction phi_{j,k}."""
    s = _check_args(s, N)
    if cone is None:
        cone = ConeSpec(e.profile(k).theta0)
    exp = _start(cone, e, k, s, n_collar, n_x)
    exp.log_budget = log_budget(cone, e.mu, N, spectrum)
    if exp.trivial:
        exp.depth = N
        return exp
    for step in range(N):
        _advance(exp, step)
    exp.depth = N
    exp.realized_log = max([a.k for a in exp.global_atoms] + [key[2] for key in exp.layer_u.data]
                           + [key[2] for key in exp.layer_p.data] + [0])
    return exp


def _advance(exp: Expansion, N):
    f, g = core_residual(exp)
    ref = max(exp.layer_u.scale_norm(), exp.layer_p.scale_norm(), 1e-300)
    f = f.pruned(1e-10, ref)
    g = g.pruned(1e-10, ref)
    low = [key for key in list(f.data) + list(g.data) if key[1] < N + 2]
    if low:
        raise NumericError("residual contains atoms below the expected order", keys=[list(k) for k in low],
                           depth=N)
    f1 = f.select(lambda key: key[1] == N + 2)
    g1 = g.select(lambda key: key[1] == N + 2)
    v, q = layer_corrector(f1, g1)
    exp.layer_u += v
    exp.layer_p += q
    # normal trace of v at theta0 (z = 0): v_nu = n v_r + n' v_theta -> -v_theta
    col = exp.layer_u.collar
    flux = {}
    for (ta, ro, k, i, e), prof in v.data.items():
        if i == 0:
            flux[k] = flux.get(k, 0.0) + (col.nfun[-1] * prof[0, -1] + col.dnfun[-1] * prof[1, -1])
    if not flux:
        return
    lam = exp.mu - N - 1
    h = [flux.get(k, 0.0) for k in range(max(flux) + 1)]
    # (1/r) d_theta p' = s v_nu; both sides carry s^-(N+1)/2 r^(lam-1)
    profiles, resonant, _ = neumann_lift(h, lam, exp.m, exp.cone.theta0, n=len(exp.global_atoms[0].profile.x) - 1)
    if resonant:
        exp.resonances.append({"step": N + 1, "lambda": lam})
    new = [GlobalAtom(-(N + 1), N + 1, k, p) for k, p in enumerate(profiles)
           if np.max(np.abs(p.w)) > 0]
    exp.global_atoms.extend(new)
    _add_lift_layer(exp, new)


# -- evaluation -------------------------------------------------------------

def _pw(r, logr, c, k):
    """r^c (log r)^k, zero for k < 0."""
    if k < 0:
        return 0.0
    return r ** c * logr ** k if k else r ** c


def _dpw(r, logr, c, k):
    """d/dr of r^c (log r)^k."""
    return c * _pw(r, logr, c - 1, k) + k * _pw(r, logr, c - 1, k - 1)


def _chi_parts(cone, theta):
    """chi, and the collar mask, at polar angles."""
    nrat = np.sin(cone.theta0 - theta)
    inside = theta >= cone.theta0 - cone.collar_angle
    chi = np.where(inside, cutoff_chi(cone, np.clip(nrat, 0, None)), 0.0)
    return chi, nrat, inside


def _layer(exp, name, build):
    if name not in exp.cache:
        exp.cache[name] = build()
    return exp.cache[name]


def _spherical_fields(exp, r, theta, phi, s, dr=False):
    """Spherical components of U (..., 3), P, and optionally d_r U (phi is the physical azimuth)."""
    sq = np.sqrt(s)
    logr = np.log(r)
    m = exp.m
    ph = phi - exp.rotation
    cm, sm = np.cos(m * ph), np.sin(m * ph)
    P = np.zeros(r.shape, complex)
    G = np.zeros(r.shape + (3,), complex)
    dG = np.zeros(r.shape + (3,), complex) if dr else None
    for a in exp.global_atoms:
        b = exp.mu - a.ro
        c = sq ** a.ta
        psi = a.profile.value(theta)
        P += c * _pw(r, logr, b, a.k) * psi * cm
        if exp.trivial:
            continue
        dpsi = a.profile.dtheta(theta)
        osin = a.profile.over_sin(theta)
        rad = b * _pw(r, logr, b - 1, a.k) + a.k * _pw(r, logr, b - 1, a.k - 1)
        ang = _pw(r, logr, b - 1, a.k)
        G[..., 0] += c * rad * psi * cm
        G[..., 1] += c * ang * dpsi * cm
        G[..., 2] += c * ang * (-m) * osin * sm
        if dr:
            drad = b * _dpw(r, logr, b - 1, a.k) + a.k * _dpw(r, logr, b - 1, a.k - 1)
            dang = _dpw(r, logr, b - 1, a.k)
            dG[..., 0] += c * drad * psi * cm
            dG[..., 1] += c * dang * dpsi * cm
            dG[..., 2] += c * dang * (-m) * osin * sm
    U = -G / s
    dU = -dG / s if dr else None
    if not exp.trivial:
        chi, _, mask = _chi_parts(exp.cone, theta)
        if np.any(mask):
            rr, tt, pp = r[mask], theta[mask], phi[mask]
            lu = exp.layer_u.evaluate(rr, tt, pp, s, rotate=exp.rotation)
            lp = exp.layer_p.evaluate(rr, tt, pp, s, rotate=exp.rotation)
            U[mask] -= chi[mask][:, None] * lu
            P[mask] -= chi[mask] * lp
            if dr:
                dlu = _layer(exp, "layer_u_dr", exp.layer_u.d_r).evaluate(rr, tt, pp, s, rotate=exp.rotation)
                dU[mask] -= chi[mask][:, None] * dlu
    return U, P, dU


def _to_cartesian(comp, theta, phi):
    er, et, ep = spherical_frame(theta, phi)
    return comp[..., 0:1] * er + comp[..., 1:2] * et + comp[..., 2:3] * ep


def evaluate(exp: Expansion, points, s=None, radial_derivative=False):
    """(velocity (..., 3) Cartesian, pressure (...)) of U_N, P_N at Cartesian points.

    With ``radial_derivative`` also returns d_r U (Cartesian), exact per atom.
    """
    s = exp.s if s is None else complex(s)
    pts = np.asarray(points, float)
    r, theta, phi = to_spherical(pts)
    U, P, dU = _spherical_fields(exp, r, theta, phi, s, radial_derivative)
    V = _to_cartesian(U, theta, phi)
    if radial_derivative:
        return V, P, _to_cartesian(dU, theta, phi)
    return V, P


class RadialCut:
    """c(r) = eta(r^2 / rho^2); rho = |s|^-1/2 gives eta_s."""

    def __init__(self, rho):
        self.rho = float(rho)

    def parts(self, r):
        x = (r / self.rho) ** 2
        e0 = cutoff_eta(x)
        e1 = cutoff_eta(x, 1)
        e2 = cutoff_eta(x, 2)
        c1 = e1 * 2 * r / self.rho ** 2
        c2 = e2 * (2 * r / self.rho ** 2) ** 2 + e1 * 2 / self.rho ** 2
        return e0, c1, c2 + 2 * c1 / r


def stokes_data(exp: Expansion, points, s=None, cut: RadialCut = None):
    """Exact data (f, g) = ((s-Delta)u + grad p, -div u) for (u, p) = cut * (U_N, P_N).

    The harmonic global part contributes nothing; the layer part is handled by
    atom differentiation and the product rule for chi(nu/r) and the radial cut.
    Returns (f Cartesian (..., 3), g (...)).
    """
    s = exp.s if s is None else complex(s)
    pts = np.asarray(points, float)
    r, theta, phi = to_spherical(pts)
    Fs = np.zeros(r.shape + (3,), complex)
    D = np.zeros(r.shape, complex)
    cone = exp.cone
    if not exp.trivial:
        chi, nrat, mask = _chi_parts(cone, theta)
        if np.any(mask):
            rr, tt, pp = r[mask], theta[mask], phi[mask]
            ev = lambda F: F.evaluate(rr, tt, pp, s, rotate=exp.rotation)  # noqa: E731
            fl, gl = _layer(exp, "stokes_layer", lambda: stokes_apply(exp.layer_u, exp.layer_p))
            lu = ev(exp.layer_u)
            lp = ev(exp.layer_p)
            dth = ev(_layer(exp, "layer_u_dth", exp.layer_u.d_theta))
            dlu = ev(_layer(exp, "layer_u_div", lambda: div(exp.layer_u)))
            n = np.clip(nrat[mask], 0, None)
            dn = -np.cos(cone.theta0 - tt)
            c0 = chi[mask]
            c1 = cutoff_chi(cone, n, 1)
            c2 = cutoff_chi(cone, n, 2)
            # grad chi = c1 n' / r e_theta ; Delta chi = (c2 n'^2 + c1 (n'' + cot n')) / r^2
            gchi = c1 * dn / rr
            lapchi = (c2 * dn ** 2 + c1 * (-n + np.cos(tt) / np.sin(tt) * dn)) / rr ** 2
            # (e_theta . grad) V = (1/r)[(d_th V_r - V_th), (d_th V_th + V_r), d_th V_ph]
            eth = np.stack([dth[:, 0] - lu[:, 1], dth[:, 1] + lu[:, 0], dth[:, 2]], axis=-1) / rr[:, None]
            force = -c0[:, None] * ev(fl) + 2 * gchi[:, None] * eth + lapchi[:, None] * lu
            force[:, 1] -= lp * gchi
            Fs[mask] = force
            D[mask] = -c0 * dlu - lu[:, 1] * gchi
    if cut is None:
        return _to_cartesian(Fs, theta, phi), -D
    e0, e1, lap = cut.parts(r)
    U, P, dU = _spherical_fields(exp, r, theta, phi, s, dr=True)
    f = e0[..., None] * Fs - 2 * e1[..., None] * dU - lap[..., None] * U
    f[..., 0] += P * e1
    g = -(e0 * D + e1 * U[..., 0])
    return _to_cartesian(f, theta, phi), g


def evaluate_core_residual(exp: Expansion, points, s=None):
    """Atom-calculus residual (f, g) at points in the collar core (chi = 1); Cartesian f."""
    s = exp.s if s is None else complex(s)
    f, g = core_residual(exp)
    pts = np.asarray(points, float)
    r, theta, phi = to_spherical(pts)
    fs = f.evaluate(r, theta, phi, s, rotate=exp.rotation)
    gs = g.evaluate(r, theta, phi, s, rotate=exp.rotation)
    er, et, ep = spherical_frame(theta, phi)
    F = fs[..., 0:1] * er + fs[..., 1:2] * et + fs[..., 2:3] * ep
    return F, gs


def _stencil_derivs(func, pts, h):
    """Fourth-order centered first and second derivatives of a Cartesian field."""
    eye = np.eye(3)
    vals = {}

    def ev(shift):
        key = tuple(shift)
        if key not in vals:
            vals[key] = func(pts + h * np.asarray(shift, float))
        return vals[key]

    f0 = ev((0, 0, 0))
    first, second = [], []
    for i in range(3):
        e = eye[i]
        fp1, fm1, fp2, fm2 = ev(tuple(e)), ev(tuple(-e)), ev(tuple(2 * e)), ev(tuple(-2 * e))
        first.append((-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h))
        second.append((-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h * h))
    return f0, first, second


def residual_fd(exp: Expansion, points, s=None, h=None, cut_eta=False):
    """((s-Delta)U + grad P, div U) by fourth-order Cartesian differences.

    With ``cut_eta`` the fields are first multiplied by eta_s.  Returns
    (force (..., 3), divergence (...), flags) where flags marks points whose
    stencil leaves the cone (the fields are smoothly extended there).
    """
    s = exp.s if s is None else complex(s)
    pts = np.asarray(points, float)
    if h is None:
        h = 2e-3 / math.sqrt(abs(s))
    mod = abs(s)

    def fields(x):
        V, P = evaluate(exp, x, s)
        if cut_eta:
            eta = cutoff_eta(mod * np.sum(x * x, axis=-1))
            V = V * eta[..., None]
            P = P * eta
        return np.concatenate([V, P[..., None]], axis=-1)

    f0, d1, d2 = _stencil_derivs(fields, pts, h)
    V0 = f0[..., :3]
    lapV = d2[0][..., :3] + d2[1][..., :3] + d2[2][..., :3]
    gradP = np.stack([d1[i][..., 3] for i in range(3)], axis=-1)
    force = s * V0 - lapV + gradP
    divergence = d1[0][..., 0] + d1[1][..., 1] + d1[2][..., 2]
    r, theta, _ = to_spherical(pts)
    flags = theta + 2 * h / r > exp.cone.theta0
    return force, divergence, flags


def residual(exp: Expansion, grid_r, grid_theta, phi=0.0, s=None, h=None):
    """Residual table on an (r, theta) lattice at fixed azimuth.

    Returns rows (r, theta, |force|, |div|, envelope) with envelope
    |s|^-(N+1)/2 r^(mu-N-2) (1 + |log r|^k).
    """
    s = exp.s if s is None else complex(s)
    R, T = np.meshgrid(np.asarray(grid_r, float), np.asarray(grid_theta, float), indexing="ij")
    pts = np.stack([R * np.sin(T) * np.cos(phi), R * np.sin(T) * np.sin(phi), R * np.cos(T)], axis=-1)
    F, G, flags = residual_fd(exp, pts, s, h)
    N = exp.depth
    env = abs(s) ** (-(N + 1) / 2) * R ** (exp.mu - N - 2) * (1 + np.abs(np.log(R)) ** exp.realized_log)
    return {"r": R, "theta": T, "force": np.linalg.norm(F, axis=-1), "div": np.abs(G),
            "envelope": env, "stencil_outside": flags}


def collar_exp_integral(cone: ConeSpec, r, s, n=200):
    """Integral over the cap of chi(nu/r)^2 exp(-r nu_ang Re sqrt s) (nu_ang = nu / r)."""
    from .geometry import cap_rule
    th, wt, _, _ = cap_rule(cone.theta0, n, 1, graded=True)
    nrat = np.sin(cone.theta0 - th)
    chi = np.where(cone.theta0 - th <= np.pi / 2, cutoff_chi(cone, nrat), 0.0)
    return float(2 * np.pi * np.sum(wt * chi ** 2 * np.exp(-r * r * nrat * np.sqrt(complex(s)).real)))


def weighted_norm_bounds(exp: Expansion, beta, s_values=(1.0, 4.0, 16.0), n_r=12, n_theta=10, panels=10,
                    fd_extent=200.0):
    """Weighted norms of the eta_s-cut residual and their |s|-scaling.

    force: ||(s-Delta)(eta_s U) + grad(eta_s P)||^2 in V_beta^0;
    divergence: |s| ||div(eta_s U)||^2 in V_beta^0.  Both scale like
    |s|^(-beta-mu-1/2) in the log-free case; the fitted exponents over
    ``s_values`` are reported.  Differences are used for |s|^(1/2) r <= fd_extent;
    beyond, where eta_s = 1 and the collar ring is exponentially small, the
    exact atom residual chi f is integrated on a tail rule.
    """
    mu, N = exp.mu, exp.depth
    if not beta + mu < N + 1:
        raise DomainError("force bound needs beta + mu < N + 1", beta=beta, mu=mu, N=N)
    div_ok = beta + mu < N + 0.5
    if exp.trivial:
        return {"s_abs": list(s_values), "force": [0.0] * len(s_values), "divergence": [0.0] * len(s_values),
                "exponent": None, "divergence_exponent": None, "predicted": -beta - mu - 0.5}
    phase = exp.s / abs(exp.s)
    th_nodes, th_w = _graded_theta(exp.cone.theta0, n_theta, panels)
    f_sym, g_sym = core_residual(exp)
    force, divs = [], []
    for sm in s_values:
        s = phase * sm
        r0 = math.sqrt(0.5 / sm)
        r1 = fd_extent / math.sqrt(sm)
        from .geometry import radial_rule, tail_rule
        ra, wa = radial_rule(r0, r1, n_r, "geometric", panels=14)
        rb, wb = tail_rule(r1, n_r, panels=8)
        tot_f = tot_g = 0.0
        for az, wphi in _azimuths(exp.m):
            for rn, rw, exact in ((ra, wa, False), (rb, wb, True)):
                R, T = np.meshgrid(rn, th_nodes, indexing="ij")
                ph = az + exp.rotation
                pts = np.stack([R * np.sin(T) * np.cos(ph), R * np.sin(T) * np.sin(ph), R * np.cos(T)], axis=-1)
                if exact:
                    F, G = _chi_atom_residual(exp, f_sym, g_sym, pts, s)
                else:
                    F, G, _ = residual_fd(exp, pts, s, cut_eta=True)
                w = (rw * rn ** 2)[:, None] * th_w[None, :] * wphi
                tot_f += np.sum(w * R ** (2 * beta) * np.sum(np.abs(F) ** 2, axis=-1))
                tot_g += np.sum(w * R ** (2 * beta) * np.abs(G) ** 2)
        force.append(float(tot_f))
        divs.append(float(sm * tot_g))
    ls = np.log(np.asarray(s_values))
    slope_f = float(np.polyfit(ls, np.log(force), 1)[0])
    slope_g = float(np.polyfit(ls, np.log(divs), 1)[0]) if div_ok and min(divs) > 0 else None
    return {"s_abs": list(s_values), "force": force, "divergence": divs, "exponent": slope_f,
            "divergence_exponent": slope_g, "predicted": -beta - mu - 0.5}


def _chi_atom_residual(exp, f, g, pts, s):
    """chi(nu/r) (f, g) from the atom residual, Cartesian force; zero outside the collar."""
    r, theta, phi = to_spherical(pts)
    nrat = np.sin(exp.cone.theta0 - theta)
    chi = np.where(theta >= exp.cone.theta0 - np.pi / 2, cutoff_chi(exp.cone, np.clip(nrat, 0, None)), 0.0)
    F = np.zeros(r.shape + (3,), complex)
    G = np.zeros(r.shape, complex)
    inside = chi > 0
    if np.any(inside):
        rr, tt, pp = r[inside], theta[inside], phi[inside]
        fs = f.evaluate(rr, tt, pp, s, rotate=exp.rotation)
        gs = g.evaluate(rr, tt, pp, s, rotate=exp.rotation)
        er, et, ep = spherical_frame(tt, pp)
        F[inside] = chi[inside][:, None] * (fs[:, 0:1] * er + fs[:, 1:2] * et + fs[:, 2:3] * ep)
        G[inside] = chi[inside] * gs
    return F, G


def _azimuths(m):
    """Azimuth samples and weights integrating cos^2 / sin^2 patterns exactly."""
    if m == 0:
        return [(0.0, 2 * np.pi)]
    n = 4 * m
    return [(2 * np.pi * q / n, 2 * np.pi / n) for q in range(n)]


def _graded_theta(theta0, n, panels):
    from .geometry import cap_rule
    th, wt, _, _ = cap_rule(theta0, n, 1, graded=True, panels=panels, ratio=0.3)
    return th, wt


def spectral_terms(exp: Expansion, point):
    """Exact s-dependence of U_N, P_N at one Cartesian point.

    Returns (U terms, P terms), each a list of (q, D, coeff) with
    U(x, s) = sum coeff s^q exp(-D sqrt s) (coeff a Cartesian 3-vector) and
    likewise for P.  Equal (q, D) are merged.
    """
    x = np.asarray(point, float).reshape(1, 3)
    r, theta, phi = to_spherical(x)
    r0, th0 = float(r[0]), float(theta[0])
    er, et, ep = (v[0] for v in spherical_frame(theta, phi))
    frame = np.stack([er, et, ep])
    m = exp.m
    ph = float(phi[0]) - exp.rotation
    cm, sm = math.cos(m * ph), math.sin(m * ph)
    logr = math.log(r0)
    uterms, pterms = {}, {}

    def put(store, q, D, c):
        key = (round(2 * q) / 2, round(D, 15))
        store[key] = store.get(key, 0) + c

    for a in exp.global_atoms:
        b = exp.mu - a.ro
        psi = float(a.profile.value(np.array([th0]))[0])
        put(pterms, a.ta / 2, 0.0, _pw(r0, logr, b, a.k) * psi * cm)
        if exp.trivial:
            continue
        dpsi = float(a.profile.dtheta(np.array([th0]))[0])
        osin = float(a.profile.over_sin(np.array([th0]))[0])
        rad = b * _pw(r0, logr, b - 1, a.k) + a.k * _pw(r0, logr, b - 1, a.k - 1)
        ang = _pw(r0, logr, b - 1, a.k)
        g = np.array([rad * psi * cm, ang * dpsi * cm, ang * (-m) * osin * sm]) @ frame
        put(uterms, a.ta / 2 - 1, 0.0, -g)
    if not exp.trivial:
        chi, nrat, mask = _chi_parts(exp.cone, theta)
        if mask[0] and chi[0] > 0:
            nu = r0 * float(nrat[0])
            col = exp.layer_u.collar
            for F, store, vec in ((exp.layer_u, uterms, True), (exp.layer_p, pterms, False)):
                for (ta, ro, k, i, e), prof in F.data.items():
                    c = -chi[0] * r0 ** (exp.mu - ro) * logr ** k * nu ** i
                    v = np.asarray(col.interp(prof, np.array([th0])))[..., 0]
                    if vec:
                        put(store, (ta + i) / 2, e * nu, c * (np.array([v[0] * cm, v[1] * cm, v[2] * sm]) @ frame))
                    else:
                        put(store, (ta + i) / 2, e * nu, c * v * cm)
    to_list = lambda d: [(q, D, c) for (q, D), c in sorted(d.items())]  # noqa: E731
    return to_list(uterms), to_list(pterms)
