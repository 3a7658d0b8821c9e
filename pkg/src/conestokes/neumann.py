"""Neumann Laplace-Beltrami spectrum on a circular cap.

Separation phi = Theta(theta) cos(m phi) reduces the eigenproblem to the
associated Legendre equation

    Theta'' + cot(theta) Theta' + (M - m^2 / sin^2 theta) Theta = 0,

with Theta regular at the pole and Theta'(theta0) = 0.  Eigenvalues are
reported as degrees mu >= 0 with M = mu (mu + 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eig
from scipy.optimize import brentq, minimize_scalar

from .cheb import cheb_interval
from .errors import DomainError, NumericError
from .geometry import ConeSpec

THETA_START = 1e-4
SERIES_TERMS = 6
SCAN_STEP = 0.05
SCAN_OFFSET = 1.3e-3
GROUP_TOL = 1e-8
RTOL = 1e-12

__all__ = [
    "AngularProfile", "NeumannEigenvalue", "legendre_shoot", "neumann_spectrum",
    "negative_branch", "beltrami_residual", "beltrami_oracle", "mu_from_beltrami",
]


def mu_from_beltrami(M):
    return 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * np.asarray(M, float)))


def _series_start(mu, m, th):
    """Regular solution sin^m(th) 2F1(m-mu, m+mu+1; m+1; sin^2(th/2)) and its derivative."""
    mu = np.asarray(mu, float)
    a, b, c = m - mu, m + mu + 1.0, m + 1.0
    z = math.sin(th / 2) ** 2
    term = np.ones_like(mu)
    F = np.ones_like(mu)
    dF = np.zeros_like(mu)
    for n in range(SERIES_TERMS - 1):
        term = term * (a + n) * (b + n) / ((c + n) * (n + 1))
        F = F + term * z ** (n + 1)
        dF = dF + term * (n + 1) * z ** n
    s, co = math.sin(th), math.cos(th)
    val = s ** m * F
    der = m * s ** max(m - 1, 0) * co * F + s ** m * dF * (s / 2) if m > 0 else dF * (s / 2)
    return val, der


def _rhs(M, m):
    def f(t, y):
        y = y.reshape(2, -1)
        st = math.sin(t)
        return np.concatenate([y[1], -math.cos(t) / st * y[1] - (M - m * m / st ** 2) * y[0]])
    return f


def _integrate(mu, m, theta0, dense=False):
    mu = np.atleast_1d(np.asarray(mu, float))
    val, der = _series_start(mu, m, THETA_START)
    scale = THETA_START ** m
    y0 = np.concatenate([val / scale, der / scale])
    sol = solve_ivp(_rhs(mu * (mu + 1), m), (THETA_START, theta0), y0, method="DOP853",
                    rtol=RTOL, atol=1e-14, dense_output=dense)
    if not sol.success:
        raise NumericError("Legendre shooting failed", message=sol.message, m=m, theta0=theta0)
    return sol, scale


def legendre_shoot(mu, m, theta0):
    """Value and theta-derivative at theta0 of the pole-regular solution.

    Normalization: Theta(theta) ~ sin^m(theta) near the pole.  ``mu`` may be an
    array; the scan evaluates all brackets in a single integration.
    """
    if np.any(np.asarray(mu) < -0.5):
        raise DomainError("legendre_shoot requires mu >= -1/2")
    if m < 0:
        raise DomainError("azimuthal order must be >= 0", m=m)
    sol, scale = _integrate(mu, m, theta0)
    y = sol.y[:, -1].reshape(2, -1) * scale
    if np.ndim(mu) == 0:
        return float(y[0, 0]), float(y[1, 0])
    return y[0], y[1]


@dataclass(frozen=True)
class AngularProfile:
    """phi(theta, varphi) = norm * Theta(theta) * trig(m varphi), trig = cos or sin.

    Theta is held as values on Chebyshev-Lobatto nodes in theta over [0, theta0].
    """

    m: int
    parity: str
    theta0: float
    nodes: np.ndarray
    values: np.ndarray
    norm: float
    mu: float

    def _cheb(self):
        return np.polynomial.chebyshev.Chebyshev.fit(self.nodes, self.values, len(self.nodes) - 1,
                                                     domain=[0.0, self.theta0])

    def theta_factor(self, theta, order=0):
        """norm * d^order Theta / d theta^order."""
        c = self._cached()
        poly = c if order == 0 else c.deriv(order)
        return self.norm * poly(np.asarray(theta, float))

    def _cached(self):
        c = self.__dict__.get("_poly")
        if c is None:
            c = self._cheb()
            object.__setattr__(self, "_poly", c)
        return c

    def trig(self, phi, order=0):
        """d^order/dphi^order of the azimuthal factor."""
        phi = np.asarray(phi, float)
        mp = self.m * phi
        base = [np.cos, lambda a: -np.sin(a), lambda a: -np.cos(a), np.sin]
        start = 0 if self.parity == "cos" else 3
        return self.m ** order * base[(start + order) % 4](mp)

    def __call__(self, theta, phi):
        return self.theta_factor(theta) * self.trig(phi)

    @property
    def samples(self):
        return self.nodes, self.norm * self.values

    def to_dict(self):
        return {"m": self.m, "parity": self.parity, "theta0": self.theta0, "mu": self.mu,
                "norm": self.norm, "nodes": self.nodes.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["m"], d["parity"], d["theta0"], np.asarray(d["nodes"]), np.asarray(d["values"]),
                   d["norm"], d["mu"])


def build_profile(mu, m, theta0, parity="cos", n_nodes=64):
    sol, scale = _integrate(mu, m, theta0, dense=True)
    nodes, _ = cheb_interval(n_nodes, 0.0, theta0)
    vals = np.empty_like(nodes)
    small = nodes < THETA_START
    for i in np.nonzero(small)[0]:
        vals[i] = _series_start(np.array([mu]), m, nodes[i])[0][0] if nodes[i] > 0 else float(m == 0)
    vals[~small] = sol.sol(nodes[~small])[0] * scale
    if m > 0:
        vals[0] = 0.0
    poly = np.polynomial.chebyshev.Chebyshev.fit(nodes, vals, n_nodes, domain=[0.0, theta0])
    sq = (poly * poly * np.polynomial.chebyshev.Chebyshev.fit(nodes, np.sin(nodes), n_nodes,
                                                               domain=[0.0, theta0])).integ()
    integral = float(sq(theta0) - sq(0.0))
    az = 2 * math.pi if m == 0 else math.pi
    norm = 1.0 / math.sqrt(integral * az)
    return AngularProfile(m, parity, float(theta0), nodes, vals, norm, float(mu))


@dataclass(frozen=True)
class NeumannEigenvalue:
    index: int
    mu: float
    multiplicity: int
    m_list: tuple
    profiles: tuple = field(default=(), repr=False, compare=False)
    flags: tuple = ()

    @property
    def beltrami_eigenvalue(self):
        return self.mu * (self.mu + 1.0)

    def profile(self, k):
        """k-th (1-based) orthonormal eigenfunction."""
        return self.profiles[k - 1]

    def to_dict(self):
        return {"j": self.index, "mu": self.mu, "M": self.beltrami_eigenvalue,
                "sigma": self.multiplicity, "m_list": list(self.m_list)}


def negative_branch(e: NeumannEigenvalue) -> NeumannEigenvalue:
    if e.index < 1:
        raise DomainError("negative_branch expects j >= 1", j=e.index)
    return NeumannEigenvalue(-e.index, -1.0 - e.mu, e.multiplicity, e.m_list, e.profiles, e.flags)


def _roots_for_order(m, theta0, mu_max, step):
    grid = np.arange(SCAN_OFFSET, mu_max + step + SCAN_OFFSET, step)
    _, d = legendre_shoot(grid, m, theta0)
    found, flags = [], []
    if m == 0:
        found.append(0.0)

    def dfun(x):
        return legendre_shoot(x, m, theta0)[1]

    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        if d[i] == 0.0:
            found.append(a)
        elif d[i] * d[i + 1] < 0:
            found.append(brentq(dfun, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
        elif (0 < i and d[i - 1] * d[i] > 0 and abs(d[i]) < abs(d[i - 1])
              and abs(d[i]) <= abs(d[i + 1])):
            # local dip in |D| without a sign change: possible double root
            res = minimize_scalar(lambda x: abs(dfun(x)), bounds=(grid[i - 1], b), method="bounded",
                                  options={"xatol": 1e-12})
            fine = np.linspace(grid[i - 1], b, 41)
            fd = np.array([dfun(x) for x in fine])
            sub = [brentq(dfun, fine[q], fine[q + 1], xtol=1e-14) for q in range(40) if fd[q] * fd[q + 1] < 0]
            if sub:
                found.extend(sub)
                flags.append(("close-pair", m, tuple(sub)))
            elif abs(res.fun) < 1e-8 * max(1.0, np.max(np.abs(d))):
                found.append(res.x)
                flags.append(("tangency", m, res.x))
    roots = sorted(set(round(x, 15) for x in found if x <= mu_max + 1e-9))
    return roots, flags


def neumann_spectrum(cone: ConeSpec, mu_max, m_max=None, step=SCAN_STEP, n_nodes=64):
    """All Neumann degrees 0 <= mu <= mu_max for orders m <= m_max, with multiplicity.

    Each m >= 1 root contributes a cos and a sin eigenfunction.  Returns a list
    of ``NeumannEigenvalue`` sorted by mu, indexed j = 1, 2, ...
    """
    if not mu_max > 0:
        raise DomainError("mu_max must be positive", mu_max=mu_max)
    if m_max is None:
        m_max = int(math.ceil(mu_max)) + 2
    if m_max < 0:
        raise DomainError("m_max must be >= 0", m_max=m_max)
    entries, flags = [], []
    for m in range(m_max + 1):
        roots, fl = _roots_for_order(m, cone.theta0, mu_max, step)
        flags.extend(fl)
        entries.extend((mu, m) for mu in roots)
    entries.sort()
    groups = []
    for mu, m in entries:
        if groups and abs(mu - groups[-1][0][0]) < GROUP_TOL:
            groups[-1].append((mu, m))
        else:
            groups.append([(mu, m)])
    out = []
    for j, grp in enumerate(groups, start=1):
        mu = grp[0][0] if grp[0][1] == 0 else float(np.mean([g[0] for g in grp]))
        profs = []
        for mu_i, m in grp:
            profs.append(build_profile(mu_i, m, cone.theta0, "cos", n_nodes))
            if m > 0:
                profs.append(build_profile(mu_i, m, cone.theta0, "sin", n_nodes))
        ms = tuple(g[1] for g in grp)
        fl = tuple(f for f in flags if f[1] in ms)
        out.append(NeumannEigenvalue(j, float(mu), len(profs), ms, tuple(profs), fl))
    return out


def beltrami_oracle(theta0, m, n=80):
    """Beltrami eigenvalues M for order m by Chebyshev collocation in x = cos(theta).

    With Theta = (1-x^2)^{m/2} w the equation becomes
    (1-x^2) w'' - 2(m+1) x w' + (M - m(m+1)) w = 0, regular at x = 1;
    the Neumann condition at x0 = cos(theta0) reads -m x0 w + (1-x0^2) w' = 0.
    """
    x0 = math.cos(theta0)
    x, D = cheb_interval(n, x0, 1.0)
    D2 = D @ D
    A = np.diag(1 - x ** 2) @ D2 - 2 * (m + 1) * np.diag(x) @ D - m * (m + 1) * np.eye(n + 1)
    B = np.eye(n + 1)
    A[0] = -m * x0 * np.eye(n + 1)[0] + (1 - x0 ** 2) * D[0]
    B[0] = 0.0
    ev = eig(A, B, right=False)
    ev = ev[np.isfinite(ev)]
    M = np.sort((-ev).real[np.abs(ev.imag) < 1e-8 * np.maximum(1, np.abs(ev))])
    return M


def beltrami_residual(e: NeumannEigenvalue, profile: AngularProfile, n_nodes=400, theta_min_frac=0.5):
    """Max of |-delta phi - M phi| by second-order differences and |d phi / dn| at theta0.

    The azimuthal part is exact.  Nodes with theta < theta_min_frac * theta0 are
    excluded: the polar metric amplifies truncation error like h^2 / theta.
    """
    if n_nodes < 200:
        raise DomainError("beltrami_residual needs >= 200 nodes", n_nodes=n_nodes)
    th = np.linspace(0.0, profile.theta0, n_nodes)
    h = th[1] - th[0]
    T = profile.theta_factor(th)
    i = np.arange(1, n_nodes - 1)
    d1 = (T[i + 1] - T[i - 1]) / (2 * h)
    d2 = (T[i + 1] - 2 * T[i] + T[i - 1]) / h ** 2
    t = th[i]
    m = profile.m
    lap = d2 + np.cos(t) / np.sin(t) * d1 - m * m / np.sin(t) ** 2 * T[i]
    res = np.abs(-lap - e.beltrami_eigenvalue * T[i])
    keep = t >= theta_min_frac * profile.theta0
    flux = abs((3 * T[-1] - 4 * T[-2] + T[-3]) / (2 * h))
    return float(res[keep].max()), float(flux)
