"""Circular-cone geometry, cutoffs, tensor quadrature and weighted norms.

The cone is K = {x : angle(x, e_z) < theta0}.  Points are described in
spherical coordinates (r, theta, phi) about the z axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "ConeSpec", "SpatialPoint", "QuadratureGrid", "WeightedNormSpec",
    "distance_to_boundary", "grad_nu", "split_tangential", "smoothstep",
    "cutoff_chi", "cutoff_eta", "cutoff_eta_s", "to_cartesian", "to_spherical",
    "spherical_frame", "cap_rule", "radial_rule", "tail_rule", "cone_grid",
    "weighted_norm", "norm_rows_csv",
]


def _default_layer(theta0):
    return 0.5 * math.sin(min(theta0, math.pi - theta0))


@dataclass(frozen=True)
class ConeSpec:
    """Circular cone of half-angle ``theta0`` with collar fraction ``delta_c``."""

    theta0: float
    delta_c: float = None

    def __post_init__(self):
        th = float(self.theta0)
        if not (0.0 < th < math.pi):
            raise DomainError("half_angle must lie in (0, pi)", theta0=th)
        object.__setattr__(self, "theta0", th)
        dc = _default_layer(th) if self.delta_c is None else float(self.delta_c)
        limit = math.sin(min(th, math.pi - th))
        if not (0.0 < dc <= 1.0) or dc > limit * (1 + 1e-14):
            raise DomainError("layer_width must lie in (0, min(1, sin(min(theta0, pi-theta0)))]",
                              delta_c=dc, limit=limit)
        object.__setattr__(self, "delta_c", dc)

    @property
    def cap_area(self):
        return 2.0 * math.pi * (1.0 - math.cos(self.theta0))

    @property
    def collar_angle(self):
        """Angular width of the collar nu < delta_c r measured from the boundary."""
        return math.asin(self.delta_c)

    def to_dict(self):
        return {"theta0": self.theta0, "delta_c": self.delta_c, "cap_area": self.cap_area}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["theta0"], d.get("delta_c"))


@dataclass(frozen=True)
class SpatialPoint:
    r: float
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError("radial distance must be positive", r=self.r)

    @property
    def cartesian(self):
        return to_cartesian(self.r, self.theta, self.phi)

    def check_inside(self, cone: ConeSpec):
        if not (0.0 <= self.theta < cone.theta0):
            raise DomainError("point outside the cone", theta=self.theta, theta0=cone.theta0)
        return self


def to_cartesian(r, theta, phi):
    r, theta, phi = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float),
                                        np.asarray(phi, float))
    st = np.sin(theta)
    return np.stack([r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)], axis=-1)


def to_spherical(x):
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1)
    rho = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(rho, x[..., 2])
    phi = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
    return r, theta, phi


def spherical_frame(theta, phi):
    """Unit vectors (e_r, e_theta, e_phi) as arrays of shape (..., 3)."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    er = np.stack([st * cp, st * sp, ct], axis=-1)
    et = np.stack([ct * cp, ct * sp, -st], axis=-1)
    ep = np.stack([-sp, cp, np.zeros_like(st)], axis=-1)
    return er, et, ep


def distance_to_boundary(cone: ConeSpec, r, theta):
    """Euclidean distance to the lateral surface; accepts arrays."""
    r = np.asarray(r, float)
    theta = np.asarray(theta, float)
    if np.any(theta > cone.theta0 + 1e-15) or np.any(theta < 0) or np.any(r < 0):
        raise DomainError("point outside the closed cone")
    gap = cone.theta0 - theta
    return np.where(gap <= np.pi / 2, r * np.sin(np.minimum(gap, np.pi / 2)), r)


def _in_layer(cone, theta):
    return np.sin(np.clip(cone.theta0 - np.asarray(theta, float), 0, np.pi / 2)) < cone.delta_c


def grad_nu(cone: ConeSpec, theta, phi, check=True):
    """Gradient of nu (Cartesian, shape (..., 3)) on the layer."""
    theta = np.asarray(theta, float)
    if check and not np.all(_in_layer(cone, theta)):
        raise DomainError("point outside the layer nu < delta_c r")
    er, et, _ = spherical_frame(theta, phi)
    gap = cone.theta0 - theta
    n, dn = np.sin(gap), -np.cos(gap)
    return n[..., None] * er + dn[..., None] * et


def split_tangential(cone: ConeSpec, p: SpatialPoint, v):
    """Return (v_nu, v_tau) with v = v_nu grad(nu) + v_tau."""
    g = grad_nu(cone, p.theta, p.phi)
    v = np.asarray(v)
    vn = np.dot(v, g)
    vt = v - vn * g
    return vn, vt


def smoothstep(xi):
    """Quintic C^2 step: 0 for xi <= 0, 1 for xi >= 1."""
    xi = np.clip(np.asarray(xi, float), 0.0, 1.0)
    return xi ** 3 * (10 - 15 * xi + 6 * xi ** 2)


def smoothstep_deriv(xi, order=1):
    inside = (np.asarray(xi) > 0) & (np.asarray(xi) < 1)
    xi = np.clip(np.asarray(xi, float), 0.0, 1.0)
    if order == 1:
        d = 30 * xi ** 2 * (1 - xi) ** 2
    elif order == 2:
        d = 60 * xi * (1 - xi) * (1 - 2 * xi)
    else:
        raise ValueError("order must be 1 or 2")
    return np.where(inside, d, 0.0)


def cutoff_chi(cone: ConeSpec, t, order=0):
    """chi(t): 1 on [0, delta/2], 0 on [delta, inf); ``order`` derivatives in t."""
    h = cone.delta_c / 2
    xi = (np.asarray(t, float) - h) / h
    if order == 0:
        return 1.0 - smoothstep(xi)
    return -smoothstep_deriv(xi, order) / h ** order


def cutoff_eta(rho, order=0):
    """eta(rho): 0 for rho < 1/2, 1 for rho > 1."""
    xi = (np.asarray(rho, float) - 0.5) / 0.5
    if order == 0:
        return smoothstep(xi)
    return smoothstep_deriv(xi, order) / 0.5 ** order


def cutoff_eta_s(s, r):
    """eta_s(x) = eta(|s| r^2)."""
    return cutoff_eta(abs(complex(s)) * np.asarray(r, float) ** 2)


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor grid r x theta x phi.  ``wtheta`` already contains sin(theta)."""

    r: np.ndarray
    wr: np.ndarray
    theta: np.ndarray
    wtheta: np.ndarray
    phi: np.ndarray
    wphi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for w in (self.wr, self.wtheta, self.wphi):
            if np.any(np.asarray(w) <= 0):
                raise DomainError("quadrature weights must be positive")

    @property
    def counts(self):
        return len(self.r), len(self.theta), len(self.phi)

    def mesh(self):
        return np.meshgrid(self.r, self.theta, self.phi, indexing="ij")

    def points(self):
        R, T, P = self.mesh()
        return to_cartesian(R, T, P)

    def volume_weights(self):
        return (self.wr * self.r ** 2)[:, None, None] * self.wtheta[None, :, None] * self.wphi[None, None, :]

    def cap_weights(self):
        return self.wtheta[:, None] * self.wphi[None, :]

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("r", "wr", "theta", "wtheta", "phi", "wphi")} | {"meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], float) for k in ("r", "wr", "theta", "wtheta", "phi", "wphi")), meta=d.get("meta", {}))


def cap_rule(theta0, n_theta, n_phi=1, graded=False, panels=6, ratio=0.35):
    """Angular rule on the cap; weights include sin(theta).

    Default: Gauss-Legendre in cos(theta) (exact for polynomials in cos theta).
    ``graded``: composite Gauss in theta with panels shrinking geometrically
    toward theta0, for boundary-layer integrands.
    """
    if not graded:
        x, w = _gl(n_theta, math.cos(theta0), 1.0)
        th = np.arccos(x)
        order = np.argsort(th)
        th, wt = th[order], w[order]
    else:
        edges = [theta0]
        width = theta0
        for _ in range(panels - 1):
            width *= ratio
            edges.append(theta0 - width)
        edges.append(0.0)
        edges = sorted(set(edges))
        th_l, w_l = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            t, w = _gl(n_theta, a, b)
            th_l.append(t)
            w_l.append(w * np.sin(t))
        th, wt = np.concatenate(th_l), np.concatenate(w_l)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    wphi = np.full(n_phi, 2 * np.pi / n_phi)
    return th, wt, phi, wphi


def radial_rule(r_min, r_max, n, kind="gauss", panels=8):
    if not 0 < r_min < r_max:
        raise DomainError("need 0 < r_min < r_max", r_min=r_min, r_max=r_max)
    if kind == "gauss":
        return _gl(n, r_min, r_max)
    if kind == "geometric":
        edges = np.geomspace(r_min, r_max, panels + 1)
        parts = [_gl(n, a, b) for a, b in zip(edges[:-1], edges[1:])]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    raise ValueError(f"unknown radial rule {kind!r}")


def tail_rule(r0, n, panels=6):
    """Rule for [r0, inf) through r = r0/t, graded in t toward 0."""
    edges = np.concatenate([[0.0], np.geomspace(1e-6, 1.0, panels)])
    ts, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        t, w = _gl(n, a, b)
        ts.append(t)
        ws.append(w)
    t, w = np.concatenate(ts), np.concatenate(ws)
    r = r0 / t
    return r[::-1], (w * r0 / t ** 2)[::-1]


def cone_grid(cone: ConeSpec, r_min, r_max, n_r=24, n_theta=24, n_phi=16, radial="geometric",
              graded=False, panels=8):
    r, wr = radial_rule(r_min, r_max, n_r, radial, panels)
    th, wt, ph, wp = cap_rule(cone.theta0, n_theta, n_phi, graded)
    return QuadratureGrid(r, wr, th, wt, ph, wp, meta={"theta0": cone.theta0})


@dataclass(frozen=True)
class WeightedNormSpec:
    tag: str
    order: int
    beta: float

    def __post_init__(self):
        if self.tag not in ("V", "E", "X", "dualX"):
            raise DomainError("space tag must be one of V, E, X, dualX", tag=self.tag)
        if self.order not in (0, 1, 2):
            raise DomainError("order must be 0, 1 or 2", order=self.order)
        if self.tag == "X" and self.order != 1:
            raise DomainError("tag X requires order 1")


def _derivatives(field, pts, h, order):
    """Map multi-index (tuple of axes) -> samples, by centered differences."""
    f0 = np.asarray(field(pts))
    out = {(): f0}
    if order == 0:
        return out
    eye = np.eye(3)
    hh = h[..., None]

    def ev(shift):
        return np.asarray(field(pts + hh * shift))

    def expand(a):
        return a.reshape(a.shape + (1,) * (f0.ndim - a.ndim))

    hs = expand(h)
    for i in range(3):
        out[(i,)] = (ev(eye[i]) - ev(-eye[i])) / (2 * hs)
    if order >= 2:
        for i, j in combinations_with_replacement(range(3), 2):
            if i == j:
                out[(i, i)] = (ev(eye[i]) - 2 * f0 + ev(-eye[i])) / hs ** 2
            else:
                out[(i, j)] = (ev(eye[i] + eye[j]) - ev(eye[i] - eye[j])
                               - ev(-eye[i] + eye[j]) + ev(-eye[i] - eye[j])) / (4 * hs ** 2)
    return out


def _sq(a, base_ndim):
    a = np.abs(a) ** 2
    while a.ndim > base_ndim:
        a = a.sum(axis=-1)
    return a


def weighted_norm(spec: WeightedNormSpec, grid: QuadratureGrid, field, h_rel=1e-3):
    """Discrete weighted norm of a field given as a callable on Cartesian points.

    ``field`` maps an array (..., 3) to (...) or (..., k).  Derivatives are taken
    by centered differences with step ``h_rel * r``.
    """
    pts = grid.points()
    R = grid.mesh()[0]
    w = grid.volume_weights()
    beta, l = spec.beta, spec.order

    def v_sq(b, order):
        ders = _derivatives(field, pts, h_rel * R, order)
        tot = 0.0
        for alpha, val in ders.items():
            if not np.all(np.isfinite(val)):
                raise DataError("non-finite field samples")
            tot += np.sum(w * R ** (2 * (b - order + len(alpha))) * _sq(val, R.ndim))
        return tot

    if spec.tag == "V":
        val = v_sq(beta, l)
    elif spec.tag == "E":
        ders = _derivatives(field, pts, h_rel * R, l)
        val = 0.0
        for alpha, d in ders.items():
            if not np.all(np.isfinite(d)):
                raise DataError("non-finite field samples")
            val += np.sum(w * (R ** (2 * beta) + R ** (2 * (beta - l + len(alpha)))) * _sq(d, R.ndim))
    elif spec.tag == "X":
        val = v_sq(beta, 1) + v_sq(beta + 1, 0)
    else:
        val = v_sq(beta + 1, 0)
    return math.sqrt(val)


def norm_rows_csv(rows):
    """CSV text for (tag, l, beta, value) rows."""
    lines = ["tag,l,beta,value"]
    for tag, l, beta, value in rows:
        lines.append(f"{tag},{l},{beta:.17g},{value:.17g}")
    return "\n".join(lines) + "\n"
