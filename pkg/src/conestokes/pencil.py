"""Stokes pencil on a circular cap and the weight classification of the
Stokes resolvent operator in weighted spaces.

Pencil discretization
---------------------
A homogeneous solution u = r^lam U(omega), p = r^(lam-1) P(omega) of
-Delta u + grad p = 0, div u = 0, u = 0 on the lateral surface is split into
Cartesian components u_z, u_+ = u_x + i u_y, u_- = u_x - i u_y and p.  For an
azimuthal order m these carry exp(i k phi) with k = m, m+1, m-1, m.  Each
scalar is written as sin^|k|(theta) w(x), x = cos(theta), which makes the
collocation in x on [cos(theta0), 1] regular at the pole without any pole
condition.  The result is a quadratic matrix polynomial
T(lam) = T0 + lam T1 + lam^2 T2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import eig, lu_factor, lu_solve, svd

from .cheb import cheb_interval
from .errors import DomainError, NumericError
from .geometry import ConeSpec

__all__ = [
    "StokesPencilData", "WeightVerdict", "PencilRoot", "PencilSpectrum",
    "pencil_matrices", "halfspace_shortcut", "discretized_pencil_spectrum",
    "pencil_data_from_spectrum", "companion_eigenvalues", "classify_weight",
    "regularity_shift", "STATUSES", "SHIFT_RESULTS",
]

ISO = "IsoOntoE×X"
ISO_ZERO_MEAN = "IsoOntoE×X̃"
NOT_FREDHOLM = "NotFredholm"
KERNEL = "KernelNontrivial"
COKERNEL = "CokernelNontrivial"
COKERNEL_CONST = "CokernelConstantsOnly"
OUTSIDE = "OutsideTheory"
STATUSES = (ISO, ISO_ZERO_MEAN, NOT_FREDHOLM, KERNEL, COKERNEL, COKERNEL_CONST, OUTSIDE)

TRANSFERS = "Transfers"
TRANSFERS_CONST = "TransfersUpToConstantPressure"
NOT_COVERED = "NotCovered"
SHIFT_RESULTS = (TRANSFERS, TRANSFERS_CONST, NOT_COVERED)


@dataclass(frozen=True)
class StokesPencilData:
    lambda1: float
    lambda1_simple: bool
    re_lambda2: float | None = None
    source: str = "user-supplied"
    d: int = 0

    def __post_init__(self):
        if not 0.0 < self.lambda1 <= 1.0 + 1e-12:
            raise DomainError("lambda1 must lie in (0, 1]", lambda1=self.lambda1)
        if self.re_lambda2 is not None and not self.re_lambda2 > self.lambda1:
            raise DomainError("Re lambda2 must exceed lambda1", lambda1=self.lambda1,
                              re_lambda2=self.re_lambda2)
        if self.d not in (0, 1):
            raise DomainError("log flag d must be 0 or 1", d=self.d)
        if self.d == 1 and not (abs(self.lambda1 - 1.0) < 1e-12):
            raise DomainError("d = 1 requires lambda1 = 1")

    @property
    def special(self):
        return self.lambda1_simple and abs(self.lambda1 - 1.0) < 1e-12

    def with_re_lambda2(self, value):
        return StokesPencilData(self.lambda1, self.lambda1_simple, value, self.source, self.d)

    def to_dict(self):
        return {"lambda1": self.lambda1, "simple": self.lambda1_simple,
                "re_lambda2": self.re_lambda2, "source": self.source, "d": self.d}


def halfspace_shortcut(cone: ConeSpec):
    """lambda1 = 1 when the cap lies in a closed half-sphere, else None.

    The eigenvalue is simple for theta0 < pi/2.  At theta0 = pi/2 the shear
    flows z e_x and z e_y add two eigenvectors, so it is reported as not simple.
    """
    if cone.theta0 > math.pi / 2 + 1e-12:
        return None
    simple = cone.theta0 < math.pi / 2 - 1e-12
    return StokesPencilData(1.0, simple, None, "half-space-theorem", 0)


# -- discretization ---------------------------------------------------------

def _grad_ops(k, x, D):
    """Derivative operators on sin^|k| w as (A0, A1): op = A0 + a A1, a = radial power."""
    K = abs(k)
    n = len(x)
    I = np.eye(n)
    X = np.diag(x)
    Q = np.diag(1 - x ** 2)
    P = np.diag(1 + x ** 2)
    dz = (-K * X + Q @ D, X)
    dp = (-k * I - X @ D, I) if k >= 0 else (K * P - X @ Q @ D, Q)
    dm = (-K * I - X @ D, I) if k <= 0 else (k * P - X @ Q @ D, Q)
    lap = Q @ D @ D - 2 * (K + 1) * X @ D - K * (K + 1) * I
    return dz, dp, dm, lap


def pencil_matrices(theta0, m, n=32):
    """(T0, T1, T2) for azimuthal order m with n+1 collocation points."""
    if m < 0:
        raise DomainError("azimuthal order must be >= 0", m=m)
    x0 = math.cos(theta0)
    x, D = cheb_interval(n, x0, 1.0)
    N = n + 1
    I = np.eye(N)
    T = [np.zeros((4 * N, 4 * N)) for _ in range(3)]

    def put(row, col, A0, A1, shift):
        r = slice(row * N, (row + 1) * N)
        c = slice(col * N, (col + 1) * N)
        T[0][r, c] += A0 + shift * A1
        T[1][r, c] += A1

    dzq, dpq, dmq, _ = _grad_ops(m, x, D)
    for row, k, dq in ((0, m, dzq), (1, m + 1, dpq), (2, m - 1, dmq)):
        lap = _grad_ops(k, x, D)[3]
        r = slice(row * N, (row + 1) * N)
        T[0][r, r] -= lap
        T[1][r, r] -= I
        T[2][r, r] -= I
        put(row, 3, dq[0], dq[1], -1.0)
    dz = _grad_ops(m, x, D)[0]
    dm_plus = _grad_ops(m + 1, x, D)[2]
    dp_minus = _grad_ops(m - 1, x, D)[1]
    put(3, 0, dz[0], dz[1], 0.0)
    put(3, 1, 0.5 * dm_plus[0], 0.5 * dm_plus[1], 0.0)
    put(3, 2, 0.5 * dp_minus[0], 0.5 * dp_minus[1], 0.0)
    for row in range(3):
        i = row * N
        for t in T:
            t[i, :] = 0.0
        T[0][i, i] = 1.0
    return tuple(T)


def companion_eigenvalues(T):
    """All finite eigenvalues of the quadratic pencil by linearization (oracle)."""
    T0, T1, T2 = T
    n = T0.shape[0]
    Z = np.zeros_like(T0)
    I = np.eye(n)
    A = np.block([[Z, I], [-T0, -T1]])
    B = np.block([[I, Z], [Z, T2]])
    ev = eig(A, B, right=False)
    return ev[np.isfinite(ev)]


class _Pencil:
    def __init__(self, T):
        self.T = T

    def at(self, lam):
        T0, T1, T2 = self.T
        return T0 + lam * T1 + lam * lam * T2, T1 + 2 * lam * T2

    def logder(self, lam):
        A, dA = self.at(lam)
        lu = lu_factor(A.astype(complex), check_finite=False)
        return np.trace(lu_solve(lu, dA.astype(complex), check_finite=False))

    def nullity(self, lam, p=1, gap=1e-4):
        """Geometric multiplicity at a root of algebraic multiplicity p: the
        number of the p smallest singular values that sit a factor ``gap``
        below singular value p+1 counted from the bottom."""
        A, _ = self.at(lam)
        sv = svd(A.astype(complex), compute_uv=False)
        ref = sv[-(p + 1)]
        return max(1, int(np.sum(sv[-p:] < gap * ref)))


def _box_count(pen, box, tols=(3e-3, 1e-6)):
    """Winding number of det T around the box: (1 / 2 pi i) of the contour
    integral of tr(T^-1 T'), by adaptive Gauss-Kronrod on each edge.

    Returns (count, resolved).  A box whose integral is not near an integer
    even at the tighter tolerance is unresolved.
    """
    a, b, c, d = box
    corners = [complex(a, c), complex(b, c), complex(b, d), complex(a, d)]
    val = 0.0
    for tol in tols:
        total = 0.0
        for i in range(4):
            z0, z1 = corners[i], corners[(i + 1) % 4]

            def f(u, z0=z0, z1=z1):
                v = pen.logder(z0 + u * (z1 - z0)) * (z1 - z0)
                return np.array([v.real, v.imag])

            res, _ = quad_vec(f, 0.0, 1.0, epsabs=tol, epsrel=0.0, norm="max", limit=400)
            total += complex(res[0], res[1])
        val = total / (2j * math.pi)
        if abs(val.real - round(val.real)) < 0.02 and abs(val.imag) < 0.02:
            return int(round(val.real)), True
    return int(round(val.real)), False


@dataclass
class PencilRoot:
    value: complex
    m: int
    algebraic: int
    geometric: int
    jordan: bool = False

    @property
    def weight(self):
        """Multiplicity over all azimuthal modes (orders +-m)."""
        return self.algebraic * (1 if self.m == 0 else 2)


@dataclass
class PencilSpectrum:
    roots: list
    undecided: list = field(default_factory=list)
    mirror_error: float = 0.0
    strip: tuple = (0.0, 0.0)

    def values(self):
        return [r.value for r in self.roots]

    def to_dict(self):
        return {"roots": [{"re": r.value.real, "im": r.value.imag, "m": r.m, "algebraic": r.algebraic,
                           "geometric": r.geometric, "multiplicity": r.weight} for r in self.roots],
                "undecided": [list(b) for b in self.undecided], "mirror_error": self.mirror_error,
                "strip": list(self.strip)}


def _newton(pen, z, p, tol=1e-13, maxit=60):
    """Newton on log det T with multiplicity p: z <- z - p / tr(T^-1 T').

    Near a multiple root the step stagnates at rounding level (about
    eps^(1/p) for a Jordan block); the iterate is accepted once steps stop
    decreasing below ``accept``.
    """
    accept = 1e-9 if p == 1 else 1e-5
    last = math.inf
    for _ in range(maxit):
        g = pen.logder(z)
        if not np.isfinite(g) or g == 0:
            return z, last < accept * max(1.0, abs(z))
        step = p / g
        if abs(step) >= last and last < accept * max(1.0, abs(z)):
            return z, True
        z = z - step
        last = abs(step)
        if last < tol * max(1.0, abs(z)):
            return z, True
    return z, last < accept * max(1.0, abs(z))


def _search(pen, box, count, min_size, depth, out, undecided):
    a, b, c, d = box
    size = max(b - a, d - c)
    if count == 0:
        return
    if count == 1 or size < min_size:
        z, ok = _newton(pen, complex((a + b) / 2, (c + d) / 2), count)
        pad = 1e-9
        if ok and a - pad <= z.real <= b + pad and c - pad <= z.imag <= d + pad:
            out.append((z, count))
            return
        if size < min_size or depth > 40:
            undecided.append(box)
            return
    # split the longer side off-center; retry other cuts if a half is unresolved
    for frac in (0.4917, 0.4213, 0.5731):
        if b - a >= d - c:
            cut = a + frac * (b - a)
            halves = [(a, cut, c, d), (cut, b, c, d)]
        else:
            cut = c + frac * (d - c)
            halves = [(a, b, c, cut), (a, b, cut, d)]
        counts = [_box_count(pen, h) for h in halves]
        if all(ok for _, ok in counts) and sum(cnt for cnt, _ in counts) == count:
            break
    for h, (cnt, ok) in zip(halves, counts):
        if not ok:
            undecided.append(h)
            continue
        _search(pen, h, cnt, min_size, depth + 1, out, undecided)


def discretized_pencil_spectrum(cone: ConeSpec, strip=(-2.0, 1.0), m_max=None, resolution=24,
                                im_max=3.0, refine=12):
    """Pencil eigenvalues with a <= Re lam <= b, |Im lam| <= im_max.

    Roots are located per azimuthal order by the argument principle on boxes,
    polished by Newton's method on log det T, and kept only if they persist on
    a grid with ``refine`` more points.
    """
    a, b = map(float, strip)
    if b > 4.0:
        raise DomainError("strip upper end must be <= 4", b=b)
    if resolution > 400:
        raise DomainError("resolution must be <= 400 nodes", resolution=resolution)
    if m_max is None:
        m_max = int(math.ceil(max(abs(a), abs(b)))) + 2
    # box padded past the strip so that no edge runs close to an eigenvalue on
    # the strip boundary; roots in the padding are dropped afterwards
    box0 = (a - 0.231, b + 0.273, -im_max - 0.117, im_max + 0.129)
    roots, undecided = [], []
    for m in range(m_max + 1):
        pen = _Pencil(pencil_matrices(cone.theta0, m, resolution))
        fine = _Pencil(pencil_matrices(cone.theta0, m, resolution + refine))
        cnt, ok = _box_count(pen, box0)
        if not ok:
            undecided.append(box0)
            continue
        found = []
        _search(pen, box0, cnt, 1e-3, 0, found, undecided)
        for z, p in found:
            zf, okf = _newton(fine, z, p)
            if not okf or abs(zf - z) > (1e-6 if p == 1 else 1e-4) * (1 + abs(z)):
                continue
            if not (a - 1e-9 <= zf.real <= b + 1e-9):
                continue
            if abs(zf.imag) < (1e-9 if p == 1 else 1e-5):
                zf = complex(zf.real, 0.0)
            geo = fine.nullity(zf, p)
            jordan = p > geo
            roots.append(PencilRoot(zf, m, p, geo, jordan))
    roots.sort(key=lambda r: (round(r.value.real, 8), r.value.imag, r.m))
    err = _mirror_error([r.value for r in roots], a, b)
    return PencilSpectrum(roots, undecided, err, (a, b))


def _mirror_error(vals, a, b):
    worst = 0.0
    for z in vals:
        mz = -1.0 - z
        if a + 1e-6 < mz.real < b - 1e-6:
            worst = max(worst, min(abs(mz - w) for w in vals))
    return worst


def pencil_data_from_spectrum(spec: PencilSpectrum, source="discretized"):
    """lambda1 (smallest positive real part), its simplicity and Re lambda2."""
    pos = [r for r in spec.roots if r.value.real > 1e-9]
    if not pos:
        raise NumericError("no eigenvalue with positive real part in the strip", strip=spec.strip)
    l1 = min(r.value.real for r in pos)
    at1 = [r for r in pos if abs(r.value - l1) < 1e-6]
    mult = sum(r.weight for r in at1)
    simple = mult == 1 and all(r.geometric == 1 for r in at1)
    jordan = any(r.jordan for r in at1)
    higher = sorted(r.value.real for r in pos if r.value.real > l1 + 1e-6)
    re2 = higher[0] if higher else None
    if l1 > 1.0 + 1e-6:
        raise NumericError("lambda = 1 was not located; spectrum incomplete", lambda1=l1)
    l1 = 1.0 if abs(l1 - 1.0) < 1e-6 else l1
    return StokesPencilData(l1, simple, re2, source, 1 if (jordan and l1 == 1.0) else 0)


# -- weight classification --------------------------------------------------

@dataclass(frozen=True)
class WeightVerdict:
    beta: float
    status: str
    citation: str

    def to_dict(self):
        return {"beta": self.beta, "status": self.status, "citation": self.citation}


def _hits(val, targets, tol=1e-12):
    return any(t is not None and abs(val - t) < tol for t in targets)


def classify_weight(beta, pencil: StokesPencilData, mu2):
    """Solvability verdict for the Stokes resolvent operator at weight beta.

    Critical lines are checked first: the operator fails to be Fredholm when
    1/2 - beta is a Stokes pencil eigenvalue (real part) or -1/2 - beta is a
    Neumann eigenvalue (mu = 0, -1, mu2, -1 - mu2).
    """
    beta = float(beta)
    l1 = pencil.lambda1
    l2 = pencil.re_lambda2
    if _hits(0.5 - beta, [l1, -1 - l1] + ([l2, -1 - l2] if l2 is not None else [])):
        return WeightVerdict(beta, NOT_FREDHOLM, "critical-line")
    if _hits(-0.5 - beta, [0.0, -1.0, mu2, -1.0 - mu2]):
        return WeightVerdict(beta, NOT_FREDHOLM, "critical-neumann")
    if not pencil.special:
        if 0.5 - l1 < beta < 0.5:
            return WeightVerdict(beta, ISO, "iso-generic-low")
        if 0.5 < beta < min(mu2 + 0.5, l1 + 1.5):
            return WeightVerdict(beta, ISO_ZERO_MEAN, "iso-generic-zero-mean")
        return WeightVerdict(beta, OUTSIDE, "uncovered")
    if l2 is None:
        raise DomainError("the case lambda1 = 1 simple needs Re lambda2")
    if max(-mu2 - 0.5, 0.5 - l2) < beta < 0.5:
        return WeightVerdict(beta, ISO, "iso-simple-low")
    if 0.5 < beta < min(mu2 + 0.5, 2.5):
        return WeightVerdict(beta, ISO_ZERO_MEAN, "iso-simple-zero-mean")
    if mu2 > 2 and 2.5 < beta < min(mu2 + 0.5, l2 + 1.5):
        return WeightVerdict(beta, ISO, "iso-simple-high")
    if mu2 > l2 - 1 and max(-mu2 - 0.5, -l2 - 1.5) < beta < -l2 + 0.5:
        return WeightVerdict(beta, COKERNEL, "adjoint-kernel-below")
    if mu2 < l2 - 1 and -l2 + 0.5 < beta < -mu2 - 0.5:
        return WeightVerdict(beta, KERNEL, "kernel-below")
    if mu2 < l2 + 1 and mu2 + 0.5 < beta < min(mu2 + 2.5, l2 + 1.5):
        return WeightVerdict(beta, COKERNEL, "adjoint-kernel-above")
    if mu2 > l2 + 1 and l2 + 1.5 < beta < mu2 + 0.5:
        return WeightVerdict(beta, KERNEL, "kernel-above")
    return WeightVerdict(beta, OUTSIDE, "uncovered")


def regularity_shift(beta, gamma, pencil: StokesPencilData, mu2, g_zero_mean=False):
    """Whether regularity of a solution transfers from weight beta to weight gamma."""
    lo, hi = min(beta, gamma), max(beta, gamma)
    if pencil.special and pencil.re_lambda2 is not None:
        l2 = pencil.re_lambda2
        inside = 0.5 - min(l2, mu2 + 1) < lo and hi < 0.5 + min(mu2, l2 + 1)
        excluded = any(abs(v - e) < 1e-12 for v in (beta, gamma) for e in (-0.5, 0.5, 2.5))
        if inside and not excluded:
            if hi > 0.5 and lo < 2.5 and not g_zero_mean:
                return NOT_COVERED
            return TRANSFERS if (beta + 0.5) * (gamma + 0.5) > 0 else TRANSFERS_CONST
    l1 = pencil.lambda1
    inside = 0.5 - l1 < lo and hi < 0.5 + min(mu2, l1 + 1)
    excluded = abs(beta - 0.5) < 1e-12 or abs(gamma - 0.5) < 1e-12
    if inside and not excluded:
        if hi > 0.5 and not g_zero_mean:
            return NOT_COVERED
        return TRANSFERS
    return NOT_COVERED
