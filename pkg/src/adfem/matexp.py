"""Symmetric 2x2 algebra and the matrix exponential.

Everything here is written once over a generic scalar: entries may be floats,
ndarrays (a batch of matrices) or :class:`~adfem.tangent.Tangent` values, and
derivatives propagate through every step, including the Pade solve and the
repeated squaring.  This stands in for source transformation: the same code
path yields values and tangents.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import bernoulli, factorial

from . import tangent as tg

PADE_COEFFS = (1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280)
# removable singularities of f and g switch to their series for s below this
SERIES_SWITCH = 1.0
SINGULAR_DET = 1e-300


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Sym2:
    """Symmetric matrix ``[[m11, m12], [m12, m22]]``."""

    m11: object
    m12: object
    m22: object

    @property
    def a11(self):
        return self.m11

    @property
    def a12(self):
        return self.m12

    @property
    def a21(self):
        return self.m12

    @property
    def a22(self):
        return self.m22

    def __add__(self, other):
        return Sym2(self.m11 + other.m11, self.m12 + other.m12, self.m22 + other.m22)

    def __sub__(self, other):
        return Sym2(self.m11 - other.m11, self.m12 - other.m12, self.m22 - other.m22)

    def __neg__(self):
        return Sym2(-self.m11, -self.m12, -self.m22)

    def __mul__(self, s):
        return Sym2(self.m11 * s, self.m12 * s, self.m22 * s)

    __rmul__ = __mul__

    def to_array(self):
        """Values as an array of shape ``batch + (2, 2)``."""
        a, b, c = (np.asarray(tg.value_of(x), dtype=float) for x in (self.m11, self.m12, self.m22))
        a, b, c = np.broadcast_arrays(a, b, c)
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    @classmethod
    def from_array(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1])

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 1.0)


@dataclass(frozen=True)
class Mat2:
    """General 2x2 matrix."""

    a11: object
    a12: object
    a21: object
    a22: object

    def __add__(self, o):
        return Mat2(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)

    def __sub__(self, o):
        return Mat2(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)

    def __mul__(self, s):
        return Mat2(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)

    __rmul__ = __mul__

    def to_array(self):
        a = np.broadcast_arrays(*(np.asarray(tg.value_of(x), dtype=float)
                                  for x in (self.a11, self.a12, self.a21, self.a22)))
        return np.stack([np.stack(a[:2], -1), np.stack(a[2:], -1)], -2)

    def sym(self):
        return Sym2(self.a11, 0.5 * (self.a12 + self.a21), self.a22)


def as_mat2(m):
    if isinstance(m, Mat2):
        return m
    return Mat2(m.a11, m.a12, m.a21, m.a22)


def where2(cond, a, b):
    a, b = as_mat2(a), as_mat2(b)
    return Mat2(*(tg.where(cond, x, y) for x, y in
                  zip((a.a11, a.a12, a.a21, a.a22), (b.a11, b.a12, b.a21, b.a22))))


def gamma(m):
    """Half the difference of the diagonal entries."""
    return (m.a11 - m.a22) * 0.5


def matmul2(a, b):
    return Mat2(
        a.a11 * b.a11 + a.a12 * b.a21,
        a.a11 * b.a12 + a.a12 * b.a22,
        a.a21 * b.a11 + a.a22 * b.a21,
        a.a21 * b.a12 + a.a22 * b.a22,
    )


def det2(a):
    return a.a11 * a.a22 - a.a12 * a.a21


def matinv2(a):
    det = det2(a)
    if np.any(np.abs(tg.value_of(det)) <= SINGULAR_DET):
        raise SingularMatrixError("2x2 matrix is singular")
    inv = 1.0 / det
    return Mat2(a.a22 * inv, -a.a12 * inv, -a.a21 * inv, a.a11 * inv)


def infnorm2(a):
    """Maximum absolute row sum."""
    return tg.branch_max(tg.abs_(a.a11) + tg.abs_(a.a12), tg.abs_(a.a21) + tg.abs_(a.a22))


# --------------------------------------------------------------------------
# EXPM


class SmallNormPolicy(enum.Enum):
    NAIVE_IDENTITY = "naive_identity"   # early return of 1: zero derivative
    TAYLOR_FIX = "taylor_fix"           # early return of 1 + M
    NO_RETURN = "no_return"             # j = 0, run the Pade step anyway


@dataclass(frozen=True)
class ExpmConfig:
    norm_floor: float = 1e-12
    small_norm_policy: SmallNormPolicy = SmallNormPolicy.TAYLOR_FIX
    # extra halvings on top of ceil(log2 ||M||); 0 is the textbook rule
    scaling_margin: int = 1
    pade: tuple = PADE_COEFFS

    def __post_init__(self):
        object.__setattr__(self, "small_norm_policy", SmallNormPolicy(self.small_norm_policy))
        if tuple(self.pade) != PADE_COEFFS:
            raise ValueError("pade coefficients are fixed to the (6,6) approximant")
        if self.scaling_margin < 0:
            raise ValueError("scaling_margin must be >= 0")


DEFAULT_EXPM = ExpmConfig()


def ceil_log2(x):
    """Exact ``ceil(log2(x))`` for positive x; powers of two map to their exponent."""
    mant, ex = np.frexp(np.asarray(x, dtype=float))
    return np.where(mant == 0.5, ex - 1, ex)


def scaling_exponent(norm, cfg=DEFAULT_EXPM):
    norm = np.asarray(norm, dtype=float)
    small = norm < cfg.norm_floor
    safe = np.where(small, 1.0, norm)
    j = np.maximum(1, ceil_log2(safe) + cfg.scaling_margin)
    return np.where(small, 0, j).astype(int), small


def expm(m, cfg=DEFAULT_EXPM):
    """Scaling/squaring exponential with a (6,6) Pade approximant.

    Works entrywise on batches; the scaling exponent is chosen per matrix and
    the squarings are masked accordingly.
    """
    vals = Sym2(tg.value_of(m.a11), tg.value_of(m.a12), tg.value_of(m.a22))
    norm = np.maximum(np.abs(vals.m11) + np.abs(vals.m12), np.abs(vals.m12) + np.abs(vals.m22))
    j, small = scaling_exponent(norm, cfg)
    any_small = bool(np.any(small))

    x = as_mat2(m) * np.ldexp(1.0, -j)
    c1, c2, c3, c4, c5, c6 = cfg.pade
    x2 = matmul2(x, x)
    x3 = matmul2(x2, x)
    x4 = matmul2(x2, x2)
    x5 = matmul2(x4, x)
    x6 = matmul2(x3, x3)
    ev = x2 * c2 + x4 * c4 + x6 * c6
    ev = Mat2(ev.a11 + 1.0, ev.a12, ev.a21, ev.a22 + 1.0)
    od = x * c1 + x3 * c3 + x5 * c5
    k = matmul2(matinv2(ev - od), ev + od)

    jmax = int(np.max(j))
    for i in range(1, jmax + 1):
        k2 = matmul2(k, k)
        mask = i <= j
        k = k2 if np.all(mask) else where2(mask, k2, k)

    res = k.sym()
    if any_small:
        policy = cfg.small_norm_policy
        if policy is SmallNormPolicy.NAIVE_IDENTITY:
            res = where2(small, Sym2.identity(), res).sym()
        elif policy is SmallNormPolicy.TAYLOR_FIX:
            eye_plus = Sym2(m.a11 + 1.0, m.a12, m.a22 + 1.0)
            res = where2(small, eye_plus, res).sym()
    return res


# --------------------------------------------------------------------------
# removable singularities


def _f_series_coeffs(nterms):
    # f(s) = sum_k B_2k 4^k s^(2k-2) / (2k)!,  k >= 1
    b = bernoulli(2 * nterms)
    k = np.arange(1, nterms + 1)
    return b[2 * k] * 4.0**k / factorial(2 * k, exact=False)


def _g_series_coeffs(nterms):
    k = np.arange(nterms)
    return 1.0 / factorial(2 * k + 3, exact=False)


F_SERIES = _f_series_coeffs(20)
G_SERIES = _g_series_coeffs(12)


def _horner(coeffs, x):
    acc = coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * x + c
    return acc


def _split_s2(s2, switch):
    big = np.asarray(tg.value_of(s2) >= switch * switch)
    # evaluate the closed form only where it is used
    s = tg.sqrt(tg.where(big, s2, 1.0))
    return big, s


def g_func(m, switch=SERIES_SWITCH):
    """(sinh s - s) / s^3 with s^2 = gamma(M)^2 + M12^2."""
    gm = gamma(m)
    s2 = gm * gm + m.a12 * m.a12
    big, s = _split_s2(s2, switch)
    closed = (tg.sinh(s) - s) / (s * s * s)
    series = _horner(G_SERIES, s2)
    return tg.where(big, closed, series)


def f_func(psi, switch=SERIES_SWITCH):
    """(s + 2s / (exp(2s) - 1) - 1) / s^2 with s^2 = gamma(Psi)^2 + Psi12^2."""
    gm = gamma(psi)
    s2 = gm * gm + psi.a12 * psi.a12
    big, s = _split_s2(s2, switch)
    closed = (s + 2.0 * s / tg.expm1(2.0 * s) - 1.0) / (s * s)
    series = _horner(F_SERIES, s2)
    return tg.where(big, closed, series)


def f_closed(s):
    """Closed form of f as a function of s (no series); for diagnostics."""
    return (s + 2.0 * s / np.expm1(2.0 * s) - 1.0) / (s * s)


def g_closed(s):
    return (np.sinh(s) - s) / (s * s * s)


def f_series(s):
    return _horner(F_SERIES, np.asarray(s) ** 2)


def g_series(s):
    return _horner(G_SERIES, np.asarray(s) ** 2)


# --------------------------------------------------------------------------
# derivative oracle and the spectral variant


_HALF_CFG = ExpmConfig(small_norm_policy=SmallNormPolicy.TAYLOR_FIX)


def dexpm_closed(m, dm):
    """Directional derivative of exp at ``m`` in direction ``dm`` (closed form)."""
    half = as_mat2(expm(m * 0.5, _HALF_CFG))
    gm = gamma(m)
    coupling = (gm * dm.a12 - m.a12 * gamma(dm)) * g_func(m)
    inner = Mat2(dm.a11 - m.a12 * coupling, dm.a12 + gm * coupling,
                 dm.a12 + gm * coupling, dm.a22 + m.a12 * coupling)
    return matmul2(matmul2(half, inner), half).sym()


def expm_spectral(m):
    """exp(M) = sum_i exp(lambda_i) P_i via the textbook eigen-decomposition.

    Eigenvalues come from the characteristic polynomial and the square root
    is left unguarded.  Values are fine; tangents near a double eigenvalue
    are not, which is the whole point of this variant.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        return _spectral(m)


def _spectral(m):
    half_tr = (m.a11 + m.a22) * 0.5
    disc = half_tr * half_tr - (m.a11 * m.a22 - m.a12 * m.a12)
    r = tg.sqrt(tg.branch_max(disc, 0.0), strict=False)
    lam1 = half_tr + r
    lam2 = half_tr - r
    # eigenvector for lam1 from whichever row of (M - lam1) is better scaled
    wa0, wa1 = m.a12, lam1 - m.a11
    wb0, wb1 = lam1 - m.a22, m.a12
    na = wa0 * wa0 + wa1 * wa1
    nb = wb0 * wb0 + wb1 * wb1
    use_a = np.asarray(tg.value_of(na) >= tg.value_of(nb))
    w0 = tg.where(use_a, wa0, wb0)
    w1 = tg.where(use_a, wa1, wb1)
    n2 = tg.where(use_a, na, nb)
    flat = np.asarray(tg.value_of(n2) == 0)
    # M is a multiple of the identity: any basis works
    w0 = tg.where(flat, 1.0, w0)
    w1 = tg.where(flat, 0.0, w1)
    norm = tg.sqrt(tg.where(flat, 1.0, n2), strict=False)
    v0, v1 = w0 / norm, w1 / norm
    e1, e2 = tg.exp(lam1), tg.exp(lam2)
    p11, p12, p22 = v0 * v0, v0 * v1, v1 * v1
    return Sym2(e1 * p11 + e2 * p22, e1 * p12 - e2 * p12, e1 * p22 + e2 * p11)


def tangent_of(fn, m, dm):
    """Push one direction ``dm`` through ``fn`` and return the tangent matrix."""
    def lift1(v, d):
        v, d = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(d, dtype=float))
        return tg.Tangent(v, d[..., None])

    mt = Sym2(lift1(m.a11, dm.a11), lift1(m.a12, dm.a12), lift1(m.a22, dm.a22))
    out = fn(mt)
    return Sym2(*(np.asarray(tg.deriv_of(x, 1))[..., 0] for x in (out.m11, out.m12, out.m22)))
