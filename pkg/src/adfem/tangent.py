"""Vector forward-mode tangent numbers.

A :class:`Tangent` carries a value together with ``p`` directional
derivatives.  Values may be numpy arrays, in which case every entry is an
independent scalar (typically one per quadrature point of one element); the
derivatives then live in an array of shape ``value.shape + (p,)``.

Plain floats and ndarrays mix freely with tangents and are treated as
constants.  Operations on constants never touch derivative storage, which is
what makes block-wise seeding cheaper than full identity seeding.
"""
from __future__ import annotations

import string
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Argument outside the real domain of an elementary function."""


class DivisionByZeroError(DomainError, ZeroDivisionError):
    """Division by an operand whose value is exactly zero."""


class DerivativeSingularityError(ArithmeticError):
    """Derivative is infinite at the evaluation point (e.g. sqrt at 0)."""


class DirectionMismatchError(ValueError):
    """Tangents with different direction counts were combined."""


# --------------------------------------------------------------------------
# evaluation context (nonsmooth-point diagnostics)


@dataclass
class EvalContext:
    """Per-evaluation diagnostics.

    ``nonsmooth`` counts scalar entries evaluated exactly at a kink of
    ``abs``/``branch_max``/``branch_min``.
    """

    nonsmooth: int = 0
    sites: list = field(default_factory=list)


_active_context: ContextVar[EvalContext | None] = ContextVar("adfem_eval_context", default=None)


@contextmanager
def evaluation_context():
    """Collect nonsmooth-point counts for everything evaluated in the block."""
    ctx = EvalContext()
    token = _active_context.set(ctx)
    try:
        yield ctx
    finally:
        _active_context.reset(token)


def _flag_nonsmooth(count, site):
    ctx = _active_context.get()
    if ctx is not None and count:
        ctx.nonsmooth += int(count)
        ctx.sites.append(site)


# --------------------------------------------------------------------------
# the tangent type


def _new(value, deriv):
    t = object.__new__(Tangent)
    t.value = value
    t.deriv = deriv
    return t


def _col(x):
    # constant factor broadcast against a deriv array (direction axis last)
    if np.ndim(x) == 0:
        return x
    return np.asarray(x)[..., None]


def _fit(deriv, value):
    shape = np.shape(value)
    if deriv.shape[:-1] == shape:
        return deriv
    return np.broadcast_to(deriv, shape + deriv.shape[-1:])


def _check(a, b):
    if a.deriv.shape[-1] != b.deriv.shape[-1]:
        raise DirectionMismatchError(
            f"direction counts differ: {a.deriv.shape[-1]} vs {b.deriv.shape[-1]}"
        )


def _deriv_index(idx):
    if not isinstance(idx, tuple):
        idx = (idx,)
    return idx + (slice(None),)


class Tangent:
    """Scalar (or batch of scalars) with ``p`` simultaneous derivatives."""

    __slots__ = ("value", "deriv")
    # make numpy hand mixed expressions back to the reflected operators
    __array_ufunc__ = None

    def __init__(self, value, deriv):
        value = np.asarray(value, dtype=float)
        deriv = np.asarray(deriv, dtype=float)
        if deriv.ndim != value.ndim + 1 or deriv.shape[:-1] != value.shape:
            raise ValueError(
                f"deriv shape {deriv.shape} does not match value shape {value.shape} + (p,)"
            )
        if value.ndim == 0:
            value = value[()]
        self.value = value
        self.deriv = deriv

    @classmethod
    def constant(cls, value, p):
        value = np.asarray(value, dtype=float)
        return cls(value, np.zeros(value.shape + (p,)))

    @property
    def p(self):
        return self.deriv.shape[-1]

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __len__(self):
        return len(self.value)

    def __getitem__(self, idx):
        return _new(self.value[idx], self.deriv[_deriv_index(idx)])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"Tangent({self.value!r}; {self.deriv!r})"

    # arithmetic ----------------------------------------------------------

    def __neg__(self):
        return _new(-self.value, -self.deriv)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Tangent):
            _check(self, other)
            return _new(self.value + other.value, self.deriv + other.deriv)
        v = self.value + other
        return _new(v, _fit(self.deriv, v))

    def __radd__(self, other):
        v = other + self.value
        return _new(v, _fit(self.deriv, v))

    def __sub__(self, other):
        if isinstance(other, Tangent):
            _check(self, other)
            return _new(self.value - other.value, self.deriv - other.deriv)
        v = self.value - other
        return _new(v, _fit(self.deriv, v))

    def __rsub__(self, other):
        v = other - self.value
        return _new(v, _fit(-self.deriv, v))

    def __mul__(self, other):
        if isinstance(other, Tangent):
            _check(self, other)
            return _new(
                self.value * other.value,
                _col(self.value) * other.deriv + self.deriv * _col(other.value),
            )
        v = self.value * other
        return _new(v, _fit(self.deriv * _col(other), v))

    def __rmul__(self, other):
        v = other * self.value
        return _new(v, _fit(_col(other) * self.deriv, v))

    def __truediv__(self, other):
        if isinstance(other, Tangent):
            _check(self, other)
            if np.any(other.value == 0):
                raise DivisionByZeroError("tangent division by a zero value")
            v = self.value / other.value
            return _new(v, (self.deriv - _col(v) * other.deriv) / _col(other.value))
        if np.any(np.asarray(other) == 0):
            raise DivisionByZeroError("tangent division by zero")
        v = self.value / other
        return _new(v, _fit(self.deriv / _col(other), v))

    def __rtruediv__(self, other):
        if np.any(self.value == 0):
            raise DivisionByZeroError("division by a tangent with zero value")
        v = other / self.value
        return _new(v, _fit(-_col(v / self.value) * self.deriv, v))

    def __pow__(self, exponent):
        if isinstance(exponent, Tangent):
            return exp(exponent * log(self))
        if exponent == 0:
            return _new(np.ones_like(self.value) + 0.0, np.zeros_like(self.deriv))
        v = self.value**exponent
        return _new(v, _col(exponent * self.value ** (exponent - 1)) * self.deriv)

    def __abs__(self):
        return abs_(self)

    # comparisons act on values only; they drive control flow
    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)


def value_of(x):
    """Strip derivative information."""
    return x.value if isinstance(x, Tangent) else x


def deriv_of(x, p):
    """Derivative array of ``x``; constants give exact zeros."""
    if isinstance(x, Tangent):
        return x.deriv
    return np.zeros(np.shape(x) + (p,))


def is_tangent(x):
    return isinstance(x, Tangent)


# --------------------------------------------------------------------------
# elementary functions (generic: plain inputs go straight to numpy)


def exp(x):
    if not isinstance(x, Tangent):
        return np.exp(x)
    e = np.exp(x.value)
    return _new(e, _col(e) * x.deriv)


def expm1(x):
    if not isinstance(x, Tangent):
        return np.expm1(x)
    return _new(np.expm1(x.value), _col(np.exp(x.value)) * x.deriv)


def log(x):
    v = value_of(x)
    if np.any(np.asarray(v) <= 0):
        raise DomainError("log of a non-positive value")
    if not isinstance(x, Tangent):
        return np.log(x)
    return _new(np.log(x.value), x.deriv / _col(x.value))


def sqrt(x, strict=True):
    """Square root.

    At a zero value the derivative is infinite unless the incoming
    derivative vanishes too.  ``strict`` raises in that case; otherwise the
    infinities/NaNs are produced silently, the way an unguarded AD tool would.
    """
    if not isinstance(x, Tangent):
        if np.any(np.asarray(x) < 0):
            raise DomainError("sqrt of a negative value")
        return np.sqrt(x)
    if np.any(np.asarray(x.value) < 0):
        raise DomainError("sqrt of a negative value")
    r = np.sqrt(x.value)
    zero = np.asarray(r == 0)
    if not zero.any():
        return _new(r, x.deriv / _col(2.0 * r))
    if not strict:
        with np.errstate(divide="ignore", invalid="ignore"):
            return _new(r, x.deriv / _col(2.0 * r))
    if np.any(x.deriv[zero] != 0):
        raise DerivativeSingularityError("sqrt at 0 with nonzero derivative")
    denom = np.where(zero, 1.0, 2.0 * r)
    return _new(r, x.deriv / _col(denom))


def sinh(x):
    if not isinstance(x, Tangent):
        return np.sinh(x)
    return _new(np.sinh(x.value), _col(np.cosh(x.value)) * x.deriv)


def cosh(x):
    if not isinstance(x, Tangent):
        return np.cosh(x)
    return _new(np.cosh(x.value), _col(np.sinh(x.value)) * x.deriv)


def abs_(x):
    """Absolute value; subgradient 0 at a kink, counted as nonsmooth."""
    v = value_of(x)
    _flag_nonsmooth(np.count_nonzero(np.asarray(v) == 0), "abs")
    if not isinstance(x, Tangent):
        return np.abs(x)
    return _new(np.abs(x.value), _col(np.sign(x.value)) * x.deriv)


def where(cond, a, b):
    """Entrywise selection; each branch keeps its own derivative."""
    ta, tb = isinstance(a, Tangent), isinstance(b, Tangent)
    if not (ta or tb):
        return np.where(cond, a, b)
    if ta and tb:
        _check(a, b)
    p = a.p if ta else b.p
    v = np.where(cond, value_of(a), value_of(b))
    da = a.deriv if ta else 0.0
    db = b.deriv if tb else 0.0
    d = np.where(np.asarray(cond)[..., None], da, db)
    return _new(v, np.broadcast_to(d, np.shape(v) + (p,)) if d.shape[:-1] != np.shape(v) else d)


def branch_max(a, b):
    """Larger argument including its derivative; ties pick ``a``."""
    av, bv = value_of(a), value_of(b)
    _flag_nonsmooth(np.count_nonzero(np.asarray(av == bv)), "max")
    return where(av >= bv, a, b)


def branch_min(a, b):
    """Smaller argument including its derivative; ties pick ``a``."""
    av, bv = value_of(a), value_of(b)
    _flag_nonsmooth(np.count_nonzero(np.asarray(av == bv)), "min")
    return where(av <= bv, a, b)


# --------------------------------------------------------------------------
# linear algebra over batches


def einsum(subscripts, *operands):
    """``np.einsum`` with the product rule for tangent operands.

    Subscripts must be in explicit ``in,in->out`` form.
    """
    tangents = [i for i, o in enumerate(operands) if isinstance(o, Tangent)]
    if not tangents:
        return np.einsum(subscripts, *operands)
    ins, out = subscripts.replace(" ", "").split("->")
    ins = ins.split(",")
    extra = next(c for c in string.ascii_letters if c not in subscripts)
    values = [value_of(o) for o in operands]
    value = np.einsum(subscripts, *values)
    deriv = None
    for i in tangents:
        if deriv is not None:
            _check(operands[tangents[0]], operands[i])
        spec = ",".join(s + extra if j == i else s for j, s in enumerate(ins)) + "->" + out + extra
        args = list(values)
        args[i] = operands[i].deriv
        term = np.einsum(spec, *args)
        deriv = term if deriv is None else deriv + term
    return _new(value, deriv)


def concatenate(parts, axis=-1):
    """Concatenate along a value axis, promoting constants to zero derivatives."""
    tangents = [t for t in parts if isinstance(t, Tangent)]
    if not tangents:
        return np.concatenate(parts, axis=axis)
    p = tangents[0].p
    for t in tangents[1:]:
        _check(tangents[0], t)
    ndim = np.ndim(value_of(parts[0]))
    ax = axis if axis >= 0 else ndim + axis
    value = np.concatenate([value_of(t) for t in parts], axis=ax)
    deriv = np.concatenate([deriv_of(t, p) for t in parts], axis=ax)
    return _new(value, deriv)


# --------------------------------------------------------------------------
# seeding


@dataclass(frozen=True)
class SeedMatrix:
    """Input-sensitivity matrix ``C`` of shape ``(p, n)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("seed matrix must be 2-D (p, n)")
        object.__setattr__(self, "matrix", m)

    @property
    def p(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def zeros(cls, p, n):
        return cls(np.zeros((p, n)))

    @classmethod
    def block(cls, ndf, nen, k):
        """Identity on the columns of DOF block ``k``, zero elsewhere."""
        if not 0 <= k < ndf:
            raise ValueError(f"block {k} out of range for ndf={ndf}")
        c = np.zeros((nen, ndf * nen))
        c[:, k * nen:(k + 1) * nen] = np.eye(nen)
        return cls(c)


def lift(values, seed):
    """Attach seed directions to ``values`` (last axis of length ``seed.n``).

    Entry ``i`` receives column ``i`` of the seed matrix as its derivative.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1:] != (seed.n,):
        raise ValueError(f"seed has {seed.n} columns but values have length {values.shape[-1:]}")
    deriv = np.broadcast_to(seed.matrix.T, values.shape + (seed.p,))
    return _new(values, deriv)
