"""Exact second-order forward-mode differentiation.

A :class:`Jet` carries a value together with its gradient and Hessian with
respect to one active coordinate block of dimension ``d``.  Values may be
arrays (shape ``S``); the gradient then has shape ``S + (d,)`` and the Hessian
``S + (d, d)``, so data-parallel log-likelihood terms propagate derivatives in
a single vectorised pass.

Jets interoperate with numpy: registered ufuncs (``np.exp``, ``np.log``,
``scipy.special.gammaln``, ...) dispatch through ``__array_ufunc__`` so model
code is written once and evaluated either on plain arrays or on Jets.  Any
ufunc without derivative rules raises :class:`UnsupportedPrimitive`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import math

import numpy as np
from scipy import special

from .errors import NonFiniteDerivative, UnsupportedPrimitive

__all__ = [
    "Jet",
    "GradHess",
    "evaluate_with_derivatives",
    "value_of",
    "is_jet",
    "digamma",
    "trigamma",
]


def digamma(x):
    return special.psi(x)


def trigamma(x):
    return special.polygamma(1, x)


def _new(val, grad, hess) -> "Jet":
    out = object.__new__(Jet)
    out.val = val
    out.grad = grad
    out.hess = hess
    return out


def _col(c):
    # append one trailing axis to a constant so it broadcasts against grad
    return np.asarray(c, dtype=float)[..., None]


def _col2(c):
    return np.asarray(c, dtype=float)[..., None, None]


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Jet:
    """Value with exact gradient and Hessian over the active block."""

    __slots__ = ("val", "grad", "hess")
    # make numpy defer to our operators in mixed expressions
    __array_priority__ = 1000

    def __init__(self, val, grad, hess):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)
        d = self.grad.shape[-1]
        if self.grad.shape != self.val.shape + (d,):
            raise ValueError(f"grad shape {self.grad.shape} does not match value {self.val.shape}")
        if self.hess.shape != self.val.shape + (d, d):
            raise ValueError(f"hess shape {self.hess.shape} does not match value {self.val.shape}")

    @classmethod
    def variable(cls, x) -> "Jet":
        """Seed the active block ``x``: unit gradient, zero Hessian."""
        x = np.array(x, dtype=float)
        d = x.size
        return _new(x, np.eye(d).reshape(x.shape + (d,)), np.zeros(x.shape + (d, d)))

    @classmethod
    def constant(cls, x, dim: int) -> "Jet":
        x = np.asarray(x, dtype=float)
        return _new(x, np.zeros(x.shape + (dim,)), np.zeros(x.shape + (dim, dim)))

    # -- shape protocol ------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.grad.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self) -> int:
        return self.val.ndim

    @property
    def size(self) -> int:
        return self.val.size

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Jet(val={self.val!r}, dim={self.dim})"

    def __float__(self):
        raise UnsupportedPrimitive(
            "Jet cannot be converted to float; use numpy/scipy ufuncs instead of math.*"
        )

    def __bool__(self):
        raise UnsupportedPrimitive("truth value of a Jet is undefined; compare value_of(x)")

    def __getitem__(self, idx) -> "Jet":
        if idx is Ellipsis or (isinstance(idx, tuple) and any(i is Ellipsis for i in idx)):
            raise IndexError("Ellipsis indexing is not supported on Jets")
        return _new(self.val[idx], self.grad[idx], self.hess[idx])

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        val = self.val.reshape(shape)
        d = self.dim
        return _new(val, self.grad.reshape(val.shape + (d,)), self.hess.reshape(val.shape + (d, d)))

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            d = self.dim
            return _new(
                self.val.sum(),
                self.grad.reshape(-1, d).sum(axis=0),
                self.hess.reshape(-1, d, d).sum(axis=0),
            )
        axis = axis % self.ndim if self.ndim else 0
        return _new(self.val.sum(axis=axis), self.grad.sum(axis=axis), self.hess.sum(axis=axis))

    # -- arithmetic ----------------------------------------------------------
    def _broadcast_to(self, shape) -> "Jet":
        if shape == self.val.shape:
            return self
        d = self.dim
        return _new(
            np.broadcast_to(self.val, shape),
            np.broadcast_to(self.grad, shape + (d,)),
            np.broadcast_to(self.hess, shape + (d, d)),
        )

    def __add__(self, other):
        if isinstance(other, Jet):
            return _new(self.val + other.val, self.grad + other.grad, self.hess + other.hess)
        val = self.val + np.asarray(other, dtype=float)
        out = self._broadcast_to(val.shape)
        return _new(val, out.grad, out.hess)

    __radd__ = __add__

    def __neg__(self):
        return _new(-self.val, -self.grad, -self.hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            return _new(
                a.val * b.val,
                a.grad * _col(b.val) + b.grad * _col(a.val),
                a.hess * _col2(b.val)
                + b.hess * _col2(a.val)
                + _outer(a.grad, b.grad)
                + _outer(b.grad, a.grad),
            )
        c = np.asarray(other, dtype=float)
        return _new(self.val * c, self.grad * c[..., None], self.hess * c[..., None, None])

    __rmul__ = __mul__

    def reciprocal(self):
        u = self.val
        inv = 1.0 / u
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise UnsupportedPrimitive("Jet ** Jet is not supported; use exp(b * log(a))")
        p = float(p)
        if p == 2.0:
            u = self.val
            return self._chain(u * u, 2.0 * u, np.full_like(u, 2.0))
        u = self.val
        return self._chain(u**p, p * u ** (p - 1.0), p * (p - 1.0) * u ** (p - 2.0))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    def __matmul__(self, other):
        if isinstance(other, Jet):
            if self.ndim == 1 and other.ndim == 1:
                return (self * other).sum()
            raise UnsupportedPrimitive("Jet @ Jet is only supported for vectors")
        w = np.asarray(other, dtype=float)
        if w.ndim != 1:
            raise UnsupportedPrimitive("Jet @ matrix is not supported; write matrix @ Jet")
        return _new(
            self.val @ w,
            np.einsum("...ki,k->...i", self.grad, w),
            np.einsum("...kij,k->...ij", self.hess, w),
        )

    def __rmatmul__(self, other):
        m = np.asarray(other, dtype=float)
        if self.ndim != 1:
            raise UnsupportedPrimitive("matrix @ Jet requires a vector Jet")
        return _new(
            m @ self.val,
            m @ self.grad,
            np.tensordot(m, self.hess, axes=([-1], [0])),
        )

    def _chain(self, f0, f1, f2) -> "Jet":
        """Apply a scalar function elementwise given its value and two derivatives."""
        g = self.grad
        return _new(
            f0,
            _col(f1) * g,
            _col2(f1) * self.hess + _col2(f2) * _outer(g, g),
        )

    # -- numpy protocol ------------------------------------------------------
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            raise UnsupportedPrimitive(f"{ufunc.__name__}.{method} is not supported on Jets")
        rule = _UFUNCS.get(ufunc)
        if rule is None:
            raise UnsupportedPrimitive(f"no derivative rule registered for {ufunc.__name__}")
        return rule(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        rule = _FUNCTIONS.get(func)
        if rule is None:
            raise UnsupportedPrimitive(f"{func.__name__} is not supported on Jets")
        return rule(*args, **kwargs)


def is_jet(x) -> bool:
    return isinstance(x, Jet)


def value_of(x):
    """Strip derivative information, returning the plain value."""
    return x.val if isinstance(x, Jet) else x


# -- elementwise primitives -------------------------------------------------


def exp(u):
    if not isinstance(u, Jet):
        return np.exp(u)
    e = np.exp(u.val)
    return u._chain(e, e, e)


def log(u):
    if not isinstance(u, Jet):
        return np.log(u)
    x = u.val
    inv = 1.0 / x
    return u._chain(np.log(x), inv, -inv * inv)


def log1p(u):
    if not isinstance(u, Jet):
        return np.log1p(u)
    x = u.val
    inv = 1.0 / (1.0 + x)
    return u._chain(np.log1p(x), inv, -inv * inv)


def sqrt(u):
    if not isinstance(u, Jet):
        return np.sqrt(u)
    s = np.sqrt(u.val)
    return u._chain(s, 0.5 / s, -0.25 / (s * u.val))


def gammaln(u):
    if not isinstance(u, Jet):
        return special.gammaln(u)
    x = u.val
    return u._chain(special.gammaln(x), digamma(x), trigamma(x))


def expit(u):
    if not isinstance(u, Jet):
        return special.expit(u)
    s = special.expit(u.val)
    ds = s * (1.0 - s)
    return u._chain(s, ds, ds * (1.0 - 2.0 * s))


def log_expit(u):
    if not isinstance(u, Jet):
        return special.log_expit(u)
    x = u.val
    s_pos = special.expit(x)
    s_neg = special.expit(-x)
    return u._chain(special.log_expit(x), s_neg, -s_pos * s_neg)


def logaddexp(a, b):
    # log(e^a + e^b) = a - log_expit(a - b)
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.logaddexp(a, b)
    return a - log_expit(a - b)


def _binary(op):
    def rule(a, b):
        return op(a, b)

    return rule


def _power(a, b):
    if isinstance(a, Jet):
        return a.__pow__(b)
    return a ** b if not isinstance(b, Jet) else b.__rpow__(a)


def _matmul(a, b):
    if isinstance(a, Jet):
        return a.__matmul__(b)
    return b.__rmatmul__(a)


_UFUNCS: dict[np.ufunc, Callable] = {
    np.add: _binary(lambda a, b: a + b if isinstance(a, Jet) else b + a),
    np.subtract: _binary(lambda a, b: a - b if isinstance(a, Jet) else (-b) + a),
    np.multiply: _binary(lambda a, b: a * b if isinstance(a, Jet) else b * a),
    np.true_divide: _binary(lambda a, b: a / b if isinstance(a, Jet) else b.__rtruediv__(a)),
    np.negative: lambda a: -a,
    np.positive: lambda a: a,
    np.power: _power,
    np.square: lambda a: a**2,
    np.reciprocal: lambda a: a.reciprocal(),
    np.matmul: _matmul,
    np.exp: exp,
    np.log: log,
    np.log1p: log1p,
    np.sqrt: sqrt,
    np.logaddexp: logaddexp,
    special.gammaln: gammaln,
    special.expit: expit,
    special.log_expit: log_expit,
}


def _np_sum(a, axis=None, **kwargs):
    if kwargs:
        raise UnsupportedPrimitive(f"np.sum keyword(s) {sorted(kwargs)} unsupported on Jets")
    return a.sum(axis=axis)


def _np_dot(a, b):
    return _matmul(a, b)


def _np_reshape(a, shape, **kwargs):
    return a.reshape(shape)


_FUNCTIONS: dict[Callable, Callable] = {
    np.sum: _np_sum,
    np.dot: _np_dot,
    np.reshape: _np_reshape,
}


# -- public entry point -----------------------------------------------------


@dataclass(frozen=True)
class GradHess:
    """Detached first and second derivatives of a scalar function."""

    grad: np.ndarray
    hess: np.ndarray

    @property
    def dim(self) -> int:
        return self.grad.shape[0]


def evaluate_with_derivatives(f: Callable, x) -> tuple[float, GradHess]:
    """Evaluate ``f(x)`` together with its exact gradient and Hessian.

    ``x`` may be a scalar or an array; derivatives are taken with respect to
    its flattened entries, so the returned gradient has length ``x.size``.

    Raises:
        NonFiniteDerivative: value, gradient or Hessian contains NaN/Inf.
        UnsupportedPrimitive: ``f`` used a function with no derivative rule.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteDerivative(f"non-finite evaluation point {x!r}")
    d = x.size
    with np.errstate(all="ignore"):
        out = f(Jet.variable(x))
    if isinstance(out, Jet):
        if out.val.shape != ():
            out = out.sum()
        value = float(out.val)
        grad = np.array(out.grad, dtype=float)
        if d == 1:
            hess = np.array(out.hess, dtype=float).reshape(1, 1)
        else:
            upper = np.triu(out.hess)
            hess = upper + np.triu(upper, 1).T
    else:
        value = float(np.sum(out))
        grad = np.zeros(d)
        hess = np.zeros((d, d))
    if not (math.isfinite(value) and np.isfinite(grad).all() and np.isfinite(hess).all()):
        raise NonFiniteDerivative(f"non-finite derivatives at {x!r} (value={value})")
    return value, GradHess(grad, hess)
