"""Distributions with normalised log-densities and samplers.

Every ``log_prob`` is written in numpy/scipy primitives that also accept
:class:`~nmc.autodiff.Jet` arguments, so the same code scores a world and
supplies exact derivatives to the proposers.  ``log_prob`` returns the joint
log-density of the whole value (elements are summed) and returns ``-inf`` for
plain values outside the support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import special

from . import linalg
from .autodiff import is_jet, value_of
from .errors import InvalidParameter

__all__ = [
    "Support",
    "Distribution",
    "Normal",
    "LogNormal",
    "MultivariateNormal",
    "MultivariateCauchy",
    "Gamma",
    "Exponential",
    "Dirichlet",
    "StudentT",
    "Bernoulli",
    "Categorical",
    "IndependentCategorical",
    "Poisson",
    "UniformWithoutReplacement",
    "sample_mv_normal",
    "sample_mv_cauchy",
]

LOG_2PI = float(np.log(2.0 * np.pi))
SIMPLEX_TOL = 1e-8


@dataclass(frozen=True)
class Support:
    """Declared support of a random variable.

    ``kind`` is one of ``real``, ``positive``, ``simplex``, ``categorical`` or
    ``nonneg_int``; ``size`` is the simplex dimension K or the number of
    categories C where that applies.
    """

    kind: str
    size: int | None = None

    @classmethod
    def real(cls):
        return cls("real")

    @classmethod
    def positive(cls):
        return cls("positive")

    @classmethod
    def simplex(cls, K: int):
        return cls("simplex", int(K))

    @classmethod
    def categorical(cls, C: int):
        return cls("categorical", int(C))

    @classmethod
    def nonneg_int(cls):
        return cls("nonneg_int")

    def contains(self, x) -> bool:
        x = value_of(x)
        if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
            if self.kind in ("categorical", "nonneg_int"):
                return 0 <= x and (self.size is None or x < self.size)
        elif isinstance(x, float) and self.kind in ("real", "positive"):
            return math.isfinite(x) and (self.kind == "real" or x > 0)
        x = np.asarray(x)
        if self.kind == "real":
            return bool(np.isfinite(x).all())
        if self.kind == "positive":
            return bool(np.isfinite(x).all() and (x > 0).all())
        if self.kind == "simplex":
            return bool(
                x.ndim == 1
                and x.shape[0] == self.size
                and (x > 0).all()
                and abs(float(x.sum()) - 1.0) <= SIMPLEX_TOL
            )
        if self.kind in ("categorical", "nonneg_int"):
            if x.size == 0:
                return True
            if x.dtype.kind not in "iu" and not (np.floor(x) == x).all():
                return False
            return bool(x.min() >= 0 and (self.size is None or x.max() < self.size))
        raise ValueError(f"unknown support kind {self.kind!r}")

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("categorical", "nonneg_int")


def _check(cond, msg):
    """Raise InvalidParameter unless ``cond`` holds; ``msg`` may be a callable."""
    ok = bool(cond) if isinstance(cond, (bool, np.bool_)) else bool(np.all(cond))
    if not ok:
        raise InvalidParameter(msg() if callable(msg) else msg)


def _arr(x):
    return x if is_jet(x) else np.asarray(x, dtype=float)


class Distribution:
    support: Support

    def log_prob(self, x):
        if not is_jet(x) and not self.support.contains(x):
            return -np.inf
        return self._log_prob(x)

    def _log_prob(self, x):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator):
        raise NotImplementedError


# -- real line ------------------------------------------------------------------


class Normal(Distribution):
    """Independent normals; ``scale`` is the standard deviation."""

    support = Support.real()

    def __init__(self, loc, scale, shape=()):
        self.loc = _arr(loc)
        self.scale = _arr(scale)
        self.shape = tuple(shape)
        _check(value_of(self.scale) > 0, lambda: f"Normal scale must be positive, got {value_of(scale)}")

    def _log_prob(self, x):
        z = (x - self.loc) / self.scale
        return np.sum(-0.5 * z * z - np.log(self.scale) - 0.5 * LOG_2PI)

    def sample(self, rng):
        loc, scale = value_of(self.loc), value_of(self.scale)
        shape = np.broadcast_shapes(np.shape(loc), np.shape(scale), self.shape)
        out = loc + scale * rng.standard_normal(shape)
        return float(out) if out.shape == () else out


class StudentT(Distribution):
    support = Support.real()

    def __init__(self, df, loc, scale, shape=()):
        self.df = _arr(df)
        self.loc = _arr(loc)
        self.scale = _arr(scale)
        self.shape = tuple(shape)
        _check(value_of(self.df) > 0, "StudentT df must be positive")
        _check(value_of(self.scale) > 0, "StudentT scale must be positive")

    def _log_prob(self, x):
        nu, sigma = self.df, self.scale
        z = (x - self.loc) / sigma
        half = 0.5 * (nu + 1.0)
        terms = (
            special.gammaln(half)
            - special.gammaln(0.5 * nu)
            - 0.5 * np.log(nu * np.pi)
            - np.log(sigma)
            - half * np.log1p(z * z / nu)
        )
        return np.sum(terms)

    def sample(self, rng):
        df, loc, scale = value_of(self.df), value_of(self.loc), value_of(self.scale)
        shape = np.broadcast_shapes(np.shape(df), np.shape(loc), np.shape(scale), self.shape)
        out = loc + scale * rng.standard_t(df, size=shape)
        return float(out) if out.shape == () else out


class MultivariateNormal(Distribution):
    """Multivariate normal given either a covariance or a precision matrix."""

    support = Support.real()

    def __init__(self, mean, cov=None, precision=None):
        if (cov is None) == (precision is None):
            raise InvalidParameter("give exactly one of cov or precision")
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        d = self.mean.shape[0]
        if cov is not None:
            self.cov = linalg.as_symmetric(cov)
            self.precision = None
            self._L = linalg.cholesky(self.cov)
        else:
            self.precision = linalg.as_symmetric(precision)
            self.cov = None
            self._L = linalg.cholesky(self.precision)
        if self._L.shape != (d, d):
            raise InvalidParameter("mean and matrix dimensions differ")
        self._half_logdet = float(np.sum(np.log(np.diag(self._L))))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _log_prob(self, x):
        r = x - self.mean
        if self.precision is not None:
            quad = r @ (self.precision @ r)
            sign = 1.0
        else:
            if is_jet(r):
                Linv = sla.solve_triangular(self._L, np.eye(self.dim), lower=True)
                z = Linv @ r
                quad = z @ z
            else:
                z = sla.solve_triangular(self._L, np.atleast_1d(r), lower=True)
                quad = z @ z
            sign = -1.0
        return -0.5 * quad + sign * self._half_logdet - 0.5 * self.dim * LOG_2PI

    def sample(self, rng):
        z = rng.standard_normal(self.dim)
        if self.precision is not None:
            return self.mean + sla.solve_triangular(self._L.T, z, lower=False)
        return self.mean + self._L @ z


class MultivariateCauchy(Distribution):
    """Elliptical Cauchy (multivariate t with one degree of freedom).

    ``A`` is the inverse shape matrix: the log-density is
    ``c(d, A) - (1 + d)/2 * log(1 + (x - b)^T A (x - b))``.  In one
    dimension this is the ordinary Cauchy with scale ``A ** -0.5``.
    """

    support = Support.real()

    def __init__(self, loc, A):
        self.loc = np.atleast_1d(np.asarray(loc, dtype=float))
        self.A = linalg.as_symmetric(A)
        self._L = linalg.cholesky(self.A)
        d = self.loc.shape[0]
        if self.A.shape != (d, d):
            raise InvalidParameter("loc and A dimensions differ")
        self._const = (
            special.gammaln(0.5 * (1 + d))
            - special.gammaln(0.5)
            - 0.5 * d * np.log(np.pi)
            + float(np.sum(np.log(np.diag(self._L))))
        )

    @property
    def dim(self) -> int:
        return self.loc.shape[0]

    def _log_prob(self, x):
        r = x - self.loc
        q = r @ (self.A @ r)
        return self._const - 0.5 * (1 + self.dim) * np.log1p(q)

    def sample(self, rng):
        z = rng.standard_normal(self.dim)
        g = rng.chisquare(1.0)
        return self.loc + sla.solve_triangular(self._L.T, z, lower=False) / np.sqrt(g)


def sample_mv_normal(mean, covariance, rng) -> np.ndarray:
    """Draw ``mean + L z`` with ``L L^T = covariance``."""
    L = linalg.cholesky(covariance)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return mean + L @ rng.standard_normal(mean.shape[0])


def sample_mv_cauchy(b, A, rng) -> np.ndarray:
    return MultivariateCauchy(b, A).sample(rng)


# -- positive reals -------------------------------------------------------------


class Gamma(Distribution):
    """Gamma with shape ``concentration`` and inverse-scale ``rate``."""

    support = Support.positive()

    def __init__(self, concentration, rate, shape=()):
        self.concentration = _arr(concentration)
        self.rate = _arr(rate)
        self.shape = tuple(shape)
        _check(value_of(self.concentration) > 0, "Gamma concentration must be positive")
        _check(value_of(self.rate) > 0, "Gamma rate must be positive")

    def _log_prob(self, x):
        a, b = self.concentration, self.rate
        return np.sum(a * np.log(b) - special.gammaln(a) + (a - 1.0) * np.log(x) - b * x)

    def sample(self, rng):
        a, b = value_of(self.concentration), value_of(self.rate)
        shape = np.broadcast_shapes(np.shape(a), np.shape(b), self.shape)
        out = rng.gamma(a, 1.0 / b, size=shape)
        # guard against underflow to exactly zero for tiny shapes
        out = np.maximum(out, np.finfo(float).tiny)
        return float(out) if out.shape == () else out


class Exponential(Distribution):
    support = Support.positive()

    def __init__(self, rate, shape=()):
        self.rate = _arr(rate)
        self.shape = tuple(shape)
        _check(value_of(self.rate) > 0, "Exponential rate must be positive")

    @classmethod
    def from_mean(cls, mean, shape=()):
        return cls(1.0 / np.asarray(mean, dtype=float), shape)

    def _log_prob(self, x):
        return np.sum(np.log(self.rate) - self.rate * x)

    def sample(self, rng):
        rate = value_of(self.rate)
        shape = np.broadcast_shapes(np.shape(rate), self.shape)
        out = rng.exponential(1.0 / rate, size=shape)
        return float(out) if out.shape == () else out


class LogNormal(Distribution):
    support = Support.positive()

    def __init__(self, mu, sigma):
        self.mu = _arr(mu)
        self.sigma = _arr(sigma)
        _check(value_of(self.sigma) > 0, "LogNormal sigma must be positive")

    def _log_prob(self, x):
        lx = np.log(x)
        z = (lx - self.mu) / self.sigma
        return np.sum(-0.5 * z * z - np.log(self.sigma) - lx - 0.5 * LOG_2PI)

    def sample(self, rng):
        mu, sigma = value_of(self.mu), value_of(self.sigma)
        shape = np.broadcast_shapes(np.shape(mu), np.shape(sigma))
        out = np.exp(mu + sigma * rng.standard_normal(shape))
        return float(out) if out.shape == () else out


# -- simplex --------------------------------------------------------------------


class Dirichlet(Distribution):
    def __init__(self, alpha):
        self.alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        _check(self.alpha > 0, lambda: f"Dirichlet concentrations must be positive, got {self.alpha}")
        if self.alpha.ndim != 1 or self.alpha.shape[0] < 2:
            raise InvalidParameter("Dirichlet needs a vector of at least two concentrations")
        self.support = Support.simplex(self.alpha.shape[0])
        self._const = float(special.gammaln(self.alpha.sum()) - special.gammaln(self.alpha).sum())

    def _log_prob(self, x):
        return self._const + np.sum((self.alpha - 1.0) * np.log(x))

    def sample(self, rng):
        x = rng.dirichlet(self.alpha)
        if np.any(x <= 0):
            # tiny concentrations can underflow; renormalise a floored draw
            x = np.maximum(x, np.finfo(float).tiny)
        return x / x.sum()


# -- discrete -------------------------------------------------------------------


class Bernoulli(Distribution):
    support = Support.categorical(2)

    def __init__(self, logits=None, probs=None, shape=()):
        if (logits is None) == (probs is None):
            raise InvalidParameter("give exactly one of logits or probs")
        if probs is not None:
            p = np.asarray(probs, dtype=float)
            _check((p >= 0) & (p <= 1), "Bernoulli probs must lie in [0, 1]")
            with np.errstate(divide="ignore"):
                logits = np.log(p) - np.log1p(-p)
        self.logits = _arr(logits)
        self.shape = tuple(shape)

    def _log_prob(self, x):
        # x * l - softplus(l)
        l = self.logits
        return np.sum(x * l + special.log_expit(-l))

    def sample(self, rng):
        l = value_of(self.logits)
        shape = np.broadcast_shapes(np.shape(l), self.shape)
        out = (rng.random(shape) < special.expit(l)).astype(np.int64)
        return int(out) if out.shape == () else out


class Categorical(Distribution):
    """Distribution over ``{0, ..., C-1}``; ``probs`` may be a Jet."""

    def __init__(self, probs=None, logits=None):
        if (logits is None) == (probs is None):
            raise InvalidParameter("give exactly one of logits or probs")
        if logits is not None:
            logits = np.asarray(logits, dtype=float)
            top = logits.max()
            shifted = np.exp(logits - top)
            probs = shifted / shifted.sum()
        p = np.asarray(value_of(probs), dtype=float)
        if p.min() < 0:
            raise InvalidParameter("Categorical probs must be non-negative")
        total = float(p.sum())
        if abs(total - 1.0) > 1e-9:
            raise InvalidParameter(f"Categorical probs must sum to 1, got {total}")
        self.probs = probs if is_jet(probs) else p
        self.support = Support.categorical(p.shape[0])

    def _log_prob(self, x):
        if is_jet(self.probs):
            return np.sum(np.log(self.probs[np.asarray(x, dtype=np.int64)]))
        if isinstance(x, (int, np.integer)):
            q = float(self.probs[x])
            return math.log(q) if q > 0 else -np.inf
        with np.errstate(divide="ignore"):
            return float(np.log(self.probs[np.asarray(x, dtype=np.int64)]).sum())

    def sample(self, rng):
        p = np.asarray(value_of(self.probs))
        u = rng.random()
        k = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
        return min(k, p.shape[0] - 1)


class IndependentCategorical(Distribution):
    """Product of categoricals, one probability vector per entry of the value.

    Rows may mix plain arrays and Jets; only rows that depend on the active
    block carry derivative information.
    """

    def __init__(self, rows):
        self.rows = list(rows)
        C = np.shape(value_of(self.rows[0]))[0] if self.rows else 1
        self.support = Support.categorical(C)

    def _log_prob(self, x):
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (len(self.rows),):
            return -np.inf
        total = 0.0
        for row, k in zip(self.rows, x.tolist()):
            if is_jet(row):
                total = total + np.log(row[k])
            else:
                p = float(row[k])
                total = total + (math.log(p) if p > 0 else -np.inf)
        return total

    def sample(self, rng):
        return np.array([Categorical(value_of(r)).sample(rng) for r in self.rows], dtype=np.int64)


class Poisson(Distribution):
    support = Support.nonneg_int()

    def __init__(self, rate, shape=()):
        self.rate = _arr(rate)
        self.shape = tuple(shape)
        _check(value_of(self.rate) > 0, "Poisson rate must be positive")

    def _log_prob(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * np.log(self.rate) - self.rate - special.gammaln(x + 1.0))

    def sample(self, rng):
        rate = value_of(self.rate)
        shape = np.broadcast_shapes(np.shape(rate), self.shape)
        out = rng.poisson(rate, size=shape)
        return int(out) if out.shape == () else out


class UniformWithoutReplacement(Distribution):
    """Ordered draw of ``k`` distinct items from ``{0, ..., n-1}``."""

    support = Support.nonneg_int()

    def __init__(self, n: int, k: int):
        if not 0 <= k <= n:
            raise InvalidParameter(f"cannot draw {k} items from {n} without replacement")
        self.n, self.k = int(n), int(k)

    def _log_prob(self, x):
        x = np.asarray(x)
        if x.shape != (self.k,) or np.any(x >= self.n) or len(set(x.tolist())) != self.k:
            return -np.inf
        return -float(np.sum(np.log(self.n - np.arange(self.k))))

    def sample(self, rng):
        # Fisher-Yates, stopped after k swaps
        pool = np.arange(self.n)
        for i in range(self.k):
            j = int(rng.integers(i, self.n))
            pool[i], pool[j] = pool[j], pool[i]
        return pool[: self.k].copy()
