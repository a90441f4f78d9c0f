"""Curvature-matching proposal construction.

Each rule takes the gradient and Hessian of the target log-density at the
current point and solves for the parameters of a proposal family whose own
first and second derivatives match there:

* real vectors: Gaussian with a Newton-step mean, or a Cauchy when the
  curvature is not concave;
* positive reals: Gamma;
* simplexes: Dirichlet, from derivatives of the target evaluated at
  ``x / sum(x)``.

On targets that belong to the proposal family the rules return the target
itself, independent of the evaluation point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .autodiff import GradHess
from .distributions import (
    Categorical,
    Dirichlet,
    Distribution,
    Gamma,
    LogNormal,
    MultivariateCauchy,
    MultivariateNormal,
    Support,
)
from .errors import (
    DegenerateCurvature,
    DirichletInvalid,
    GammaInvalid,
    InvalidScale,
    NMCError,
    NoConvergence,
    NotPositiveDefinite,
    SingularMatrix,
)

__all__ = [
    "Proposal",
    "MIN_SHAPE",
    "propose_real",
    "propose_real_cauchy",
    "propose_halfspace",
    "propose_simplex",
    "random_walk",
    "fallback_proposal",
]

MIN_SHAPE = 1e-6  # smallest admissible Gamma/Dirichlet parameter


@dataclass(frozen=True)
class Proposal:
    """A proposal density together with how it was obtained."""

    family: str
    dist: Distribution
    params: dict = field(default_factory=dict)
    fallback_used: bool = False

    @property
    def support(self) -> Support:
        return self.dist.support

    def sample(self, rng):
        return self.dist.sample(rng)

    def log_prob(self, x) -> float:
        return float(self.dist.log_prob(x))


def _flat(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float)).ravel()


def propose_real(x, gh: GradHess, floor: float = 1e-8) -> Proposal:
    """Newton-step Gaussian proposal on an unconstrained block.

    ``floor`` is relative: an eigenvalue of the negative Hessian counts as
    positive when it is at least ``floor * max(1, |lambda|_max)``.

    Order of attempts: Gaussian with precision ``-hess``; if that is not
    positive definite, the Cauchy rule; if that fails too, a Gaussian whose
    covariance has its non-positive eigenvalues raised to the floor.

    Raises:
        DegenerateCurvature: none of the constructions produced a density.
    """
    x = _flat(x)
    g, H = gh.grad, gh.hess
    if g.shape != x.shape or H.shape != x.shape * 2:
        raise ValueError(f"derivative shapes {g.shape}, {H.shape} do not match x {x.shape}")
    neg_h = linalg.as_symmetric(-H)
    try:
        lam, V = linalg.eig_sym(neg_h)
    except NoConvergence:
        lam = None
    if lam is not None:
        eff = floor * max(1.0, float(np.max(np.abs(lam))))
        if lam[0] >= eff:
            try:
                # spectrum clears the floor, so cond <= 1/floor; reuse the eigenbasis
                step = V @ ((V.T @ g) / lam)
                dist = MultivariateNormal(x + step, precision=neg_h)
                return Proposal("MVNormal", dist, {"mean": dist.mean, "precision": neg_h})
            except (SingularMatrix, NotPositiveDefinite):
                pass
    try:
        return propose_real_cauchy(x, gh)
    except (InvalidScale, NMCError):
        pass
    if lam is None:
        raise DegenerateCurvature("eigendecomposition of the Hessian failed")
    # covariance spectrum is 1/lambda; non-positive (or vanishing) entries are
    # replaced by a very small positive variance
    with np.errstate(divide="ignore"):
        cov_lam = np.where(lam >= eff, 1.0 / lam, eff)
    cov = (V * cov_lam) @ V.T
    cov = 0.5 * (cov + cov.T)
    try:
        dist = MultivariateNormal(x + cov @ g, cov=cov)
    except (NotPositiveDefinite, NMCError) as exc:
        raise DegenerateCurvature(str(exc)) from exc
    return Proposal("MVNormal", dist, {"mean": dist.mean, "cov": cov}, fallback_used=True)


def propose_real_cauchy(x, gh: GradHess) -> Proposal:
    """Cauchy proposal matched to the gradient and Hessian.

    With ``M = hess - grad grad^T`` the location is ``x - M^{-1} grad``.  The
    scale uses ``s = grad^T hess^{-1} grad`` through ``A = M (s-1)/(2-s)``;
    ``s`` is obtained from ``t = grad^T M^{-1} grad`` as ``s = t / (1 + t)``
    (Sherman-Morrison), which gives ``(s-1)/(2-s) = -1/(2+t)`` and stays
    defined when ``hess`` itself is singular.

    Raises:
        InvalidScale: ``M`` singular, ``s`` too close to 2, or ``A`` not PD.
    """
    x = _flat(x)
    g, H = gh.grad, gh.hess
    M = linalg.as_symmetric(H - np.outer(g, g))
    try:
        y = linalg.solve(M, g)
    except SingularMatrix as exc:
        raise InvalidScale(f"hess - grad grad^T is singular: {exc}") from exc
    t = float(g @ y)
    if abs(2.0 + t) <= 1e-8 * max(1.0, abs(1.0 + t)):
        raise InvalidScale(f"s is within 1e-8 of 2 (t={t})")
    s = t / (1.0 + t) if 1.0 + t != 0.0 else np.inf
    A = -M / (2.0 + t)
    try:
        dist = MultivariateCauchy(x - y, A)
    except NotPositiveDefinite as exc:
        raise InvalidScale("estimated Cauchy scale matrix is not positive definite") from exc
    return Proposal("MVCauchy", dist, {"loc": dist.loc, "A": dist.A, "s": s}, fallback_used=True)


def propose_halfspace(x, grad, hess) -> Proposal:
    """Gamma proposal for a positive variable.

    Matching ``(a-1)/x - b`` and ``-(a-1)/x^2`` to the target gives
    ``a = 1 - x^2 hess`` and ``b = -x hess - grad``.  Vector-valued nodes use
    the diagonal of the Hessian, one independent Gamma per coordinate.

    Raises:
        GammaInvalid: either parameter falls below ``MIN_SHAPE``.
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    if hess.ndim == 2:
        hess = np.diag(hess)
    grad = grad.reshape(x.shape)
    hess = hess.reshape(x.shape)
    if np.any(x <= 0):
        raise GammaInvalid(f"x must be positive, got {x}")
    alpha = 1.0 - x * x * hess
    beta = -x * hess - grad
    if not (np.all(alpha >= MIN_SHAPE) and np.all(beta >= MIN_SHAPE)):
        raise GammaInvalid(f"estimated Gamma parameters invalid: alpha={alpha}, beta={beta}")
    dist = Gamma(alpha, beta, shape=x.shape)
    return Proposal("Gamma", dist, {"alpha": alpha, "beta": beta})


def propose_simplex(x, gh: GradHess) -> Proposal:
    """Dirichlet proposal on the simplex.

    ``gh`` must hold derivatives of the target evaluated at ``x / sum(x)``
    with respect to all K coordinates.  Each concentration is
    ``1 - x_i^2 (H_ii - max_{j != i} H_ij)``.

    Raises:
        DirichletInvalid: some concentration falls below ``MIN_SHAPE``.
    """
    x = _flat(x)
    K = x.shape[0]
    if K < 2:
        raise ValueError("simplex proposals need K >= 2")
    H = gh.hess
    off = H.copy()
    np.fill_diagonal(off, -np.inf)
    alpha = 1.0 - x * x * (np.diag(H) - off.max(axis=1))
    if not np.all(alpha >= MIN_SHAPE):
        raise DirichletInvalid(f"estimated Dirichlet concentrations invalid: {alpha}")
    return Proposal("Dirichlet", Dirichlet(alpha), {"alpha": alpha})


# -- random-walk proposals ------------------------------------------------------


def random_walk(x, support: Support, step: float) -> Proposal:
    """Fixed-scale proposal centred on ``x`` that respects ``support``.

    Real blocks get ``N(x, step^2 I)``, positive ones a multiplicative
    log-normal step, simplexes ``Dirichlet(x / step^2)`` and categoricals a
    uniform draw over the classes.
    """
    kind = support.kind
    if kind == "real":
        xf = _flat(x)
        cov = (step * step) * np.eye(xf.shape[0])
        return Proposal("MVNormal", MultivariateNormal(xf, cov=cov), {"mean": xf, "cov": cov})
    if kind == "positive":
        x = np.asarray(x, dtype=float)
        return Proposal("LogNormal", LogNormal(np.log(x), step), {"mu": np.log(x), "sigma": step})
    if kind == "simplex":
        alpha = np.maximum(_flat(x) / (step * step), MIN_SHAPE)
        return Proposal("Dirichlet", Dirichlet(alpha), {"alpha": alpha})
    if kind == "categorical":
        C = support.size
        return Proposal("Categorical", Categorical(np.full(C, 1.0 / C)), {"probs": np.full(C, 1.0 / C)})
    raise ValueError(f"no random-walk proposal for support {support}")


def fallback_proposal(x, support: Support) -> Proposal:
    """Last-resort proposal used when the estimation rules all fail."""
    if support.kind == "real":
        xf = _flat(x)
        prop = random_walk(xf, support, 0.01 * (1.0 + float(np.linalg.norm(xf))))
    elif support.kind == "positive":
        prop = random_walk(x, support, 0.1)
    elif support.kind == "simplex":
        K = support.size
        prop = Proposal("Dirichlet", Dirichlet(np.ones(K)), {"alpha": np.ones(K)})
    else:
        prop = random_walk(x, support, 1.0)
    return Proposal(prop.family, prop.dist, prop.params, fallback_used=True)
