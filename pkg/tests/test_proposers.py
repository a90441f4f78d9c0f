import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmc.autodiff import GradHess, evaluate_with_derivatives
from nmc.distributions import Dirichlet, Gamma, MultivariateNormal, Support
from nmc.errors import DirichletInvalid, GammaInvalid, InvalidScale
from nmc.proposers import (
    fallback_proposal,
    propose_halfspace,
    propose_real,
    propose_real_cauchy,
    propose_simplex,
    random_walk,
)


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def _random_spd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + d * np.eye(d)


# -- Gaussian rule ----------------------------------------------------------------


def test_gaussian_target_recovered_1d():
    # log N(x; 3, var 4) at x = 0: grad 0.75, hess -0.25
    p = propose_real(np.array([0.0]), GradHess(np.array([0.75]), np.array([[-0.25]])))
    assert not p.fallback_used and p.family == "MVNormal"
    np.testing.assert_allclose(p.params["mean"], [3.0])
    np.testing.assert_allclose(np.linalg.inv(p.params["precision"]), [[4.0]])


def test_gaussian_rule_exact_on_random_targets(rng):
    for _ in range(20):
        d = int(rng.integers(1, 5))
        P, m = _random_spd(rng, d), rng.normal(size=d)
        f = lambda u: -0.5 * (u - m) @ (P @ (u - m))
        x = rng.normal(size=d) * 3
        _, gh = evaluate_with_derivatives(f, x)
        prop = propose_real(x, gh)
        assert _rel(prop.params["mean"], m) <= 1e-8
        assert _rel(prop.params["precision"], P) <= 1e-8


def test_quadratic_maximizer():
    Q = np.array([[3.0, 1.0], [1.0, 2.0]])
    c = np.array([1.0, -2.0])
    # f(x) = -x^T Q x / 2 + c^T x, maximized at Q^{-1} c
    x = np.array([5.0, 5.0])
    _, gh = evaluate_with_derivatives(lambda u: -0.5 * u @ (Q @ u) + c @ u, x)
    p = propose_real(x, gh)
    np.testing.assert_allclose(p.params["mean"], np.linalg.solve(Q, c), atol=1e-10)


def test_forced_repair_path():
    # -hess = [[-1]] is not PD and the Cauchy rule gives A = -1/2 (not PD), so the
    # covariance eigenvalue is floored
    floor = 1e-8
    p = propose_real(np.array([0.0]), GradHess(np.array([0.0]), np.array([[1.0]])), floor)
    assert p.fallback_used
    np.testing.assert_allclose(p.params["cov"], [[floor]])


def test_indefinite_uses_cauchy_when_valid():
    # paper kernel -log(1 + (x - 2)^2) at x = 3.5: hess > 0 there
    f = lambda u: -np.log1p((u[0] - 2.0) ** 2)
    _, gh = evaluate_with_derivatives(f, np.array([3.5]))
    assert gh.hess[0, 0] > 0
    p = propose_real(np.array([3.5]), gh)
    assert p.family == "MVCauchy" and p.fallback_used
    np.testing.assert_allclose(p.params["loc"], [2.0], rtol=1e-10)


# -- Cauchy rule ------------------------------------------------------------------


def _cauchy_kernel(b, A):
    return lambda u: -np.log1p((u - b) @ (A @ (u - b)))


def test_cauchy_at_mode():
    A0, b0 = 1.7, 0.4
    _, gh = evaluate_with_derivatives(_cauchy_kernel(np.array([b0]), np.array([[A0]])), np.array([b0]))
    p = propose_real_cauchy(np.array([b0]), gh)
    np.testing.assert_allclose(p.params["loc"], [b0])
    np.testing.assert_allclose(p.params["A"], [[A0]])
    assert p.params["s"] == pytest.approx(0.0)


def test_cauchy_off_mode():
    # x = b0 + 1, A0 = 1: grad -1, hess 0
    b0 = 2.0
    x = np.array([b0 + 1.0])
    _, gh = evaluate_with_derivatives(_cauchy_kernel(np.array([b0]), np.eye(1)), x)
    np.testing.assert_allclose(gh.grad, [-1.0])
    np.testing.assert_allclose(gh.hess, [[0.0]], atol=1e-15)
    p = propose_real_cauchy(x, gh)
    np.testing.assert_allclose(p.params["loc"], [b0], rtol=1e-12)
    np.testing.assert_allclose(p.params["A"], [[1.0]], rtol=1e-12)


def test_cauchy_rule_exact_on_random_targets(rng):
    for _ in range(20):
        d = int(rng.integers(1, 4))
        A, b = _random_spd(rng, d) / d, rng.normal(size=d)
        x = b + rng.normal(size=d)
        _, gh = evaluate_with_derivatives(_cauchy_kernel(b, A), x)
        p = propose_real_cauchy(x, gh)
        assert _rel(p.params["loc"], b) <= 1e-8
        assert _rel(p.params["A"], A) <= 1e-8


def test_cauchy_degenerate_input():
    with pytest.raises(InvalidScale):
        propose_real_cauchy(np.zeros(2), GradHess(np.zeros(2), np.diag([1.0, -1.0])))


# -- Gamma rule -------------------------------------------------------------------


def test_gamma_examples():
    p = propose_halfspace(1.0, -2.0, -1.0)
    assert (float(p.params["alpha"]), float(p.params["beta"])) == (2.0, 3.0)
    p = propose_halfspace(0.5, -1.0, 0.0)
    assert (float(p.params["alpha"]), float(p.params["beta"])) == (1.0, 1.0)
    with pytest.raises(GammaInvalid):
        propose_halfspace(0.5, 0.0, 1.0 / 0.25 + 1.0)


def test_gamma_rule_exact_on_random_targets(rng):
    for _ in range(20):
        a, b = rng.uniform(0.5, 10), rng.uniform(0.1, 5)
        x = rng.gamma(a, 1 / b) + 1e-3
        _, gh = evaluate_with_derivatives(Gamma(a, b).log_prob, x)
        p = propose_halfspace(x, gh.grad, gh.hess)
        assert _rel(p.params["alpha"], a) <= 1e-8 and _rel(p.params["beta"], b) <= 1e-8


def test_gamma_vector_node():
    x = np.array([0.5, 2.0])
    f = lambda u: Gamma(np.array([2.0, 3.0]), np.array([1.0, 0.5]), shape=(2,)).log_prob(u)
    _, gh = evaluate_with_derivatives(f, x)
    p = propose_halfspace(x, gh.grad, gh.hess)
    np.testing.assert_allclose(p.params["alpha"], [2.0, 3.0])
    np.testing.assert_allclose(p.params["beta"], [1.0, 0.5])


# -- Dirichlet rule ---------------------------------------------------------------


def _dirichlet_gh(alpha, x):
    return evaluate_with_derivatives(lambda u: Dirichlet(alpha).log_prob(u / u.sum()), x)[1]


def test_dirichlet_symbolic_hessian():
    # H_ii = -(a_i - 1)/x_i^2 + S and H_ij = S with S = sum(a - 1), on the simplex
    alpha = np.array([2.0, 3.0, 4.0])
    x = np.array([0.2, 0.3, 0.5])
    gh = _dirichlet_gh(alpha, x)
    S = np.sum(alpha - 1)
    expected = np.full((3, 3), S) - np.diag((alpha - 1) / x**2)
    np.testing.assert_allclose(gh.hess, expected, rtol=1e-12)
    np.testing.assert_allclose(propose_simplex(x, gh).params["alpha"], alpha, rtol=1e-12)


def test_dirichlet_uniform_and_beta():
    x = np.array([0.1, 0.6, 0.3])
    np.testing.assert_allclose(propose_simplex(x, _dirichlet_gh(np.ones(3), x)).params["alpha"], 1.0)
    x2 = np.array([0.5, 0.5])
    np.testing.assert_allclose(
        propose_simplex(x2, _dirichlet_gh(np.array([2.0, 2.0]), x2)).params["alpha"], [2.0, 2.0]
    )


def test_dirichlet_rule_exact_on_random_targets(rng):
    for _ in range(20):
        K = int(rng.integers(2, 6))
        alpha = rng.uniform(0.5, 8, size=K)
        x = rng.dirichlet(np.ones(K)) * 0.9 + 0.1 / K
        p = propose_simplex(x, _dirichlet_gh(alpha, x))
        assert _rel(p.params["alpha"], alpha) <= 1e-8


def test_dirichlet_invalid():
    x = np.array([0.5, 0.5])
    gh = GradHess(np.zeros(2), np.array([[10.0, 0.0], [0.0, 10.0]]))
    with pytest.raises(DirichletInvalid):
        propose_simplex(x, gh)


# -- properties -------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.01, 30))
def test_gamma_property(a, b, x):
    _, gh = evaluate_with_derivatives(Gamma(a, b).log_prob, x)
    p = propose_halfspace(x, gh.grad, gh.hess)
    assert _rel(p.params["alpha"], a) <= 1e-8 and _rel(p.params["beta"], b) <= 1e-8


def test_support_preservation(rng):
    props = [
        (propose_halfspace(1.0, -2.0, -1.0), Support.positive()),
        (propose_simplex(np.array([0.2, 0.8]), _dirichlet_gh(np.array([2.0, 3.0]), np.array([0.2, 0.8]))), Support.simplex(2)),
        (random_walk(np.array([0.3, 0.7]), Support.simplex(2), 0.1), Support.simplex(2)),
        (random_walk(2.0, Support.positive(), 0.5), Support.positive()),
        (fallback_proposal(2.0, Support.positive()), Support.positive()),
        (fallback_proposal(np.array([0.3, 0.7]), Support.simplex(2)), Support.simplex(2)),
    ]
    for p, sup in props:
        for _ in range(200):
            assert sup.contains(p.sample(rng))


def test_determinism():
    gh = GradHess(np.array([0.3, -0.2]), np.array([[-2.0, 0.3], [0.3, -1.0]]))
    a = propose_real(np.array([0.1, 0.2]), gh)
    b = propose_real(np.array([0.1, 0.2]), gh)
    assert np.array_equal(a.params["mean"], b.params["mean"])


def test_fallback_real_scale():
    p = fallback_proposal(np.array([3.0, 4.0]), Support.real())
    assert p.fallback_used
    np.testing.assert_allclose(p.params["cov"], (0.06) ** 2 * np.eye(2))


def test_random_walk_symmetric():
    sup = Support.real()
    a, b = np.array([0.3, -1.0]), np.array([1.2, 0.4])
    assert random_walk(a, sup, 0.7).log_prob(b) == pytest.approx(random_walk(b, sup, 0.7).log_prob(a), abs=1e-12)


def test_proposal_densities_normalized():
    p = propose_real(np.array([0.0]), GradHess(np.array([0.75]), np.array([[-0.25]])))
    ref = MultivariateNormal(np.array([3.0]), cov=np.array([[4.0]]))
    assert p.log_prob(np.array([1.0])) == pytest.approx(ref.log_prob(np.array([1.0])))
