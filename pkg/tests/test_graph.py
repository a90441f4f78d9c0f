import numpy as np
import pytest
from scipy import stats

from nmc.autodiff import evaluate_with_derivatives
from nmc.distributions import Normal, Support
from nmc.errors import CycleDetected, OutOfSupport, UnknownParent
from nmc.graph import (
    Node,
    apply_move,
    blanket_score_fn,
    build_model,
    init_world,
    total_log_prob,
    world_from_values,
)
from nmc.models import build_annotation, build_funnel
from oracles import fd_grad, fd_hess, rel_err


def lnorm(x, m, s):
    return stats.norm(m, s).logpdf(x)


def test_funnel_structure():
    m = build_funnel()
    assert m.order == ("z", "x")
    assert m.children["z"] == ("x",) and m.children["x"] == ()


def test_isolated_node():
    m = build_model([Node("a", (), lambda: Normal(0.0, 1.0), Support.real())])
    assert m.children["a"] == ()


def test_unknown_parent():
    with pytest.raises(UnknownParent):
        build_model([Node("a", ("ghost",), lambda g: Normal(g, 1.0), Support.real())])


def test_cycle():
    nodes = [
        Node("a", ("b",), lambda b: Normal(b, 1.0), Support.real()),
        Node("b", ("a",), lambda a: Normal(a, 1.0), Support.real()),
    ]
    with pytest.raises(CycleDetected):
        build_model(nodes)


def test_duplicate_ids():
    n = Node("a", (), lambda: Normal(0.0, 1.0), Support.real())
    with pytest.raises(ValueError):
        build_model([n, n])


def test_topological_order_respects_parents():
    nodes = [
        Node("c", ("a", "b"), lambda a, b: Normal(a + b, 1.0), Support.real()),
        Node("b", ("a",), lambda a: Normal(a, 1.0), Support.real()),
        Node("a", (), lambda: Normal(0.0, 1.0), Support.real()),
    ]
    assert build_model(nodes).order == ("a", "b", "c")


def test_init_world_funnel_and_determinism():
    m = build_funnel()
    w1 = init_world(m, np.random.default_rng(3))
    w2 = init_world(m, np.random.default_rng(3))
    assert w1.values == w2.values
    # z is the first draw, from N(0, 3)
    assert w1["z"] == 3.0 * np.random.default_rng(3).standard_normal()
    assert w1.total == pytest.approx(lnorm(w1["z"], 0, 3) + lnorm(w1["x"], 0, np.exp(w1["z"] / 2)))


def test_all_observed_model():
    node = Node("y", (), lambda: Normal(0.0, 1.0), Support.real(), observed=True)
    m = build_model([node]).condition({"y": 0.5})
    w = init_world(m, np.random.default_rng(0))
    assert w["y"] == 0.5 and m.latent == ()


def test_blanket_value_funnel():
    m = build_funnel()
    w = world_from_values(m, {"z": 1.0, "x": 2.0})
    f = blanket_score_fn(m, w, "z")
    for v in (-1.0, 0.0, 1.5):
        assert f(v) == pytest.approx(lnorm(v, 0, 3) + lnorm(2.0, 0, np.exp(v / 2)), rel=1e-12)
    leaf = blanket_score_fn(m, w, "x")
    assert leaf(0.3) == pytest.approx(lnorm(0.3, 0, np.exp(0.5)), rel=1e-12)


def test_blanket_derivatives_match_finite_differences(rng):
    m = build_funnel()
    for _ in range(10):
        w = world_from_values(m, {"z": rng.uniform(-3, 3), "x": rng.normal()})
        for nid in ("z", "x"):
            f = blanket_score_fn(m, w, nid)
            x0 = np.array([w[nid]])
            _, gh = evaluate_with_derivatives(lambda u: f(u[0]), x0)
            plain = lambda u: float(f(u[0]))
            assert rel_err(gh.grad, fd_grad(plain, x0)) <= 1e-4
            assert rel_err(gh.hess, fd_hess(plain, x0)) <= 1e-4


def test_apply_move_examples():
    m = build_funnel()
    w = world_from_values(m, {"z": 1.0, "x": 2.0})
    _, d0 = apply_move(m, w, "z", 1.0)
    assert d0 == 0.0
    nw, d = apply_move(m, w, "z", 0.0)
    expect = (lnorm(0, 0, 3) + lnorm(2, 0, 1)) - (lnorm(1, 0, 3) + lnorm(2, 0, np.exp(0.5)))
    assert d == pytest.approx(expect, abs=1e-10)
    assert nw.total == pytest.approx(total_log_prob(m, nw), abs=1e-10)
    assert w["z"] == 1.0  # original world untouched


def test_apply_move_out_of_support():
    bench = build_annotation(10, K=4, C=3)
    data = bench.generate(np.random.default_rng(0))
    m = bench.model(data)
    w = init_world(m, np.random.default_rng(1))
    with pytest.raises(OutOfSupport):
        apply_move(m, w, "z[0]", 5)


def test_annotation_flip_rescores_only_item():
    bench = build_annotation(10, K=4, C=3)
    data = bench.generate(np.random.default_rng(0))
    m = bench.model(data)
    w = init_world(m, np.random.default_rng(1))
    assert set(m.children["z[3]"]) == {"y[3]"}
    new = (w["z[3]"] + 1) % 3
    nw, d = apply_move(m, w, "z[3]", new)
    assert d == pytest.approx(total_log_prob(m, nw) - total_log_prob(m, w), abs=1e-10)
    changed = {k for k in nw.scores if nw.scores[k] != w.scores[k]}
    assert changed <= {"z[3]", "y[3]"}


def test_incremental_equals_full_after_many_moves(rng):
    bench = build_annotation(12, K=4, C=3)
    m = bench.model(bench.generate(np.random.default_rng(2)))
    w = init_world(m, rng)
    latent = m.latent
    for _ in range(1000):
        nid = latent[rng.integers(len(latent))]
        kind = m[nid].support.kind
        new = int(rng.integers(3)) if kind == "categorical" else rng.dirichlet(np.ones(3))
        w, _ = apply_move(m, w, nid, new)
    assert w.total == pytest.approx(total_log_prob(m, w), abs=1e-8)


def test_blanket_sufficiency(rng):
    bench = build_annotation(12, K=4, C=3)
    m = bench.model(bench.generate(np.random.default_rng(2)))
    w = init_world(m, rng)
    for nid in ("pi", "theta[1,2]", "z[4]"):
        f = blanket_score_fn(m, w, nid)
        new = 1 if nid.startswith("z") else rng.dirichlet(np.ones(3))
        _, d = apply_move(m, w, nid, new)
        assert d == pytest.approx(float(f(new)) - float(f(w[nid])), abs=1e-10)


def test_condition_rejects_latent():
    with pytest.raises(ValueError):
        build_funnel().condition({"z": 1.0})
