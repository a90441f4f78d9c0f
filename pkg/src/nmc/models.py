"""Benchmark generative models and their synthetic data.

Each benchmark bundles forward simulation, a train/held-out split, model
construction on the training part and a held-out log-likelihood for a single
posterior draw.  Normal scale parameters are standard deviations throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special, stats

from .distributions import (
    Bernoulli,
    Categorical,
    Dirichlet,
    Exponential,
    Gamma,
    IndependentCategorical,
    Normal,
    Poisson,
    StudentT,
    Support,
    UniformWithoutReplacement,
)
from .graph import Model, Node, build_model

__all__ = [
    "Dataset",
    "Benchmark",
    "Funnel",
    "LogisticRegression",
    "RobustRegression",
    "Annotation",
    "build_funnel",
    "build_blr",
    "build_robust",
    "build_annotation",
    "make_benchmark",
    "forward_sample",
    "generate_and_split",
    "annotation_alpha",
    "majority_vote",
]


@dataclass
class Dataset:
    """Observed columns plus the generating values of the latents."""

    model: str
    observations: dict[str, np.ndarray]
    truth: dict[str, Any] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        if not self.observations:
            return 0
        return len(next(iter(self.observations.values())))

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        obs = {k: v[rows] for k, v in self.observations.items()}
        return Dataset(self.model, obs, self.truth, dict(self.meta))


def forward_sample(model: Model, rng: np.random.Generator) -> dict[str, Any]:
    """Simulate every node, observed ones included, in topological order."""
    values: dict[str, Any] = {}
    for nid in model.order:
        values[nid] = model[nid].dist(values).sample(rng)
    return values


def _split_rows(n: int, rng, holdout_fraction: float):
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must lie strictly between 0 and 1")
    perm = rng.permutation(n)
    n_out = int(round(n * holdout_fraction))
    return np.sort(perm[n_out:]), np.sort(perm[:n_out])


class Benchmark:
    name: str = ""

    def generate(self, rng) -> Dataset:
        raise NotImplementedError

    def split(self, data: Dataset, rng, holdout_fraction: float) -> tuple[Dataset, Dataset]:
        train, held = _split_rows(data.n_rows, rng, holdout_fraction)
        return data.take(train), data.take(held)

    def model(self, train: Dataset) -> Model:
        raise NotImplementedError

    def heldout_loglik(self, draw: dict, heldout: Dataset, mode: str = "z-integrated") -> float:
        raise NotImplementedError

    def summarize(self, trace, train: Dataset) -> dict:
        return {}

    @property
    def has_heldout(self) -> bool:
        return True


def generate_and_split(spec: Benchmark, rng, holdout_fraction: float):
    """Simulate a full dataset and partition its rows at random."""
    data = spec.generate(rng)
    return spec.split(data, rng, holdout_fraction)


# -- Neal's funnel --------------------------------------------------------------


def build_funnel() -> Model:
    """``z ~ N(0, 3)``, ``x ~ N(0, exp(z/2))`` with no observations."""
    return build_model(
        [
            Node("z", (), lambda: Normal(0.0, 3.0), Support.real()),
            Node("x", ("z",), lambda z: Normal(0.0, np.exp(z / 2.0)), Support.real()),
        ]
    )


class Funnel(Benchmark):
    name = "funnel"

    def generate(self, rng) -> Dataset:
        truth = forward_sample(build_funnel(), rng)
        return Dataset(self.name, {}, truth)

    def split(self, data, rng, holdout_fraction):
        return data, Dataset(self.name, {}, data.truth)

    def model(self, train: Dataset) -> Model:
        return build_funnel()

    @property
    def has_heldout(self) -> bool:
        return False

    def summarize(self, trace, train):
        z = trace.array("z")
        ks = stats.kstest(z, stats.norm(0.0, 3.0).cdf).statistic
        return {"z_mean": float(z.mean()), "z_sd": float(z.std()), "z_ks": float(ks)}


# -- Bayesian logistic regression -----------------------------------------------


class LogisticRegression(Benchmark):
    """``alpha ~ N(0, 10)``, ``beta ~ N(0, 2.5)^K``, ``Y ~ Bernoulli(logit=alpha + X beta)``."""

    name = "blr"

    def __init__(self, N: int, K: int):
        if N < 1 or K < 1:
            raise ValueError("N and K must be positive")
        self.N, self.K = int(N), int(K)

    def _nodes(self):
        K, N = self.K, self.N
        return [
            Node("alpha", (), lambda: Normal(0.0, 10.0), Support.real()),
            Node("beta", (), lambda: Normal(0.0, 2.5, shape=(K,)), Support.real()),
            Node("X", (), lambda: Normal(0.0, 10.0, shape=(N, K)), Support.real(), observed=True),
            Node(
                "Y",
                ("alpha", "beta", "X"),
                lambda a, b, X: Bernoulli(logits=a + X @ b),
                Support.categorical(2),
                observed=True,
            ),
        ]

    def generate(self, rng) -> Dataset:
        vals = forward_sample(build_model(self._nodes()), rng)
        return Dataset(
            self.name,
            {"X": vals["X"], "Y": vals["Y"]},
            {"alpha": vals["alpha"], "beta": vals["beta"]},
            {"N": self.N, "K": self.K},
        )

    def model(self, train: Dataset) -> Model:
        return build_model(self._nodes()).condition(
            {"X": train.observations["X"], "Y": train.observations["Y"]}
        )

    def heldout_loglik(self, draw, heldout, mode="z-integrated"):
        X, Y = heldout.observations["X"], heldout.observations["Y"]
        logits = draw["alpha"] + X @ np.asarray(draw["beta"])
        return float(np.sum(Y * logits + special.log_expit(-logits)))


def build_blr(N: int, K: int) -> LogisticRegression:
    return LogisticRegression(N, K)


# -- robust regression ----------------------------------------------------------


ROBUST_DEFAULTS = {"sigma_mean": 1.0, "alpha_scale": 10.0, "beta_loc": 0.0, "beta_scale": 2.5}


class RobustRegression(Benchmark):
    """Linear regression with a Student-t likelihood.

    ``nu ~ Gamma(2, rate=0.1)``, ``sigma ~ Exponential(mean=sigma_mean)``,
    ``alpha ~ N(0, alpha_scale)``, ``beta ~ N(beta_loc, beta_scale)^K`` and
    ``Y ~ StudentT(nu, alpha + X beta, sigma)``.
    """

    name = "robust"

    def __init__(self, N: int, K: int, hyper: dict | None = None):
        if N < 1 or K < 1:
            raise ValueError("N and K must be positive")
        self.N, self.K = int(N), int(K)
        self.hyper = {**ROBUST_DEFAULTS, **(hyper or {})}
        bad = [k for k in ("sigma_mean", "alpha_scale", "beta_scale") if not self.hyper[k] > 0]
        if bad:
            raise ValueError(f"hyperparameters must be positive: {bad}")

    def _nodes(self):
        K, N, h = self.K, self.N, self.hyper
        return [
            Node("nu", (), lambda: Gamma(2.0, 0.1), Support.positive()),
            Node("sigma", (), lambda: Exponential.from_mean(h["sigma_mean"]), Support.positive()),
            Node("alpha", (), lambda: Normal(0.0, h["alpha_scale"]), Support.real()),
            Node(
                "beta", (), lambda: Normal(h["beta_loc"], h["beta_scale"], shape=(K,)), Support.real()
            ),
            Node("X", (), lambda: Normal(0.0, 10.0, shape=(N, K)), Support.real(), observed=True),
            Node(
                "Y",
                ("nu", "sigma", "alpha", "beta", "X"),
                lambda nu, s, a, b, X: StudentT(nu, a + X @ b, s),
                Support.real(),
                observed=True,
            ),
        ]

    def generate(self, rng) -> Dataset:
        vals = forward_sample(build_model(self._nodes()), rng)
        return Dataset(
            self.name,
            {"X": vals["X"], "Y": vals["Y"]},
            {k: vals[k] for k in ("nu", "sigma", "alpha", "beta")},
            {"N": self.N, "K": self.K, "hyper": dict(self.hyper)},
        )

    def model(self, train: Dataset) -> Model:
        return build_model(self._nodes()).condition(
            {"X": train.observations["X"], "Y": train.observations["Y"]}
        )

    def heldout_loglik(self, draw, heldout, mode="z-integrated"):
        X, Y = heldout.observations["X"], heldout.observations["Y"]
        mu = draw["alpha"] + X @ np.asarray(draw["beta"])
        return float(np.sum(stats.t.logpdf(Y, draw["nu"], loc=mu, scale=draw["sigma"])))


def build_robust(N: int, K: int, hyper: dict | None = None) -> RobustRegression:
    return RobustRegression(N, K, hyper)


# -- crowd-sourced annotation ---------------------------------------------------


ANNOTATION_DEFAULTS = {"J_loc": 2.5, "gamma": 10.0, "rho": 0.5}


def annotation_alpha(C: int, gamma: float, rho: float) -> np.ndarray:
    """Confusion-matrix prior: row ``m`` has ``gamma*rho`` on the diagonal and
    ``gamma*(1-rho)/(C-1)`` elsewhere."""
    alpha = np.full((C, C), gamma * (1.0 - rho) / (C - 1))
    np.fill_diagonal(alpha, gamma * rho)
    return alpha


def majority_vote(data: Dataset, rng) -> dict[int, int]:
    """Most frequent label per item, ties broken uniformly at random."""
    C = data.meta["C"]
    obs = data.observations
    out = {}
    for item in np.unique(obs["item"]):
        counts = np.bincount(obs["label"][obs["item"] == item], minlength=C)
        best = np.flatnonzero(counts == counts.max())
        out[int(item)] = int(best[rng.integers(len(best))]) if len(best) > 1 else int(best[0])
    return out


class Annotation(Benchmark):
    """Dawid-Skene style model of items labelled by noisy annotators.

    Observations are long-format rows ``(item, labeler, label)``.  Splits
    partition items, so every held-out item keeps all of its labels.
    """

    name = "annotation"

    def __init__(self, N: int, K: int = 100, C: int = 3, hyper: dict | None = None):
        if N < 1 or K < 2 or C < 2:
            raise ValueError("need N >= 1, K >= 2 and C >= 2")
        self.N, self.K, self.C = int(N), int(K), int(C)
        self.hyper = {**ANNOTATION_DEFAULTS, **(hyper or {})}
        self.alpha = annotation_alpha(self.C, self.hyper["gamma"], self.hyper["rho"])
        if not np.all(self.alpha > 0):
            raise ValueError("rho must lie in (0, 1) so every prior concentration is positive")

    def generate(self, rng) -> Dataset:
        N, K, C = self.N, self.K, self.C
        pi = Dirichlet(np.full(C, 1.0 / C)).sample(rng)
        theta = np.stack([[Dirichlet(self.alpha[m]).sample(rng) for m in range(C)] for _ in range(K)])
        z = np.array([Categorical(pi).sample(rng) for _ in range(N)])
        items, labelers, labels = [], [], []
        for i in range(N):
            size = int(np.clip(Poisson(self.hyper["J_loc"]).sample(rng), 1, K))
            for l in UniformWithoutReplacement(K, size).sample(rng):
                items.append(i)
                labelers.append(int(l))
                labels.append(Categorical(theta[l, z[i]]).sample(rng))
        obs = {
            "item": np.array(items, dtype=np.int64),
            "labeler": np.array(labelers, dtype=np.int64),
            "label": np.array(labels, dtype=np.int64),
        }
        return Dataset(
            self.name,
            obs,
            {"pi": pi, "theta": theta, "z": z},
            {"N": N, "K": K, "C": C, "hyper": dict(self.hyper)},
        )

    def split(self, data, rng, holdout_fraction):
        train_items, held_items = _split_rows(self.N, rng, holdout_fraction)
        held_mask = np.isin(data.observations["item"], held_items)
        return data.take(np.flatnonzero(~held_mask)), data.take(np.flatnonzero(held_mask))

    @staticmethod
    def theta_id(l: int, m: int) -> str:
        return f"theta[{l},{m}]"

    def model(self, train: Dataset) -> Model:
        K, C = self.K, self.C
        alpha = self.alpha
        nodes = [Node("pi", (), lambda: Dirichlet(np.full(C, 1.0 / C)), Support.simplex(C))]
        for l in range(K):
            for m in range(C):
                nodes.append(
                    Node(self.theta_id(l, m), (), lambda a=alpha[m]: Dirichlet(a), Support.simplex(C))
                )
        obs = train.observations
        order = np.argsort(obs["item"], kind="stable")
        items, labelers, labels = obs["item"][order], obs["labeler"][order], obs["label"][order]
        bounds = np.flatnonzero(np.diff(items)) + 1
        for chunk_l, chunk_y, item in zip(
            np.split(labelers, bounds), np.split(labels, bounds), items[np.r_[0, bounds]]
        ):
            zid = f"z[{item}]"
            nodes.append(Node(zid, ("pi",), Categorical, Support.categorical(C)))
            parents = (zid,) + tuple(self.theta_id(int(l), m) for l in chunk_l for m in range(C))
            nodes.append(
                Node(
                    f"y[{item}]",
                    parents,
                    _label_builder(C),
                    Support.categorical(C),
                    observed=True,
                    value=chunk_y.copy(),
                )
            )
        return build_model(nodes)

    def theta_array(self, draw) -> np.ndarray:
        K, C = self.K, self.C
        return np.array([[draw[self.theta_id(l, m)] for m in range(C)] for l in range(K)])

    def heldout_loglik(self, draw, heldout, mode="z-integrated"):
        """Held-out label log-likelihood for one draw of ``(pi, theta)``.

        ``z-integrated`` sums each held-out item's label likelihood over its
        class weighted by ``pi``; ``conditional-on-z`` instead plugs in the
        single most probable class per item.
        """
        C = self.C
        obs = heldout.observations
        log_theta = np.log(self.theta_array(draw))
        items, inverse = np.unique(obs["item"], return_inverse=True)
        per_row = log_theta[obs["labeler"], :, obs["label"]]  # rows x C
        per_item = np.zeros((len(items), C))
        np.add.at(per_item, inverse, per_row)
        joint = per_item + np.log(draw["pi"])[None, :]
        if mode == "z-integrated":
            return float(np.sum(special.logsumexp(joint, axis=1)))
        if mode == "conditional-on-z":
            return float(np.sum(per_item[np.arange(len(items)), np.argmax(joint, axis=1)]))
        raise ValueError(f"unknown evaluation mode {mode!r}")

    def posterior_mode_z(self, trace) -> dict[int, int]:
        out = {}
        for nid in trace.nodes:
            if nid.startswith("z["):
                counts = np.bincount(trace.array(nid).astype(np.int64), minlength=self.C)
                out[int(nid[2:-1])] = int(np.argmax(counts))
        return out

    def summarize(self, trace, train):
        truth = np.asarray(train.truth["z"])
        mode = self.posterior_mode_z(trace)
        mv = majority_vote(train, np.random.default_rng(0))
        acc = np.mean([truth[i] == z for i, z in mode.items()])
        mv_acc = np.mean([truth[i] == z for i, z in mv.items()])
        return {"z_accuracy": float(acc), "majority_vote_accuracy": float(mv_acc)}


def _label_builder(C: int):
    def build(z, *thetas):
        # thetas are grouped C per labeler; pick the row for the true class
        return IndependentCategorical(thetas[z::C])

    return build


def build_annotation(N: int, K: int = 100, C: int = 3, hyper: dict | None = None) -> Annotation:
    return Annotation(N, K, C, hyper)


def make_benchmark(name: str, sizes: dict | None = None, hyper: dict | None = None) -> Benchmark:
    sizes = dict(sizes or {})
    if name == "funnel":
        return Funnel()
    if name == "blr":
        return LogisticRegression(sizes.get("N", 2000), sizes.get("K", 10))
    if name == "robust":
        return RobustRegression(sizes.get("N", 2000), sizes.get("K", 10), hyper)
    if name == "annotation":
        return Annotation(sizes.get("N", 500), sizes.get("K", 100), sizes.get("C", 3), hyper)
    raise ValueError(f"unknown model {name!r}")
