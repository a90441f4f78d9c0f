"""Single-site Metropolis-Hastings with NMC, random-walk and MALA proposals."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple

import numpy as np

from .autodiff import evaluate_with_derivatives
from .distributions import Categorical, MultivariateNormal
from .errors import NMCError
from .graph import Model, World, apply_move, blanket_score_fn, init_world, world_from_values
from .proposers import (
    Proposal,
    fallback_proposal,
    propose_halfspace,
    propose_real,
    propose_simplex,
    random_walk,
)

__all__ = [
    "SamplerConfig",
    "Trace",
    "MHResult",
    "NMC",
    "RWM",
    "MALA",
    "make_strategy",
    "nmc_propose",
    "rwm_propose",
    "mala_propose",
    "enumerated_conditional",
    "mh_step",
    "run",
]

log = logging.getLogger(__name__)

METHODS = ("nmc", "rwm", "mala")


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "nmc"
    num_samples: int = 1000
    seed: int = 0
    rwm_step: float = 0.5
    mala_step: float = 0.1
    eig_floor: float = 1e-8
    random_scan: bool = False

    def __post_init__(self):
        if self.method.lower() not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", self.method.lower())
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if not (self.rwm_step > 0 and self.mala_step > 0 and self.eig_floor > 0):
            raise ValueError("step sizes and eig_floor must be positive")


# -- value <-> proposal coordinates ---------------------------------------------


def _to_prop(x, kind: str):
    if kind == "real":
        return np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    return x


def _from_prop(v, template, kind: str):
    if kind == "real":
        shape = np.shape(template)
        v = np.asarray(v, dtype=float)
        return float(v.reshape(-1)[0]) if shape == () else v.reshape(shape)
    if kind == "positive" and np.shape(template) == ():
        return float(v)
    return v


# -- proposal strategies --------------------------------------------------------


def enumerated_conditional(model: Model, world: World, node_id: str) -> Proposal:
    """Exact full conditional of a categorical node by enumeration."""
    f = blanket_score_fn(model, world, node_id)
    C = model[node_id].support.size
    logits = np.array([f(c) for c in range(C)], dtype=float)
    if not np.any(np.isfinite(logits)):
        raise NMCError(f"all classes of {node_id!r} have zero probability")
    dist = Categorical(logits=logits)
    return Proposal("Categorical", dist, {"probs": dist.probs, "state_independent": True})


def nmc_propose(model: Model, world: World, node_id: str, eig_floor: float = 1e-8) -> Proposal:
    """Curvature-matched proposal for one node at its current value.

    Never raises for numerical reasons: if no estimation rule applies the
    node's fallback random walk is returned with ``fallback_used`` set.
    """
    node = model[node_id]
    kind = node.support.kind
    x = world[node_id]
    if kind == "categorical":
        return enumerated_conditional(model, world, node_id)
    f = blanket_score_fn(model, world, node_id)
    try:
        if kind == "simplex":
            _, gh = evaluate_with_derivatives(lambda u: f(u / u.sum()), x)
            return propose_simplex(x, gh)
        _, gh = evaluate_with_derivatives(f, x)
        if kind == "real":
            return propose_real(x, gh, eig_floor)
        if kind == "positive":
            return propose_halfspace(x, gh.grad, gh.hess)
    except NMCError as exc:
        log.debug("NMC rule failed for %s: %s", node_id, exc)
        return fallback_proposal(x, node.support)
    raise ValueError(f"no NMC rule for support {node.support}")


def rwm_propose(model: Model, world: World, node_id: str, step: float) -> Proposal:
    node = model[node_id]
    return random_walk(_to_prop(world[node_id], node.support.kind), node.support, step)


def mala_propose(
    model: Model, world: World, node_id: str, step: float, rwm_step: float | None = None
) -> Proposal:
    """Langevin proposal ``N(x + step^2/2 grad, step^2 I)`` on real nodes.

    Constrained nodes fall back to the random walk with ``rwm_step``.
    """
    node = model[node_id]
    if node.support.kind != "real":
        return rwm_propose(model, world, node_id, rwm_step if rwm_step is not None else step)
    x = _to_prop(world[node_id], "real")
    f = blanket_score_fn(model, world, node_id)
    try:
        _, gh = evaluate_with_derivatives(f, world[node_id])
    except NMCError:
        return fallback_proposal(x, node.support)
    mean = x + 0.5 * step * step * gh.grad
    cov = (step * step) * np.eye(x.shape[0])
    return Proposal("MVNormal", MultivariateNormal(mean, cov=cov), {"mean": mean, "cov": cov})


class NMC:
    def __init__(self, eig_floor: float = 1e-8):
        self.eig_floor = eig_floor

    def propose(self, model, world, node_id):
        return nmc_propose(model, world, node_id, self.eig_floor)


class RWM:
    def __init__(self, step: float):
        self.step = step

    def propose(self, model, world, node_id):
        return rwm_propose(model, world, node_id, self.step)


class MALA:
    def __init__(self, step: float, rwm_step: float | None = None):
        self.step = step
        self.rwm_step = rwm_step

    def propose(self, model, world, node_id):
        return mala_propose(model, world, node_id, self.step, self.rwm_step)


def make_strategy(config: SamplerConfig):
    if config.method == "nmc":
        return NMC(config.eig_floor)
    if config.method == "rwm":
        return RWM(config.rwm_step)
    return MALA(config.mala_step, config.rwm_step)


# -- the MH kernel --------------------------------------------------------------


class MHResult(NamedTuple):
    world: World
    accepted: bool
    accept_prob: float


def mh_step(
    model: Model,
    world: World,
    node_id: str,
    proposal_fwd: Proposal,
    rng: np.random.Generator,
    strategy,
) -> MHResult:
    """One Metropolis-Hastings update of ``node_id``.

    The reverse proposal is rebuilt by ``strategy`` at the proposed point, so
    asymmetric proposals are scored exactly.  Proposals flagged
    ``state_independent`` are their own reverse.
    """
    node = model[node_id]
    kind = node.support.kind
    old = world[node_id]
    raw = proposal_fwd.sample(rng)
    new = _from_prop(raw, old, kind)
    if not node.support.contains(new):
        return MHResult(world, False, 0.0)
    new_world, delta = apply_move(model, world, node_id, new)
    if not np.isfinite(delta):
        return MHResult(world, False, 0.0)
    if proposal_fwd.params.get("state_independent"):
        proposal_rev = proposal_fwd
    else:
        proposal_rev = strategy.propose(model, new_world, node_id)
    log_fwd = proposal_fwd.log_prob(raw)
    log_rev = proposal_rev.log_prob(_to_prop(old, kind))
    log_alpha = delta + log_rev - log_fwd
    if np.isnan(log_alpha) or log_alpha == -np.inf:
        return MHResult(world, False, 0.0)
    accept_prob = 1.0 if log_alpha >= 0 else float(np.exp(log_alpha))
    if log_alpha >= 0 or np.log(rng.random()) < log_alpha:
        return MHResult(new_world, True, accept_prob)
    return MHResult(world, False, accept_prob)


# -- driver ---------------------------------------------------------------------


@dataclass
class Trace:
    """Samples and diagnostics of one chain; one entry per sweep."""

    nodes: tuple[str, ...]
    samples: dict[str, list] = field(default_factory=dict)
    log_density: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    accept_rate: list[float] = field(default_factory=list)
    fallback_total: list[int] = field(default_factory=list)
    accepted: dict[str, int] = field(default_factory=dict)
    proposed: dict[str, int] = field(default_factory=dict)
    fallbacks: dict[str, int] = field(default_factory=dict)
    accept_probs: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        for n in self.nodes:
            self.samples.setdefault(n, [])
            self.accepted.setdefault(n, 0)
            self.proposed.setdefault(n, 0)
            self.fallbacks.setdefault(n, 0)
            self.accept_probs.setdefault(n, [])

    def __len__(self):
        return len(self.log_density)

    def array(self, node_id: str) -> np.ndarray:
        return np.asarray(self.samples[node_id])

    def draw(self, t: int) -> dict[str, Any]:
        """Values of all latent nodes after sweep ``t`` (0-based)."""
        return {n: self.samples[n][t] for n in self.nodes}

    def acceptance_rates(self) -> dict[str, float]:
        return {
            n: (self.accepted[n] / self.proposed[n]) if self.proposed[n] else float("nan")
            for n in self.nodes
        }


def _snapshot(v):
    return v.copy() if isinstance(v, np.ndarray) else v


def run(
    model: Model,
    observations: Mapping[str, Any] | None,
    config: SamplerConfig,
    init: Mapping[str, Any] | None = None,
) -> Trace:
    """Run ``config.num_samples`` single-site sweeps from a prior draw.

    Each sweep updates every latent node once, in topological order unless
    ``config.random_scan`` is set.  ``init`` optionally overrides starting
    values of latent nodes.  No burn-in is discarded.
    """

    model = model.condition(observations or {})
    rng = np.random.default_rng(config.seed)
    world = init_world(model, rng)
    if init:
        world = world_from_values(model, {**world.values, **init})
    strategy = make_strategy(config)
    latent = model.latent
    trace = Trace(latent)
    n_acc = n_prop = n_fb = 0
    start = time.perf_counter()
    for _ in range(config.num_samples):
        order = rng.permutation(len(latent)) if config.random_scan else range(len(latent))
        for i in order:
            nid = latent[i]
            prop = strategy.propose(model, world, nid)
            world, accepted, prob = mh_step(model, world, nid, prop, rng, strategy)
            n_prop += 1
            trace.proposed[nid] += 1
            trace.accept_probs[nid].append(prob)
            if accepted:
                n_acc += 1
                trace.accepted[nid] += 1
            if prop.fallback_used:
                n_fb += 1
                trace.fallbacks[nid] += 1
        for nid in latent:
            trace.samples[nid].append(_snapshot(world[nid]))
        trace.log_density.append(world.total)
        trace.seconds.append(time.perf_counter() - start)
        trace.accept_rate.append(n_acc / n_prop if n_prop else float("nan"))
        trace.fallback_total.append(n_fb)
    return trace
