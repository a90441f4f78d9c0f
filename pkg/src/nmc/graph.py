"""Directed graphical models with single-site (Markov blanket) scoring."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .distributions import Distribution, Support
from .errors import CycleDetected, OutOfSupport, UnknownParent

__all__ = [
    "Node",
    "Model",
    "World",
    "build_model",
    "init_world",
    "blanket_score_fn",
    "apply_move",
    "total_log_prob",
    "world_from_values",
]

_UNOBSERVED = object()


@dataclass(frozen=True)
class Node:
    """A random variable.

    ``dist_builder`` is called with the parent values in the order of
    ``parents`` and returns the node's conditional distribution.  Observed
    nodes carry ``observed=True`` and receive their value either here via
    ``value`` or when the model is conditioned.
    """

    id: str
    parents: tuple[str, ...]
    dist_builder: Callable[..., Distribution]
    support: Support
    observed: bool = False
    value: Any = _UNOBSERVED

    @property
    def has_value(self) -> bool:
        return self.value is not _UNOBSERVED

    def dist(self, values: Mapping[str, Any]) -> Distribution:
        return self.dist_builder(*(values[p] for p in self.parents))


@dataclass(frozen=True)
class Model:
    nodes: dict[str, Node]
    order: tuple[str, ...]
    children: dict[str, tuple[str, ...]]

    @property
    def latent(self) -> tuple[str, ...]:
        return tuple(n for n in self.order if not self.nodes[n].observed)

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(n for n in self.order if self.nodes[n].observed)

    def __getitem__(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def condition(self, observations: Mapping[str, Any]) -> "Model":
        """Bind values to observed nodes, returning a new model."""
        if not observations:
            return self
        nodes = dict(self.nodes)
        for key, val in observations.items():
            if key not in nodes:
                raise UnknownParent(f"observation for unknown node {key!r}")
            if not nodes[key].observed:
                raise ValueError(f"node {key!r} is latent; cannot bind an observation")
            nodes[key] = replace(nodes[key], value=val)
        return Model(nodes, self.order, self.children)


def build_model(nodes: Sequence[Node]) -> Model:
    """Check references, sort topologically and index children.

    Nodes keep their declared relative order wherever the dependencies allow
    it, which fixes the single-site sweep order.
    """
    by_id: dict[str, Node] = {}
    for node in nodes:
        if node.id in by_id:
            raise ValueError(f"duplicate node id {node.id!r}")
        by_id[node.id] = node
    for node in nodes:
        for p in node.parents:
            if p not in by_id:
                raise UnknownParent(f"node {node.id!r} references undeclared parent {p!r}")

    children: dict[str, list[str]] = {n.id: [] for n in nodes}
    for node in nodes:
        for p in dict.fromkeys(node.parents):
            children[p].append(node.id)

    # Kahn's algorithm, always releasing the earliest-declared ready node
    position = {n.id: i for i, n in enumerate(nodes)}
    pending = {n.id: len(set(n.parents)) for n in nodes}
    ready = [position[k] for k, v in pending.items() if v == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = nodes[heapq.heappop(ready)].id
        order.append(nid)
        for c in children[nid]:
            pending[c] -= 1
            if pending[c] == 0:
                heapq.heappush(ready, position[c])
    if len(order) != len(nodes):
        stuck = sorted(k for k, v in pending.items() if v > 0)
        raise CycleDetected(f"cycle among nodes {stuck[:10]}")
    return Model(by_id, tuple(order), {k: tuple(v) for k, v in children.items()})


@dataclass(frozen=True)
class World:
    """Assignment of values to every node plus each node's own log-density.

    Worlds are immutable; moves build a new world sharing unchanged entries.
    """

    values: Mapping[str, Any]
    scores: Mapping[str, float]

    @property
    def total(self) -> float:
        return float(sum(self.scores.values()))

    def __getitem__(self, node_id: str):
        return self.values[node_id]


def _score(model: Model, values: Mapping[str, Any], node_id: str) -> float:
    return float(model.nodes[node_id].dist(values).log_prob(values[node_id]))


def init_world(model: Model, rng: np.random.Generator) -> World:
    """Draw latents from their priors in topological order."""
    values: dict[str, Any] = {}
    for nid in model.order:
        node = model.nodes[nid]
        if node.observed:
            if not node.has_value:
                raise ValueError(f"observed node {nid!r} has no bound value")
            values[nid] = node.value
        else:
            values[nid] = node.dist(values).sample(rng)
    scores = {nid: _score(model, values, nid) for nid in model.order}
    return World(values, scores)


def world_from_values(model: Model, values: Mapping[str, Any]) -> World:
    """Score a complete assignment supplied by the caller."""
    values = dict(values)
    for nid in model.observed:
        node = model.nodes[nid]
        if nid not in values:
            if not node.has_value:
                raise ValueError(f"observed node {nid!r} has no bound value")
            values[nid] = node.value
    scores = {nid: _score(model, values, nid) for nid in model.order}
    return World(values, scores)


def total_log_prob(model: Model, world: World) -> float:
    """Joint log-density recomputed from scratch."""
    return float(sum(_score(model, world.values, nid) for nid in model.order))


class _Overlay(Mapping):
    """Read-through view of a world's values with one node replaced."""

    __slots__ = ("base", "key", "value")

    def __init__(self, base, key, value):
        self.base, self.key, self.value = base, key, value

    def __getitem__(self, k):
        return self.value if k == self.key else self.base[k]

    def __iter__(self):
        return iter(self.base)

    def __len__(self):
        return len(self.base)


def blanket_score_fn(model: Model, world: World, node_id: str) -> Callable[[Any], Any]:
    """Markov-blanket log-density of ``node_id`` as a function of its value.

    ``f(v) = log p(v | parents) + sum over children c of log p(c | parents(c))``
    with the node set to ``v`` and everything else held at its current value.
    The function accepts Jets, so it can be differentiated directly.
    """
    node = model.nodes[node_id]
    if node.observed:
        raise ValueError(f"node {node_id!r} is observed")
    kids = [model.nodes[c] for c in model.children[node_id]]
    base = world.values

    def f(v):
        vals = _Overlay(base, node_id, v)
        total = node.dist(vals).log_prob(v)
        for child in kids:
            total = total + child.dist(vals).log_prob(base[child.id])
        return total

    return f


def apply_move(model: Model, world: World, node_id: str, new_value) -> tuple[World, float]:
    """Set one node and rescore only its own factor and its children's.

    Returns the new world and the change in joint log-density.

    Raises:
        OutOfSupport: ``new_value`` lies outside the node's support.
    """
    node = model.nodes[node_id]
    if not node.support.contains(new_value):
        raise OutOfSupport(f"value {new_value!r} outside support of {node_id!r}")
    values = dict(world.values)
    values[node_id] = new_value
    scores = dict(world.scores)
    delta = 0.0
    for nid in (node_id,) + model.children[node_id]:
        s = _score(model, values, nid)
        delta += s - world.scores[nid]
        scores[nid] = s
    return World(values, scores), delta
