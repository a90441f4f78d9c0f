"""Writing a model: a Poisson rate with a Gamma prior and a probability vector.

Nodes are declared with their parents and a function that maps parent values
to a distribution.  The engine picks the proposal family from each node's
support: Gamma for positive nodes, Dirichlet for simplex nodes.
"""

import numpy as np

from nmc.distributions import Categorical, Dirichlet, Gamma, Poisson, Support
from nmc.engine import SamplerConfig, run
from nmc.graph import Node, build_model

counts = np.array([3, 6, 4, 5, 2, 7])
labels = np.array([0, 0, 1, 2, 0, 1, 0, 0])

nodes = [
    Node("rate", (), lambda: Gamma(2.0, 0.5), Support.positive()),
    Node("y", ("rate",), lambda r: Poisson(r, shape=counts.shape), Support.nonneg_int(), observed=True, value=counts),
    Node("p", (), lambda: Dirichlet([1.0, 1.0, 1.0]), Support.simplex(3)),
]
for i, c in enumerate(labels):
    nodes.append(Node(f"c{i}", ("p",), lambda p: Categorical(p), Support.categorical(3), observed=True, value=c))

trace = run(build_model(nodes), None, SamplerConfig(num_samples=3000, seed=1))

rate = trace.array("rate")
print(f"rate: mean {rate.mean():.3f} (exact {(2 + counts.sum()) / (0.5 + len(counts)):.3f})")
p = trace.array("p")
print("p:    mean", p.mean(axis=0).round(3), " exact", ((1 + np.bincount(labels, minlength=3)) / (3 + len(labels))).round(3))
print("acceptance:", {k: round(float(np.mean(v)), 3) for k, v in trace.accept_probs.items()})
