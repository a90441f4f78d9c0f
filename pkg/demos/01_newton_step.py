"""One Newton proposal, by hand.

On a Gaussian log density the second-order rule lands exactly on the target:
the proposal mean is the mode and the proposal precision is the target's.
On a heavy-tailed density the Hessian stops being negative definite and the
Cauchy rule takes over.
"""

import numpy as np

from nmc.autodiff import evaluate_with_derivatives
from nmc.proposers import propose_real

P = np.array([[2.0, 0.6], [0.6, 1.0]])
m = np.array([1.0, -2.0])
x = np.array([4.0, 3.0])

_, gh = evaluate_with_derivatives(lambda u: -0.5 * (u - m) @ (P @ (u - m)), x)
prop = propose_real(x, gh)
print("gaussian target")
print("  rule:", prop.family)
print("  proposal mean:", prop.params["mean"], " target mode:", m)
print("  proposal precision:\n", prop.params["precision"])

# far out in a Student-t tail the curvature is positive
x = np.array([6.0, -5.0])
_, gh = evaluate_with_derivatives(lambda u: -1.5 * np.log1p(u @ u), x)
prop = propose_real(x, gh)
print("heavy-tailed target at", x)
print("  rule:", prop.family)
print("  eigenvalues of the Hessian:", np.linalg.eigvalsh(gh.hess))
