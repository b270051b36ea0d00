"""
One server step by hand
=======================

Two clients, two dimensions.  We walk through the rate-scaled
Gram-Schmidt sweep, the closed-form weights and the step length, then check
that every client sees a loss change proportional to the rate it asked for.
"""

# %%
import numpy as np

from dqnfed import aggregate as agg
from dqnfed.oracle import frank_wolfe_min_norm

grads = np.array([[1.0, 0.0],
                  [1.0, 1.0]])
rates = np.array([1.0, 3.0])   # what each client reports as its quasi-Newton rate

# %%
# The sweep divides each residual by (rate - sum of projection coefficients)
# instead of normalising it.
basis = agg.orthogonalize(grads, rates)
for cid, v, den in zip(basis.client_ids, basis.vectors, basis.denominators):
    print(f"client {cid}: basis vector {v}, denominator {den}")

# %%
# For an orthogonal family the min-norm convex combination has weights
# proportional to 1/|v|^2.
lam = agg.optimal_weights(basis)
plan = agg.plan_step(basis, lam)
print("weights  ", lam)
print("direction", plan.direction)
print("eta      ", plan.eta)

# %%
# Directional derivatives: g_k . d = rate_k / eta for every client
print("g.d          ", grads @ plan.direction)
print("rates / eta  ", rates / plan.eta)

# %%
# Cross-check the weights with a generic min-norm solver
ref = frank_wolfe_min_norm(np.asarray(basis.vectors))
print("Frank-Wolfe weights", ref.weights, "gap", ref.gap)

# %%
theta = np.zeros(2)
print("new model        ", agg.apply_global_step(theta, plan))
print("with clip at 2.5 ", agg.apply_global_step(theta, plan, clip=2.5))
