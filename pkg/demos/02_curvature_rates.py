"""
Where the rates come from
=========================

Each client turns its local trajectory into curvature pairs (s, y) and
reports g . H g, with H an inverse-Hessian approximation.  On a quadratic
client whose displacements are A-conjugate, both the two-loop recursion and
the dense BFGS matrix hit the Newton rate g . A^-1 g after d pairs.
"""

# %%
import numpy as np

from dqnfed import local

rng = np.random.default_rng(0)
d = 6
Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
A = (Q * np.geomspace(1, 20, d)) @ Q.T       # Hessian of the client loss
g = rng.normal(size=d)
newton = g @ np.linalg.solve(A, g)
print(f"Newton rate {newton:.6f}   plain gradient rate |g|^2 = {g @ g:.6f}")

# %%
# columns of S satisfy S.T @ A @ S = I
R, _ = np.linalg.qr(rng.normal(size=(d, d)))
S = (Q * np.geomspace(1, 20, d) ** -0.5) @ Q.T @ R

pairs = []
for k in range(1, d + 1):
    s = S[:, k - 1]
    pairs.append(local.CurvaturePair.from_displacements(s, A @ s))
    two_loop = local.rate_estimate(g, pairs, memory=10)
    B = local.dense_hessian(pairs, d)
    dense = local.rate_estimate(g, B=B)
    print(f"{k} pairs: two-loop {two_loop:.6f}  dense {dense:.6f}")

# %%
# Pairs with s.y <= 0 carry no usable curvature and are rejected
print("pair with s.y < 0:", local.accept_pair([1.0, 0.0], [-1.0, 0.0]))
