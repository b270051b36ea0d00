"""
Speed under the smoothness clip
===============================

Dirichlet-skewed Gaussian blobs over 20 clients.  With the clip switched on
the applied step is at most (2/L) * min_k rate_k, so the slowest-moving
client sets the pace for everybody.  This script prints the step sizes and
the rounds each method needs to reach DQN-Fed's final loss.  It takes about
ten seconds.
"""

# %%
import logging
from importlib import resources

import numpy as np

from dqnfed.config import parse_config
from dqnfed.orchestrator import build_federation, run_federation

logging.disable(logging.WARNING)

cfg = parse_config(resources.files("dqnfed") / "configs" / "dirichlet_blobs.toml")
fed = build_federation(cfg)

steps = []


def watch(trace):
    steps.append(np.linalg.norm(trace.theta_after - trace.theta_before))


dqn = run_federation(cfg.with_method("dqnfed"), federation=fed, observer=watch)
dqn_steps, steps = np.array(steps), []
avg = run_federation(cfg.with_method("fedavg"), federation=fed, observer=watch)
avg_steps = np.array(steps)

# %%
print("median step length  dqnfed %.4f  fedavg %.4f" % (np.median(dqn_steps), np.median(avg_steps)))
eta = np.array([l.eta for l in dqn.logs])
applied = np.array([l.eta_applied for l in dqn.logs])
print("rounds where the clip was active: %d of %d" % ((applied < eta).sum(), len(eta)))

# %%
dqn_loss = np.array([l.global_loss for l in dqn.logs])
avg_loss = np.array([l.global_loss for l in avg.logs])
target = 1.05 * dqn_loss[-1]
first = lambda a: int(np.argmax(a <= target)) + 1 if (a <= target).any() else None
print(f"target loss {target:.4f}: dqnfed after {first(dqn_loss)} rounds, fedavg after {first(avg_loss)}")
print(f"final loss  dqnfed {dqn_loss[-1]:.4f}  fedavg {avg_loss[-1]:.4f}")
print(f"worst client accuracy  dqnfed {dqn.client_accuracies.min():.3f}  fedavg {avg.client_accuracies.min():.3f}")
