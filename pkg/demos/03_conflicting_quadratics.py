"""
Fairness on conflicting quadratics
==================================

Nine clients want the model near +u and one outlier wants it near -u.
FedAvg follows the sample average and keeps hurting the outlier; DQN-Fed
only moves along directions that decrease every participant's loss.
"""

# %%
import logging
from importlib import resources

import numpy as np

from dqnfed.config import parse_config
from dqnfed.orchestrator import build_federation, run_federation

logging.disable(logging.WARNING)

cfg = parse_config(resources.files("dqnfed") / "configs" / "conflicting_quadratics.toml")
fed = build_federation(cfg)      # shared data and initial model for both methods

results = {m: run_federation(cfg.with_method(m), federation=fed) for m in ("dqnfed", "fedavg")}

# %%
for m, res in results.items():
    rho = np.array([l.rho for l in res.logs])
    losses = res.client_losses
    print(f"{m:7s} final losses: mean {losses.mean():.3f} std {losses.std():.3f} "
          f"worst {losses.max():.3f}; rounds with rho < 1: {(rho < 1).sum()}")

# %%
# per-client picture at the end; client 9 is the outlier
print("client   dqnfed   fedavg")
for k in range(cfg.num_clients):
    print(f"{k:6d} {results['dqnfed'].client_losses[k]:8.3f} {results['fedavg'].client_losses[k]:8.3f}")
