"""Fairness and progress metrics over per-client accuracies and losses."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch

RHO_TOL = 1e-12


@dataclass(frozen=True)
class FairnessReport:
    mean_acc: float
    std_acc: float
    worst_k: float
    best_k: float
    k_fraction: float
    angle_deg: float
    kl_nats: float
    kl_undefined: bool = False


def fairness_report(accuracies, k_fraction=0.1) -> FairnessReport:
    """Mean, population std, worst/best ``ceil(k_fraction*K)`` means, angle to
    the all-ones vector and KL(normalised accuracies || uniform)."""
    a = np.asarray(accuracies, dtype=np.float64).ravel()
    K = a.size
    if K == 0:
        raise EmptyInput("no accuracies")
    if not 0 < k_fraction <= 1:
        raise ValueError("k_fraction must lie in (0, 1]")
    mean = float(a.mean())
    std = float(np.sqrt(np.mean((a - mean) ** 2)))
    m = math.ceil(k_fraction * K - 1e-9)
    ordered = a[np.argsort(a, kind="stable")]
    worst = float(ordered[:m].mean())
    best = float(ordered[-m:].mean())
    # angle to 1 from the split a = mean*1 + (a - mean*1): tan = std / mean
    angle = 0.0 if mean == 0 and std == 0 else math.degrees(math.atan2(std, mean))
    total = float(a.sum())
    if total > 0:
        p = a / total
        nz = p > 0
        kl = float(np.sum(p[nz] * np.log(p[nz] * K)))
        undefined = False
    else:
        kl, undefined = 0.0, True
    return FairnessReport(mean, std, worst, best, float(k_fraction), angle, max(kl, 0.0), undefined)


def improved_fraction(losses_before, losses_after, abs_tol=RHO_TOL) -> float:
    """Share of clients whose loss went down or stayed put."""
    before = np.asarray(losses_before, dtype=np.float64)
    after = np.asarray(losses_after, dtype=np.float64)
    if before.size == 0:
        raise EmptyInput("no losses")
    if before.shape != after.shape:
        raise LengthMismatch(f"{before.size} losses before, {after.size} after")
    return float(np.mean(after <= before + abs_tol))
