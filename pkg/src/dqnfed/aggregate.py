"""Server-side aggregation.

The DQN-Fed server turns client gradients ``g_k`` and rate targets ``r_k``
into one global step in three stages:

1. :func:`orthogonalize` runs a rate-scaled Gram-Schmidt sweep.  Each
   residual ``g_k - sum_i c_ki * gt_i`` (``c_ki`` the projection coefficient
   onto an earlier basis vector) is divided by ``r_k - sum_i c_ki`` instead
   of being normalised.
2. :func:`optimal_weights` gives the minimal-norm convex combination of
   the orthogonal family in closed form, ``lam_k`` proportional to
   ``1 / |gt_k|^2``.
3. :func:`plan_step` forms ``direction = sum_k lam_k gt_k`` and the step
   ``eta = sum_k 1 / |gt_k|^2``.  With these, every retained client sees the
   directional derivative ``g_k . direction = r_k / eta``, so the applied
   step ``eta * direction`` changes each loss at the first-order rate
   ``r_k``.

FedAvg and a naive averaged-Newton step are provided as baselines.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .errors import AllClientsDegenerate, DimensionMismatch, EmptyInput, ZeroNormBasisVector

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10      # relative to |g_k|
DENOMINATOR_TOL = 1e-12   # absolute
REORTH_TOL = 1e-10        # cosine between residual and earlier basis vectors


@dataclass(eq=False)
class OrthoBasis:
    """Retained clients, in processing order, with their basis vectors."""

    vectors: List[np.ndarray]
    denominators: List[float]
    client_ids: List[int]
    grads: List[np.ndarray]
    rates: List[float]
    dropped: List[int] = field(default_factory=list)
    dropped_grads: List[np.ndarray] = field(default_factory=list)
    negative: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.vectors)

    def sq_norms(self) -> np.ndarray:
        return np.array([float(v @ v) for v in self.vectors])


@dataclass(frozen=True, eq=False)
class AggregationPlan:
    lambdas: np.ndarray
    direction: np.ndarray
    eta: float
    eta_applied: float
    per_client_rate: np.ndarray
    client_ids: List[int]
    dropped: List[int] = field(default_factory=list)
    dropped_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def clipped(self, clip: Optional[float]) -> "AggregationPlan":
        return replace(self, eta_applied=step_size(self.eta, clip))


def step_size(eta, clip=None) -> float:
    return float(eta) if clip is None else float(min(eta, clip))


def orthogonalize(grads: Sequence, rates: Sequence[float], client_ids=None) -> OrthoBasis:
    """Rate-scaled Gram-Schmidt over clients in ascending ``client_ids`` order.

    A client is dropped when its residual is below ``1e-10 * |g_k|`` (linear
    dependence) or its denominator is below ``1e-12`` in magnitude.  Negative
    denominators are kept and reported in ``negative``.
    """
    if len(grads) == 0:
        raise EmptyInput("no client gradients")
    if len(grads) != len(rates):
        raise DimensionMismatch(f"{len(grads)} gradients but {len(rates)} rates")
    if client_ids is None:
        client_ids = list(range(len(grads)))
    elif len(client_ids) != len(grads):
        raise DimensionMismatch("client_ids length differs from grads")

    basis = OrthoBasis([], [], [], [], [])
    sq = []  # |gt_i|^2 of retained vectors
    for pos in sorted(range(len(grads)), key=lambda j: client_ids[j]):
        cid = client_ids[pos]
        g = np.asarray(grads[pos], dtype=np.float64)
        if basis.vectors and g.shape != basis.vectors[0].shape:
            raise DimensionMismatch("gradients differ in length")
        resid = g.copy()
        coeff_sum = 0.0
        for v, vv in zip(basis.vectors, sq):
            c = float(resid @ v) / vv
            resid -= c * v
            coeff_sum += c
        gnorm = float(np.linalg.norm(g))
        rnorm = float(np.linalg.norm(resid))
        if basis.vectors and rnorm > 0:
            worst = max(abs(float(resid @ v)) / (rnorm * np.sqrt(vv))
                        for v, vv in zip(basis.vectors, sq))
            if worst > REORTH_TOL:
                # second pass, classical Gram-Schmidt against the same basis
                cs = [float(resid @ v) / vv for v, vv in zip(basis.vectors, sq)]
                for c, v in zip(cs, basis.vectors):
                    resid -= c * v
                coeff_sum += sum(cs)
                rnorm = float(np.linalg.norm(resid))
        denom = float(rates[pos]) - coeff_sum
        if rnorm <= RESIDUAL_TOL * gnorm or not rnorm > 0:
            log.info("client %s dropped: gradient is linearly dependent", cid)
            basis.dropped.append(cid)
            basis.dropped_grads.append(g)
            continue
        if abs(denom) < DENOMINATOR_TOL:
            log.info("client %s dropped: denominator %.3g vanishes", cid, denom)
            basis.dropped.append(cid)
            basis.dropped_grads.append(g)
            continue
        if denom < 0:
            log.warning("client %s has a negative rate denominator %.3g", cid, denom)
            basis.negative.append(cid)
        v = resid / denom
        basis.vectors.append(v)
        sq.append(float(v @ v))
        basis.denominators.append(denom)
        basis.client_ids.append(cid)
        basis.grads.append(g)
        basis.rates.append(float(rates[pos]))
    if not basis.vectors:
        raise AllClientsDegenerate(f"all {len(grads)} clients were dropped")
    return basis


def optimal_weights(basis: OrthoBasis) -> np.ndarray:
    """Closed-form minimal-norm convex weights for an orthogonal family."""
    sq = basis.sq_norms()
    if len(sq) == 0:
        raise EmptyInput("empty basis")
    if not np.all(sq > 0):
        raise ZeroNormBasisVector("basis contains a zero vector")
    inv = 1.0 / sq
    return inv / inv.sum()


def plan_step(basis: OrthoBasis, lambdas=None) -> AggregationPlan:
    if lambdas is None:
        lambdas = optimal_weights(basis)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.shape != (len(basis),):
        raise DimensionMismatch(f"{lambdas.size} weights for {len(basis)} basis vectors")
    direction = lambdas @ np.asarray(basis.vectors)
    eta = float(np.sum(1.0 / basis.sq_norms()))
    per_client = np.array([float(g @ direction) for g in basis.grads])
    dropped_rate = np.array([float(g @ direction) for g in basis.dropped_grads])
    return AggregationPlan(
        lambdas=lambdas,
        direction=direction,
        eta=eta,
        eta_applied=eta,
        per_client_rate=per_client,
        client_ids=list(basis.client_ids),
        dropped=list(basis.dropped),
        dropped_rate=dropped_rate,
    )


def guard_dropped(plan: AggregationPlan) -> AggregationPlan:
    """Zero the applied step if the direction ascends for a dropped client.

    Clients are dropped when their gradient is (numerically) a combination of
    the retained ones, which happens as the participants approach a
    Pareto-stationary point.  The retained clients' direction then carries no
    descent guarantee for the dropped ones, so the round makes no move.
    """
    if plan.dropped_rate.size and plan.dropped_rate.min() < 0:
        log.info("direction ascends for dropped clients %s; step set to zero", plan.dropped)
        return replace(plan, eta_applied=0.0)
    return plan


def dqnfed_plan(grads, rates, client_ids=None) -> AggregationPlan:
    """orthogonalize -> optimal_weights -> plan_step in one call."""
    basis = orthogonalize(grads, rates, client_ids)
    return plan_step(basis, optimal_weights(basis))


def apply_global_step(theta, plan: AggregationPlan, clip=None) -> np.ndarray:
    """``theta - min(eta, clip) * direction``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != plan.direction.shape:
        raise DimensionMismatch("theta and direction differ in length")
    return theta - step_size(plan.eta, clip) * plan.direction


def smoothness_clip(smoothness: Sequence[Optional[float]], rates: Sequence[float]) -> Optional[float]:
    """Sufficient-decrease step bound ``(2 / L) * min_k r_k``.

    ``L`` is estimated as the largest ``|y|/|s|`` reported by any client.
    Returns None when no client observed a displacement.
    """
    known = [s for s in smoothness if s is not None and s > 0]
    if not known:
        return None
    return 2.0 / max(known) * float(min(rates))


def fedavg_aggregate(reports, theta, lr) -> np.ndarray:
    """Sample-weighted gradient average step."""
    if not reports:
        raise EmptyInput("no client reports")
    w = np.array([r.num_samples for r in reports], dtype=np.float64)
    g = (w / w.sum()) @ np.asarray([r.grad for r in reports])
    return np.asarray(theta, dtype=np.float64) - lr * g


def newton_avg_aggregate(reports, theta, lr) -> np.ndarray:
    """Unweighted mean of per-client quasi-Newton directions."""
    if not reports:
        raise EmptyInput("no client reports")
    if any(r.direction is None for r in reports):
        raise ValueError("every report needs a quasi-Newton direction")
    d = np.mean(np.asarray([r.direction for r in reports]), axis=0)
    return np.asarray(theta, dtype=np.float64) - lr * d
