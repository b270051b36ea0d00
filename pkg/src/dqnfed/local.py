"""Client-side work: local epochs, curvature pairs and the quasi-Newton rate.

Two curvature engines are available.  ``two-loop`` keeps the most recent
``memory`` pairs and applies the limited-memory inverse-Hessian
approximation through the standard two-loop recursion.  ``dense`` keeps a
full direct Hessian approximation ``B`` (starting from the identity) updated
with the classical BFGS formula; its rate is ``g . solve(B, g)``.
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from . import model as _model
from . import rng as _rng
from .errors import (
    CurvatureRejected,
    DegenerateRate,
    DimensionMismatch,
    NonFiniteLoss,
    SingularDenominator,
)
from .vecops import symmetrize

log = logging.getLogger(__name__)

CURVATURE_EPS = 1e-10
RATE_FLOOR = 1e-12
DEFAULT_MEMORY = 10
MAX_DENSE_DIM = 512


@dataclass(frozen=True, eq=False)
class CurvaturePair:
    s: np.ndarray
    y: np.ndarray
    sy: float

    @classmethod
    def from_displacements(cls, s, y, eps=CURVATURE_EPS):
        """Build a pair, raising :class:`CurvatureRejected` if s.y is too small."""
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if s.shape != y.shape:
            raise DimensionMismatch("s and y differ in length")
        sy = float(s @ y)
        if not sy > eps * np.linalg.norm(s) * np.linalg.norm(y):
            raise CurvatureRejected(f"s.y = {sy:g} fails the curvature guard")
        return cls(s, y, sy)


def accept_pair(s, y, eps=CURVATURE_EPS) -> Optional[CurvaturePair]:
    """Like :meth:`CurvaturePair.from_displacements` but returns None on rejection."""
    try:
        return CurvaturePair.from_displacements(s, y, eps)
    except CurvatureRejected:
        return None


@dataclass(eq=False)
class ClientReport:
    client_id: int
    grad: np.ndarray
    rate: float
    num_samples: int
    loss_before: float
    loss_after: float
    direction: Optional[np.ndarray] = None  # quasi-Newton step H*g
    smoothness: Optional[float] = None      # max |y|/|s| seen this round
    degenerate: bool = False
    pairs: List[CurvaturePair] = field(default_factory=list)


class LocalResult(NamedTuple):
    final_params: np.ndarray
    pairs: List[CurvaturePair]
    grad: np.ndarray
    loss_before: float
    loss_after: float
    smoothness: Optional[float]


def _full(spec, params, data):
    loss, grad = _model.loss_and_grad(spec, params, data)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NonFiniteLoss("local loss or gradient is not finite")
    return loss, grad


def _ratio(s, y):
    ns = np.linalg.norm(s)
    return float(np.linalg.norm(y) / ns) if ns > 0 else None


def run_local_epochs(spec, theta_t, theta_prev, data, epochs=1, lr=0.1,
                     batch_size=None, seed=0) -> LocalResult:
    """Run ``epochs`` epochs of (mini-batch) gradient descent from ``theta_t``.

    Pairs follow the local iterate sequence ``theta_prev, theta_t, ...``: the
    pair for epoch ``e`` is the displacement between the iterates entering
    epochs ``e`` and ``e - 1``, so epoch 1 contributes the global-model pair
    and the final epoch's own displacement is not turned into a pair.  With
    ``theta_prev=None`` (first round) the epoch-1 pair is skipped.  Pairs that
    fail the curvature guard are dropped.  ``batch_size=None`` means full
    batch.  The returned gradient is the full-batch gradient at the final
    iterate.  ``smoothness`` is the largest ``|y|/|s|`` over every
    displacement observed, including the final epoch's.
    """
    theta = np.array(theta_t, dtype=np.float64)
    if theta_prev is not None and np.shape(theta_prev) != theta.shape:
        raise DimensionMismatch("theta_t and theta_prev differ in length")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if lr < 0:
        raise ValueError("lr must be nonnegative")
    n = len(data)
    gen = _rng.generator(seed) if batch_size is not None else None

    loss_before, grad = _full(spec, theta, data)
    pairs, ratios = [], []
    prev_theta, prev_grad = None, None
    if theta_prev is not None:
        prev_theta = np.asarray(theta_prev, dtype=np.float64)
        prev_grad = _full(spec, prev_theta, data)[1]

    for _ in range(epochs):
        if prev_theta is not None:
            s, y = theta - prev_theta, grad - prev_grad
            ratios.append(_ratio(s, y))
            pair = accept_pair(s, y)
            if pair is not None:
                pairs.append(pair)
        prev_theta, prev_grad = theta, grad
        if batch_size is None or batch_size >= n:
            theta = theta - lr * grad
        else:
            order = gen.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                batch = _model.Batch(data.features[idx], data.labels[idx])
                bloss, bgrad = _model.loss_and_grad(spec, theta, batch)
                if not np.isfinite(bloss):
                    raise NonFiniteLoss("mini-batch loss is not finite")
                theta = theta - lr * bgrad
        loss_after, grad = _full(spec, theta, data)

    ratios.append(_ratio(theta - prev_theta, grad - prev_grad))
    ratios = [r for r in ratios if r is not None]
    smooth = max(ratios) if ratios else None
    return LocalResult(theta, pairs, grad, loss_before, loss_after, smooth)


def bfgs_update_dense(B, pair: CurvaturePair, eps=CURVATURE_EPS) -> np.ndarray:
    """Direct BFGS update ``B - Bss'B/(s'Bs) + yy'/(s'y)``."""
    B = np.asarray(B, dtype=np.float64)
    s, y = pair.s, pair.y
    sy = float(s @ y)
    if not sy > eps * np.linalg.norm(s) * np.linalg.norm(y):
        raise CurvatureRejected(f"s.y = {sy:g} fails the curvature guard")
    Bs = B @ s
    sBs = float(s @ Bs)
    if not sBs > 0:
        raise SingularDenominator(f"s'Bs = {sBs:g}")
    return symmetrize(B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy)


def dense_hessian(pairs: Sequence[CurvaturePair], order) -> np.ndarray:
    """Fold ``pairs`` into ``B`` starting from the identity; rejected pairs are skipped."""
    if order > MAX_DENSE_DIM:
        raise ValueError(f"dense mode is limited to d <= {MAX_DENSE_DIM}")
    B = np.eye(order)
    for pair in pairs:
        try:
            B = bfgs_update_dense(B, pair)
        except (CurvatureRejected, SingularDenominator) as exc:
            log.debug("skipping curvature pair: %s", exc)
    return B


def lbfgs_apply(pairs: Sequence[CurvaturePair], g, memory=DEFAULT_MEMORY, h0=None) -> np.ndarray:
    """Two-loop recursion: the limited-memory inverse-Hessian approximation times ``g``.

    The initial matrix is ``gamma * I`` with ``gamma = s.y / y.y`` of the most
    recent pair unless ``h0`` fixes the scale (``h0=1.0`` gives the plain
    identity start).
    """
    q = np.array(g, dtype=np.float64)
    recent = list(pairs)[-memory:] if memory else []
    if not recent:
        return q if h0 is None else h0 * q
    alphas = []
    for p in reversed(recent):
        a = float(p.s @ q) / p.sy
        alphas.append(a)
        q -= a * p.y
    last = recent[-1]
    gamma = last.sy / float(last.y @ last.y) if h0 is None else h0
    r = gamma * q
    for p, a in zip(recent, reversed(alphas)):
        b = float(p.y @ r) / p.sy
        r += (a - b) * p.s
    return r


def quasi_newton_direction(g, pairs=(), B=None, memory=DEFAULT_MEMORY) -> np.ndarray:
    if B is not None:
        return np.linalg.solve(B, g)
    return lbfgs_apply(pairs, g, memory)


def rate_estimate(g, pairs=(), B=None, memory=DEFAULT_MEMORY, floor=RATE_FLOOR) -> float:
    """``g . (H g)`` with ``H`` the inverse-Hessian approximation.

    Raises :class:`DegenerateRate` when the result is not above ``floor``.
    """
    g = np.asarray(g, dtype=np.float64)
    rate = float(g @ quasi_newton_direction(g, pairs, B, memory))
    if not rate > floor:
        raise DegenerateRate(rate, floor)
    return rate


def run_client(client_id, spec, theta_t, theta_prev, data, epochs=1, lr=0.1,
               batch_size=None, seed=0, bfgs_mode="two-loop", memory=DEFAULT_MEMORY,
               want_direction=False) -> ClientReport:
    """One client's full round: local epochs, curvature, rate and report."""
    res = run_local_epochs(spec, theta_t, theta_prev, data, epochs, lr, batch_size, seed)
    B = dense_hessian(res.pairs, len(res.grad)) if bfgs_mode == "dense" else None
    degenerate = False
    try:
        rate = rate_estimate(res.grad, res.pairs, B, memory)
    except DegenerateRate as exc:
        log.warning("client %d: %s; using the floor", client_id, exc)
        rate, degenerate = RATE_FLOOR, True
    direction = quasi_newton_direction(res.grad, res.pairs, B, memory) if want_direction else None
    return ClientReport(
        client_id=client_id,
        grad=res.grad,
        rate=rate,
        num_samples=len(data),
        loss_before=res.loss_before,
        loss_after=res.loss_after,
        direction=direction,
        smoothness=res.smoothness,
        degenerate=degenerate,
        pairs=res.pairs,
    )

