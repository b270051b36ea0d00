"""Independent brute-force checkers.

None of these share code paths with the production aggregator or curvature
engines; they exist to be compared against them.
"""

from typing import Callable, List, NamedTuple, Sequence

import numpy as np

from .errors import CurvatureRejected, EmptyInput, NonFiniteValue


class MinNormResult(NamedTuple):
    weights: np.ndarray
    point: np.ndarray
    gap: float
    iterations: int
    objectives: List[float]


def frank_wolfe_min_norm(vectors: Sequence, max_iters=100_000, tol=1e-10) -> MinNormResult:
    """Minimal-norm point of the convex hull of ``vectors``.

    Away-step Frank-Wolfe over the probability simplex with exact line search
    along each segment.  Stops once the Frank-Wolfe duality gap
    ``2 * (p.p - min_i v_i.p)`` drops to ``tol``; otherwise returns the last
    iterate after ``max_iters``.
    """
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2 or len(V) == 0:
        raise EmptyInput("need at least one vector")
    K = len(V)
    lam = np.zeros(K)
    lam[int(np.argmin(np.einsum("ij,ij->i", V, V)))] = 1.0
    p = lam @ V
    objectives = [float(p @ p)]
    gap = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        scores = V @ p
        pp = float(p @ p)
        s = int(np.argmin(scores))
        gap = 2.0 * (pp - scores[s])
        if gap <= tol:
            break
        active = np.flatnonzero(lam > 0)
        a = int(active[np.argmax(scores[active])])
        away_gap = 2.0 * (scores[a] - pp)
        if gap >= away_gap or a == s:
            d = -lam.copy()
            d[s] += 1.0
            gmax = 1.0
        else:
            d = lam.copy()
            d[a] -= 1.0
            gmax = lam[a] / (1.0 - lam[a]) if lam[a] < 1.0 else np.inf
        u = d @ V
        uu = float(u @ u)
        if uu == 0.0:
            break
        step = min(max(-float(p @ u) / uu, 0.0), gmax)
        lam = lam + step * d
        lam[lam < 0] = 0.0
        if step == gmax and gmax != 1.0:
            lam[a] = 0.0
        lam /= lam.sum()
        p = lam @ V
        objectives.append(float(p @ p))
    return MinNormResult(lam, p, float(gap), it, objectives)


def dense_inverse_bfgs(pairs, order, eps=1e-10) -> np.ndarray:
    """Inverse-BFGS recurrence from ``H0 = I``.

    ``H <- (I - rho s y') H (I - rho y s') + rho s s'`` with ``rho = 1 / s.y``.
    """
    H = np.eye(order)
    eye = np.eye(order)
    for p in pairs:
        s = np.asarray(p.s, dtype=np.float64)
        y = np.asarray(p.y, dtype=np.float64)
        sy = float(s @ y)
        if not sy > eps * np.linalg.norm(s) * np.linalg.norm(y):
            raise CurvatureRejected(f"s.y = {sy:g}")
        rho = 1.0 / sy
        left = eye - rho * np.outer(s, y)
        H = left @ H @ left.T + rho * np.outer(s, s)
    return 0.5 * (H + H.T)


def finite_diff_grad(f: Callable, theta, h=1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.array(theta, dtype=np.float64)
    out = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        hi = f(x)
        x[i] = old - h
        lo = f(x)
        x[i] = old
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValue(f"f is not finite around coordinate {i}")
        out[i] = (hi - lo) / (2.0 * h)
    return out
