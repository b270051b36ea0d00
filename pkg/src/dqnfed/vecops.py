"""Small dense linear-algebra helpers shared by every other module.

Parameter vectors are 1-D float64 numpy arrays; symmetric matrices are 2-D
float64 arrays.  Functions never modify their inputs.
"""

from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue, ZeroVector

# |u|^2 below this is treated as the zero vector
ZERO_NORM_SQ = 1e-24


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def check_finite(v, what="vector"):
    if not np.all(np.isfinite(v)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return v


def dot(u, v) -> float:
    u, v = as_vector(u), as_vector(v)
    if u.shape != v.shape:
        raise DimensionMismatch(f"length {u.size} vs {v.size}")
    return float(u @ v)


def norm(v) -> float:
    return float(np.linalg.norm(as_vector(v)))


def project(v, u) -> np.ndarray:
    """Projection of ``v`` onto the line spanned by ``u``."""
    v, u = as_vector(v), as_vector(u)
    if u.shape != v.shape:
        raise DimensionMismatch(f"length {v.size} vs {u.size}")
    uu = float(u @ u)
    if uu < ZERO_NORM_SQ:
        raise ZeroVector(f"cannot project onto a vector with |u|^2={uu:g}")
    return (float(v @ u) / uu) * u


def lincomb(coeffs: Sequence[float], vectors: Sequence) -> np.ndarray:
    """Return ``sum_i coeffs[i] * vectors[i]``."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 1 or coeffs.size != len(vectors):
        raise DimensionMismatch(f"{coeffs.size} coefficients for {len(vectors)} vectors")
    if coeffs.size == 0:
        raise DimensionMismatch("empty combination has no dimension")
    if len({np.shape(v) for v in vectors}) != 1:
        raise DimensionMismatch("vectors do not share a common length")
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionMismatch("vectors do not share a common length")
    return coeffs @ mat


def is_symmetric(a, rtol=1e-12) -> bool:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = np.maximum(1.0, np.abs(a))
    return bool(np.all(np.abs(a - a.T) <= rtol * scale))


def symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + a.T)


def relative_error(actual, expected, floor=1e-300) -> float:
    """Norm-wise relative error ``|a - e| / max(|a|, |e|)``."""
    a = np.asarray(actual, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(e)), floor)
    return float(np.linalg.norm(a - e)) / scale
