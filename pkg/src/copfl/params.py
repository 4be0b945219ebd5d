"""Flat parameter-vector and binary-mask arithmetic.

Every model is handled as one contiguous float64 vector of length ``d``;
masks are uint8 vectors of the same length with 1 marking a personalized
coordinate.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

NORM_EPS = 1e-12


class DimensionError(ValueError):
    """Raised when two vectors that must align have different lengths."""


def as_vector(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def as_mask(m) -> np.ndarray:
    arr = np.asarray(m)
    if arr.dtype != np.uint8:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask entries must be 0 or 1")
        arr = arr.astype(np.uint8)
    return arr


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def elementwise_mul(a, mask) -> np.ndarray:
    """Zero every coordinate of ``a`` whose mask bit is 0."""
    a = as_vector(a)
    mask = as_mask(mask)
    _check_same_length(a, mask)
    # where() instead of a*mask so that inf/nan outside the mask do not leak
    return np.where(mask.astype(bool), a, 0.0)


def mask_complement(m) -> np.ndarray:
    return (1 - as_mask(m)).astype(np.uint8)


def mask_union(masks: Sequence) -> np.ndarray:
    if len(masks) == 0:
        raise ValueError("mask_union needs at least one mask")
    arrs = [as_mask(m) for m in masks]
    out = arrs[0].copy()
    for m in arrs[1:]:
        _check_same_length(out, m)
        np.bitwise_or(out, m, out=out)
    return out


def popcount(m) -> int:
    return int(np.count_nonzero(as_mask(m)))


def is_degenerate(v) -> bool:
    """True when ``v`` has no usable direction (norm below NORM_EPS)."""
    return float(np.linalg.norm(as_vector(v))) < NORM_EPS


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1].

    A zero-norm input has no direction; the similarity is then defined as 0.
    Use :func:`is_degenerate` to tell that case apart from true orthogonality.
    """
    a = as_vector(a)
    b = as_vector(b)
    _check_same_length(a, b)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    cos = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, cos))


def top_k_indices(v, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries, largest first.

    Ties go to the lowest index, so the result is fully deterministic.
    """
    v = as_vector(v)
    if k < 0 or k > v.shape[0]:
        raise ValueError(f"k={k} outside [0, {v.shape[0]}]")
    if np.any(v < 0):
        raise ValueError("top_k_indices expects nonnegative magnitudes")
    order = np.argsort(-v, kind="stable")
    return order[:k]
