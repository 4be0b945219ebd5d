"""Parameter-wise personalization: grow a client's mask by update magnitude."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import DimensionError, as_mask, as_vector, elementwise_mul, mask_complement, top_k_indices


@dataclass(frozen=True)
class PersonalizationConfig:
    """``rate`` is the fraction of d nominated per round, ``budget`` the cap on
    the personalized fraction. Both are fractions of the full dimension."""

    rate: float
    budget: float

    def __post_init__(self):
        for name in ("rate", "budget"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")

    def candidate_count(self, d: int) -> int:
        return math.floor(self.rate * d)

    def budget_count(self, d: int) -> int:
        return math.floor(self.budget * d)


def param_diff(w_before, w_after) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(|w_before - w_after|, w_before - w_after)``."""
    a = as_vector(w_before)
    b = as_vector(w_after)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    delta = a - b
    return np.abs(delta), delta


def update_mask(m_old, delta_abs, cfg: PersonalizationConfig) -> np.ndarray:
    """Set the top-``rate`` coordinates of ``delta_abs``, never exceeding budget.

    Bits already set stay set and do not count against the additions. When
    the budget cannot fit every new candidate, the largest ones win.
    """
    m_old = as_mask(m_old)
    delta_abs = as_vector(delta_abs)
    if m_old.shape != delta_abs.shape:
        raise DimensionError("mask and delta must have equal length")
    d = m_old.shape[0]
    budget = cfg.budget_count(d)
    used = int(np.count_nonzero(m_old))
    if used > budget:
        raise ValueError(f"mask already holds {used} bits, budget is {budget}")

    candidates = top_k_indices(delta_abs, cfg.candidate_count(d))
    fresh = candidates[m_old[candidates] == 0]
    out = m_old.copy()
    out[fresh[: budget - used]] = 1
    return out


def split_model(w, m) -> tuple[np.ndarray, np.ndarray]:
    """Partition ``w`` into (personalized, shared) parts that sum back to ``w``."""
    return elementwise_mul(w, m), elementwise_mul(w, mask_complement(m))
