"""Mask-aware adaptive momentum.

Adam-style updates where the personalized and shared coordinate groups each
own a separate pair of moment buffers and a separate step counter. A step in
one phase never touches the other phase's buffers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .models import NumericError
from .params import as_mask, mask_complement


class Phase(str, Enum):
    PERSONALIZED = "personalized"
    SHARED = "shared"


@dataclass(frozen=True)
class MamoState:
    u_pers: np.ndarray
    v_pers: np.ndarray
    u_shared: np.ndarray
    v_shared: np.ndarray
    step_pers: int = 0
    step_shared: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3
    # decay u, v at coordinates outside the phase mask instead of freezing them
    literal_decay: bool = False

    @classmethod
    def zeros(cls, d: int, **hyper) -> "MamoState":
        z = np.zeros(d)
        return cls(z, z.copy(), z.copy(), z.copy(), **hyper)

    def moments(self, phase: Phase) -> tuple[np.ndarray, np.ndarray, int]:
        if Phase(phase) is Phase.PERSONALIZED:
            return self.u_pers, self.v_pers, self.step_pers
        return self.u_shared, self.v_shared, self.step_shared


def phase_mask(m, phase: Phase) -> np.ndarray:
    """The coordinates a phase is allowed to move."""
    if Phase(phase) is Phase.PERSONALIZED:
        return as_mask(m).copy()
    return mask_complement(m)


def apply_step(
    state: MamoState, params, grad, m, phase: Phase
) -> tuple[np.ndarray, MamoState]:
    """One masked Adam step on ``params``; returns new params and state.

    Inputs are not modified. Raises NumericError on a non-finite gradient.
    """
    phase = Phase(phase)
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    h = phase_mask(m, phase).astype(bool)
    if params.shape != grad.shape or params.shape != h.shape:
        raise ValueError("params, grad and mask must have equal length")
    if not np.all(np.isfinite(grad[h])):
        raise NumericError("non-finite gradient in masked step")

    u, v, step = state.moments(phase)
    b1, b2 = state.beta1, state.beta2
    q = np.where(h, grad, 0.0)
    u_new = b1 * u + (1.0 - b1) * q
    v_new = b2 * v + (1.0 - b2) * (q * q)
    if not state.literal_decay:
        u_new = np.where(h, u_new, u)
        v_new = np.where(h, v_new, v)
    step += 1
    u_hat = u_new / (1.0 - b1**step)
    v_hat = v_new / (1.0 - b2**step)
    update = state.lr * u_hat / (np.sqrt(v_hat) + state.eps)
    new_params = np.where(h, params - update, params)

    if phase is Phase.PERSONALIZED:
        new_state = replace(state, u_pers=u_new, v_pers=v_new, step_pers=step)
    else:
        new_state = replace(state, u_shared=u_new, v_shared=v_new, step_shared=step)
    return new_params, new_state
