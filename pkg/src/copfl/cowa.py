"""Contribution scores and aggregation weights.

Each client gets two scores measured against the aggregate with that client
removed:

* direction novelty, ``1 - cos(client update, leave-one-out update)``
* prediction loss of the leave-one-out model on the client's own data

Their sum, normalized over clients, becomes the client's aggregation weight.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .models import LabeledBatch, ModelSpec, predict_loss
from .params import as_vector, cosine_similarity, is_degenerate

ALPHA_EPS = 1e-6
SUM_EPS = 1e-12


class DegenerateLeaveOneOut(ValueError):
    """A single client holds (almost) all the weight; nothing is left over."""


@dataclass(frozen=True)
class ContributionReport:
    client_id: int
    gamma_grad: float
    gamma_data: float
    gamma_total: float
    alpha: float


def _leave_one_out(total, own, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha < 1.0 - ALPHA_EPS:
        raise DegenerateLeaveOneOut(f"alpha={alpha!r} leaves no remainder")
    return (as_vector(total) - alpha * as_vector(own)) / (1.0 - alpha)


def leave_one_out_direction(delta_global, delta_n, alpha_n: float) -> np.ndarray:
    """Average update of the other clients, recovered from the weighted total."""
    return _leave_one_out(delta_global, delta_n, alpha_n)


def leave_one_out_model(w_global, w_n, alpha_n: float) -> np.ndarray:
    return _leave_one_out(w_global, w_n, alpha_n)


def gradient_score(delta_n, delta_loo) -> float:
    """In [0, 2]; 1 (neutral) when either direction is degenerate."""
    if is_degenerate(delta_n) or is_degenerate(delta_loo):
        return 1.0
    return 1.0 - cosine_similarity(delta_n, delta_loo)


def prediction_score(spec: ModelSpec, w_loo, client_train: LabeledBatch) -> float:
    return predict_loss(spec, w_loo, client_train)


def min_max_normalize(values: Sequence[float]) -> list[float]:
    """Rescale to [0, 1] across clients; a constant column maps to all ones."""
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo < SUM_EPS:
        return [1.0] * len(arr)
    return list((arr - lo) / (hi - lo))


def combine_and_normalize(
    reports: Sequence[tuple[float, float]],
    client_ids: Sequence[int] | None = None,
) -> list[ContributionReport]:
    """Sum the two scores per client and normalize onto the simplex.

    Falls back to uniform weights when every total is (numerically) zero.
    """
    if len(reports) == 0:
        raise ValueError("need at least one client report")
    if client_ids is None:
        client_ids = range(len(reports))
    totals = []
    for g, dscore in reports:
        if not (np.isfinite(g) and np.isfinite(dscore)):
            raise ValueError("contribution scores must be finite")
        if g < 0 or dscore < 0:
            raise ValueError(f"contribution scores must be >= 0, got ({g}, {dscore})")
        totals.append(g + dscore)
    s = sum(totals)
    if s < SUM_EPS:
        alphas = [1.0 / len(totals)] * len(totals)
    else:
        alphas = [t / s for t in totals]
    return [
        ContributionReport(int(cid), float(g), float(dd), float(t), float(a))
        for cid, (g, dd), t, a in zip(client_ids, reports, totals, alphas)
    ]
