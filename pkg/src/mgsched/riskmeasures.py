"""Downside risk of profit and its expectation over scenarios."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

PROB_TOL = 1e-9


def downside_risk(profit: float, target: float) -> float:
    """Shortfall of ``profit`` below ``target`` (zero when the target is met)."""
    if not (math.isfinite(profit) and math.isfinite(target)):
        raise ValueError("profit and target must be finite")
    return max(0.0, target - profit)


def expected_downside_risk(risks: Sequence[float], probs: Sequence[float]) -> float:
    r = np.asarray(risks, dtype=float)
    p = np.asarray(probs, dtype=float)
    if r.shape != p.shape:
        raise ValueError("risks and probabilities differ in length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probabilities must be nonnegative and sum to 1, got {p.sum()!r}")
    return float(p @ r)


def edr_bound(lambda_p: float, edr_baseline: float) -> float:
    """Risk budget: a fraction ``lambda_p`` of the unconstrained expected risk."""
    if not 0.0 < lambda_p <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lambda_p}")
    if edr_baseline < 0:
        raise ValueError("baseline expected downside risk must be >= 0")
    return lambda_p * edr_baseline
