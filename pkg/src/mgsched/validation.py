"""Input checks shared by the CLI, the pipeline and the estimators."""
from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np
from sklearn.utils.validation import check_array

from .config import ConfigError, MgConfig
from .scenarios import ScenarioSet


def check_history(X, horizon: int = 24, nonnegative: bool = False) -> np.ndarray:
    """Daily history as a 2-D float array of shape (n_days, horizon)."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=2)
    if X.shape[1] != horizon:
        raise ValueError(f"expected {horizon} hourly columns, got {X.shape[1]}")
    if nonnegative and np.any(X < 0):
        raise ValueError("history contains negative values")
    return X


def check_lambda(value: float) -> float:
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {value}")
    return value


def check_grid(values: Iterable[float], lo: float, hi: float, name: str,
               open_low: bool = False) -> Tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if not out:
        raise ValueError(f"{name} grid is empty")
    for v in out:
        if (v <= lo if open_low else v < lo) or v > hi:
            raise ValueError(f"{name} value {v} outside {'(' if open_low else '['}{lo}, {hi}]")
    return out


def parse_grid(text: str) -> Tuple[float, ...]:
    """Comma-separated numbers, e.g. ``"0.99,0.9,0.7"``."""
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"cannot parse grid {text!r}") from None


def check_horizon(h: int) -> int:
    if not 1 <= int(h) <= 24:
        raise ConfigError(f"horizon must be in 1..24, got {h}")
    return int(h)


def check_scenarios(scen: ScenarioSet, cfg: MgConfig) -> ScenarioSet:
    if scen.horizon < cfg.horizon:
        raise ValueError(f"scenarios cover {scen.horizon} h, configuration needs {cfg.horizon}")
    if scen.n_pv != cfg.n_pv or scen.n_wt != cfg.n_wt:
        raise ValueError("scenario unit counts do not match the configuration")
    for k, sc in enumerate(scen):
        for name in ("load", "price_sell", "price_buy", "pv_max", "wt_max"):
            arr = getattr(sc, name)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"scenario {k + 1}: {name} must be finite and >= 0")
    return scen
