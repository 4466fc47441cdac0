"""scikit-learn style wrappers around profile fitting and scheduling."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import MgConfig
from .mgmodel import DRP_OFF, RiskSpec
from .pipeline import SolverChoice, run_case, run_step3_wcdrc, run_step5_drp_wcdrc
from .scenarios import (DistributionSpec, HourlyProfileSpec, Kind, fit_moments, sample_many)
from .validation import check_history, check_lambda, check_scenarios


class HourlyProfileFitter(BaseEstimator):
    """Fit one distribution per hour by matching moments.

    ``X`` holds one day per row.  For ``kind="beta"`` the rows are capacity
    factors on ``[a, b]``; constant hours (no spread, e.g. PV at night) are
    stored as a degenerate Normal.
    """

    def __init__(self, kind: str = "normal", a: float = 0.0, b: float = 1.0, scale: float = 1.0):
        self.kind = kind
        self.a = a
        self.b = b
        self.scale = scale

    def fit(self, X, y=None):
        X = check_history(X)
        kind = Kind(self.kind)
        specs = []
        for col in X.T:
            if np.ptp(col) == 0.0:
                specs.append(DistributionSpec.normal(float(col[0]), 0.0))
            else:
                specs.append(fit_moments(col, kind, self.a, self.b))
        self.profile_ = HourlyProfileSpec(tuple(specs), self.scale)
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_days: int = 1, random_state: Optional[int] = None) -> np.ndarray:
        check_is_fitted(self, "profile_")
        rng = np.random.default_rng(random_state)
        return np.column_stack([sample_many(h, n_days, rng) for h in self.profile_.hours])

    def score_samples(self, X) -> np.ndarray:
        """Log density of each day under the fitted hourly marginals."""
        check_is_fitted(self, "profile_")
        X = check_history(X, self.n_features_in_) if len(X) > 1 else np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for t, h in enumerate(self.profile_.hours):
            if h.kind == Kind.NORMAL and h.sigma2 == 0:
                out += np.where(X[:, t] == h.mu, 0.0, -np.inf)
                continue
            with np.errstate(divide="ignore"):
                out += np.log([_safe_pdf(h, v) for v in X[:, t]])
        return out


def _safe_pdf(h: DistributionSpec, v: float) -> float:
    lo, hi = h.support()
    return h.pdf(v) if lo <= v <= hi else 0.0


class RiskConstrainedScheduler(BaseEstimator):
    """Day-ahead schedule for a scenario set.

    ``fit`` solves the risk-free problem; with ``risk="cdrc"`` it then
    re-solves with the expected shortfall limited to ``lambda_p`` times the
    risk-free value.  ``predict`` returns per-scenario profits and ``score``
    the expected profit.
    """

    def __init__(self, config: Optional[MgConfig] = None, mode: str = DRP_OFF,
                 risk: str = "wcdrc", lambda_p: float = 1.0, target: Optional[float] = None,
                 solver: str = "internal", solver_command: Optional[str] = None):
        self.config = config
        self.mode = mode
        self.risk = risk
        self.lambda_p = lambda_p
        self.target = target
        self.solver = solver
        self.solver_command = solver_command

    def fit(self, X, y=None):
        cfg = self.config or MgConfig()
        scen = check_scenarios(X, cfg)
        solver = SolverChoice(self.solver, self.solver_command)
        step = run_step5_drp_wcdrc if self.mode != DRP_OFF else run_step3_wcdrc
        base = step(cfg, scen, solver, self.target)
        self.target_ = base.target
        self.edr_baseline_ = base.edr_baseline
        if self.risk == "wcdrc":
            run = base.run
        elif self.risk == "cdrc":
            spec = RiskSpec.cdrc(check_lambda(self.lambda_p), base.target, base.edr_baseline)
            run = run_case(cfg, scen, self.mode, spec, solver)
        else:
            raise ValueError(f"risk must be 'wcdrc' or 'cdrc', got {self.risk!r}")
        if run.risks is None:
            run = run.with_target(base.target)
        self.result_ = run
        self.schedule_ = run.schedule
        self.profits_ = run.profits
        self.risks_ = run.risks
        self.edr_ = run.edr
        self.audit_ = run.audit
        return self

    def predict(self, X=None) -> np.ndarray:
        check_is_fitted(self, "profits_")
        return self.profits_.copy()

    def score(self, X=None, y=None) -> float:
        check_is_fitted(self, "profits_")
        return self.result_.avg_profit
