import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mgsched.estimators import HourlyProfileFitter, RiskConstrainedScheduler
from mgsched.scenarios import DistributionSpec, Kind, build_scenarios, sample_many


def _history(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    spec = DistributionSpec.beta_dist(2.0, 5.0)
    X = np.column_stack([sample_many(spec, n, rng) for _ in range(24)])
    X[:, :5] = 0.0  # night
    return X


def test_fitter_params_and_clone():
    f = HourlyProfileFitter(kind="beta", scale=8.0)
    assert f.get_params() == {"kind": "beta", "a": 0.0, "b": 1.0, "scale": 8.0}
    g = clone(f).set_params(scale=4.0)
    assert g.scale == 4.0 and f.scale == 8.0


def test_fitter_recovers_beta():
    f = HourlyProfileFitter(kind="beta", scale=8.0).fit(_history())
    prof = f.profile_
    assert prof.scale == 8.0 and len(prof.hours) == 24
    assert prof.hours[0].kind == Kind.NORMAL and prof.hours[0].sigma2 == 0.0
    assert prof.hours[10].alpha == pytest.approx(2.0, rel=0.1)
    assert prof.hours[10].beta == pytest.approx(5.0, rel=0.1)
    days = f.sample(3, random_state=1)
    assert days.shape == (3, 24) and np.array_equal(days, f.sample(3, random_state=1))
    ll = f.score_samples(days)
    assert ll.shape == (3,) and np.all(np.isfinite(ll))


def test_fitter_validation():
    with pytest.raises(NotFittedError):
        HourlyProfileFitter().sample(1)
    with pytest.raises(ValueError):
        HourlyProfileFitter().fit(np.ones((5, 23)))
    with pytest.raises(ValueError):
        HourlyProfileFitter().fit(np.ones((1, 24)))


def test_scheduler(small_cfg, small_scen):
    est = RiskConstrainedScheduler(config=small_cfg)
    assert clone(est).get_params()["mode"] == "drp_off"
    with pytest.raises(NotFittedError):
        est.predict()
    est.fit(small_scen)
    assert est.audit_.ok and est.target_ == pytest.approx(est.score())
    assert est.predict().shape == (1,)

    one = RiskConstrainedScheduler(config=small_cfg, risk="cdrc", lambda_p=1.0,
                                   target=est.target_ + 1.0).fit(small_scen)
    assert one.edr_ == pytest.approx(1.0, abs=1e-6)


def test_scheduler_cdrc(cfg):
    c = cfg.with_(horizon=6)
    scen = build_scenarios(c.profiles, 3, 42, horizon=6)
    cd = RiskConstrainedScheduler(config=c, risk="cdrc", lambda_p=0.8).fit(scen)
    assert cd.edr_ <= 0.8 * cd.edr_baseline_ + 1e-6 and cd.audit_.ok
    assert cd.score() <= RiskConstrainedScheduler(config=c).fit(scen).score() + 1e-9
    with pytest.raises(ValueError):
        RiskConstrainedScheduler(config=c, risk="cvar").fit(scen)
