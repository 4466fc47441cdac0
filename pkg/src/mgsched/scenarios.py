"""Uncertain inputs: Beta/Weibull renewables, Normal load and prices.

Each uncertain quantity is described per hour by a :class:`DistributionSpec`.
A day ahead scenario is one independent draw of every hour of every quantity;
``build_scenarios`` assembles ``S`` equiprobable scenarios from a fixed seed.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import special

HOURS = 24


class DomainError(ValueError):
    """Argument outside the support of a distribution or invalid parameters."""


class Kind(str, Enum):
    NORMAL = "normal"
    BETA = "beta"
    WEIBULL = "weibull"


@dataclass(frozen=True)
class DistributionSpec:
    kind: Kind
    mu: float = 0.0
    sigma2: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    a: float = 0.0
    b: float = 1.0
    k1: float = 1.0
    c1: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind == Kind.NORMAL:
            if not self.sigma2 >= 0:
                raise DomainError(f"variance must be >= 0, got {self.sigma2}")
        elif self.kind == Kind.BETA:
            if not (self.alpha > 0 and self.beta > 0):
                raise DomainError(f"Beta shape parameters must be > 0, got "
                                  f"({self.alpha}, {self.beta})")
            if not self.b > self.a:
                raise DomainError(f"Beta support needs b > a, got [{self.a}, {self.b}]")
        elif not (self.k1 > 0 and self.c1 > 0):
            raise DomainError(f"Weibull parameters must be > 0, got ({self.k1}, {self.c1})")

    @classmethod
    def normal(cls, mu: float, sigma2: float) -> "DistributionSpec":
        return cls(Kind.NORMAL, mu=mu, sigma2=sigma2)

    @classmethod
    def beta_dist(cls, alpha: float, beta: float, a: float = 0.0, b: float = 1.0):
        return cls(Kind.BETA, alpha=alpha, beta=beta, a=a, b=b)

    @classmethod
    def weibull(cls, k1: float, c1: float) -> "DistributionSpec":
        return cls(Kind.WEIBULL, k1=k1, c1=c1)

    def mean(self) -> float:
        if self.kind == Kind.NORMAL:
            return self.mu
        if self.kind == Kind.BETA:
            return self.a + (self.b - self.a) * self.alpha / (self.alpha + self.beta)
        return self.c1 * math.gamma(1 + 1 / self.k1)

    def variance(self) -> float:
        if self.kind == Kind.NORMAL:
            return self.sigma2
        if self.kind == Kind.BETA:
            s = self.alpha + self.beta
            return (self.b - self.a) ** 2 * self.alpha * self.beta / (s * s * (s + 1))
        g1 = math.gamma(1 + 1 / self.k1)
        return self.c1 ** 2 * (math.gamma(1 + 2 / self.k1) - g1 * g1)

    def support(self):
        if self.kind == Kind.BETA:
            return self.a, self.b
        if self.kind == Kind.WEIBULL:
            return 0.0, math.inf
        return -math.inf, math.inf

    def pdf(self, x: float) -> float:
        return {Kind.BETA: pdf_beta, Kind.WEIBULL: pdf_weibull,
                Kind.NORMAL: pdf_normal}[self.kind](x, self)

    def to_dict(self) -> Dict[str, float]:
        keys = {Kind.NORMAL: ("mu", "sigma2"), Kind.BETA: ("alpha", "beta", "a", "b"),
                Kind.WEIBULL: ("k1", "c1")}[self.kind]
        out = {"kind": self.kind.value}
        out.update({k: getattr(self, k) for k in keys})
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "DistributionSpec":
        d = dict(d)
        return cls(Kind(d.pop("kind")), **{k: float(v) for k, v in d.items()})


def pdf_beta(y: float, spec: DistributionSpec) -> float:
    """Four-parameter Beta density on ``[a, b]``."""
    if spec.kind != Kind.BETA:
        raise DomainError("pdf_beta needs a Beta spec")
    a, b, al, be = spec.a, spec.b, spec.alpha, spec.beta
    if not a <= y <= b:
        raise DomainError(f"y={y} outside the Beta support [{a}, {b}]")
    num = (y - a) ** (al - 1) * (b - y) ** (be - 1)
    return float(num / (special.beta(al, be) * (b - a) ** (al + be - 1)))


def pdf_weibull(v: float, spec: DistributionSpec) -> float:
    if spec.kind != Kind.WEIBULL:
        raise DomainError("pdf_weibull needs a Weibull spec")
    if v < 0:
        raise DomainError(f"Weibull density undefined for v={v} < 0")
    k, c = spec.k1, spec.c1
    r = v / c
    return float(k / c * r ** (k - 1) * math.exp(-(r ** k)))


def pdf_normal(q: float, spec: DistributionSpec) -> float:
    if spec.kind != Kind.NORMAL:
        raise DomainError("pdf_normal needs a Normal spec")
    if spec.sigma2 <= 0:
        raise DomainError("Normal density needs a strictly positive variance")
    s2 = spec.sigma2
    return float(math.exp(-((q - spec.mu) ** 2) / (2 * s2)) / math.sqrt(2 * math.pi * s2))


def sample_many(spec: DistributionSpec, n: int, rng: np.random.Generator,
                nonnegative: bool = False) -> np.ndarray:
    """``n`` independent draws.

    With ``nonnegative`` a negative Normal draw is redrawn once and then
    clamped at zero; Weibull and Beta draws are nonnegative already when
    ``a >= 0``.
    """
    if spec.kind == Kind.BETA:
        return spec.a + (spec.b - spec.a) * rng.beta(spec.alpha, spec.beta, size=n)
    if spec.kind == Kind.WEIBULL:
        return spec.c1 * rng.weibull(spec.k1, size=n)
    sd = math.sqrt(spec.sigma2)
    out = spec.mu + sd * rng.standard_normal(n)
    if nonnegative:
        neg = out < 0
        if neg.any():
            out[neg] = spec.mu + sd * rng.standard_normal(int(neg.sum()))
        np.maximum(out, 0.0, out=out)
    return out


def sample(spec: DistributionSpec, rng: np.random.Generator, nonnegative: bool = False) -> float:
    return float(sample_many(spec, 1, rng, nonnegative)[0])


def _weibull_cv2(k: float) -> float:
    g1 = special.gamma(1 + 1 / k)
    return special.gamma(1 + 2 / k) / (g1 * g1) - 1.0


def fit_moments(samples: Sequence[float], kind: Union[Kind, str], a: float = 0.0,
                b: float = 1.0) -> DistributionSpec:
    """Match the sample mean and (unbiased) variance.

    Beta uses the closed-form moment equations on ``[a, b]``; Weibull solves
    the coefficient-of-variation equation for the shape by bisection.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise DomainError("moment fitting needs at least two samples")
    kind = Kind(kind)
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if kind == Kind.NORMAL:
        return DistributionSpec.normal(mean, var)
    if kind == Kind.BETA:
        if not b > a:
            raise DomainError("Beta fit needs b > a")
        m = (mean - a) / (b - a)
        v = var / (b - a) ** 2
        if not 0 < m < 1 or v <= 0 or v >= m * (1 - m):
            raise DomainError(f"no Beta distribution on [{a}, {b}] has mean {mean} "
                              f"and variance {var}")
        common = m * (1 - m) / v - 1
        return DistributionSpec.beta_dist(m * common, (1 - m) * common, a, b)
    if mean <= 0 or var <= 0 or np.any(x < 0):
        raise DomainError("Weibull fit needs positive samples with nonzero spread")
    target = var / mean ** 2
    lo, hi = 0.05, 200.0
    if not _weibull_cv2(hi) < target < _weibull_cv2(lo):
        raise DomainError(f"coefficient of variation {math.sqrt(target):.4g} "
                          f"outside the Weibull range")
    # cv^2 decreases monotonically in the shape parameter
    while hi - lo > 1e-10 * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if _weibull_cv2(mid) > target:
            lo = mid
        else:
            hi = mid
    k = 0.5 * (lo + hi)
    return DistributionSpec.weibull(k, mean / special.gamma(1 + 1 / k))


@dataclass(frozen=True)
class HourlyProfileSpec:
    """One distribution per hour plus a scale.

    For renewables ``scale`` is the unit's installed capacity in kW: Beta
    draws are capacity factors multiplied by it, Weibull draws are already in
    kW and are clipped to ``[0, scale]``.  Load and price profiles use
    ``scale = 1``.
    """

    hours: tuple
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hours", tuple(self.hours))
        if len(self.hours) != HOURS:
            raise DomainError(f"hourly profile needs {HOURS} entries, got {len(self.hours)}")
        if not self.scale > 0:
            raise DomainError(f"profile scale must be > 0, got {self.scale}")

    def to_dict(self):
        return {"scale": self.scale, "hours": [h.to_dict() for h in self.hours]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HourlyProfileSpec":
        return cls(tuple(DistributionSpec.from_dict(h) for h in d["hours"]),
                   float(d.get("scale", 1.0)))


@dataclass
class Scenario:
    load: np.ndarray
    price_sell: np.ndarray
    price_buy: np.ndarray
    pv_max: np.ndarray
    wt_max: np.ndarray
    prob: float

    @property
    def horizon(self) -> int:
        return len(self.load)


@dataclass
class ScenarioSet:
    scenarios: List[Scenario]
    seed: Optional[int] = None
    shared_price: bool = True

    def __post_init__(self):
        if not self.scenarios:
            raise DomainError("a scenario set needs at least one scenario")
        total = sum(s.prob for s in self.scenarios)
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"scenario probabilities sum to {total!r}, not 1")

    def __len__(self):
        return len(self.scenarios)

    def __getitem__(self, i) -> Scenario:
        return self.scenarios[i]

    def __iter__(self):
        return iter(self.scenarios)

    @property
    def horizon(self) -> int:
        return self.scenarios[0].horizon

    @property
    def probs(self) -> np.ndarray:
        return np.array([s.prob for s in self.scenarios])

    @property
    def n_pv(self) -> int:
        return self.scenarios[0].pv_max.shape[0]

    @property
    def n_wt(self) -> int:
        return self.scenarios[0].wt_max.shape[0]

    def subset(self, idx: Sequence[int], renormalise: bool = True) -> "ScenarioSet":
        chosen = [self.scenarios[i] for i in idx]
        if renormalise:
            tot = sum(s.prob for s in chosen)
            chosen = [Scenario(s.load, s.price_sell, s.price_buy, s.pv_max, s.wt_max,
                               s.prob / tot) for s in chosen]
        return ScenarioSet(chosen, self.seed, self.shared_price)

    def truncated(self, horizon: int) -> "ScenarioSet":
        if not 1 <= horizon <= self.horizon:
            raise DomainError(f"horizon must be in 1..{self.horizon}")
        return ScenarioSet([Scenario(s.load[:horizon], s.price_sell[:horizon],
                                     s.price_buy[:horizon], s.pv_max[:, :horizon],
                                     s.wt_max[:, :horizon], s.prob) for s in self],
                           self.seed, self.shared_price)

    def equals(self, other: "ScenarioSet") -> bool:
        if len(self) != len(other):
            return False
        for p, q in zip(self, other):
            for f in ("load", "price_sell", "price_buy", "pv_max", "wt_max"):
                if not np.array_equal(getattr(p, f), getattr(q, f)):
                    return False
            if p.prob != q.prob:
                return False
        return True

    # CSV bundle -----------------------------------------------------------
    def to_csv_bundle(self, directory: Union[str, Path]) -> List[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        tables = {"load": np.stack([s.load for s in self], axis=1)}
        if self.shared_price:
            tables["price"] = np.stack([s.price_sell for s in self], axis=1)
        else:
            tables["price_sell"] = np.stack([s.price_sell for s in self], axis=1)
            tables["price_buy"] = np.stack([s.price_buy for s in self], axis=1)
        for i in range(self.n_pv):
            tables[f"pv_max_{i + 1}"] = np.stack([s.pv_max[i] for s in self], axis=1)
        for j in range(self.n_wt):
            tables[f"wt_max_{j + 1}"] = np.stack([s.wt_max[j] for s in self], axis=1)
        header = ["hour"] + [f"s{k + 1}" for k in range(len(self))]
        for name, arr in tables.items():
            written.append(_write_table(d / f"{name}.csv", header, arr))
        prob_path = d / "prob.csv"
        _atomic_write_rows(prob_path, [["scenario", "prob"]] +
                           [[f"s{k + 1}", repr(s.prob)] for k, s in enumerate(self)])
        written.append(prob_path)
        meta = {"seed": self.seed, "n_scenarios": len(self), "horizon": self.horizon,
                "shared_price": self.shared_price, "n_pv": self.n_pv, "n_wt": self.n_wt}
        meta_path = d / "meta.json"
        _atomic_write_text(meta_path, json.dumps(meta, indent=2) + "\n")
        written.append(meta_path)
        return written

    @classmethod
    def from_csv_bundle(cls, directory: Union[str, Path]) -> "ScenarioSet":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        load = _read_table(d / "load.csv")
        if meta["shared_price"]:
            sell = buy = _read_table(d / "price.csv")
        else:
            sell = _read_table(d / "price_sell.csv")
            buy = _read_table(d / "price_buy.csv")
        pv = [_read_table(d / f"pv_max_{i + 1}.csv") for i in range(meta["n_pv"])]
        wt = [_read_table(d / f"wt_max_{j + 1}.csv") for j in range(meta["n_wt"])]
        with open(d / "prob.csv", newline="") as fh:
            probs = [float(r["prob"]) for r in csv.DictReader(fh)]
        scen = []
        for k in range(load.shape[1]):
            scen.append(Scenario(load[:, k].copy(), sell[:, k].copy(), buy[:, k].copy(),
                                 np.array([p[:, k] for p in pv]).reshape(len(pv), -1),
                                 np.array([w[:, k] for w in wt]).reshape(len(wt), -1),
                                 probs[k]))
        return cls(scen, meta.get("seed"), meta["shared_price"])


def _atomic_write_rows(path: Path, rows) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\r\n").writerows(rows)
    tmp.replace(path)
    return path


def _atomic_write_text(path: Path, text: str) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return path


def _write_table(path: Path, header, arr: np.ndarray) -> Path:
    rows = [header] + [[str(t + 1)] + [repr(float(v)) for v in arr[t]] for t in range(arr.shape[0])]
    return _atomic_write_rows(path, rows)


def _read_table(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)


# --------------------------------------------------------------------------
def _unit_keys(profiles: Mapping[str, HourlyProfileSpec], prefix: str) -> List[str]:
    keys = [k for k in profiles if k.startswith(prefix + "_")]
    return sorted(keys, key=lambda k: int(k.rsplit("_", 1)[1]))


def build_scenarios(profiles: Mapping[str, HourlyProfileSpec], n_scenarios: int, seed: int,
                    horizon: int = HOURS, shared_price: Optional[bool] = None) -> ScenarioSet:
    """Draw ``n_scenarios`` equiprobable scenarios.

    ``profiles`` holds ``load``, either ``price`` (one draw per hour used as
    both buy and sell price) or ``price_sell`` and ``price_buy``, plus
    ``pv_1..pv_n`` and ``wt_1..wt_m``.  Scenario ``k`` uses its own random
    stream spawned from ``seed``, so the result is a pure function of the
    arguments.
    """
    if n_scenarios < 1:
        raise DomainError("n_scenarios must be >= 1")
    if not 1 <= horizon <= HOURS:
        raise DomainError(f"horizon must be in 1..{HOURS}")
    if "load" not in profiles:
        raise DomainError("profiles need a 'load' entry")
    if shared_price is None:
        shared_price = "price" in profiles
    if shared_price and "price" not in profiles:
        raise DomainError("shared-price mode needs a 'price' profile")
    if not shared_price and not {"price_sell", "price_buy"} <= set(profiles):
        raise DomainError("independent prices need 'price_sell' and 'price_buy' profiles")
    pv_keys = _unit_keys(profiles, "pv")
    wt_keys = _unit_keys(profiles, "wt")

    streams = np.random.SeedSequence(seed).spawn(n_scenarios)
    prob = 1.0 / n_scenarios
    out = []
    for k in range(n_scenarios):
        rng = np.random.Generator(np.random.PCG64(streams[k]))
        load = _draw_profile(profiles["load"], rng, horizon, physical=True)
        if shared_price:
            sell = _draw_profile(profiles["price"], rng, horizon, physical=True)
            buy = sell.copy()
        else:
            sell = _draw_profile(profiles["price_sell"], rng, horizon, physical=True)
            buy = _draw_profile(profiles["price_buy"], rng, horizon, physical=True)
        pv = np.array([_draw_res(profiles[key], rng, horizon) for key in pv_keys])
        wt = np.array([_draw_res(profiles[key], rng, horizon) for key in wt_keys])
        out.append(Scenario(load, sell, buy, pv.reshape(len(pv_keys), horizon),
                            wt.reshape(len(wt_keys), horizon), prob))
    # equal weights must sum to one exactly
    out[-1].prob = 1.0 - prob * (n_scenarios - 1)
    return ScenarioSet(out, seed, shared_price)


def _draw_profile(profile: HourlyProfileSpec, rng, horizon, physical) -> np.ndarray:
    vals = np.array([sample(profile.hours[t], rng, nonnegative=physical)
                     for t in range(horizon)])
    return vals * profile.scale


def _draw_res(profile: HourlyProfileSpec, rng, horizon) -> np.ndarray:
    vals = np.empty(horizon)
    for t in range(horizon):
        spec = profile.hours[t]
        v = sample(spec, rng, nonnegative=True)
        vals[t] = v * profile.scale if spec.kind == Kind.BETA else v
    return np.clip(vals, 0.0, profile.scale)


def profiles_from_dict(d: Mapping) -> Dict[str, HourlyProfileSpec]:
    return {k: HourlyProfileSpec.from_dict(v) for k, v in d.items()}


def profiles_to_dict(profiles: Mapping[str, HourlyProfileSpec]) -> Dict:
    return {k: v.to_dict() for k, v in profiles.items()}
