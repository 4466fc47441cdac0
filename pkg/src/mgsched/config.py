"""Microgrid parameters and their JSON representation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from .drp import DrpParams
from .scenarios import HourlyProfileSpec, profiles_from_dict, profiles_to_dict


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class DgrParams:
    b_g: float
    p_max: float
    up_rate: float
    down_rate: float
    c_g: float = 0.0
    p_min: float = 0.0
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    initial_on: bool = False
    initial_power: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError(f"DGR needs 0 <= p_min <= p_max, got {self.p_min}, {self.p_max}")
        if self.up_rate < 0 or self.down_rate < 0:
            raise ConfigError("ramp rates must be nonnegative")
        if min(self.b_g, self.c_g, self.startup_cost, self.shutdown_cost) < 0:
            raise ConfigError("DGR costs must be nonnegative")
        if not 0 <= self.initial_power <= (self.p_max if self.initial_on else 0.0):
            raise ConfigError("initial_power must be 0 when off and within [0, p_max] when on")


@dataclass(frozen=True)
class BessParams:
    soc_min: float = 0.2
    soc_max: float = 1.0
    soc_init: float = 0.7
    p_ch_max: float = 50.0
    p_disch_max: float = 50.0
    eta_ch: float = 1.0
    eta_disch: float = 1.0
    s_base: float = 50.0

    def __post_init__(self):
        if not 0 <= self.soc_min <= self.soc_init <= self.soc_max <= 1:
            raise ConfigError("BESS needs 0 <= soc_min <= soc_init <= soc_max <= 1")
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_disch <= 1):
            raise ConfigError("BESS efficiencies must lie in (0, 1]")
        if self.p_ch_max < 0 or self.p_disch_max < 0:
            raise ConfigError("BESS power limits must be nonnegative")
        if self.s_base <= 0:
            raise ConfigError("s_base must be positive")


@dataclass(frozen=True)
class GridParams:
    mctl: float = 37.5

    def __post_init__(self):
        if not self.mctl > 0:
            raise ConfigError("mctl must be positive")


FIRST_STAGE_GROUPS = ("dgr", "bess", "grid")


def default_dgrs() -> Tuple[DgrParams, ...]:
    return (DgrParams(0.7, 4.0, 3.0, 3.0), DgrParams(0.25, 6.0, 5.0, 5.0),
            DgrParams(0.5, 9.0, 8.0, 8.0))


@dataclass(frozen=True)
class MgConfig:
    """Six-bus microgrid.

    PV units ``1..n_pv_bus1`` sit on bus 1 and the rest on bus 2, the WTs on
    bus 3, DGR ``g`` on bus ``3 + g`` and the BESS together with the load on
    bus 6.  ``first_stage`` lists decision groups that must be identical in
    every scenario (a here-and-now schedule); the empty default keeps every
    decision scenario specific.
    """

    dgrs: Tuple[DgrParams, ...] = field(default_factory=default_dgrs)
    pv_capacity: Tuple[float, ...] = (8.0,) * 6
    n_pv_bus1: int = 4
    wt_capacity: Tuple[float, ...] = (21.0, 21.0)
    bess: BessParams = BessParams()
    grid: GridParams = GridParams()
    drp: DrpParams = field(default_factory=DrpParams)
    horizon: int = 24
    first_stage: Tuple[str, ...] = ()
    profiles: Optional[Dict[str, HourlyProfileSpec]] = field(default=None, compare=False)
    n_scenarios: int = 5
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "dgrs", tuple(self.dgrs))
        object.__setattr__(self, "pv_capacity", tuple(float(c) for c in self.pv_capacity))
        object.__setattr__(self, "wt_capacity", tuple(float(c) for c in self.wt_capacity))
        object.__setattr__(self, "first_stage", tuple(self.first_stage))
        if len(self.dgrs) != 3:
            raise ConfigError(f"the six-bus layout has 3 DGRs, got {len(self.dgrs)}")
        if not 0 <= self.n_pv_bus1 <= len(self.pv_capacity):
            raise ConfigError("n_pv_bus1 out of range")
        if any(c < 0 for c in self.pv_capacity + self.wt_capacity):
            raise ConfigError("installed capacities must be nonnegative")
        if not 1 <= self.horizon <= 24:
            raise ConfigError("horizon must be in 1..24")
        if self.drp.horizon < self.horizon:
            raise ConfigError("DRP vectors shorter than the horizon")
        bad = set(self.first_stage) - set(FIRST_STAGE_GROUPS)
        if bad:
            raise ConfigError(f"unknown first_stage groups {sorted(bad)}")
        if self.n_scenarios < 1:
            raise ConfigError("n_scenarios must be >= 1")
        if self.profiles is not None:
            self._check_profiles()

    def _check_profiles(self):
        p = self.profiles
        need = {"load"} | {f"pv_{i + 1}" for i in range(self.n_pv)} | \
            {f"wt_{j + 1}" for j in range(self.n_wt)}
        missing = need - set(p)
        if "price" not in p and not {"price_sell", "price_buy"} <= set(p):
            missing.add("price")
        if missing:
            raise ConfigError(f"profiles missing {sorted(missing)}")
        for i, cap in enumerate(self.pv_capacity):
            if abs(p[f"pv_{i + 1}"].scale - cap) > 1e-9:
                raise ConfigError(f"pv_{i + 1} profile scale differs from its capacity")
        for j, cap in enumerate(self.wt_capacity):
            if abs(p[f"wt_{j + 1}"].scale - cap) > 1e-9:
                raise ConfigError(f"wt_{j + 1} profile scale differs from its capacity")

    @property
    def n_pv(self) -> int:
        return len(self.pv_capacity)

    @property
    def n_wt(self) -> int:
        return len(self.wt_capacity)

    def pv_bus(self, i: int) -> int:
        return 1 if i < self.n_pv_bus1 else 2

    def with_(self, **changes) -> "MgConfig":
        return replace(self, **changes)

    def with_participation(self, p: float) -> "MgConfig":
        return replace(self, drp=self.drp.with_participation(p))

    def to_dict(self) -> dict:
        out = {
            "dgrs": [asdict(g) for g in self.dgrs],
            "pv_capacity": list(self.pv_capacity),
            "n_pv_bus1": self.n_pv_bus1,
            "wt_capacity": list(self.wt_capacity),
            "bess": asdict(self.bess),
            "grid": asdict(self.grid),
            "drp": self.drp.to_dict(),
            "horizon": self.horizon,
            "first_stage": list(self.first_stage),
            "n_scenarios": self.n_scenarios,
            "seed": self.seed,
        }
        if self.profiles is not None:
            out["profiles"] = profiles_to_dict(self.profiles)
        return out

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "MgConfig":
        try:
            kw = {}
            if "dgrs" in d:
                kw["dgrs"] = tuple(DgrParams(**g) for g in d["dgrs"])
            for key in ("pv_capacity", "wt_capacity", "first_stage"):
                if key in d:
                    kw[key] = tuple(d[key])
            for key in ("n_pv_bus1", "horizon", "n_scenarios", "seed"):
                if key in d:
                    kw[key] = int(d[key])
            if "bess" in d:
                kw["bess"] = BessParams(**d["bess"])
            if "grid" in d:
                kw["grid"] = GridParams(**d["grid"])
            if "drp" in d:
                kw["drp"] = DrpParams.from_dict(d["drp"], base_dir)
            if "profiles" in d:
                kw["profiles"] = profiles_from_dict(d["profiles"])
            unknown = set(d) - set(cls.__dataclass_fields__) - {"description"}
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)}")
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path]) -> MgConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return MgConfig.from_dict(data, base_dir=path.parent)


def save_config(cfg: MgConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    tmp.replace(path)
    return path


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default_config.json"


def bundled_config() -> MgConfig:
    return load_config(default_config_path())
