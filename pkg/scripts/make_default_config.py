"""Regenerate src/mgsched/data/default_config.json (the bundled synthetic dataset).

Hourly shapes are hand-made: a residential load with an evening peak, a
three-level price curve, bell-shaped PV capacity factors and moderate wind.
"""
import json
import math
import sys
from pathlib import Path

from mgsched.config import MgConfig, save_config
from mgsched.drp import DrpParams
from mgsched.scenarios import DistributionSpec, HourlyProfileSpec

LOAD = [14, 13, 12, 12, 13, 15, 18, 21, 22, 21, 20, 20,
        20, 19, 19, 20, 22, 25, 28, 29, 27, 23, 19, 16]
PRICE = [0.09, 0.08, 0.08, 0.08, 0.09, 0.11, 0.16, 0.21, 0.24, 0.25, 0.25, 0.24,
         0.23, 0.22, 0.22, 0.23, 0.26, 0.31, 0.35, 0.35, 0.32, 0.25, 0.16, 0.11]
WIND_C = [9.5, 9.6, 9.8, 9.7, 9.4, 9.0, 8.6, 8.2, 7.9, 7.7, 7.6, 7.6,
          7.8, 8.0, 8.2, 8.5, 8.8, 9.0, 9.2, 9.3, 9.4, 9.4, 9.5, 9.5]


def pv_spec(t):
    # daylight between 06:00 and 19:00, peak capacity factor 0.75 at 12:30
    if t < 6 or t > 18:
        return DistributionSpec.normal(0.0, 0.0)
    cf = 0.75 * math.sin(math.pi * (t - 5.5) / 14.0)
    conc = 20.0
    return DistributionSpec.beta_dist(cf * conc, (1 - cf) * conc)


def build(first_stage=("dgr", "bess")):
    profiles = {
        "load": HourlyProfileSpec([DistributionSpec.normal(m, (0.05 * m) ** 2) for m in LOAD]),
        "price": HourlyProfileSpec([DistributionSpec.normal(p, (0.3 * p) ** 2) for p in PRICE]),
    }
    for i in range(6):
        profiles[f"pv_{i + 1}"] = HourlyProfileSpec([pv_spec(t) for t in range(24)], 8.0)
    for j in range(2):
        profiles[f"wt_{j + 1}"] = HourlyProfileSpec(
            [DistributionSpec.weibull(3.0, c) for c in WIND_C], 21.0)
    drp = DrpParams(participation=0.25, incentive=(0.02,) * 24, rho0=tuple(PRICE))
    return MgConfig(drp=drp, first_stage=tuple(first_stage), profiles=profiles)


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parents[1] / "src" / "mgsched" / "data" / "default_config.json"
    save_config(build(), out)
    print(out)
