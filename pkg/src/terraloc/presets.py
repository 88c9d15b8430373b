"""Named scenario presets.

Error-model magnitudes are calibration values chosen so the urban kilometer
course produces raw odometry RMSE in the tens of meters while the corrected
estimate stays in the single digits; they are tuning constants, not
measurements.
"""

from __future__ import annotations

import copy

from .harness import ScenarioConfig, config_from_dict

__all__ = ["PRESETS", "preset_dict", "build_preset"]


def _course(x_start: float, x_end: float, step: float, y: float, radius: float = 20.0):
    xs = []
    x = x_start
    while x <= x_end + 1e-9:
        xs.append([x, y, radius])
        x += step
    return xs


PRESETS: dict[str, dict] = {
    "urban_1km": {
        "name": "urban_1km",
        "world": {
            "extent": [0, 0, 1120, 260],
            "regions": [{"kind": "urban", "rect": [0, 0, 1120, 260]}],
            "urban_density": 1.2e-3,
        },
        "sensor": {"extent_m": 40, "noise_std_m": 0.05, "dropout": 0.02, "range_m": 30},
        "errors": {
            "odo_scale": 0.05,
            "odo_noise_per_sqrt_m": 0.5,
            "compass_bias_amp_rad": 0.19,
            "compass_bias_rate_rad_s": 0.02,
            "compass_noise_rad": 0.006,
        },
        "filter": {"odo_cov_std_m": 2.0},
        "mission": {
            "home": [60, 130],
            "waypoints": _course(260, 1060, 200, 130),
        },
        "run": {"battery_s": 2400},
    },
    "forest_1_4km": {
        "name": "forest_1_4km",
        "world": {
            "extent": [0, 0, 1520, 260],
            "regions": [{"kind": "forest", "rect": [0, 0, 1520, 260]}],
            "forest_density": 5.0e-3,
        },
        "sensor": {"extent_m": 40, "noise_std_m": 0.05, "dropout": 0.02, "range_m": 30},
        "errors": {
            "odo_scale": 0.035,
            "odo_noise_per_sqrt_m": 0.5,
            "compass_bias_amp_rad": 0.19,
            "compass_bias_rate_rad_s": 0.02,
            "compass_noise_rad": 0.006,
        },
        "filter": {"odo_cov_std_m": 2.0},
        "mission": {
            "home": [60, 130],
            "waypoints": _course(260, 1460, 240, 130),
        },
        "run": {"battery_s": 3200},
    },
    "openfield": {
        "name": "openfield",
        "world": {
            "extent": [0, 0, 900, 260],
            "regions": [{"kind": "open_field", "rect": [0, 0, 900, 260]}],
        },
        "sensor": {"extent_m": 40, "noise_std_m": 0.05, "dropout": 0.02, "range_m": 30},
        "errors": {
            "odo_scale": 0.05,
            "odo_noise_per_sqrt_m": 0.5,
            "compass_bias_amp_rad": 0.19,
            "compass_bias_rate_rad_s": 0.02,
            "compass_noise_rad": 0.006,
        },
        # no gradient evidence anywhere: the posterior stays one diffuse blob,
        # so the estimate is its plain weighted mean (k=1); the heaviest of 3
        # sectors of a structureless cloud would fabricate corrections
        "filter": {"odo_cov_std_m": 2.0, "k_clusters": 1},
        "mission": {
            "home": [60, 130],
            "waypoints": _course(260, 660, 200, 130),
            "search_size_m": 20,
            "search_timeout_s": 60,
        },
        "run": {"battery_s": 1500},
    },
    "recovery_32m": {
        "name": "recovery_32m",
        "world": {
            "extent": [0, 0, 440, 220],
            "regions": [{"kind": "urban", "rect": [0, 0, 440, 220]}],
            "urban_density": 2.0e-3,
        },
        "sensor": {"extent_m": 40, "noise_std_m": 0.05, "dropout": 0.02, "range_m": 30},
        "errors": {
            "odo_scale": 0.01,
            "odo_noise_per_sqrt_m": 0.15,
        },
        "filter": {"init_offset_m": [27.713, 16.0], "init_stddev_m": 15.0, "odo_cov_std_m": 1.5},
        "mission": {
            "home": [60, 110],
            "waypoints": _course(140, 380, 80, 110),
        },
        "run": {"battery_s": 1200},
    },
}


def preset_dict(name: str) -> dict:
    """Deep copy of a named preset's raw config dict."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def build_preset(name: str, **overrides) -> ScenarioConfig:
    """Materialize a preset as a validated ScenarioConfig."""
    data = preset_dict(name)
    for key, value in overrides.items():
        section, _, leaf = key.partition(".")
        if leaf:
            data.setdefault(section, {})[leaf] = value
        else:
            data[key] = value
    return config_from_dict(data)
