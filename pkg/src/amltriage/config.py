"""Run configuration: one YAML file drives every CLI stage."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .evaluation import EXPERIMENT_GBDT, GWD_THRESHOLDS, WINDOW_GRID
from .graph import WindowConfig
from .pipeline import FeatureConfig
from .synth import SynthConfig
from .walker import WalkConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


DEFAULTS: dict = {
    "seed": 0,
    "paths": {"input": None, "out": "out"},
    "synth": {k: v for k, v in SynthConfig().to_dict().items() if k != "seed"},
    "features": {
        "profiles": True,
        "select_profiles": True,
        "budget_fraction": 0.9,
        "degrees": True,
        "weighted_degrees": True,
        "gw": True,
        "gwd": False,
    },
    "window": {"twl_days": 60, "tws_days": 60, "label_delay_days": 0},
    "walk": {"num_walks": 50, "max_hops": 10},
    "gwd": {"threshold": 0.25},
    "train": {"n_trials": 50, "gbdt_rounds": 200, "families": ["gbdt", "rf", "glm"], "n_jobs": 1},
    "evaluate": {"fpr": 0.2, "fig3": False},
    "sweep": {
        "delays": [0, 1, 7, 30],
        "seeds": [0, 1, 2, 3, 4],
        "thresholds": list(GWD_THRESHOLDS),
        "twl_grid": list(WINDOW_GRID),
        "tws_grid": list(WINDOW_GRID),
        "window_delay": 0,
    },
    "experiment_model": {
        "num_leaves": EXPERIMENT_GBDT.num_leaves,
        "min_data_in_leaf": EXPERIMENT_GBDT.min_data_in_leaf,
        "learning_rate": EXPERIMENT_GBDT.learning_rate,
        "n_rounds": EXPERIMENT_GBDT.n_rounds,
    },
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        cfg = cls(_merge(DEFAULTS, d or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls.from_dict({})
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(doc)

    def override(self, seed=None, out=None, fpr=None) -> "RunConfig":
        d = copy.deepcopy(self.data)
        if seed is not None:
            d["seed"] = int(seed)
        if out is not None:
            d["paths"]["out"] = str(out)
        if fpr is not None:
            d["evaluate"]["fpr"] = float(fpr)
        return RunConfig.from_dict(d)

    def validate(self) -> None:
        try:
            self.synth_config()
            self.feature_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 < self.fpr <= 1.0:
            raise ConfigError("evaluate.fpr must be in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def out(self) -> Path:
        return Path(self.data["paths"]["out"])

    @property
    def fpr(self) -> float:
        return float(self.data["evaluate"]["fpr"])

    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_dict({**self.data["synth"], "seed": self.seed})

    def window(self) -> WindowConfig:
        return WindowConfig(**self.data["window"])

    def walk(self) -> WalkConfig:
        return WalkConfig(**self.data["walk"])

    def feature_config(self) -> FeatureConfig:
        f = self.data["features"]
        return FeatureConfig(
            profiles=f["profiles"],
            select_profiles=f["select_profiles"],
            budget_fraction=f["budget_fraction"],
            degrees=f["degrees"],
            weighted_degrees=f["weighted_degrees"],
            gw=f["gw"],
            gwd=f["gwd"],
            window=self.window(),
            walk=self.walk(),
            gwd_threshold=float(self.data["gwd"]["threshold"]),
        )

    def dump(self, path: str | Path, extra: dict | None = None) -> None:
        doc = copy.deepcopy(self.data)
        if extra:
            doc["resolved"] = extra
        Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))
