"""Sectioned key-value configuration for the pipeline and CLI.

Every key has a typed default below.  A config file (INI syntax) may override
any of them; unknown sections or keys are errors.  ``FLAKESEG_CONFIG`` names
a config file used when none is passed explicitly.
"""
from __future__ import annotations

import configparser
import copy
import os
from pathlib import Path

from .datasetops import AugmentConfig
from .pso import SwarmConfig
from .quality import QualityConfig

ENV_VAR = "FLAKESEG_CONFIG"


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "general": {"seed": 0, "jobs": 1, "size": 256},
    "synth": {
        "n_images": 200, "width": 256, "height": 256, "overexposure_fraction": 0.3,
        "overexposure_gain_min": 1.2, "overexposure_gain_max": 1.4, "vignetting": 0.0,
        "noise_sigma": 3.0, "group_of": "random",
    },
    "quality": {
        "lam": 1000.0, "gamma_act": 0.06, "grid_rows": 10, "grid_cols": 10, "k_g": 1.0,
        "k_e": 0.125, "tau_l": 5, "tau_u": 250, "a": 0.4, "b": 0.6, "c": 0.6,
        "noise_penalty": 765.0,
    },
    "pso": {
        "n_agents": 10, "n_iters": 10, "n_runs": 2, "c1": 2.0, "c2": 2.0,
        "omega_max": 0.9, "omega_min": 0.4,
    },
    "enhance": {
        "enabled": True, "alpha": 0.561, "tune": True, "alpha_min": 0.05, "alpha_max": 10.0,
        "maximize": True, "gate": 0.3, "tune_images": 4,
    },
    "cluster": {"k": 0, "k_min": 2, "k_max": 8},
    "split": {"train": 0.8, "test": 0.2},
    "augment": {
        "copies": 0, "flip_prob": 0.5, "photometric_prob": 0.5, "brightness": 32.0,
        "contrast_min": 0.5, "contrast_max": 1.5, "saturation_min": 0.5, "saturation_max": 1.5,
        "hue": 18.0,
    },
    "train": {
        "learning_rate": 0.1, "momentum": 0.9, "weight_decay": 0.0005, "batch_size": 8,
        "max_iters": 10000, "lr_power": 0.9, "pixels_per_image": 1024, "weighted": True, "beta": 1.0,
        "tune_beta": True, "beta_min": 0.0, "beta_max": 2.0, "beta_iters": 2000,
        "beta_agents": 6, "beta_steps": 4, "val_fraction": 0.25,
        "weak": True, "weak_lr": 1e-4, "weak_iters": 10000,
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _cast(raw, default, where):
    if isinstance(default, bool):
        v = str(raw).strip().lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        return type(default)(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {type(default).__name__}, got {raw!r}") from None


class PipelineConfig:
    """Merged configuration: defaults, then file, then explicit overrides."""

    def __init__(self, values=None):
        self.values = copy.deepcopy(DEFAULTS)
        for section, keys in (values or {}).items():
            for key, raw in keys.items():
                self.set(section, key, raw)

    def set(self, section, key, raw, where=None):
        where = where or f"{section}.{key}"
        if section not in self.values:
            raise ConfigError(f"{where}: unknown section {section!r}")
        if key not in self.values[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in section [{section}]")
        self.values[section][key] = _cast(raw, DEFAULTS[section][key], where)

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(section, key, raw, where=f"{path}: [{section}] {key}")
        return cfg

    @classmethod
    def load(cls, path=None):
        """Config from ``path``, else from ``$FLAKESEG_CONFIG``, else defaults."""
        path = path or os.environ.get(ENV_VAR)
        if not path:
            return cls()
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_file(path)

    def to_dict(self):
        return copy.deepcopy(self.values)

    # -- builders for module configs -----------------------------------------
    @property
    def seed(self):
        return self.values["general"]["seed"]

    @property
    def jobs(self):
        return self.values["general"]["jobs"]

    def quality_config(self):
        q = self.values["quality"]
        return QualityConfig(lam=q["lam"], gamma_act=q["gamma_act"], grid=(q["grid_rows"], q["grid_cols"]),
                             k_g=q["k_g"], k_e=q["k_e"], tau_l=q["tau_l"], tau_u=q["tau_u"],
                             A=q["a"], B=q["b"], C=q["c"], noise_penalty=q["noise_penalty"])

    def swarm_config(self, bounds, maximize=True, seed=None, **overrides):
        p = dict(self.values["pso"])
        p.update(overrides)
        return SwarmConfig(bounds=list(bounds), n_agents=p["n_agents"], n_iters=p["n_iters"],
                           n_runs=p["n_runs"], c1=p["c1"], c2=p["c2"], omega_max=p["omega_max"],
                           omega_min=p["omega_min"], seed=self.seed if seed is None else seed,
                           maximize=maximize, n_jobs=self.jobs)

    def augment_config(self):
        a = self.values["augment"]
        size = self.values["general"]["size"]
        return AugmentConfig(input_size=(size, size), resize_to=(size * 5 // 4, size), crop_to=(size, size),
                             flip_prob=a["flip_prob"], photometric_prob=a["photometric_prob"],
                             brightness=a["brightness"], contrast=(a["contrast_min"], a["contrast_max"]),
                             saturation=(a["saturation_min"], a["saturation_max"]), hue=a["hue"],
                             seed=self.seed)

    def synth_config(self, **overrides):
        from .synth import SynthConfig
        s = self.values["synth"]
        kw = dict(n_images=s["n_images"], width=s["width"], height=s["height"],
                  overexposure_fraction=s["overexposure_fraction"],
                  overexposure_gain=(s["overexposure_gain_min"], s["overexposure_gain_max"]),
                  vignetting=s["vignetting"], noise_sigma=s["noise_sigma"], seed=self.seed,
                  group_of=s["group_of"])
        kw.update(overrides)
        return SynthConfig(**kw)

    def classifier_params(self, beta=None):
        t = self.values["train"]
        return dict(learning_rate=t["learning_rate"], momentum=t["momentum"],
                    weight_decay=t["weight_decay"], batch_size=t["batch_size"],
                    max_iters=t["max_iters"], lr_power=t["lr_power"], pixels_per_image=t["pixels_per_image"],
                    beta=t["beta"] if beta is None else beta, n_jobs=self.jobs)
