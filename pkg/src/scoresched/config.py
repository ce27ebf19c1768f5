"""Run configuration: flat INI sections with typed, whitelisted keys.

Resolution order is defaults < preset < config file < command-line flags.
Every run directory gets a resolved copy written back in the same format,
so any output can be reproduced by pointing --config at that copy.
"""

from __future__ import annotations

import configparser
import copy

from . import __version__
from .schedules import (DiscretisationSchedule, VESigmaSchedule,
                        VPCosineSchedule, VPLinearSchedule, baseline_schedule,
                        uniform_grid)
from .targets import GmmTarget, bimodal_target, cantor_target


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, missing input)."""


_BOOLS = {"true": True, "yes": True, "1": True,
          "false": False, "no": False, "0": False}


def _bool(raw: str) -> bool:
    try:
        return _BOOLS[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {raw!r}") from None


def _intlist(raw: str) -> str:
    try:
        values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated ints, got {raw!r}") from None
    if not values:
        raise ConfigError("empty int list")
    return ",".join(str(v) for v in values)


SCHEMA = {
    "run": {"seed": int, "version": str},
    "target": {"kind": str, "mean": float, "std": float, "offset": float,
               "level": int, "mollify_t": float},
    "noise": {"family": str, "beta_min": float, "beta_max": float,
              "sigma_min": float, "sigma_max": float},
    "schedule": {"kind": str, "T": int, "file": str, "rho": float},
    "optimize": {"estimator": str, "n_samples": int, "max_iter": int,
                 "tol": float, "n_probes": int, "source": str,
                 "checkpoint": str},
    "train": {"gamma": float, "iters": int, "batch": int, "lr": float,
              "lr_decay": str,
              "dsm_steps": int, "estimator": str, "n_probes": int,
              "width": int, "depth": int, "embed": int, "fourier_scale": float,
              "checkpoint_every": int, "eval_n": int, "sampler": str,
              "resume": str},
    "sample": {"kind": str, "n": int, "n_inner": int, "step_scale": float,
               "source": str, "checkpoint": str},
    "eval": {"samples": str, "labels": str, "generate": _bool, "n": int,
             "linear_T": int, "optimized_T": int, "sampler": str},
    "sweep": {"Ts": _intlist, "n": int, "sampler": str, "n_samples": int,
              "estimator": str},
}

DEFAULTS = {
    "run": {"seed": 0, "version": __version__},
    "target": {"kind": "bimodal", "mean": 0.0, "std": 0.1, "offset": 6.0,
               "level": 3, "mollify_t": 1e-5},
    "noise": {"family": "vp_linear", "beta_min": 0.1, "beta_max": 20.0,
              "sigma_min": 0.01, "sigma_max": 50.0},
    "schedule": {"kind": "uniform", "T": 50, "file": "", "rho": 7.0},
    "optimize": {"estimator": "corrector", "n_samples": 4096, "max_iter": 100,
                 "tol": 1e-4, "n_probes": 5, "source": "oracle",
                 "checkpoint": ""},
    "train": {"gamma": 0.1, "iters": 5000, "batch": 64, "lr": 1e-3,
              "lr_decay": "cosine",
              "dsm_steps": 1, "estimator": "corrector", "n_probes": 5,
              "width": 128, "depth": 5, "embed": 12, "fourier_scale": 16.0,
              "checkpoint_every": 500, "eval_n": 2048, "sampler": "ode_euler",
              "resume": ""},
    "sample": {"kind": "ode_euler", "n": 10000, "n_inner": 10,
               "step_scale": 0.1, "source": "oracle", "checkpoint": ""},
    "eval": {"samples": "", "labels": "", "generate": False, "n": 200000,
             "linear_T": 100, "optimized_T": 50, "sampler": "ode_euler"},
    "sweep": {"Ts": "10,20,30,50,100", "n": 200000, "sampler": "ode_euler",
              "n_samples": 4096, "estimator": "corrector"},
}

PRESETS = {
    "bimodal": {
        "target": {"kind": "bimodal"},
        "schedule": {"T": 32},
        "train": {"gamma": 0.1, "iters": 5000, "batch": 64},
    },
    "cantor": {
        "target": {"kind": "cantor", "level": 3, "mollify_t": 1e-5},
        "schedule": {"T": 50},
        "train": {"gamma": 0.01, "iters": 20000, "batch": 128},
        "eval": {"generate": True, "linear_T": 100, "optimized_T": 50},
    },
    "gaussian-geodesic": {
        "target": {"kind": "gaussian", "mean": 0.0, "std": 0.1},
        "schedule": {"T": 50},
    },
    "t-sweep": {
        "target": {"kind": "bimodal"},
        "sweep": {"Ts": "10,20,30,50,100"},
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge_config(cfg: dict, override: dict) -> dict:
    for section, entries in override.items():
        cfg[section].update(entries)
    return cfg


def load_config(path) -> dict:
    """Parse an INI file into a typed override dict; typos are errors."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys like T / Ts are case-sensitive
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    out = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            conv = SCHEMA[section][key]
            try:
                out[section][key] = conv(raw)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw!r}") from None
    return out


def resolve_config(preset: str | None = None, path=None,
                   seed: int | None = None) -> dict:
    cfg = default_config()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; "
                              f"choose from {sorted(PRESETS)}")
        merge_config(cfg, PRESETS[preset])
    if path is not None:
        merge_config(cfg, load_config(path))
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    cfg["run"]["version"] = __version__
    return cfg


def write_config(path, cfg: dict) -> None:
    with open(path, "w") as fh:
        for section in SCHEMA:
            fh.write(f"[{section}]\n")
            for key in SCHEMA[section]:
                val = cfg[section][key]
                if isinstance(val, bool):
                    text = "true" if val else "false"
                elif isinstance(val, float):
                    text = repr(val)
                else:
                    text = str(val)
                fh.write(f"{key} = {text}\n")
            fh.write("\n")


def build_noise_schedule(cfg: dict):
    noise = cfg["noise"]
    family = noise["family"]
    if family == "vp_linear":
        return VPLinearSchedule(beta_min=noise["beta_min"],
                                beta_max=noise["beta_max"])
    if family == "vp_cosine":
        return VPCosineSchedule()
    if family == "ve_sigma":
        return VESigmaSchedule(sigma_min=noise["sigma_min"],
                               sigma_max=noise["sigma_max"])
    raise ConfigError(f"unknown noise family {family!r}")


def build_target(cfg: dict, nsched) -> GmmTarget:
    tgt = cfg["target"]
    kind = tgt["kind"]
    if kind == "gaussian":
        return GmmTarget([1.0], [tgt["mean"]], [tgt["std"] ** 2])
    if kind == "normal":
        return GmmTarget([1.0], [0.0], [1.0])
    if kind == "bimodal":
        return bimodal_target(offset=tgt["offset"], std=tgt["std"])
    if kind == "cantor":
        return cantor_target(tgt["level"], tgt["mollify_t"], nsched)
    raise ConfigError(f"unknown target kind {kind!r}")


def build_grid(cfg: dict, nsched) -> DiscretisationSchedule:
    sch = cfg["schedule"]
    kind = sch["kind"]
    if kind == "file":
        if not sch["file"]:
            raise ConfigError("schedule.kind = file needs schedule.file")
        return DiscretisationSchedule.from_csv(sch["file"])
    if kind == "uniform":
        return uniform_grid(sch["T"], nsched.t_min)
    return baseline_schedule(kind, sch["T"], nsched, rho=sch["rho"])
