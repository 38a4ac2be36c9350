"""Run configuration and manifests.

Configs are flat JSON objects with dotted keys mirroring the model spec
(``vecchia.q``, ``mcmc.iters``, ``priors.rho_mean``, ...). Unknown keys are
rejected so typos fail loudly. Manifests record enough to reproduce a run;
their timestamp honors SOURCE_DATE_EPOCH so that fixed-seed reruns are
byte-identical.
"""

import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass

import numpy as np
import scipy

from .errors import InvalidParams
from .inference import CdpModelSpec, PriorSettings
from .regression import ScenarioConfig

PACKAGE_VERSION = "1.0.0"

DEFAULTS = {
    "grid": "20x20",
    "spacing": 1.0,
    "subjects": 10,
    "model": "cdp",
    "m": 50,
    "seed": 0,
    "sigma_beta": 0.1,
    "rho_u": 2.0,
    "nu_u": 0.5,
    "rho_beta": 2.0,
    "nu_beta": 0.5,
    "drug_effect": 0.5,
    "age_effect": 0.25,
    "region_size": 4,
    "drug_column": 1,
    "vecchia.q": 10,
    "vecchia.direction": "following",
    "mcmc.iters": 7000,
    "mcmc.burnin": 2000,
    "mcmc.thin": 1,
    "mcmc.seed": 0,
    "priors.rho_mean": 0.0,
    "priors.rho_sd": 1.0,
    "priors.nu_mean": -1.0,
    "priors.nu_sd": 1.0,
    "priors.prec_shape": 0.01,
    "priors.prec_rate": 0.01,
    "proposal.scale": 0.5,
    "proposal.target_accept": 0.4,
    "proposal.adapt": True,
    "sample.rho_u": True,
    "sample.nu_u": True,
    "sample.rho_beta": True,
    "sample.nu_beta": True,
}


def parse_grid(text):
    """Parse 'WxH' into (width, height)."""
    parts = str(text).lower().split("x")
    if len(parts) != 2:
        raise InvalidParams(f"grid must look like '20x20', got {text!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise InvalidParams(f"grid must look like '20x20', got {text!r}") from exc
    if w < 1 or h < 1:
        raise InvalidParams("grid dimensions must be positive")
    return w, h


def load_config(path=None, overrides=None):
    """Merge defaults, an optional JSON file, and explicit overrides.

    Raises InvalidParams on unknown keys, wrong types, or unparseable JSON.
    """
    cfg = dict(DEFAULTS)
    layers = []
    if path is not None:
        try:
            with open(path) as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParams(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InvalidParams("config must be a JSON object")
        layers.append(loaded)
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise InvalidParams(f"unknown config key {key!r}")
            default = DEFAULTS[key]
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise InvalidParams(f"config key {key!r} must be a boolean")
            elif isinstance(default, int):
                if (
                    isinstance(value, bool)
                    or not isinstance(value, (int, float))
                    or int(value) != value
                ):
                    raise InvalidParams(f"config key {key!r} must be an integer")
                value = int(value)
            elif isinstance(default, float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise InvalidParams(f"config key {key!r} must be a number")
                value = float(value)
            elif isinstance(default, str):
                if not isinstance(value, str):
                    raise InvalidParams(f"config key {key!r} must be a string")
            cfg[key] = value
    parse_grid(cfg["grid"])
    if cfg["model"] not in ("swp", "cdp"):
        raise InvalidParams("model must be 'swp' or 'cdp'")
    return cfg


def config_hash(cfg):
    """Stable sha256 over the canonical JSON encoding."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def build_scenario(cfg):
    w, h = parse_grid(cfg["grid"])
    return ScenarioConfig(
        width=w,
        height=h,
        spacing=float(cfg["spacing"]),
        n_subjects=int(cfg["subjects"]),
        m=int(cfg["m"]),
        sigma_beta=float(cfg["sigma_beta"]),
        rho_u=float(cfg["rho_u"]),
        nu_u=float(cfg["nu_u"]),
        rho_beta=float(cfg["rho_beta"]),
        nu_beta=float(cfg["nu_beta"]),
        drug_effect=float(cfg["drug_effect"]),
        age_effect=float(cfg["age_effect"]),
        region_size=int(cfg["region_size"]),
    )


def build_model_spec(cfg):
    priors = PriorSettings(
        rho_mean=float(cfg["priors.rho_mean"]),
        rho_sd=float(cfg["priors.rho_sd"]),
        nu_mean=float(cfg["priors.nu_mean"]),
        nu_sd=float(cfg["priors.nu_sd"]),
        prec_shape=float(cfg["priors.prec_shape"]),
        prec_rate=float(cfg["priors.prec_rate"]),
    )
    return CdpModelSpec(
        q=int(cfg["vecchia.q"]),
        direction=str(cfg["vecchia.direction"]),
        iters=int(cfg["mcmc.iters"]),
        burnin=int(cfg["mcmc.burnin"]),
        thin=int(cfg["mcmc.thin"]),
        seed=int(cfg["mcmc.seed"]),
        priors=priors,
        proposal_scale=float(cfg["proposal.scale"]),
        target_accept=float(cfg["proposal.target_accept"]),
        adapt=bool(cfg["proposal.adapt"]),
        sample_rho_u=bool(cfg["sample.rho_u"]),
        sample_nu_u=bool(cfg["sample.nu_u"]),
        sample_rho_beta=bool(cfg["sample.rho_beta"]),
        sample_nu_beta=bool(cfg["sample.nu_beta"]),
    )


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(stamp))


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    config_hash: str
    seed: int
    versions: dict
    timestamp: str
    outputs: tuple

    def to_dict(self):
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "versions": self.versions,
            "timestamp": self.timestamp,
            "outputs": list(self.outputs),
        }


def build_manifest(command, cfg, seed, outputs):
    versions = {
        "package": PACKAGE_VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    return RunManifest(
        command=command,
        config_hash=config_hash(cfg),
        seed=int(seed),
        versions=versions,
        timestamp=_timestamp(),
        outputs=tuple(sorted(str(p) for p in outputs)),
    )


def write_manifest(path, manifest, cfg):
    payload = manifest.to_dict()
    payload["config"] = dict(sorted(cfg.items()))
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")
