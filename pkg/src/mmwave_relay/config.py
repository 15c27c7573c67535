"""Experiment configuration: one JSON document with topology, channel and experiment blocks."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .channel import ChannelParams
from .selection import POLICIES
from .topology import Topology, TopologyError, build_topology

__all__ = ["ConfigError", "ExperimentSettings", "ExperimentConfig", "load_config", "bundled_config"]


class ConfigError(ValueError):
    pass


TOPOLOGY_KEYS = {"intersections", "segments", "clusters", "source", "destination", "note"}


@dataclass(frozen=True)
class ExperimentSettings:
    n_s: int = 500
    trials: int = 100
    window: int | None = 20
    policies: tuple[str, ...] = POLICIES
    seed: int = 0
    selection_period: int = 1
    averaging: str = "linear"
    share_scenarios: bool = False
    delta: int | None = None
    # execution-only: never part of the echoed config
    workers: int = 1

    def __post_init__(self):
        if self.n_s < 1:
            raise ConfigError("n_s must be at least 1")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be positive or null")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ConfigError(f"unknown policies {bad}; choose from {list(POLICIES)}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("duplicate policies")
        if self.selection_period < 1:
            raise ConfigError("selection_period must be at least 1")
        if self.averaging not in ("linear", "db"):
            raise ConfigError("averaging must be 'linear' or 'db'")
        if self.delta is not None and self.delta < 1:
            raise ConfigError("delta must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSettings":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        kw = dict(data)
        if "policies" in kw:
            pol = kw["policies"]
            kw["policies"] = tuple(pol.split(",") if isinstance(pol, str) else pol)
        for key in ("n_s", "trials", "seed", "selection_period", "workers"):
            if key in kw:
                kw[key] = _as_int(key, kw[key])
        for key in ("window", "delta"):
            if kw.get(key) is not None:
                kw[key] = _as_int(key, kw[key])
        if "share_scenarios" in kw and not isinstance(kw["share_scenarios"], bool):
            raise ConfigError("share_scenarios must be a boolean")
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "workers"}
        out["policies"] = list(self.policies)
        return out


def _as_int(key, value) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ConfigError(f"{key} must be an integer")
    return int(value)


@dataclass
class ExperimentConfig:
    topology_spec: dict
    channel: ChannelParams
    experiment: ExperimentSettings
    topology: Topology = field(init=False, repr=False)

    def __post_init__(self):
        unknown = set(self.topology_spec) - TOPOLOGY_KEYS
        if unknown:
            raise ConfigError(f"unknown topology keys: {sorted(unknown)}")
        if self.channel.n_t < 2:
            raise ConfigError("n_t must be at least 2 (selection is one step ahead)")
        try:
            self.topology = build_topology(self.topology_spec, delta=self.experiment.delta)
        except (TopologyError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid topology: {exc}") from exc

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"topology", "channel", "experiment"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        if "topology" not in data:
            raise ConfigError("missing topology block")
        try:
            channel = ChannelParams.from_dict(data.get("channel", {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid channel block: {exc}") from exc
        try:
            experiment = ExperimentSettings.from_dict(data.get("experiment", {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid experiment block: {exc}") from exc
        return cls(copy.deepcopy(data["topology"]), channel, experiment)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with experiment settings replaced (``None`` values are ignored)."""
        data = self.to_dict()
        workers = overrides.pop("workers", None)
        n_t = overrides.pop("n_t", None)
        if n_t is not None:
            data["channel"]["n_t"] = n_t
        for key, value in overrides.items():
            if value is not None:
                data["experiment"][key] = value
        cfg = ExperimentConfig.from_dict(data)
        if workers is not None or self.experiment.workers != 1:
            w = workers if workers is not None else self.experiment.workers
            cfg = ExperimentConfig(cfg.topology_spec, cfg.channel, _replace(cfg.experiment, workers=w))
        return cfg

    def to_dict(self) -> dict:
        """Config echo; re-parses to an equivalent config."""
        return {
            "topology": copy.deepcopy(self.topology_spec),
            "channel": self.channel.to_dict(),
            "experiment": self.experiment.to_dict(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _replace(settings: ExperimentSettings, **kw) -> ExperimentSettings:
    data = {f.name: getattr(settings, f.name) for f in fields(settings)}
    data.update(kw)
    return ExperimentSettings(**data)


def load_config(source) -> ExperimentConfig:
    """Parse a config from a JSON file path or an already-decoded dict.

    Raw JSON text is not accepted.
    """
    if isinstance(source, dict):
        return ExperimentConfig.from_dict(source)
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def bundled_config(name: str) -> dict:
    """One of the shipped configs (e.g. ``"paper4"``) as a dict."""
    text = resources.files("mmwave_relay").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)
