"""LinkConfig: every knob of one experiment point, with strict JSON round-tripping."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any

from dmtsim.channel import FiberParams, FilterParams, NoiseParams
from dmtsim.loading import LoadingConfig
from dmtsim.txchain import TxConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MzmParams:
    """Drive and bias.  The bias sits at the linear-field point; the drive index minimizes the required OSNR."""

    mod_index: float = 0.3
    bias_phase: float = math.pi / 4
    vpi: float | None = None


@dataclass(frozen=True)
class RxParams:
    elec_bw_ghz: float | None = 30.0
    update_gain: float = 0.1
    sync_threshold: float = 0.9
    cfo_correction: bool = False


@dataclass(frozen=True)
class SimParams:
    optical_oversampling: int = 2
    probe_frames: int = 2
    min_errors: int = 100
    ssfm_step_km: float = 1.0
    osnr_report_offset_db: float = 0.0


@dataclass(frozen=True)
class LinkConfig:
    net_rate: float = 56e9
    fs: float = 84e9
    fft_len: int = 512
    cp_samples: int = 32
    n_ts: int = 5
    frame_symbols: int = 128
    oversampling: float = 1.05
    sideband: str = "DSB"
    detune_ghz: float | None = None
    fiber: FiberParams = field(default_factory=FiberParams)
    mux: FilterParams = field(default_factory=FilterParams)
    demux: FilterParams = field(default_factory=FilterParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    tx: TxConfig = field(default_factory=TxConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    mzm: MzmParams = field(default_factory=MzmParams)
    rx: RxParams = field(default_factory=RxParams)
    sim: SimParams = field(default_factory=SimParams)
    launch_power_dbm: float = 5.0
    nonlinear: bool = False
    rate_multiplier: float = 1.0
    seed: int = 1
    frames_per_point: int = 20

    def __post_init__(self):
        if self.sideband not in ("DSB", "VSB"):
            raise ConfigError(f"sideband must be DSB or VSB, got {self.sideband!r}")
        if self.fft_len < 8 or self.fft_len & (self.fft_len - 1):
            raise ConfigError("fft_len must be a power of two >= 8")
        if self.cp_samples < 0 or not 1 <= self.n_ts < self.frame_symbols:
            raise ConfigError("need cp_samples >= 0 and 1 <= n_ts < frame_symbols")
        if self.fs <= 0 or self.net_rate < 0 or self.oversampling < 1:
            raise ConfigError("fs > 0, net_rate >= 0, oversampling >= 1 required")
        if self.frames_per_point < 1 or self.sim.probe_frames < 1 or self.sim.optical_oversampling < 1:
            raise ConfigError("frame counts and optical oversampling must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def effective_detune_ghz(self) -> float:
        if self.sideband == "DSB":
            return 0.0 if self.detune_ghz is None else self.detune_ghz
        return 20.0 if self.detune_ghz is None else self.detune_ghz

    @property
    def distance_km(self) -> float:
        return self.fiber.L

    def filters(self) -> tuple[FilterParams, FilterParams]:
        """Mux and demux with the sideband detuning applied to both."""
        off = -self.effective_detune_ghz
        return (replace(self.mux, center_offset_ghz=self.mux.center_offset_ghz + off),
                replace(self.demux, center_offset_ghz=self.demux.center_offset_ghz + off))

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return _to_dict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "LinkConfig":
        try:
            return _from_dict(cls, data, "")
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "LinkConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, overrides: dict[str, Any]) -> "LinkConfig":
        """Apply dotted-key overrides such as ``{"fiber.L": 0}``."""
        d = self.to_dict()
        for key, value in overrides.items():
            node = d
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config key {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return LinkConfig.from_dict(d)


def _to_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = _to_dict(v) if is_dataclass(v) else v
    return out


_NESTED = {
    "fiber": FiberParams, "mux": FilterParams, "demux": FilterParams, "noise": NoiseParams,
    "tx": TxConfig, "loading": LoadingConfig, "mzm": MzmParams, "rx": RxParams, "sim": SimParams,
}
_INT_FIELDS = {"fft_len", "cp_samples", "n_ts", "frame_symbols", "seed", "frames_per_point", "b_max",
               "max_iters", "dac_bits", "optical_oversampling", "probe_frames", "min_errors"}


def _from_dict(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        if name in _NESTED and cls is LinkConfig:
            kwargs[name] = _from_dict(_NESTED[name], value, prefix + name + ".")
            continue
        if name in _INT_FIELDS and value is not None:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{prefix}{name} must be an integer")
            value = int(value)
        if name in ("nonlinear", "cfo_correction") and not isinstance(value, bool):
            raise ConfigError(f"{prefix}{name} must be true or false")
        if isinstance(value, (str, list, dict)) and name != "sideband":
            raise ConfigError(f"{prefix}{name} must be a number")
        kwargs[name] = value
    return cls(**kwargs)


def parse_value(text: str):
    """Value of a ``--set key=value`` override: JSON if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


__all__ = ["ConfigError", "LinkConfig", "MzmParams", "RxParams", "SimParams", "parse_value"]
