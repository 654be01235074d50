"""Scenario configuration: defaults, TOML loading, ``section.key=value`` overrides.

Precedence, lowest to highest: built-in defaults, config file, ``--set``
overrides, dedicated CLI flags (``--mode``, ``--seed``, ``--duration-ms``).
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .kernel import ms
from .traffic import TrafficSpec

MODES = ("baseline", "bwr_no_flush", "bwr_flush")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class TrafficConfig:
    kind: str = "cbr"
    packet_size: int = 200
    inter_arrival_ms: float = 1.0
    on_duration_ms: float = 0.0
    off_duration_ms: float = 0.0
    rate_in_on: int = 1
    lcg: int = 1
    phase_ms: float = 0.0

    def spec(self) -> TrafficSpec:
        return TrafficSpec(self.kind, self.packet_size, ms(self.inter_arrival_ms),
                           ms(self.on_duration_ms), ms(self.off_duration_ms),
                           self.rate_in_on, self.lcg, ms(self.phase_ms))


@dataclass
class LteConfig:
    sr_period_ms: float = 5.0
    sr_offset_ms: float = 0.5
    bsr_period_ms: float = 10.0
    decode_ms: int = 2
    tx_offset_ms: int = 4
    turnaround_ms: float = 4.0
    ue_proc_ms: float = 0.5
    bandwidth_prb: int = 50
    bwr_period_ms: int = 2
    tbs_table: str = ""


@dataclass
class ChannelConfig:
    mcs_mean: float = 22.0
    mcs_lo: int = 18
    mcs_hi: int = 26
    mcs_sigma: float = 2.0
    update_ms: float = 10.0
    retx_bler: float = 0.0


@dataclass
class DocsisConfig:
    map_interval_ms: float = 2.0
    map_offset_ms: float = 0.0
    cm_proc_ms: float = 0.5
    cm_overhead_us: int = 100
    cmts_proc_ms: float = 0.5
    upstream_mbps: float = 100.0
    bwr_transport: str = "ugs"
    ugs_period_ms: float = 2.0
    ugs_grant_bytes: int = 160
    bwr_lead_ms: float = 4.0
    contention: float = 0.0  # per-REQ collision probability; "off" = 0


@dataclass
class Scenario:
    duration_ms: float = 2000.0
    seed: int = 1
    mode: str = "bwr_flush"
    harq: bool = True
    bler: float = 0.1
    n_enb: int = 1
    n_ue: int = 1
    drain_ms: float = 100.0
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    lte: LteConfig = field(default_factory=LteConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    docsis: DocsisConfig = field(default_factory=DocsisConfig)

    def validate(self) -> "Scenario":
        if self.mode not in MODES:
            raise ConfigError("mode", f"{self.mode!r} not one of {', '.join(MODES)}")
        if self.duration_ms < 0:
            raise ConfigError("duration_ms", "must be >= 0")
        if not 0.0 <= self.bler <= 1.0:
            raise ConfigError("bler", "must be a probability")
        if not 0.0 <= self.channel.retx_bler <= 1.0:
            raise ConfigError("channel.retx_bler", "must be a probability")
        if self.n_enb < 1 or self.n_ue < 1:
            raise ConfigError("n_enb" if self.n_enb < 1 else "n_ue", "must be >= 1")
        if self.docsis.bwr_transport not in ("ugs", "rtps"):
            raise ConfigError("docsis.bwr_transport", "must be 'ugs' or 'rtps'")
        if not 0.0 <= self.docsis.contention <= 1.0:
            raise ConfigError("docsis.contention", "must be off or a probability")
        if self.docsis.cm_overhead_us < 0:
            raise ConfigError("docsis.cm_overhead_us", "must be >= 0")
        if self.docsis.upstream_mbps <= 0:
            raise ConfigError("docsis.upstream_mbps", "must be > 0")
        if not 0 < self.lte.bandwidth_prb <= 50:
            raise ConfigError("lte.bandwidth_prb", "must be in 1..50")
        if self.docsis.ugs_grant_bytes < 80:
            raise ConfigError("docsis.ugs_grant_bytes", "must carry at least one 80-byte BWR")
        for section in ("", "traffic", "lte", "channel", "docsis"):
            obj = getattr(self, section) if section else self
            for f in dataclasses.fields(obj):
                if f.name.endswith("_ms"):
                    key = f"{section}.{f.name}" if section else f.name
                    value = getattr(obj, f.name)
                    try:
                        ms(value)
                    except ValueError as exc:
                        raise ConfigError(key, str(exc)) from None
                    if value < 0:
                        raise ConfigError(key, "must be >= 0")
        for key, value in (("lte.sr_period_ms", self.lte.sr_period_ms),
                           ("lte.bwr_period_ms", self.lte.bwr_period_ms),
                           ("docsis.map_interval_ms", self.docsis.map_interval_ms),
                           ("docsis.ugs_period_ms", self.docsis.ugs_period_ms),
                           ("lte.bsr_period_ms", self.lte.bsr_period_ms)):
            if value <= 0:
                raise ConfigError(key, "must be > 0")
        try:
            self.traffic.spec()
        except ValueError as exc:
            raise ConfigError("traffic", str(exc)) from None
        return self

    @property
    def bwr_mode(self) -> Optional[str]:
        return {"baseline": None, "bwr_no_flush": "no_flush", "bwr_flush": "flush"}[self.mode]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_SECTIONS = {"traffic": TrafficConfig, "lte": LteConfig, "channel": ChannelConfig,
             "docsis": DocsisConfig}


def _coerce(key: str, current: Any, value: Any) -> Any:
    if key == "docsis.contention" and isinstance(value, str):
        if value.lower() == "off":
            return 0.0
        raise ConfigError(key, f"expected off or a probability, got {value!r}")
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("on", "off", "true", "false"):
            return value.lower() in ("on", "true")
        raise ConfigError(key, f"expected on/off, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if isinstance(current, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(key, f"expected a number, got {value!r}")
    if isinstance(current, str):
        if isinstance(value, str):
            return value
        raise ConfigError(key, f"expected a string, got {value!r}")
    raise ConfigError(key, "not a settable key")


def apply(scn: Scenario, key: str, value: Any) -> None:
    """Set ``key`` (``name`` or ``section.name``) on ``scn`` with type checks."""
    parts = key.split(".")
    if len(parts) == 1:
        obj, name = scn, parts[0]
        if name in _SECTIONS:
            raise ConfigError(key, "is a section, not a key")
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        obj, name = getattr(scn, parts[0]), parts[1]
    else:
        raise ConfigError(key, "unknown key")
    if name not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(key, "unknown key")
    setattr(obj, name, _coerce(key, getattr(obj, name), value))


def from_dict(data: dict[str, Any], base: Optional[Scenario] = None) -> Scenario:
    scn = copy.deepcopy(base) if base is not None else Scenario()
    for k, v in data.items():
        if isinstance(v, dict):
            if k not in _SECTIONS:
                raise ConfigError(k, "unknown section")
            for kk, vv in v.items():
                apply(scn, f"{k}.{kk}", vv)
        else:
            apply(scn, k, v)
    return scn


def load(path: Optional[str | Path], overrides: tuple[str, ...] = ()) -> Scenario:
    scn = Scenario()
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("--config", f"{path}: {exc}") from None
        scn = from_dict(data, scn)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(item, "override must look like section.key=value")
        apply(scn, key.strip(), parse_value(raw.strip()))
    return scn


def parse_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw
