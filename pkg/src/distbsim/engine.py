"""Deterministic discrete-event core and scenario configuration.

Events run in (time, sequence) order; handlers may only schedule at or
after the current time. Nothing in the simulation reads the wall clock,
so a (config, seed) pair fully determines every output byte.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .traffic import AttackSchedule

MODE_DISTB = "distb"
MODE_OPENFLOW_ONLY = "openflow-only"

GATE_AS_WRITTEN = "as-written"
GATE_BUDGET_CHECK = "budget-check"


class ConfigError(Exception):
    """Invalid scenario configuration; `field_path` names the offender."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class EventLoop:
    def __init__(self):
        self.now = 0.0
        self._seq = 0
        self._queue: list = []

    def schedule(self, delay: float, action: Callable) -> None:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        self.at(self.now + delay, action)

    def at(self, time: float, action: Callable) -> None:
        if time < self.now:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._queue, (time, self._seq, action))
        self._seq += 1

    def run_until(self, horizon: float) -> None:
        while self._queue and self._queue[0][0] <= horizon:
            time, _seq, action = heapq.heappop(self._queue)
            self.now = time
            action()
        self.now = horizon

    def pending(self) -> int:
        return len(self._queue)


_PRESETS = {
    "p1": dict(
        node_count=30,
        area_m=(1000.0, 1000.0),
        duration_s=500.0,
        data_rate_bps=12e6,
        packet_size_range=(100, 512),
        energy_range_j=(12.0, 15.0),
        trust_j=5.0,
        radio_range_m=300.0,
    ),
    "p2": dict(
        node_count=100,
        area_m=(3000.0, 3000.0),
        duration_s=500.0,
        data_rate_bps=10e6,
        packet_size_range=(128, 1024),
        energy_range_j=(10.0, 12.0),
        trust_j=5.0,
        radio_range_m=450.0,
    ),
}


@dataclass
class ScenarioConfig:
    seed: int = 0
    preset: str = "p1"
    mode: str = MODE_DISTB
    node_count: int = 30
    area_m: tuple = (1000.0, 1000.0)
    duration_s: float = 20.0
    data_rate_bps: float = 12e6
    packet_size_range: tuple = (100, 512)
    energy_range_j: tuple = (12.0, 15.0)
    trust_j: float = 5.0
    radio_range_m: float = 300.0
    difficulty: int = 12
    verification_period_s: float = 5.0
    gate_semantics: str = GATE_AS_WRITTEN
    mitigation: bool = True
    attack: Optional[AttackSchedule] = None
    topology_file: Optional[str] = None
    n_controllers: int = 5
    n_switches: int = 4
    n_gateways: int = 2
    cbr_rate_pps: float = 10.0
    rtr_interval_s: float = 5.0
    round_period_s: float = 1.0
    link_latency_s: float = 0.002
    link_buffer_packets: int = 1000
    controller_service_pps: float = 40.0
    rate_limit_cap_pps: int = 200
    rate_limit_persist_windows: int = 3
    cloud_store_latency_s: float = 0.003
    station_budget_j: float = 100.0
    controller_energy_per_unit_j: float = 0.001
    hash_time_s: float = 1e-6
    mobility: bool = False
    access_registry: dict = field(default_factory=lambda: {"admin": "distb-token"})

    def validate(self) -> "ScenarioConfig":
        if self.duration_s <= 0:
            raise ConfigError("duration_s", "must be > 0")
        if self.node_count < 1:
            raise ConfigError("node_count", "must be >= 1")
        if self.preset not in _PRESETS:
            raise ConfigError("preset", f"unknown preset {self.preset!r}")
        if self.mode not in (MODE_DISTB, MODE_OPENFLOW_ONLY):
            raise ConfigError("mode", f"must be {MODE_DISTB!r} or {MODE_OPENFLOW_ONLY!r}")
        if self.gate_semantics not in (GATE_AS_WRITTEN, GATE_BUDGET_CHECK):
            raise ConfigError("gate_semantics", "unknown gate semantics")
        if not self.packet_size_range or self.packet_size_range[0] > self.packet_size_range[1]:
            raise ConfigError("packet_size_range", "must be a non-empty [lo, hi] range")
        if self.packet_size_range[0] <= 0:
            raise ConfigError("packet_size_range", "sizes must be positive")
        if self.data_rate_bps <= 0:
            raise ConfigError("data_rate_bps", "must be > 0")
        if not 0 <= self.difficulty <= 32:
            raise ConfigError("difficulty", "must be in [0, 32]")
        if self.verification_period_s <= 0:
            raise ConfigError("verification_period_s", "must be > 0")
        if self.n_switches < 1:
            raise ConfigError("n_switches", "must be >= 1")
        if self.n_gateways < 1:
            raise ConfigError("n_gateways", "must be >= 1")
        if self.cbr_rate_pps < 0:
            raise ConfigError("cbr_rate_pps", "must be >= 0")
        if self.attack is not None:
            if any(r < 0 for _, r in self.attack.rate_curve):
                raise ConfigError("attack.rate_curve", "rates must be non-negative")
        return self


def preset_config(name: str, **overrides) -> ScenarioConfig:
    if name not in _PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}")
    merged = dict(_PRESETS[name])
    merged.update(overrides)
    return ScenarioConfig(preset=name, **merged).validate()


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a config from a decoded JSON object (schema version 1)."""
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    schema = data.get("schema")
    if schema != 1:
        raise ConfigError("schema", f"unsupported schema {schema!r} (expected 1)")
    known = set(ScenarioConfig.__dataclass_fields__)
    fields = {}
    for key, value in data.items():
        if key == "schema":
            continue
        if key == "attack":
            if value is not None:
                for req in ("start", "rate_curve", "targets"):
                    if req not in value:
                        raise ConfigError(f"attack.{req}", "missing required field")
                fields["attack"] = AttackSchedule(
                    start=float(value["start"]),
                    rate_curve=[(float(t), float(r)) for t, r in value["rate_curve"]],
                    targets=list(value["targets"]),
                    size_bytes=int(value.get("size_bytes", 4096)),
                    sources=list(value.get("sources", ["atk0"])),
                )
            continue
        if key not in known:
            raise ConfigError(key, "unknown config field")
        if key in ("area_m", "packet_size_range", "energy_range_j"):
            value = tuple(value)
        fields[key] = value
    preset = fields.pop("preset", "p1")
    merged = dict(_PRESETS.get(preset, {}))
    merged.update(fields)
    return ScenarioConfig(preset=preset, **merged).validate()


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config is not valid JSON: {exc}")
    return config_from_dict(data)
