"""Scenario files: one YAML document describes stations, baseline CW
configuration and the per-command experiment parameters.

Keys carry explicit units (payload_bytes, rate_mbps, *_us); validation
reports the offending field path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from . import controller, phy, simulator
from .errors import ValidationError


@dataclass(frozen=True)
class BaselineConfig:
    """Legacy DCF parameters used for the comparison scheme."""

    cw_min: int = 16
    m: int = 6

    def __post_init__(self):
        if self.cw_min < 1:
            raise ValidationError("baseline.cw_min: must be >= 1")
        if self.m < 0:
            raise ValidationError("baseline.m: must be >= 0")


@dataclass(frozen=True)
class SweepConfig:
    payload_bytes_start: int = 100
    payload_bytes_stop: int = 1400
    payload_bytes_step: int = 100

    def __post_init__(self):
        if self.payload_bytes_start < 1 or self.payload_bytes_step < 1:
            raise ValidationError("sweep: payload start/step must be >= 1")
        if self.payload_bytes_stop < self.payload_bytes_start:
            raise ValidationError("sweep: payload stop must be >= start")

    def payloads(self):
        return list(range(self.payload_bytes_start, self.payload_bytes_stop + 1,
                          self.payload_bytes_step))


@dataclass(frozen=True)
class Scenario:
    name: str
    profile: phy.PhyProfile
    stations: list[phy.StationSpec]
    baseline: BaselineConfig
    sim: simulator.SimConfig | None = None
    sweep: SweepConfig | None = None
    closed_loop: controller.ClosedLoopScript | None = None
    beacon_interval_us: float = 102_400.0


def _require(mapping, key, path, types, optional=False, default=None):
    if key not in mapping:
        if optional:
            return default
        raise ValidationError(f"{path}.{key}: missing required field")
    value = mapping[key]
    if not isinstance(value, types):
        raise ValidationError(f"{path}.{key}: wrong type {type(value).__name__}")
    return value


def _station_from_mapping(entry, path, profile) -> phy.StationSpec:
    if not isinstance(entry, dict):
        raise ValidationError(f"{path}: expected a mapping")
    label = str(_require(entry, "label", path, (str, int)))
    payload_bytes = _require(entry, "payload_bytes", path, (int, float))
    rate = _require(entry, "rate_mbps", path, (int, float))
    spec = phy.StationSpec(
        label=label,
        payload=float(payload_bytes) * 8.0,
        rate=float(rate),
        link_error=float(_require(entry, "link_error", path, (int, float),
                                  optional=True, default=0.0)),
        availability=float(_require(entry, "availability", path, (int, float),
                                    optional=True, default=1.0)),
        tx_power_dbm=entry.get("tx_power_dbm"),
    )
    phy.validate_station(spec, profile)
    unknown = set(entry) - {"label", "payload_bytes", "rate_mbps", "link_error",
                            "availability", "tx_power_dbm"}
    if unknown:
        raise ValidationError(f"{path}.{sorted(unknown)[0]}: unknown field")
    return spec


def _capture_from_mapping(entry, path):
    if entry is None:
        return None
    threshold = _require(entry, "power_threshold_db", path, (int, float))
    return simulator.CaptureConfig(power_threshold_db=float(threshold))


def _event_from_mapping(entry, path, profile, known_stations):
    if not isinstance(entry, dict):
        raise ValidationError(f"{path}: expected a mapping")
    at_s = float(_require(entry, "at_s", path, (int, float)))
    station = str(_require(entry, "station", path, (str, int)))
    action = _require(entry, "action", path, str)
    value = entry.get("value")
    spec = None
    if action == "join":
        base = known_stations.get(station)
        attrs = dict(
            label=station,
            payload_bytes=entry.get("payload_bytes",
                                    base.payload / 8.0 if base else None),
            rate_mbps=entry.get("rate_mbps", base.rate if base else None),
            link_error=entry.get("link_error", base.link_error if base else 0.0),
            availability=entry.get("availability",
                                   base.availability if base else 1.0),
            tx_power_dbm=entry.get("tx_power_dbm",
                                   base.tx_power_dbm if base else None),
        )
        if attrs["payload_bytes"] is None or attrs["rate_mbps"] is None:
            raise ValidationError(
                f"{path}: join needs payload_bytes and rate_mbps "
                "(inline or via a matching stations entry)"
            )
        spec = _station_from_mapping(
            {k: v for k, v in dict(
                label=station, payload_bytes=attrs["payload_bytes"],
                rate_mbps=attrs["rate_mbps"], link_error=attrs["link_error"],
                availability=attrs["availability"],
                tx_power_dbm=attrs["tx_power_dbm"],
            ).items() if v is not None},
            path, profile,
        )
    return controller.ScriptEvent(
        at_s=at_s, station=station, action=action,
        value=None if value is None else float(value), spec=spec,
    )


def scenario_from_mapping(data: dict, name: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ValidationError("scenario: expected a mapping at the top level")
    name = str(data.get("name", name))
    profile = phy.profile_from_mapping(data.get("profile", {}) or {})

    stations_data = _require(data, "stations", "scenario", list)
    stations = [
        _station_from_mapping(entry, f"stations[{i}]", profile)
        for i, entry in enumerate(stations_data)
    ]
    labels = [s.label for s in stations]
    if len(set(labels)) != len(labels):
        raise ValidationError("stations: labels must be unique")

    baseline_data = data.get("baseline", {}) or {}
    baseline = BaselineConfig(
        cw_min=int(baseline_data.get("cw_min", 16)),
        m=int(baseline_data.get("m", 6)),
    )

    sim_cfg = None
    if "sim" in data and data["sim"]:
        s = data["sim"]
        sim_cfg = simulator.SimConfig(
            n_slots=int(_require(s, "slots", "sim", int)),
            seed=int(s.get("seed", 1)),
            mode=s.get("mode", "p_persistent"),
            capture=_capture_from_mapping(s.get("capture"), "sim.capture"),
            warmup_slots=int(s.get("warmup_slots", 0)),
            trace_path=s.get("trace_path"),
        )

    sweep = None
    if "sweep" in data and data["sweep"]:
        w = data["sweep"]
        sweep = SweepConfig(
            payload_bytes_start=int(w.get("payload_bytes_start", 100)),
            payload_bytes_stop=int(w.get("payload_bytes_stop", 1400)),
            payload_bytes_step=int(w.get("payload_bytes_step", 100)),
        )

    closed_loop = None
    beacon_interval_us = 102_400.0
    if "closed_loop" in data and data["closed_loop"]:
        c = data["closed_loop"]
        beacon_interval_us = float(c.get("beacon_interval_us", 102_400.0))
        known = {s.label: s for s in stations}
        events = tuple(
            _event_from_mapping(e, f"closed_loop.events[{i}]", profile, known)
            for i, e in enumerate(_require(c, "events", "closed_loop", list))
        )
        closed_loop = controller.ClosedLoopScript(
            duration_s=float(_require(c, "duration_s", "closed_loop", (int, float))),
            events=events,
            seed=int(c.get("seed", 1)),
            scheme=c.get("scheme", "pf"),
            capture=_capture_from_mapping(c.get("capture"), "closed_loop.capture"),
        )

    return Scenario(
        name=name, profile=profile, stations=stations, baseline=baseline,
        sim=sim_cfg, sweep=sweep, closed_loop=closed_loop,
        beacon_interval_us=beacon_interval_us,
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    import os

    default_name = os.path.splitext(os.path.basename(str(path)))[0]
    return scenario_from_mapping(data, name=default_name)
