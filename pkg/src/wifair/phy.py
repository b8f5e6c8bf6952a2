"""PHY/MAC timing constants and per-station transmission durations.

All durations are in microseconds, sizes in bits and rates in Mb/s, so
``bits / rate`` is already a duration in microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidRateError, ValidationError

OFDM_RATES_MBPS = (6.0, 9.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0)


@dataclass(frozen=True)
class PhyProfile:
    """PHY timing constants, frame overheads and the rate sets of one PHY."""

    empty_slot: float = 9.0
    sifs: float = 16.0
    difs: float = 34.0
    plcp_overhead: float = 20.0
    mac_overhead: float = 224.0       # 24-byte header + 4-byte FCS
    ack_payload: float = 112.0        # 14-byte ACK frame
    basic_rates: tuple[float, ...] = (6.0, 12.0, 24.0)
    supported_rates: frozenset[float] = frozenset(OFDM_RATES_MBPS)
    approximate_tu_as_ts: bool = True

    def __post_init__(self):
        for name in ("empty_slot", "sifs", "difs", "plcp_overhead"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"profile.{name}: must be > 0")
        if self.difs <= self.sifs:
            raise ValidationError("profile.difs: must exceed sifs")
        if self.mac_overhead < 0 or self.ack_payload < 0:
            raise ValidationError("profile.mac_overhead/ack_payload: must be >= 0")
        if not self.basic_rates:
            raise ValidationError("profile.basic_rates: must not be empty")
        if any(r <= 0 for r in self.basic_rates):
            raise ValidationError("profile.basic_rates: rates must be > 0")
        if not set(self.basic_rates) <= set(self.supported_rates):
            raise ValidationError("profile.basic_rates: must be a subset of supported_rates")
        object.__setattr__(self, "basic_rates", tuple(sorted(self.basic_rates)))
        object.__setattr__(self, "supported_rates", frozenset(self.supported_rates))

    @property
    def min_rate(self) -> float:
        return min(self.basic_rates)


@dataclass(frozen=True)
class StationSpec:
    """Traffic and link parameters of one station."""

    label: str
    payload: float                 # bits
    rate: float                    # Mb/s
    link_error: float = 0.0        # probability a lone transmission fails
    availability: float = 1.0      # probability a packet is queued at a win
    tx_power_dbm: float | None = None

    def __post_init__(self):
        if self.payload <= 0:
            raise ValidationError(f"station[{self.label}].payload: must be > 0")
        if self.rate <= 0:
            raise ValidationError(f"station[{self.label}].rate: must be > 0")
        if not 0.0 <= self.link_error < 1.0:
            raise ValidationError(f"station[{self.label}].link_error: must be in [0, 1)")
        if not 0.0 < self.availability <= 1.0:
            raise ValidationError(f"station[{self.label}].availability: must be in (0, 1]")


def validate_station(spec: StationSpec, profile: PhyProfile) -> None:
    """Check a station against a profile's supported rate set."""
    if spec.rate not in profile.supported_rates:
        raise InvalidRateError(
            f"station[{spec.label}].rate: {spec.rate} Mb/s not in supported rates"
        )


def ack_duration(profile: PhyProfile, data_rate: float) -> float:
    """ACK duration for a data frame sent at ``data_rate``.

    The ACK goes out at the highest basic rate not above the data rate,
    falling back to the lowest basic rate.
    """
    if data_rate not in profile.supported_rates:
        raise InvalidRateError(f"unknown rate {data_rate} Mb/s")
    eligible = [r for r in profile.basic_rates if r <= data_rate]
    ack_rate = max(eligible) if eligible else profile.min_rate
    return profile.plcp_overhead + profile.ack_payload / ack_rate


def eifs(profile: PhyProfile) -> float:
    """EIFS = SIFS + DIFS + ACK duration at the lowest basic rate."""
    ack_at_min = profile.plcp_overhead + profile.ack_payload / profile.min_rate
    return profile.sifs + profile.difs + ack_at_min


def tx_duration_success(profile: PhyProfile, spec: StationSpec) -> float:
    """Slot duration of a successful transmission (data + SIFS + ACK + DIFS)."""
    validate_station(spec, profile)
    data = profile.plcp_overhead + (profile.mac_overhead + spec.payload) / spec.rate
    return data + profile.sifs + ack_duration(profile, spec.rate) + profile.difs


def tx_duration_failure(profile: PhyProfile, spec: StationSpec) -> float:
    """Exact slot duration of a failed transmission (data + EIFS)."""
    validate_station(spec, profile)
    data = profile.plcp_overhead + (profile.mac_overhead + spec.payload) / spec.rate
    return data + eifs(profile)


def effective_failure_duration(profile: PhyProfile, spec: StationSpec) -> float:
    """Failure duration as consumed downstream; the success duration when the
    profile approximates the two (default), the exact EIFS-based one otherwise."""
    if profile.approximate_tu_as_ts:
        return tx_duration_success(profile, spec)
    return tx_duration_failure(profile, spec)


def order_stations(specs: list[StationSpec], profile: PhyProfile) -> list[int]:
    """Indices sorted by ascending success duration; ties break on label."""
    if not specs:
        raise ValidationError("stations: list must not be empty")
    keyed = [(tx_duration_success(profile, s), s.label, i) for i, s in enumerate(specs)]
    return [i for _, _, i in sorted(keyed)]


def success_durations(specs: list[StationSpec], profile: PhyProfile) -> np.ndarray:
    return np.array([tx_duration_success(profile, s) for s in specs])


def failure_durations(specs: list[StationSpec], profile: PhyProfile) -> np.ndarray:
    return np.array([effective_failure_duration(profile, s) for s in specs])


_PROFILE_KEYS = {
    "empty_slot_us": "empty_slot",
    "sifs_us": "sifs",
    "difs_us": "difs",
    "plcp_overhead_us": "plcp_overhead",
    "mac_overhead_bits": "mac_overhead",
    "ack_payload_bits": "ack_payload",
    "basic_rates_mbps": "basic_rates",
    "supported_rates_mbps": "supported_rates",
    "approximate_tu_as_ts": "approximate_tu_as_ts",
}


def profile_from_mapping(overrides: dict, base: PhyProfile | None = None) -> PhyProfile:
    """Build a profile from unit-suffixed keys, overriding ``base`` (802.11a)."""
    base = base if base is not None else PhyProfile()
    if not isinstance(overrides, dict):
        raise ValidationError("profile: expected a mapping")
    kwargs = {}
    for key, value in overrides.items():
        if key not in _PROFILE_KEYS:
            raise ValidationError(f"profile.{key}: unknown field")
        field = _PROFILE_KEYS[key]
        if field == "basic_rates":
            value = tuple(float(v) for v in value)
        elif field == "supported_rates":
            value = frozenset(float(v) for v in value)
        elif field != "approximate_tu_as_ts":
            value = float(value)
        kwargs[field] = value
    return replace(base, **kwargs)


def load_profile(path) -> PhyProfile:
    """Load a profile override file (YAML mapping with unit-suffixed keys)."""
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return profile_from_mapping(data)
