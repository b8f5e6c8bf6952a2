import dataclasses

import numpy as np
import pytest

from wifair import phy
from wifair.errors import InvalidRateError, ValidationError

from conftest import station


def test_ack_duration_at_lowest_rate(profile):
    # 20 + 112/6
    assert phy.ack_duration(profile, 6.0) == pytest.approx(38.666666666666664, abs=1e-9)


def test_ack_duration_uses_highest_basic_rate_below(profile):
    # data at 54 -> ACK at 24: 20 + 112/24
    assert phy.ack_duration(profile, 54.0) == pytest.approx(24.666666666666668, abs=1e-9)


def test_ack_duration_zero_payload_is_plcp_only():
    prof = phy.PhyProfile(ack_payload=0.0)
    assert phy.ack_duration(prof, 12.0) == prof.plcp_overhead


def test_ack_duration_unknown_rate(profile):
    with pytest.raises(InvalidRateError):
        phy.ack_duration(profile, 7.0)


def test_eifs_recomputed(profile):
    assert phy.eifs(profile) == pytest.approx(16 + 34 + 38.666666666666664, abs=1e-9)


def test_tx_success_overhead_only_case():
    prof = phy.PhyProfile(mac_overhead=0.0)
    spec = phy.StationSpec(label="s", payload=1e-9, rate=6.0)
    expected = prof.plcp_overhead + prof.sifs + phy.ack_duration(prof, 6.0) + prof.difs
    assert phy.tx_duration_success(prof, spec) == pytest.approx(expected, abs=1e-6)


def test_tx_success_slow_station(profile):
    # 20 + 8224/6 + 16 + 38.6667 + 34
    spec = station(payload_bytes=1000, rate=6.0)
    assert phy.tx_duration_success(profile, spec) == pytest.approx(
        1479.3333333333333, abs=1e-9)


def test_tx_success_fast_station(profile):
    # 20 + 8224/54 + 16 + 24.6667 + 34
    spec = station(payload_bytes=1000, rate=54.0)
    assert phy.tx_duration_success(profile, spec) == pytest.approx(
        246.96296296296296, abs=1e-9)


def test_tx_failure_overhead_only_case():
    prof = phy.PhyProfile(mac_overhead=0.0)
    spec = phy.StationSpec(label="s", payload=1e-9, rate=6.0)
    assert phy.tx_duration_failure(prof, spec) == pytest.approx(
        prof.plcp_overhead + phy.eifs(prof), abs=1e-6)


def test_tx_failure_slow_station(profile):
    # 20 + 8224/6 + (16 + 34 + 38.6667): equals the success duration since the
    # ACK for a 6 Mb/s frame already goes out at the lowest basic rate
    spec = station(payload_bytes=1000, rate=6.0)
    assert phy.tx_duration_failure(profile, spec) == pytest.approx(
        1479.3333333333333, abs=1e-9)


def test_failure_duration_flag_substitutes_success(profile):
    spec = station(rate=54.0)
    assert profile.approximate_tu_as_ts
    assert phy.effective_failure_duration(profile, spec) == phy.tx_duration_success(
        profile, spec)
    exact = dataclasses.replace(profile, approximate_tu_as_ts=False)
    assert phy.effective_failure_duration(exact, spec) == phy.tx_duration_failure(
        exact, spec)


def test_order_fast_rate_first(profile):
    specs = [station("a", 1000, 54.0), station("b", 1000, 6.0)]
    assert phy.order_stations(specs, profile) == [0, 1]


def test_order_identical_specs_is_stable(profile):
    specs = [station("a"), station("a"), station("a")]
    assert phy.order_stations(specs, profile) == [0, 1, 2]


def test_order_can_invert_rate_order(profile):
    # 100 B at 6 Mb/s is shorter on air than 14000 B at 54 Mb/s
    slow_short = station("slow", 100, 6.0)
    fast_long = station("fast", 14000, 54.0)
    assert phy.tx_duration_success(profile, slow_short) < phy.tx_duration_success(
        profile, fast_long)
    assert phy.order_stations([fast_long, slow_short], profile) == [1, 0]


def test_order_is_valid_permutation_and_idempotent(profile):
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(1, 9))
        specs = [station(f"s{i}", int(rng.integers(100, 1401)),
                         float(rng.choice([6.0, 9.0, 12.0, 24.0, 54.0])))
                 for i in range(n)]
        order = phy.order_stations(specs, profile)
        assert sorted(order) == list(range(n))
        reordered = [specs[i] for i in order]
        assert phy.order_stations(reordered, profile) == list(range(n))


@pytest.mark.parametrize("rate", [6.0, 12.0, 24.0, 54.0])
def test_tx_success_monotone_in_payload(profile, rate):
    payloads = np.linspace(100, 14000, 25)
    durs = [phy.tx_duration_success(profile, station("s", p, rate)) for p in payloads]
    assert np.all(np.diff(durs) > 0)


@pytest.mark.parametrize("payload", [100, 1000, 1400])
def test_tx_success_monotone_in_rate(profile, payload):
    rates = [6.0, 9.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0]
    durs = [phy.tx_duration_success(profile, station("s", payload, r)) for r in rates]
    assert np.all(np.diff(durs) < 0)


def test_profile_invariants():
    with pytest.raises(ValidationError):
        phy.PhyProfile(difs=10.0, sifs=16.0)
    with pytest.raises(ValidationError):
        phy.PhyProfile(basic_rates=(7.0,))
    with pytest.raises(ValidationError):
        phy.PhyProfile(empty_slot=0.0)
    assert phy.PhyProfile().min_rate == 6.0


def test_station_invariants():
    with pytest.raises(ValidationError):
        phy.StationSpec(label="s", payload=0.0, rate=6.0)
    with pytest.raises(ValidationError):
        phy.StationSpec(label="s", payload=100.0, rate=6.0, link_error=1.0)
    with pytest.raises(ValidationError):
        phy.StationSpec(label="s", payload=100.0, rate=6.0, availability=0.0)
    with pytest.raises(InvalidRateError):
        phy.validate_station(phy.StationSpec(label="s", payload=100.0, rate=7.0),
                             phy.PhyProfile())


def test_profile_override_file(tmp_path):
    path = tmp_path / "profile.yaml"
    path.write_text(
        "empty_slot_us: 20\n"
        "supported_rates_mbps: [1, 2, 5.5, 11]\n"
        "basic_rates_mbps: [1, 2]\n"
        "approximate_tu_as_ts: false\n"
    )
    prof = phy.load_profile(path)
    assert prof.empty_slot == 20.0
    assert prof.min_rate == 1.0
    assert not prof.approximate_tu_as_ts
    assert prof.supported_rates == frozenset({1.0, 2.0, 5.5, 11.0})


def test_profile_override_unknown_key():
    with pytest.raises(ValidationError):
        phy.profile_from_mapping({"slot_time": 9})
