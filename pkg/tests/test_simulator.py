import csv

import numpy as np
import pytest

from wifair import model, optimizer, phy, simulator
from wifair.errors import ValidationError

from conftest import enum_slot_stats, random_scenario, station


def ordered_arrays(specs, profile):
    order = phy.order_stations(specs, profile)
    ts = phy.success_durations(specs, profile)[order]
    tu = phy.failure_durations(specs, profile)[order]
    p_n = np.array([specs[i].link_error for i in order])
    return order, ts, tu, p_n


class TestPPersistent:
    def test_single_saturated_station_every_slot_succeeds(self, profile):
        spec = station("s", 1000, 54.0)
        cfg = simulator.SimConfig(n_slots=5000, seed=1)
        res = simulator.run_p_persistent([1.0], [spec], profile, cfg)
        ts = phy.tx_duration_success(profile, spec)
        assert res.slots_success == 5000
        assert res.throughput_mbps[0] == pytest.approx(8000.0 / ts, rel=1e-12)
        assert res.airtime_frac[0] == pytest.approx(1.0)

    def test_all_zero_tau_all_idle(self, profile):
        specs = [station("a"), station("b", rate=6.0)]
        cfg = simulator.SimConfig(n_slots=3000, seed=1)
        res = simulator.run_p_persistent([0.0, 0.0], specs, profile, cfg)
        assert res.slots_empty == 3000
        assert res.elapsed_us == pytest.approx(3000 * profile.empty_slot)

    def test_three_station_oracle_agreement(self, profile):
        rng = np.random.default_rng(42)
        specs = random_scenario(rng, n=3)
        tau = rng.uniform(0.05, 0.3, size=3)
        n_slots = 1_000_000
        cfg = simulator.SimConfig(n_slots=n_slots, seed=9)
        res = simulator.run_p_persistent(tau, specs, profile, cfg)
        order, ts, tu, p_n = ordered_arrays(specs, profile)
        oracle = enum_slot_stats(tau[order], p_n, ts, tu, profile.empty_slot)
        # slot-class counts within 3 binomial standard errors
        for count, p in ((res.slots_empty, oracle["p_empty"]),
                         (res.slots_success, oracle["p_success"].sum())):
            sigma = np.sqrt(n_slots * p * (1 - p))
            assert abs(count - n_slots * p) <= 3 * sigma
        # per-station success counts
        for rank, i in enumerate(order):
            p = oracle["p_success"][rank]
            sigma = np.sqrt(n_slots * p * (1 - p))
            assert abs(res.successes[i] - n_slots * p) <= 3 * sigma

    def test_counts_consistent(self, profile):
        rng = np.random.default_rng(2)
        specs = random_scenario(rng, n=5)
        cfg = simulator.SimConfig(n_slots=50_000, seed=3)
        res = simulator.run_p_persistent(rng.uniform(0.05, 0.4, 5), specs, profile, cfg)
        assert np.array_equal(res.attempts,
                              res.successes + res.noise_failures + res.collisions)
        assert res.slots_empty + res.slots_success + res.slots_failure == res.n_slots

    def test_deterministic(self, profile):
        specs = [station("a"), station("b", rate=6.0, p_n=0.2)]
        cfg = simulator.SimConfig(n_slots=40_000, seed=17)
        a = simulator.run_p_persistent([0.2, 0.1], specs, profile, cfg)
        b = simulator.run_p_persistent([0.2, 0.1], specs, profile, cfg)
        assert a.elapsed_us == b.elapsed_us
        assert np.array_equal(a.attempts, b.attempts)
        assert np.array_equal(a.busy_failure_us, b.busy_failure_us)

    def test_warmup_excluded(self, profile):
        specs = [station("a")]
        cfg = simulator.SimConfig(n_slots=1000, seed=5, warmup_slots=400)
        res = simulator.run_p_persistent([0.3], specs, profile, cfg)
        assert res.n_slots == 600
        assert res.slots_empty + res.slots_success + res.slots_failure == 600

    def test_caller_order(self, profile):
        specs = [station("slow", 1000, 6.0), station("fast", 1000, 54.0)]
        cfg = simulator.SimConfig(n_slots=30_000, seed=8)
        res = simulator.run_p_persistent([0.05, 0.2], specs, profile, cfg)
        assert res.labels == ("slow", "fast")
        # the fast station attempted with four times the probability
        assert res.attempts[1] > 2 * res.attempts[0]


class TestBackoff:
    def test_fixed_window_attempt_rate(self, profile):
        specs = [station("a", 1000, 54.0), station("b", 1000, 6.0)]
        cfg = simulator.SimConfig(n_slots=1_000_000, seed=3, mode="backoff")
        res = simulator.run_backoff([16, 64], [0, 0], specs, profile, cfg)
        for i, w in enumerate([16, 64]):
            tau = 2.0 / (w + 1)
            sigma = np.sqrt(tau * (1 - tau) / res.n_slots)
            assert abs(res.tau_empirical[i] - tau) <= 3 * sigma

    def test_unit_window_transmits_every_slot(self, profile):
        specs = [station("only")]
        cfg = simulator.SimConfig(n_slots=2000, seed=1, mode="backoff")
        res = simulator.run_backoff([1], [0], specs, profile, cfg)
        assert res.attempts[0] == 2000
        assert res.successes[0] == 2000

    def test_two_station_equal_airtime_windows(self, profile):
        # optimizer -> rounded windows -> simulated airtime near 1/2 each
        specs = [station("fast", 1000, 54.0), station("slow", 1000, 6.0)]
        alloc = optimizer.solve_equal_airtime(specs, profile)
        cfg = simulator.SimConfig(n_slots=400_000, seed=11, mode="backoff")
        res = simulator.run_backoff(alloc.cw, [0, 0], specs, profile, cfg)
        expected = model.evaluate(
            specs, profile, 2.0 / (alloc.cw + 1.0)).stations.airtime
        np.testing.assert_allclose(res.airtime_frac, expected, atol=0.01)

    def test_kernels_bit_identical(self, profile):
        rng = np.random.default_rng(31)
        specs = random_scenario(rng, n=4)
        cw = [8, 16, 32, 64]
        m = [2, 0, 1, 6]
        a_sim = simulator.BackoffSim(specs, profile, cw, m, seed=77)
        b_sim = simulator.BackoffSim(specs, profile, cw, m, seed=77)
        a = a_sim.run(n_slots=30_000)
        b = b_sim.run(n_slots=30_000, trace=[])          # forces the python kernel
        for field in ("attempts", "successes", "noise_failures", "collisions"):
            assert np.array_equal(getattr(a, field), getattr(b, field)), field
        assert a.elapsed_us == b.elapsed_us
        assert np.array_equal(a.busy_success_us, b.busy_success_us)

    def test_doubling_reduces_attempts_under_noise(self, profile):
        quiet = simulator.run_backoff(
            [16], [6], [station("s", p_n=0.0)], profile,
            simulator.SimConfig(n_slots=200_000, seed=5, mode="backoff"))
        noisy = simulator.run_backoff(
            [16], [6], [station("s", p_n=0.5)], profile,
            simulator.SimConfig(n_slots=200_000, seed=5, mode="backoff"))
        assert noisy.tau_empirical[0] < 0.8 * quiet.tau_empirical[0]

    @staticmethod
    def _mean_tau_over_seeds(specs, profile, cw, m, seeds, n_slots):
        # With stage doubling the attempt process is long-range correlated,
        # so the standard error must come from independent runs, not from a
        # binomial count model.
        samples = []
        for seed in seeds:
            cfg = simulator.SimConfig(n_slots=n_slots + 100_000, seed=seed,
                                      mode="backoff", warmup_slots=100_000)
            samples.append(simulator.run_backoff(cw, m, specs, profile,
                                                 cfg).tau_empirical)
        samples = np.array(samples)
        k = len(seeds)
        return samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(k)

    def test_dcf_fixed_point_single_station_noise_exact(self, profile):
        # decoupling is exact for one station with i.i.d. link errors
        single = [station("s", 1000, 24.0, p_n=0.5)]
        av = optimizer.dcf_attempt_prob(16, 6, single, profile)
        mean, se = self._mean_tau_over_seeds(single, profile, [16], [6],
                                             seeds=range(40, 48), n_slots=500_000)
        assert abs(mean[0] - av.tau[0]) <= 3 * se[0]

    def test_dcf_fixed_point_agrees_with_simulation(self, profile):
        # The decoupled fixed point carries a known ~0.5-0.8% finite-N bias
        # against the true coupled process (stations that collide back off
        # together): tolerance is 3 standard errors or 1% relative,
        # whichever is larger.
        specs = [station(f"s{i}", 1400, r)
                 for i, r in enumerate([54.0, 24.0, 12.0, 6.0])]
        av = optimizer.dcf_attempt_prob(16, 6, specs, profile)
        mean, se = self._mean_tau_over_seeds(specs, profile, [16] * 4, [6] * 4,
                                             seeds=range(50, 58), n_slots=500_000)
        for i in range(4):
            tol = max(3 * se[i], 0.01 * av.tau[i])
            assert abs(mean[i] - av.tau[i]) <= tol

    def test_time_bounded_window(self, profile):
        sim = simulator.BackoffSim([station("s")], profile, [16], [0], seed=2)
        res = sim.run(max_time_us=50_000.0)
        assert res.elapsed_us >= 50_000.0
        # one slot of overshoot at most
        assert res.elapsed_us <= 50_000.0 + phy.tx_duration_success(
            profile, station("s"))

    def test_state_persists_across_runs(self, profile):
        one = simulator.BackoffSim([station("s")], profile, [64], [0], seed=4)
        first = one.run(n_slots=10_000)
        second = one.run(n_slots=10_000)
        merged = simulator.BackoffSim([station("s")], profile, [64], [0], seed=4)
        both = merged.run(n_slots=20_000)
        assert first.attempts[0] + second.attempts[0] == both.attempts[0]
        assert first.elapsed_us + second.elapsed_us == pytest.approx(
            both.elapsed_us, rel=1e-12)

    def test_rejects_bad_windows(self, profile):
        with pytest.raises(ValidationError):
            simulator.BackoffSim([station("s")], profile, [0], [0], seed=1)


class TestCapture:
    def test_resolve_capture_strong_wins(self):
        assert simulator.resolve_capture([0, 1], [30.0, 16.0], 10.0) == 0

    def test_resolve_capture_equal_powers_plain_collision(self):
        assert simulator.resolve_capture([0, 1], [20.0, 20.0], 10.0) is None

    def test_resolve_capture_needs_two(self):
        with pytest.raises(ValidationError):
            simulator.resolve_capture([0], [30.0], 10.0)

    def test_disabled_capture_identical_to_plain_run(self, profile):
        specs = [station("a", 1000, 6.0, power=30.0),
                 station("b", 1000, 6.0, power=16.0)]
        plain = simulator.run_p_persistent(
            [0.2, 0.2], specs, profile, simulator.SimConfig(n_slots=50_000, seed=6))
        # capture configured but threshold far above the 14 dB margin
        capped = simulator.run_p_persistent(
            [0.2, 0.2], specs, profile,
            simulator.SimConfig(n_slots=50_000, seed=6,
                                capture=simulator.CaptureConfig(50.0)))
        assert np.array_equal(plain.successes, capped.successes)
        assert plain.elapsed_us == capped.elapsed_us

    def test_strong_station_wins_collisions(self, profile):
        specs = [station("strong", 1000, 6.0, power=30.0),
                 station("weak", 1000, 6.0, power=16.0)]
        cfg = simulator.SimConfig(n_slots=100_000, seed=6,
                                  capture=simulator.CaptureConfig(10.0))
        res = simulator.run_p_persistent([0.2, 0.2], specs, profile, cfg)
        assert res.attempts[0] == res.successes[0]           # every attempt lands
        assert res.collisions[0] == 0
        assert res.collisions[1] > 0
        # captured slots still occupy the collision window for both stations
        assert res.airtime_frac[0] == pytest.approx(res.airtime_frac[1], rel=0.05)

    def test_capture_requires_powers(self, profile):
        specs = [station("a"), station("b", rate=6.0)]
        cfg = simulator.SimConfig(n_slots=1000, seed=1,
                                  capture=simulator.CaptureConfig(10.0))
        with pytest.raises(ValidationError):
            simulator.run_p_persistent([0.1, 0.1], specs, profile, cfg)

    def test_threshold_must_be_positive(self):
        with pytest.raises(ValidationError):
            simulator.CaptureConfig(0.0)


class TestTrace:
    def test_p_persistent_trace_roundtrip(self, profile, tmp_path):
        path = tmp_path / "trace.csv"
        specs = [station("a", 1000, 54.0), station("b", 1000, 6.0, p_n=0.3)]
        cfg = simulator.SimConfig(n_slots=2000, seed=21, trace_path=str(path))
        res = simulator.run_p_persistent([0.3, 0.2], specs, profile, cfg)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2000
        assert {r["outcome"] for r in rows} <= {
            "empty", "success", "noise_failure", "collision", "capture"}
        total = sum(float(r["duration_us"]) for r in rows)
        assert total == pytest.approx(res.elapsed_us, rel=1e-12)
        succ = sum(1 for r in rows if r["outcome"] == "success")
        assert succ == res.slots_success

    def test_backoff_trace_roundtrip(self, profile, tmp_path):
        path = tmp_path / "trace.csv"
        specs = [station("a", 1000, 54.0), station("b", 1000, 6.0)]
        cfg = simulator.SimConfig(n_slots=3000, seed=22, mode="backoff",
                                  trace_path=str(path))
        res = simulator.run_backoff([16, 16], [6, 6], specs, profile, cfg)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3000
        total = sum(float(r["duration_us"]) for r in rows)
        assert total == pytest.approx(res.elapsed_us, rel=1e-12)


class TestSimConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            simulator.SimConfig(n_slots=10, warmup_slots=10)
        with pytest.raises(ValidationError):
            simulator.SimConfig(n_slots=10, mode="other")
