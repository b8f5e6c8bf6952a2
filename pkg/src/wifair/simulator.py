"""Slot-level Monte Carlo simulation of multi-rate DCF.

Two modes answer two different questions: ``p_persistent`` draws attempts
directly from given per-slot probabilities and validates the analytic model;
``backoff`` runs per-station contention windows (with optional doubling) and
validates the tau <-> CW mapping and the DCF baseline.

Both are deterministic for a given (config, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import phy
from .errors import ValidationError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba present in normal installs
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (len(args) == 1 and callable(args[0])) else args[0]


_CHUNK = 1 << 20
_U64_MASK = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = 1.0 / 9007199254740992.0

_OUTCOMES = ("empty", "success", "noise_failure", "collision", "capture")

# per-byte lookup tables: attempt sets of up to 8 stations pack into one code
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int8)
_HIGH_BIT = np.array([max(i.bit_length() - 1, 0) for i in range(256)],
                     dtype=np.int64)


@dataclass(frozen=True)
class CaptureConfig:
    """Strongest frame in a collision is decoded when its power margin over
    the runner-up reaches the threshold."""

    power_threshold_db: float

    def __post_init__(self):
        if self.power_threshold_db <= 0:
            raise ValidationError("capture.power_threshold_db: must be > 0")


@dataclass(frozen=True)
class SimConfig:
    n_slots: int
    seed: int = 1
    mode: str = "p_persistent"
    capture: CaptureConfig | None = None
    warmup_slots: int = 0
    trace_path: str | None = None

    def __post_init__(self):
        if self.mode not in ("p_persistent", "backoff"):
            raise ValidationError(f"sim.mode: unknown mode {self.mode!r}")
        if self.warmup_slots < 0 or self.n_slots <= self.warmup_slots:
            raise ValidationError("sim.n_slots: need n_slots > warmup_slots >= 0")


@dataclass(frozen=True)
class SimResult:
    """Counts and times accumulated over the measured slots (caller order)."""

    labels: tuple[str, ...]
    payload: np.ndarray
    attempts: np.ndarray
    successes: np.ndarray
    noise_failures: np.ndarray
    collisions: np.ndarray
    busy_success_us: np.ndarray
    busy_failure_us: np.ndarray
    success_duration_sum_us: np.ndarray
    slots_empty: int
    slots_success: int
    slots_failure: int
    n_slots: int
    elapsed_us: float

    @property
    def throughput_mbps(self) -> np.ndarray:
        return self.successes * self.payload / self.elapsed_us

    @property
    def airtime_frac(self) -> np.ndarray:
        return (self.busy_success_us + self.busy_failure_us) / self.elapsed_us

    @property
    def tau_empirical(self) -> np.ndarray:
        return self.attempts / self.n_slots


def resolve_capture(attempters, tx_powers, threshold_db: float):
    """Index of the capturing transmitter, or None for a plain collision."""
    if len(attempters) < 2:
        raise ValidationError("capture: needs at least two simultaneous attempts")
    if threshold_db <= 0:
        raise ValidationError("capture: threshold must be > 0")
    powers = [(tx_powers[i], i) for i in attempters]
    powers.sort(reverse=True)
    (top, winner), (second, _) = powers[0], powers[1]
    if top - second >= threshold_db:
        return winner
    return None


def _ordered_arrays(specs, profile):
    order = phy.order_stations(specs, profile)
    ts = phy.success_durations(specs, profile)[order]
    tu = phy.failure_durations(specs, profile)[order]
    p_n = np.array([specs[i].link_error for i in order])
    payload = np.array([specs[i].payload for i in order])
    return order, ts, tu, p_n, payload


def _powers(specs, order, capture):
    if capture is None:
        return np.zeros(len(specs))
    missing = [s.label for s in specs if s.tx_power_dbm is None]
    if missing:
        raise ValidationError(
            f"capture: stations {missing} need tx_power_dbm"
        )
    return np.array([specs[i].tx_power_dbm for i in order], dtype=float)


def _result_from_ordered(order, labels, payload_caller, acc, totals, n_counted,
                         elapsed):
    n = len(order)
    caller = {}
    for name, arr in acc.items():
        out = np.empty(n, dtype=arr.dtype)
        out[order] = arr
        caller[name] = out
    return SimResult(
        labels=labels,
        payload=payload_caller,
        attempts=caller["attempts"],
        successes=caller["successes"],
        noise_failures=caller["noise_failures"],
        collisions=caller["collisions"],
        busy_success_us=caller["busy_s"],
        busy_failure_us=caller["busy_f"],
        success_duration_sum_us=caller["own_s"],
        slots_empty=int(totals[0]),
        slots_success=int(totals[1]),
        slots_failure=int(totals[2]),
        n_slots=n_counted,
        elapsed_us=float(elapsed),
    )


def run_p_persistent(tau, specs, profile: phy.PhyProfile, cfg: SimConfig) -> SimResult:
    """Simulate slots where station i transmits with fixed probability tau_i.

    A lone transmission succeeds unless its link-error draw fails; two or
    more transmitters collide and the slot lasts as long as the longest
    frame involved (optionally resolved by capture).
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    n = len(specs)
    if tau.size != n:
        raise ValidationError("tau: length must match the number of stations")
    order, ts, tu, p_n, payload = _ordered_arrays(specs, profile)
    tau_o = tau[order]
    powers = _powers(specs, order, cfg.capture)
    threshold = cfg.capture.power_threshold_db if cfg.capture else -1.0
    t_e = profile.empty_slot

    acc = {
        "attempts": np.zeros(n, dtype=np.int64),
        "successes": np.zeros(n, dtype=np.int64),
        "noise_failures": np.zeros(n, dtype=np.int64),
        "collisions": np.zeros(n, dtype=np.int64),
        "busy_s": np.zeros(n),
        "busy_f": np.zeros(n),
        "own_s": np.zeros(n),
    }
    totals = np.zeros(3, dtype=np.int64)
    elapsed = 0.0
    rng = np.random.default_rng(cfg.seed)
    tracer = _Tracer(cfg.trace_path, [specs[i].label for i in order])

    # float32 draws halve the bandwidth of the dominant RNG stage; the
    # 2^-24 quantization of tau is far below any tested tolerance
    tau32 = tau_o.astype(np.float32)
    p_n32 = p_n.astype(np.float32)
    done = 0
    while done < cfg.n_slots:
        chunk = min(_CHUNK, cfg.n_slots - done)
        u_att = rng.random((chunk, n), dtype=np.float32)
        u_noise = rng.random(chunk, dtype=np.float32)
        att = u_att < tau32[None, :]
        start = max(0, cfg.warmup_slots - done)   # first counted row in chunk
        done += chunk
        if start >= chunk:
            continue

        if n <= 8:
            code = np.packbits(att, axis=1, bitorder="little").ravel()
            n_att = _POPCOUNT[code]
        else:
            code = None
            n_att = att.sum(axis=1)
        dur = np.full(chunk, t_e)
        outcome = np.zeros(chunk, dtype=np.int8)          # index into _OUTCOMES
        slot_station = np.full(chunk, -1, dtype=np.int64)

        single = np.nonzero(n_att == 1)[0]
        if single.size:
            if code is not None:
                st = _HIGH_BIT[code[single]]
            else:
                st = np.argmax(att[single], axis=1)
            ok = u_noise[single] >= p_n32[st]
            dur[single] = np.where(ok, ts[st], tu[st])
            outcome[single] = np.where(ok, 1, 2)
            slot_station[single] = st

        multi = np.nonzero(n_att >= 2)[0]
        winner = np.full(multi.size, -1, dtype=np.int64)
        if multi.size:
            att_m = att[multi]
            if code is not None:
                hi = _HIGH_BIT[code[multi]]
            else:
                hi = (n - 1) - np.argmax(att_m[:, ::-1], axis=1)
            dur[multi] = tu[hi]
            outcome[multi] = 3
            slot_station[multi] = hi
            if threshold > 0:
                masked = np.where(att_m, powers[None, :], -np.inf)
                top = masked.max(axis=1)
                second = np.partition(masked, n - 2, axis=1)[:, n - 2]
                cap = (top - second) >= threshold
                winner = np.where(cap, np.argmax(masked, axis=1), -1)
                outcome[multi[cap]] = 4
                slot_station[multi[cap]] = winner[cap]

        counted = slice(start, chunk)
        acc["attempts"] += att[counted].sum(axis=0)
        if single.size:
            keep = single >= start
            st_k, ok_k = st[keep], ok[keep]
            np.add.at(acc["successes"], st_k[ok_k], 1)
            np.add.at(acc["busy_s"], st_k[ok_k], ts[st_k[ok_k]])
            np.add.at(acc["own_s"], st_k[ok_k], ts[st_k[ok_k]])
            np.add.at(acc["noise_failures"], st_k[~ok_k], 1)
            np.add.at(acc["busy_f"], st_k[~ok_k], tu[st_k[~ok_k]])
        if multi.size:
            keep = multi >= start
            att_k = att[multi[keep]]
            dur_k = dur[multi[keep]]
            win_k = winner[keep]
            acc["collisions"] += att_k.sum(axis=0)
            acc["busy_f"] += (att_k * dur_k[:, None]).sum(axis=0)
            capped = win_k >= 0
            if np.any(capped):
                w = win_k[capped]
                d = dur_k[capped]
                np.add.at(acc["collisions"], w, -1)
                np.add.at(acc["successes"], w, 1)
                np.add.at(acc["busy_f"], w, -d)
                np.add.at(acc["busy_s"], w, d)
                np.add.at(acc["own_s"], w, ts[w])

        ocount = outcome[counted]
        totals[0] += int((ocount == 0).sum())
        totals[1] += int(((ocount == 1) | (ocount == 4)).sum())
        totals[2] += int(((ocount == 2) | (ocount == 3)).sum())
        elapsed += float(dur[counted].sum())
        tracer.write(outcome[counted], slot_station[counted], dur[counted])

    tracer.close()
    labels = tuple(s.label for s in specs)
    payload_caller = np.array([s.payload for s in specs])
    return _result_from_ordered(order, labels, payload_caller, acc, totals,
                                cfg.n_slots - cfg.warmup_slots, elapsed)


class _Tracer:
    """Optional per-slot CSV sink (slot_index, outcome, station, duration_us)."""

    def __init__(self, path, ordered_labels):
        self._fh = None
        self._labels = ordered_labels
        self._index = 0
        if path:
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(["slot_index", "outcome", "station", "duration_us"])

    def write(self, outcomes, stations, durations):
        if self._fh is None:
            self._index += len(outcomes)
            return
        for o, s, d in zip(outcomes, stations, durations):
            label = self._labels[s] if s >= 0 else ""
            self._writer.writerow([self._index, _OUTCOMES[o], label, repr(float(d))])
            self._index += 1

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _seed_state(seed: int) -> np.ndarray:
    """Expand a seed into xorshift128+ state via splitmix64."""
    state = np.empty(2, dtype=np.uint64)
    z = seed & _U64_MASK
    for i in range(2):
        z = (z + 0x9E3779B97F4A7C15) & _U64_MASK
        s = z
        s = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _U64_MASK
        s = ((s ^ (s >> 27)) * 0x94D049BB133111EB) & _U64_MASK
        state[i] = s ^ (s >> 31)
    if state[0] == 0 and state[1] == 0:
        state[0] = np.uint64(1)
    return state


@njit(cache=True)
def _backoff_kernel(max_slots, max_time, cw_min, mstage, p_n, ts, tu, t_e,
                    powers, cap_thr, stage, counter, rng_state,
                    attempts, successes, noise_failures, collisions,
                    busy_s, busy_f, own_s, totals):  # pragma: no cover - jit compiled
    n = cw_min.shape[0]
    slots = 0
    elapsed = 0.0
    while slots < max_slots and elapsed < max_time:
        ntx = 0
        hi = -1
        for i in range(n):
            if counter[i] == 0:
                ntx += 1
                hi = i
        if ntx == 0:
            dur = t_e
            totals[0] += 1
            for i in range(n):
                counter[i] -= 1
        else:
            winner = -1
            if ntx >= 2 and cap_thr > 0.0:
                top = -1.0e300
                second = -1.0e300
                winner_i = -1
                for i in range(n):
                    if counter[i] == 0:
                        p = powers[i]
                        if p > top:
                            second = top
                            top = p
                            winner_i = i
                        elif p > second:
                            second = p
                if top - second >= cap_thr:
                    winner = winner_i
            if ntx == 1:
                dur = 0.0
            else:
                dur = tu[hi]
            for i in range(n):
                if counter[i] != 0:
                    if counter[i] > 0:
                        counter[i] -= 1
                    continue
                attempts[i] += 1
                # advance rng
                x = rng_state[0]
                y = rng_state[1]
                rng_state[0] = y
                x ^= x << np.uint64(23)
                x ^= x >> np.uint64(17)
                x ^= y ^ (y >> np.uint64(26))
                rng_state[1] = x
                r = x + y
                if ntx == 1:
                    u = np.float64(r >> np.uint64(11)) * _INV_2_53
                    if u >= p_n[i]:
                        dur = ts[i]
                        successes[i] += 1
                        busy_s[i] += dur
                        own_s[i] += dur
                        stage[i] = 0
                        totals[1] += 1
                    else:
                        dur = tu[i]
                        noise_failures[i] += 1
                        busy_f[i] += dur
                        if stage[i] < mstage[i]:
                            stage[i] += 1
                        totals[2] += 1
                    # second draw for the new counter
                    x = rng_state[0]
                    y = rng_state[1]
                    rng_state[0] = y
                    x ^= x << np.uint64(23)
                    x ^= x >> np.uint64(17)
                    x ^= y ^ (y >> np.uint64(26))
                    rng_state[1] = x
                    r = x + y
                else:
                    if i == winner:
                        successes[i] += 1
                        busy_s[i] += dur
                        own_s[i] += ts[i]
                        stage[i] = 0
                    else:
                        collisions[i] += 1
                        busy_f[i] += dur
                        if stage[i] < mstage[i]:
                            stage[i] += 1
                cw = cw_min[i] << stage[i]
                counter[i] = np.int64(r % np.uint64(cw))
            if ntx >= 2:
                if winner >= 0:
                    totals[1] += 1
                else:
                    totals[2] += 1
        elapsed += dur
        slots += 1
    return slots, elapsed


def _backoff_kernel_py(max_slots, max_time, cw_min, mstage, p_n, ts, tu, t_e,
                       powers, cap_thr, stage, counter, rng_state,
                       attempts, successes, noise_failures, collisions,
                       busy_s, busy_f, own_s, totals, trace=None):
    """Pure-python mirror of the jitted kernel, bit-identical by construction."""
    n = len(cw_min)
    s0 = int(rng_state[0])
    s1 = int(rng_state[1])
    slots = 0
    elapsed = 0.0
    while slots < max_slots and elapsed < max_time:
        transmitters = [i for i in range(n) if counter[i] == 0]
        ntx = len(transmitters)
        if ntx == 0:
            dur = t_e
            totals[0] += 1
            for i in range(n):
                counter[i] -= 1
            if trace is not None:
                trace.append((0, -1, dur))
        else:
            hi = transmitters[-1]
            winner = -1
            if ntx >= 2 and cap_thr > 0.0:
                top, second = -1.0e300, -1.0e300
                winner_i = -1
                for i in transmitters:
                    p = powers[i]
                    if p > top:
                        second, top, winner_i = top, p, i
                    elif p > second:
                        second = p
                if top - second >= cap_thr:
                    winner = winner_i
            dur = 0.0 if ntx == 1 else tu[hi]
            for i in range(n):
                if counter[i] != 0:
                    if counter[i] > 0:
                        counter[i] -= 1
                    continue
                attempts[i] += 1
                x = s0
                y = s1
                s0 = y
                x ^= (x << 23) & _U64_MASK
                x ^= x >> 17
                x ^= y ^ (y >> 26)
                s1 = x
                r = (x + y) & _U64_MASK
                if ntx == 1:
                    u = (r >> 11) * _INV_2_53
                    if u >= p_n[i]:
                        dur = ts[i]
                        successes[i] += 1
                        busy_s[i] += dur
                        own_s[i] += dur
                        stage[i] = 0
                        totals[1] += 1
                        if trace is not None:
                            trace.append((1, i, dur))
                    else:
                        dur = tu[i]
                        noise_failures[i] += 1
                        busy_f[i] += dur
                        if stage[i] < mstage[i]:
                            stage[i] += 1
                        totals[2] += 1
                        if trace is not None:
                            trace.append((2, i, dur))
                    x = s0
                    y = s1
                    s0 = y
                    x ^= (x << 23) & _U64_MASK
                    x ^= x >> 17
                    x ^= y ^ (y >> 26)
                    s1 = x
                    r = (x + y) & _U64_MASK
                else:
                    if i == winner:
                        successes[i] += 1
                        busy_s[i] += dur
                        own_s[i] += ts[i]
                        stage[i] = 0
                    else:
                        collisions[i] += 1
                        busy_f[i] += dur
                        if stage[i] < mstage[i]:
                            stage[i] += 1
                cw = int(cw_min[i]) << int(stage[i])
                counter[i] = r % cw
            if ntx >= 2:
                if winner >= 0:
                    totals[1] += 1
                    if trace is not None:
                        trace.append((4, winner, dur))
                else:
                    totals[2] += 1
                    if trace is not None:
                        trace.append((3, hi, dur))
        elapsed += dur
        slots += 1
    rng_state[0] = np.uint64(s0)
    rng_state[1] = np.uint64(s1)
    return slots, elapsed


class BackoffSim:
    """Stateful backoff simulator; state persists across :meth:`run` calls so
    closed-loop windows continue where the previous one stopped."""

    def __init__(self, specs, profile: phy.PhyProfile, cw_min, m, seed: int,
                 capture: CaptureConfig | None = None):
        self.specs = list(specs)
        self.profile = profile
        n = len(self.specs)
        cw_min = np.asarray(cw_min, dtype=np.int64)
        m = np.asarray(m, dtype=np.int64)
        if cw_min.size != n or m.size != n:
            raise ValidationError("backoff: cw_min/m must have one entry per station")
        if np.any(cw_min < 1) or np.any(m < 0):
            raise ValidationError("backoff: need cw_min >= 1 and m >= 0")
        self.order, self._ts, self._tu, self._p_n, self._payload = _ordered_arrays(
            self.specs, profile
        )
        self._cw_min = cw_min[self.order]
        self._m = m[self.order]
        self._powers = _powers(self.specs, self.order, capture)
        self._cap_thr = capture.power_threshold_db if capture else -1.0
        self._stage = np.zeros(n, dtype=np.int64)
        self._rng_state = _seed_state(seed)
        self._counter = np.empty(n, dtype=np.int64)
        for i in range(n):
            self._counter[i] = self._draw() % int(self._cw_min[i])

    def _draw(self) -> int:
        s0, s1 = int(self._rng_state[0]), int(self._rng_state[1])
        x, y = s0, s1
        self._rng_state[0] = np.uint64(y)
        x ^= (x << 23) & _U64_MASK
        x ^= x >> 17
        x ^= y ^ (y >> 26)
        self._rng_state[1] = np.uint64(x)
        return (x + y) & _U64_MASK

    def set_windows(self, cw_min, m) -> None:
        """Apply new window parameters; they take effect at each station's
        next redraw, like parameters delivered by a beacon."""
        cw_min = np.asarray(cw_min, dtype=np.int64)
        m = np.asarray(m, dtype=np.int64)
        if np.any(cw_min < 1) or np.any(m < 0):
            raise ValidationError("backoff: need cw_min >= 1 and m >= 0")
        self._cw_min = cw_min[self.order]
        self._m = m[self.order]
        np.minimum(self._stage, self._m, out=self._stage)

    def run(self, n_slots: int | None = None, max_time_us: float | None = None,
            trace: list | None = None) -> SimResult:
        if n_slots is None and max_time_us is None:
            raise ValidationError("backoff: give n_slots and/or max_time_us")
        max_slots = n_slots if n_slots is not None else np.iinfo(np.int64).max
        max_time = max_time_us if max_time_us is not None else np.inf
        n = len(self.specs)
        acc = {
            "attempts": np.zeros(n, dtype=np.int64),
            "successes": np.zeros(n, dtype=np.int64),
            "noise_failures": np.zeros(n, dtype=np.int64),
            "collisions": np.zeros(n, dtype=np.int64),
            "busy_s": np.zeros(n),
            "busy_f": np.zeros(n),
            "own_s": np.zeros(n),
        }
        totals = np.zeros(3, dtype=np.int64)
        kernel = _backoff_kernel if (HAVE_NUMBA and trace is None) else _backoff_kernel_py
        extra = {} if (HAVE_NUMBA and trace is None) else {"trace": trace}
        slots, elapsed = kernel(
            max_slots, max_time, self._cw_min, self._m, self._p_n, self._ts,
            self._tu, self.profile.empty_slot, self._powers, self._cap_thr,
            self._stage, self._counter, self._rng_state,
            acc["attempts"], acc["successes"], acc["noise_failures"],
            acc["collisions"], acc["busy_s"], acc["busy_f"], acc["own_s"],
            totals, **extra,
        )
        labels = tuple(s.label for s in self.specs)
        payload_caller = np.array([s.payload for s in self.specs])
        return _result_from_ordered(self.order, labels, payload_caller, acc,
                                    totals, int(slots), elapsed)


def run_backoff(cw_min, m, specs, profile: phy.PhyProfile, cfg: SimConfig) -> SimResult:
    """One-shot backoff run honouring warmup and the optional trace flag."""
    sim = BackoffSim(specs, profile, cw_min, m, cfg.seed, cfg.capture)
    trace_rows = [] if cfg.trace_path else None
    if cfg.warmup_slots:
        sim.run(n_slots=cfg.warmup_slots,
                trace=[] if trace_rows is not None else None)
    result = sim.run(n_slots=cfg.n_slots - cfg.warmup_slots, trace=trace_rows)
    if cfg.trace_path:
        ordered_labels = [specs[i].label for i in sim.order]
        tracer = _Tracer(cfg.trace_path, ordered_labels)
        tracer.write(
            np.array([r[0] for r in trace_rows], dtype=np.int8),
            np.array([r[1] for r in trace_rows], dtype=np.int64),
            np.array([r[2] for r in trace_rows]),
        )
        tracer.close()
    return result
