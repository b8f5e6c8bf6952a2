"""AP-side closed control loop: measure, re-optimize, distribute windows.

Each beacon interval the controller aggregates the durations and counts of
frames received correctly per station, re-solves the equal-airtime problem
on the smoothed duration estimates and hands every active station a fixed
(min = max) power-of-2 contention window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import optimizer, phy, simulator
from .errors import ConvergenceError, ValidationError

DCF_ECW_MIN = 4          # log2 of the standard CWmin = 16


@dataclass(frozen=True)
class ControllerConfig:
    beacon_interval_us: float = 102_400.0
    ewma: float = 0.5
    departure_windows: int = 3
    dcf_cw_min: int = 16
    dcf_m: int = 6
    solver: optimizer.SolverConfig = field(default_factory=optimizer.SolverConfig)

    def __post_init__(self):
        if self.beacon_interval_us <= 0:
            raise ValidationError("controller.beacon_interval_us: must be > 0")
        if not 0.0 < self.ewma <= 1.0:
            raise ValidationError("controller.ewma: must be in (0, 1]")
        if self.departure_windows < 1:
            raise ValidationError("controller.departure_windows: must be >= 1")


@dataclass(frozen=True)
class StationObservation:
    """Per-window measurement of one station's delivered frames."""

    label: str
    success_count: int
    success_airtime_sum: float     # us over the window
    mean_ts: float | None          # EWMA-smoothed duration estimate, us


@dataclass(frozen=True)
class BeaconAssignment:
    """Windows distributed at one beacon epoch; min and max are pinned equal."""

    epoch: int
    entries: tuple[tuple[str, int, int], ...]    # (label, ecw_min, ecw_max)

    def __post_init__(self):
        for label, lo, hi in self.entries:
            if lo != hi:
                raise ValidationError(f"assignment[{label}]: ecw_min must equal ecw_max")
            if not 0 <= lo <= optimizer.ECW_MAX:
                raise ValidationError(f"assignment[{label}]: ecw out of [0, 15]")

    def as_dict(self) -> dict[str, int]:
        return {label: lo for label, lo, _ in self.entries}


@dataclass
class _Tracked:
    ewma_ts: float | None = None
    zero_windows: int = 0


class Controller:
    """Tracks per-station duration estimates and emits window assignments."""

    def __init__(self, profile: phy.PhyProfile, cfg: ControllerConfig | None = None):
        self.profile = profile
        self.cfg = cfg or ControllerConfig()
        self._tracked: dict[str, _Tracked] = {}
        self._epoch = 0
        self._last_assignment: BeaconAssignment | None = None
        self.last_exact_tau: dict[str, float] = {}
        self.warnings: list[str] = []

    @property
    def active_labels(self) -> tuple[str, ...]:
        return tuple(sorted(self._tracked))

    def observe_window(self, window: simulator.SimResult | None
                       ) -> list[StationObservation]:
        """Fold one beacon window of measurements into the tracked set.

        Stations absent from the window count as a zero-success window and
        are dropped after ``departure_windows`` consecutive misses; stations
        seen for the first time are added.
        """
        seen: dict[str, tuple[int, float, float]] = {}
        if window is not None:
            for i, label in enumerate(window.labels):
                seen[label] = (
                    int(window.successes[i]),
                    float(window.busy_success_us[i]),
                    float(window.success_duration_sum_us[i]),
                )
                if label not in self._tracked:
                    self._tracked[label] = _Tracked()

        alpha = self.cfg.ewma
        observations = []
        for label in list(self._tracked):
            state = self._tracked[label]
            count, busy, own_sum = seen.get(label, (0, 0.0, 0.0))
            if count > 0:
                sample = own_sum / count
                state.ewma_ts = (sample if state.ewma_ts is None
                                 else alpha * sample + (1.0 - alpha) * state.ewma_ts)
                state.zero_windows = 0
            else:
                state.zero_windows += 1
                if state.zero_windows >= self.cfg.departure_windows:
                    del self._tracked[label]
                    continue
            observations.append(StationObservation(
                label=label, success_count=count,
                success_airtime_sum=busy, mean_ts=state.ewma_ts,
            ))
        return observations

    def control_step(self, observations: list[StationObservation]
                     ) -> BeaconAssignment | None:
        """Re-solve equal airtime on the observed durations and round.

        Returns the previous assignment (with a recorded warning) when the
        solver fails, and None when no station has a measurement yet.
        """
        self._epoch += 1
        measured = [(o.label, o.mean_ts) for o in observations if o.mean_ts]
        if not measured:
            return self._last_assignment
        measured.sort()
        labels = [m[0] for m in measured]
        ts = np.array([m[1] for m in measured])
        try:
            tau, _, _, _ = optimizer.solve_equal_airtime_durations(
                ts, self.profile.empty_slot, self.cfg.solver
            )
        except ConvergenceError as err:
            self.warnings.append(f"epoch {self._epoch}: solver failed ({err}); "
                                 "assignment retained")
            return self._last_assignment
        entries = []
        for label, t in zip(labels, tau):
            ecw = optimizer.round_to_pow2(optimizer.tau_to_cw(t)).ecw
            entries.append((label, ecw, ecw))
        self.last_exact_tau = dict(zip(labels, tau))
        assignment = BeaconAssignment(epoch=self._epoch, entries=tuple(entries))
        self._last_assignment = assignment
        return assignment


@dataclass(frozen=True)
class ScriptEvent:
    """One timed change to the WLAN membership or a station attribute."""

    at_s: float
    station: str
    action: str                      # join | leave | set_rate | set_power | set_link_error
    value: float | None = None
    spec: phy.StationSpec | None = None

    _ACTIONS = ("join", "leave", "set_rate", "set_power", "set_link_error")

    def __post_init__(self):
        if self.at_s < 0:
            raise ValidationError(f"event[{self.station}].at_s: must be >= 0")
        if self.action not in self._ACTIONS:
            raise ValidationError(f"event[{self.station}].action: unknown {self.action!r}")
        if self.action == "join" and self.spec is None:
            raise ValidationError(f"event[{self.station}]: join needs a station spec")
        if self.action.startswith("set_") and self.value is None:
            raise ValidationError(f"event[{self.station}].{self.action}: needs a value")


@dataclass(frozen=True)
class ClosedLoopScript:
    """Timed scenario driving a closed-loop run."""

    duration_s: float
    events: tuple[ScriptEvent, ...]
    seed: int = 1
    scheme: str = "pf"
    capture: simulator.CaptureConfig | None = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValidationError("closed_loop.duration_s: must be > 0")
        if self.scheme not in ("pf", "dcf"):
            raise ValidationError(f"closed_loop.scheme: unknown {self.scheme!r}")
        object.__setattr__(
            self, "events", tuple(sorted(self.events, key=lambda e: e.at_s))
        )
        members: set[str] = set()
        for ev in self.events:
            if ev.at_s > self.duration_s:
                raise ValidationError(f"event[{ev.station}].at_s: beyond duration")
            if ev.action == "join":
                if ev.station in members:
                    raise ValidationError(f"event[{ev.station}]: duplicate join")
                members.add(ev.station)
            else:
                if ev.station not in members:
                    raise ValidationError(
                        f"event[{ev.station}]: {ev.action} before join"
                    )
                if ev.action == "leave":
                    members.remove(ev.station)
        if not any(e.action == "join" for e in self.events):
            raise ValidationError("closed_loop.events: no station ever joins")


@dataclass(frozen=True)
class StepDiagnostic:
    """Solver-side view of one control step (pre-rounding)."""

    window: int
    time_s: float
    exact_tau: dict[str, float]
    assignment: dict[str, int]
    retained: bool


@dataclass(frozen=True)
class ClosedLoopTrace:
    """Per-window per-station records plus controller diagnostics."""

    rows: list[dict]
    steps: list[StepDiagnostic]
    warnings: list[str]

    COLUMNS = ("time_s", "station", "rate_mbps", "ecw", "throughput_mbps",
               "airtime_frac")


def _window_seed(master: int, k: int) -> int:
    return int(np.random.SeedSequence([master & 0xFFFFFFFF, k]).generate_state(1)[0])


def run_closed_loop(script: ClosedLoopScript, profile: phy.PhyProfile,
                    cfg: ControllerConfig | None = None) -> ClosedLoopTrace:
    """Alternate simulator windows and control steps per the script.

    Under the ``pf`` scheme stations run the controller's latest window
    assignment (DCF defaults until their first measured success); under
    ``dcf`` the controller never intervenes.
    """
    cfg = cfg or ControllerConfig()
    controller = Controller(profile, cfg)
    members: dict[str, phy.StationSpec] = {}
    assignment: dict[str, int] = {}
    sim: simulator.BackoffSim | None = None
    rebuilds = 0
    rows: list[dict] = []
    steps: list[StepDiagnostic] = []

    duration_us = script.duration_s * 1e6
    pending = list(script.events)
    now_us = 0.0
    window = 0

    def effective_windows(labels):
        cw, m = [], []
        for label in labels:
            if script.scheme == "pf" and label in assignment:
                cw.append(2 ** assignment[label])
                m.append(0)
            else:
                cw.append(cfg.dcf_cw_min)
                m.append(cfg.dcf_m)
        return cw, m

    while now_us < duration_us:
        changed = False
        while pending and pending[0].at_s * 1e6 <= now_us:
            ev = pending.pop(0)
            if ev.action == "join":
                members[ev.station] = ev.spec
            elif ev.action == "leave":
                members.pop(ev.station, None)
                assignment.pop(ev.station, None)
            elif ev.action == "set_rate":
                members[ev.station] = replace(members[ev.station], rate=ev.value)
            elif ev.action == "set_power":
                members[ev.station] = replace(members[ev.station],
                                              tx_power_dbm=ev.value)
            elif ev.action == "set_link_error":
                members[ev.station] = replace(members[ev.station],
                                              link_error=ev.value)
            changed = True

        if not members:
            now_us += cfg.beacon_interval_us
            window += 1
            controller.observe_window(None)
            continue

        labels = sorted(members)
        specs = [members[lb] for lb in labels]
        if changed or sim is None:
            rebuilds += 1
            cw, m = effective_windows(labels)
            sim = simulator.BackoffSim(specs, profile, cw, m,
                                       seed=_window_seed(script.seed, rebuilds),
                                       capture=script.capture)
        result = sim.run(max_time_us=cfg.beacon_interval_us)
        now_us += result.elapsed_us
        window += 1
        time_s = now_us / 1e6

        cw_now, _ = effective_windows(labels)
        for i, label in enumerate(labels):
            rows.append({
                "time_s": time_s,
                "station": label,
                "rate_mbps": specs[i].rate,
                "ecw": int(math.log2(cw_now[i])),
                "throughput_mbps": float(result.throughput_mbps[i]),
                "airtime_frac": float(result.airtime_frac[i]),
            })

        observations = controller.observe_window(result)
        if script.scheme == "pf":
            before = dict(assignment)
            new_assignment = controller.control_step(observations)
            if new_assignment is not None:
                assignment = {lb: e for lb, e, _ in new_assignment.entries
                              if lb in members}
                retained = new_assignment.epoch != controller._epoch
                steps.append(StepDiagnostic(
                    window=window, time_s=time_s,
                    exact_tau=dict(controller.last_exact_tau),
                    assignment=dict(assignment), retained=retained,
                ))
                if assignment != before and sim is not None:
                    cw, m = effective_windows(labels)
                    sim.set_windows(cw, m)

    return ClosedLoopTrace(rows=rows, steps=steps, warnings=list(controller.warnings))
