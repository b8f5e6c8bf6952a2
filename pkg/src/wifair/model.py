"""Closed-form slot-event probabilities, throughput, airtime and utility.

Low-level functions operate on arrays already ordered by ascending success
duration (index = duration rank); :func:`evaluate` applies the ordering
internally and returns results in caller order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import phy
from .errors import OrderingError, ValidationError, WifairError

TAU_MAX = 1.0 - 1e-9          # clamp for N >= 2; tau = 1 only in the N = 1 limit
_XFORM_RTOL = 1e-9


@dataclass(frozen=True)
class AttemptVector:
    """Per-station attempt probabilities and the transformed x = tau/(1-tau)."""

    tau: np.ndarray
    x: np.ndarray

    @classmethod
    def from_tau(cls, tau) -> "AttemptVector":
        tau = np.atleast_1d(np.asarray(tau, dtype=float)).copy()
        if tau.size == 0:
            raise ValidationError("tau: must not be empty")
        if np.any(tau < 0) or np.any(tau > 1):
            raise ValidationError("tau: entries must lie in [0, 1]")
        if tau.size > 1:
            tau = np.minimum(tau, TAU_MAX)
        with np.errstate(divide="ignore"):
            x = np.where(tau < 1.0, tau / (1.0 - tau), np.inf)
        return cls(tau=tau, x=x)


@dataclass(frozen=True)
class SlotDistribution:
    """Slot-event probabilities and mean durations (us)."""

    p_empty: float
    p_success: float
    p_failure: float
    t_success: float
    t_failure: float
    t_slot: float


@dataclass(frozen=True)
class PerStationMetrics:
    """Per-station slot probabilities, throughput (Mb/s) and airtime fraction."""

    p_success: np.ndarray
    p_highest_failure: np.ndarray
    p_collision: np.ndarray
    p_failure_cond: np.ndarray
    throughput: np.ndarray
    airtime: np.ndarray


@dataclass(frozen=True)
class SolverView:
    """Transformed-variable quantities consumed by the optimizer."""

    big_x: float
    z: np.ndarray
    utility: float


@dataclass(frozen=True)
class ModelMetrics:
    """Full analytic evaluation of one attempt vector, in caller order."""

    stations: PerStationMetrics
    slots: SlotDistribution
    view: SolverView
    utility: float
    utility_finite: bool
    jain: float
    order: tuple[int, ...]


def _prefix_suffix(one_minus_tau: np.ndarray):
    """pre[i] = prod_{k<i}(1-tau_k), suf[i] = prod_{k>i}(1-tau_k)."""
    n = one_minus_tau.size
    pre = np.ones(n)
    pre[1:] = np.cumprod(one_minus_tau[:-1])
    suf = np.ones(n)
    suf[:-1] = np.cumprod(one_minus_tau[::-1])[:-1][::-1]
    return pre, suf


def collision_prob(i: int, tau: np.ndarray) -> float:
    """Probability station i's transmission overlaps someone else's."""
    tau = np.asarray(tau, dtype=float)
    pre, suf = _prefix_suffix(1.0 - tau)
    return float(1.0 - pre[i] * suf[i])


def success_prob(i: int, tau: np.ndarray, p_n: np.ndarray) -> float:
    """Probability a slot contains a successful transmission of station i."""
    tau = np.asarray(tau, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    pre, suf = _prefix_suffix(1.0 - tau)
    return float(tau[i] * (1.0 - p_n[i]) * pre[i] * suf[i])


def highest_index_failure_prob(i: int, tau: np.ndarray, p_n: np.ndarray) -> float:
    """Probability a slot contains a failure whose longest frame is station i's.

    Indices must follow the canonical duration ordering: a failed slot is
    attributed to the highest-index transmitter involved.
    """
    tau = np.asarray(tau, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    pre, suf = _prefix_suffix(1.0 - tau)
    noise = tau[i] * p_n[i] * pre[i] * suf[i]
    collide_below = tau[i] * (1.0 - pre[i]) * suf[i]
    return float(noise + collide_below)


def station_probabilities(tau: np.ndarray, p_n: np.ndarray):
    """Vectors (p_coll, p_fail_cond, p_success, p_highest_failure) plus P_e."""
    tau = np.asarray(tau, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    pre, suf = _prefix_suffix(1.0 - tau)
    prod_except = pre * suf
    p_coll = 1.0 - prod_except
    p_fail_cond = 1.0 - (1.0 - p_n) * (1.0 - p_coll)
    p_succ = tau * (1.0 - p_n) * prod_except
    p_ufail = tau * p_n * prod_except + tau * (1.0 - pre) * suf
    p_empty = float(np.prod(1.0 - tau))
    return p_coll, p_fail_cond, p_succ, p_ufail, p_empty


def _require_ordered(ts: np.ndarray):
    if np.any(np.diff(ts) < 0):
        raise OrderingError("durations must be ascending (apply order_stations first)")


def slot_distribution(tau, p_n, ts, tu, t_empty: float) -> SlotDistribution:
    """Slot-event probabilities and p-weighted mean durations.

    ``ts``/``tu`` are the per-station success/failure slot durations in
    canonical order; pass ``tu = ts`` to apply the usual simplification.
    """
    ts = np.asarray(ts, dtype=float)
    tu = np.asarray(tu, dtype=float)
    _require_ordered(ts)
    _, _, p_succ, p_ufail, p_empty = station_probabilities(tau, p_n)
    p_s = float(p_succ.sum())
    p_u = float(1.0 - p_empty - p_s)
    t_s = float(p_succ @ ts / p_s) if p_s > 0 else 0.0
    sum_ufail = float(p_ufail.sum())
    t_u = float(p_ufail @ tu / sum_ufail) if sum_ufail > 0 else 0.0
    t_slot = float(p_empty * t_empty + p_succ @ ts + p_ufail @ tu)
    return SlotDistribution(
        p_empty=p_empty, p_success=p_s, p_failure=p_u,
        t_success=t_s, t_failure=t_u, t_slot=t_slot,
    )


def airtime(tau, ts, t_empty: float) -> np.ndarray:
    """Per-station total airtime fraction; depends only on tau and success durations.

    A transmitting station occupies the whole slot, whose length is the
    longest (highest-index) frame involved.
    """
    tau = np.asarray(tau, dtype=float)
    ts = np.asarray(ts, dtype=float)
    _require_ordered(ts)
    _, suf = _prefix_suffix(1.0 - tau)
    weighted = tau * suf * ts                       # tau_j * prod_{k>j}(1-tau_k) * ts_j
    tail = np.concatenate([np.cumsum(weighted[::-1])[::-1][1:], [0.0]])
    t_slot = float(np.prod(1.0 - tau)) * t_empty + float(weighted.sum())
    return tau * (suf * ts + tail) / t_slot


def big_x(x, ts, t_empty: float) -> float:
    """X(x) = T_e + sum_j ts_j x_j prod_{k<j}(1+x_k)."""
    x = np.asarray(x, dtype=float)
    ts = np.asarray(ts, dtype=float)
    grow = np.ones(x.size)
    grow[1:] = np.cumprod(1.0 + x[:-1])
    return float(t_empty + np.sum(ts * x * grow))


def airtime_xform(x, ts, t_empty: float) -> np.ndarray:
    """Airtime in the transformed variables; equals :func:`airtime` algebraically."""
    x = np.asarray(x, dtype=float)
    ts = np.asarray(ts, dtype=float)
    n = x.size
    grow = np.ones(n)
    grow[1:] = np.cumprod(1.0 + x[:-1])
    bx = t_empty + float(np.sum(ts * x * grow))
    out = np.empty(n)
    for i in range(n):
        inner = ts[i] * grow[i]
        for j in range(i + 1, n):
            inner += ts[j] * x[j] * grow[j] / (1.0 + x[i])
        out[i] = x[i] * inner / bx
    return out


def throughput(tau, p_n, payload, ts, tu, t_empty: float) -> np.ndarray:
    """Per-station throughput in Mb/s (payload in bits, durations in us)."""
    payload = np.asarray(payload, dtype=float)
    dist = slot_distribution(tau, p_n, ts, tu, t_empty)
    _, _, p_succ, _, _ = station_probabilities(tau, p_n)
    if dist.t_slot == 0.0:
        return np.zeros_like(payload)
    return p_succ * payload / dist.t_slot


def utility(throughputs) -> float:
    """Sum of natural logs of throughput; -inf sentinel when any is zero."""
    s = np.asarray(throughputs, dtype=float)
    if np.any(s <= 0.0):
        return -math.inf
    return float(np.sum(np.log(s)))


def jain_index(throughputs) -> float:
    """Jain's fairness index (S1+..+SN)^2 / (N * sum S_i^2); 1 when all equal."""
    s = np.asarray(throughputs, dtype=float)
    denom = s.size * float(np.sum(s * s))
    if denom == 0.0:
        return 1.0
    return float(np.sum(s)) ** 2 / denom


def evaluate(specs, profile: phy.PhyProfile, tau) -> ModelMetrics:
    """Evaluate the analytic model for one attempt vector.

    Stations may be passed in any order; ordering by success duration is
    applied internally and all per-station outputs use caller order.
    """
    if len(specs) == 0:
        raise ValidationError("stations: list must not be empty")
    av = tau if isinstance(tau, AttemptVector) else AttemptVector.from_tau(tau)
    if av.tau.size != len(specs):
        raise ValidationError("tau: length must match the number of stations")
    order = phy.order_stations(specs, profile)
    inv = np.argsort(order)

    tau_o = av.tau[order]
    p_n_o = np.array([specs[i].link_error for i in order])
    payload_o = np.array([specs[i].payload for i in order])
    ts_o = phy.success_durations(specs, profile)[order]
    tu_o = phy.failure_durations(specs, profile)[order]
    t_e = profile.empty_slot

    p_coll, p_fail, p_succ, p_ufail, _ = station_probabilities(tau_o, p_n_o)
    dist = slot_distribution(tau_o, p_n_o, ts_o, tu_o, t_e)
    s_direct = throughput(tau_o, p_n_o, payload_o, ts_o, tu_o, t_e)
    t_air = airtime(tau_o, ts_o, t_e)

    finite_x = bool(np.all(tau_o < 1.0))
    if finite_x:
        x_o = av.x[order]
        bx = big_x(x_o, ts_o, t_e)
        _check_consistency(airtime_xform(x_o, ts_o, t_e), t_air, "airtime")
        if profile.approximate_tu_as_ts:
            s_xform = (1.0 - p_n_o) * x_o * payload_o / bx
            _check_consistency(s_xform, s_direct, "throughput")
    else:
        bx = math.inf

    u = utility(s_direct)
    stations = PerStationMetrics(
        p_success=p_succ[inv],
        p_highest_failure=p_ufail[inv],
        p_collision=p_coll[inv],
        p_failure_cond=p_fail[inv],
        throughput=s_direct[inv],
        airtime=t_air[inv],
    )
    view = SolverView(
        big_x=bx,
        z=np.array([1.0 - s.link_error for s in specs]),
        utility=u,
    )
    return ModelMetrics(
        stations=stations,
        slots=dist,
        view=view,
        utility=u,
        utility_finite=math.isfinite(u),
        jain=jain_index(s_direct),
        order=tuple(order),
    )


def _check_consistency(a: np.ndarray, b: np.ndarray, what: str):
    scale = np.maximum(np.abs(a), np.abs(b))
    bad = np.abs(a - b) > _XFORM_RTOL * np.maximum(scale, 1e-300)
    if np.any(bad & (scale > 0)):
        raise WifairError(f"{what}: direct and transformed forms disagree")


@dataclass(frozen=True)
class ConvexityReport:
    """Worst midpoint-convexity violation found over random segments."""

    segments: int
    worst_violation: float
    worst_log_x: float


def convexity_probe(specs, profile: phy.PhyProfile, rng, segments: int = 10_000,
                    log_x_range=(-9.0, 3.0)) -> ConvexityReport:
    """Sample random segments in log-x space and check midpoint convexity of
    log X and of the non-affine part of the negated utility."""
    order = phy.order_stations(specs, profile)
    ts = phy.success_durations(specs, profile)[order]
    t_e = profile.empty_slot
    n = len(specs)
    lo, hi = log_x_range
    worst = -math.inf
    worst_f = 0.0

    def log_big_x(xt):
        return math.log(big_x(np.exp(xt), ts, t_e))

    for _ in range(segments):
        a = rng.uniform(lo, hi, size=n)
        b = rng.uniform(lo, hi, size=n)
        mid = 0.5 * (a + b)
        fa, fb, fm = log_big_x(a), log_big_x(b), log_big_x(mid)
        violation = fm - 0.5 * (fa + fb)
        # -U = N log X - sum(xt) - const: same convex part, affine remainder.
        neg_u = (n * fm - mid.sum()) - 0.5 * ((n * fa - a.sum()) + (n * fb - b.sum()))
        violation = max(violation, neg_u)
        if violation > worst:
            worst = violation
            worst_f = fm
    return ConvexityReport(segments=segments, worst_violation=worst, worst_log_x=worst_f)
