"""Equal-airtime contention window optimization and the DCF baseline.

The fair point assigns every station an airtime of 1/N; it is found by a
damped Newton iteration on the airtime map in log-transformed variables,
where the problem is convex and the optimum unique.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import model, phy
from .errors import ConvergenceError, InfeasibleError, ValidationError

ECW_MAX = 15

Pow2Window = namedtuple("Pow2Window", ["ecw", "cw"])
NonSaturatedWindow = namedtuple("NonSaturatedWindow", ["w", "floored"])


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 200
    damping: float = 1.0
    seed: int = 1234
    restarts: int = 2

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("solver.tolerance: must be > 0")
        if self.max_iterations < 1:
            raise ValidationError("solver.max_iterations: must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValidationError("solver.damping: must be in (0, 1]")


@dataclass(frozen=True)
class Allocation:
    """Solved attempt probabilities with exact and power-of-2 windows."""

    labels: tuple[str, ...]
    tau: model.AttemptVector
    w_exact: np.ndarray
    ecw: np.ndarray
    cw: np.ndarray
    residual: float
    utility_at_solution: float
    iterations: int
    restart_spread: float


def tau_to_cw(tau: float) -> float:
    """Window achieving attempt probability tau: W = (2 - tau)/tau."""
    if not 0.0 < tau <= 1.0:
        raise InfeasibleError(f"tau = {tau}: no finite window outside (0, 1]")
    return (2.0 - tau) / tau


def cw_to_tau(w: float) -> float:
    """Inverse mapping tau = 2/(W + 1)."""
    if w < 1.0:
        raise InfeasibleError(f"W = {w}: window must be >= 1")
    return 2.0 / (w + 1.0)


def nonsaturated_tau_to_cw(tau: float, q: float) -> NonSaturatedWindow:
    """Window for attempt probability tau when a packet is queued with
    probability q at each transmission opportunity; floors at W = 1."""
    if not 0.0 < q <= 1.0:
        raise ValidationError(f"q = {q}: must be in (0, 1]")
    if tau <= 0.0 or tau >= 2.0 * q:
        raise InfeasibleError(f"tau = {tau}: requires 0 < tau < 2q = {2 * q}")
    w = (2.0 * q - tau) / tau
    if w < 1.0:
        return NonSaturatedWindow(w=1.0, floored=True)
    return NonSaturatedWindow(w=w, floored=False)


def round_to_pow2(w: float) -> Pow2Window:
    """Nearest power-of-2 window as its exponent; half-way ties round up,
    exponent clamped to [0, 15]."""
    if w < 1.0:
        raise InfeasibleError(f"W = {w}: window must be >= 1")
    ecw = int(math.floor(math.log2(w) + 0.5))
    ecw = min(max(ecw, 0), ECW_MAX)
    return Pow2Window(ecw=ecw, cw=2 ** ecw)


def airtime_with_jacobian(tau, ts, t_empty: float):
    """Airtime vector and its Jacobian w.r.t. tau (ordered inputs)."""
    tau = np.asarray(tau, dtype=float)
    ts = np.asarray(ts, dtype=float)
    n = tau.size
    omt = 1.0 - tau
    suf = np.ones(n)
    suf[:-1] = np.cumprod(omt[::-1])[:-1][::-1]
    d0 = float(np.prod(omt))
    w = tau * suf * ts
    inc = np.cumsum(w[::-1])[::-1]                  # inc[j] = sum_{m>=j} w_m
    exc = inc - w                                   # exc[i] = sum_{m>i} w_m
    e_full = float(inc[0]) if n else 0.0
    t_slot = t_empty * d0 + e_full
    num = ts * suf + exc
    t_air = tau * num / t_slot

    jac = np.zeros((n, n))
    d_slot = -t_empty * d0 / omt + ts * suf - (e_full - inc) / omt
    for i in range(n):
        jac[i, i] = num[i] / t_slot
        for j in range(n):
            if j > i:
                d_num = (-ts[i] * suf[i] - (exc[i] - inc[j])) / omt[j] + ts[j] * suf[j]
                jac[i, j] += tau[i] * d_num / t_slot
            jac[i, j] -= tau[i] * num[i] * d_slot[j] / t_slot ** 2
    return t_air, jac


def _solve_newton(ts, t_empty, cfg: SolverConfig, tau0):
    """Damped Newton on airtime(e^xt) - 1/N in log-variables."""
    n = len(ts)
    target = 1.0 / n
    xt = np.log(np.asarray(tau0) / (1.0 - np.asarray(tau0)))
    best_tau, best_res = None, math.inf

    def residual_at(xt_vec):
        tau = 1.0 / (1.0 + np.exp(-xt_vec))
        t_air = model.airtime(tau, ts, t_empty)
        return tau, t_air - target

    tau, f = residual_at(xt)
    res = float(np.max(np.abs(f)))
    for iteration in range(1, cfg.max_iterations + 1):
        if res < best_res:
            best_tau, best_res = tau.copy(), res
        if res <= cfg.tolerance:
            return tau, res, iteration - 1
        _, jac_tau = airtime_with_jacobian(tau, ts, t_empty)
        jac_xt = jac_tau * (tau * (1.0 - tau))[None, :]
        try:
            delta = np.linalg.solve(jac_xt, -f)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian", best_res, best_tau)
        step = cfg.damping
        while True:
            xt_new = np.clip(xt + step * delta, -30.0, 12.0)
            tau_new, f_new = residual_at(xt_new)
            res_new = float(np.max(np.abs(f_new)))
            if res_new < res:
                xt, tau, f, res = xt_new, tau_new, f_new, res_new
                break
            step *= 0.5
            if step < 1e-12:
                raise ConvergenceError(
                    f"line search stalled at residual {res:.3e}", res, tau
                )
    if res <= cfg.tolerance:
        return tau, res, cfg.max_iterations
    raise ConvergenceError(
        f"no convergence after {cfg.max_iterations} iterations "
        f"(best residual {best_res:.3e})", best_res, best_tau,
    )


def solve_equal_airtime_durations(ts, t_empty: float, cfg: SolverConfig | None = None):
    """Solve T_i = 1/N for stations given only their success durations.

    ``ts`` may be in any order; returns (tau, residual, iterations,
    restart_spread) with tau in the input order.
    """
    cfg = cfg or SolverConfig()
    ts = np.asarray(ts, dtype=float)
    n = ts.size
    if n == 0:
        raise ValidationError("durations: must not be empty")
    if n == 1:
        return np.array([1.0]), 0.0, 0, 0.0

    order = np.argsort(ts, kind="stable")
    ts_o = ts[order]
    tau0 = np.full(n, min(0.5, 2.0 / (n + 1)))
    tau_o, res, iters = _solve_newton(ts_o, t_empty, cfg, tau0)

    spread = 0.0
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        start = np.exp(rng.uniform(np.log(0.01), np.log(0.5), size=n))
        tau_r, _, _ = _solve_newton(ts_o, t_empty, cfg, start)
        spread = max(spread, float(np.max(np.abs(tau_r - tau_o) / tau_o)))
    if spread > 1e-8:
        raise ConvergenceError(
            f"solver restarts disagree (spread {spread:.3e})", res, tau_o
        )

    tau = np.empty(n)
    tau[order] = tau_o
    return tau, res, iters, spread


def solve_equal_airtime(specs, profile: phy.PhyProfile,
                        cfg: SolverConfig | None = None) -> Allocation:
    """Equal-airtime allocation for full station specs, in caller order."""
    for s in specs:
        phy.validate_station(s, profile)
    ts = phy.success_durations(specs, profile)
    tau, res, iters, spread = solve_equal_airtime_durations(
        ts, profile.empty_slot, cfg
    )
    w_exact = np.array([tau_to_cw(t) for t in tau])
    rounded = [round_to_pow2(w) for w in w_exact]
    metrics = model.evaluate(specs, profile, tau)
    return Allocation(
        labels=tuple(s.label for s in specs),
        tau=model.AttemptVector.from_tau(tau),
        w_exact=w_exact,
        ecw=np.array([r.ecw for r in rounded], dtype=int),
        cw=np.array([r.cw for r in rounded], dtype=int),
        residual=res,
        utility_at_solution=metrics.utility,
        iterations=iters,
        restart_spread=spread,
    )


def backoff_attempt_prob(p: float, cw_min: int, m: int) -> float:
    """Stationary attempt probability of binary exponential backoff with
    conditional failure probability p, stages 0..m and doubling windows."""
    geometric = sum((2.0 * p) ** i for i in range(m))
    return 2.0 / ((1.0 - p) * cw_min * geometric + cw_min * (2.0 * p) ** m + 1.0)


def dcf_attempt_prob(cw_min: int, m: int, specs, profile: phy.PhyProfile,
                     tol: float = 1e-10, max_iter: int = 20_000) -> model.AttemptVector:
    """Fixed point between backoff attempt rates and conditional failure
    probabilities (collisions plus link errors) for a DCF-configured WLAN."""
    if cw_min < 1:
        raise ValidationError("cw_min: must be >= 1")
    if m < 0:
        raise ValidationError("m: must be >= 0")
    n = len(specs)
    p_n = np.array([s.link_error for s in specs])
    tau = np.full(n, min(0.5, 2.0 / (cw_min + 1.0)))
    for _ in range(max_iter):
        pre, suf = model._prefix_suffix(1.0 - tau)
        p_coll = 1.0 - pre * suf
        p_fail = 1.0 - (1.0 - p_n) * (1.0 - p_coll)
        tau_star = np.array([backoff_attempt_prob(p, cw_min, m) for p in p_fail])
        res = float(np.max(np.abs(tau - tau_star)))
        if res <= tol:
            return model.AttemptVector.from_tau(tau_star)
        tau = 0.5 * tau + 0.5 * tau_star
    raise ConvergenceError(f"DCF fixed point: residual {res:.3e} after {max_iter} "
                           "iterations", res, tau)


@dataclass(frozen=True)
class AllocationEvaluation:
    """Model metrics at the exact windows and at the rounded ones."""

    exact: model.ModelMetrics
    rounded: model.ModelMetrics
    tau_rounded: np.ndarray
    utility_gap: float          # U(exact) - U(rounded); sign not guaranteed


def evaluate_allocation(alloc: Allocation, specs, profile: phy.PhyProfile
                        ) -> AllocationEvaluation:
    """Quantify what power-of-2 rounding does to the solved allocation."""
    exact = model.evaluate(specs, profile, alloc.tau)
    tau_rounded = np.array([cw_to_tau(c) for c in alloc.cw])
    rounded = model.evaluate(specs, profile, tau_rounded)
    return AllocationEvaluation(
        exact=exact,
        rounded=rounded,
        tau_rounded=tau_rounded,
        utility_gap=exact.utility - rounded.utility,
    )
