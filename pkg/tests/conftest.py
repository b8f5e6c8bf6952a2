import numpy as np
import pytest

from wifair import phy

LADDER_RATES = [54.0, 48.0, 36.0, 24.0, 18.0, 12.0, 9.0, 6.0]


@pytest.fixture
def profile():
    return phy.PhyProfile()


def station(label="sta", payload_bytes=1000, rate=54.0, p_n=0.0, q=1.0, power=None):
    return phy.StationSpec(label=label, payload=payload_bytes * 8.0, rate=rate,
                           link_error=p_n, availability=q, tx_power_dbm=power)


def ladder(payload_bytes=1400, p_n=0.0, rates=LADDER_RATES):
    return [station(f"sta{i + 1}", payload_bytes, r, p_n) for i, r in enumerate(rates)]


def random_scenario(rng, n=None, p_n_max=0.3):
    """Random stations drawn from the 802.11a rate set."""
    n = n if n is not None else int(rng.integers(1, 9))
    rates = rng.choice(LADDER_RATES, size=n)
    payloads = rng.integers(100, 1401, size=n)
    p_n = rng.uniform(0.0, p_n_max, size=n)
    return [station(f"r{i}", int(payloads[i]), float(rates[i]), float(p_n[i]))
            for i in range(n)]


def enum_slot_stats(tau, p_n, ts, tu, t_e):
    """Exhaustive enumeration over all attempt subsets and noise outcomes.

    Independent oracle for the closed-form expressions: walks every subset
    of transmitters, weighting by its exact probability. Returns a dict of
    the same quantities the analytic module computes.
    """
    tau = np.asarray(tau, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    ts = np.asarray(ts, dtype=float)
    tu = np.asarray(tu, dtype=float)
    n = tau.size
    p_empty = float(np.prod(1.0 - tau))
    p_succ = np.zeros(n)
    p_ufail = np.zeros(n)
    t_slot = p_empty * t_e
    busy = np.zeros(n)          # E[slot duration * station transmits]
    busy_sq = np.zeros(n)       # E[slot duration^2 * station transmits]
    dur_sq = p_empty * t_e ** 2
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        prob = 1.0
        for i in range(n):
            prob *= tau[i] if (mask >> i & 1) else (1.0 - tau[i])
        if len(members) == 1:
            i = members[0]
            p_succ[i] += prob * (1.0 - p_n[i])
            p_ufail[i] += prob * p_n[i]
            mean_d = (1.0 - p_n[i]) * ts[i] + p_n[i] * tu[i]
            mean_d2 = (1.0 - p_n[i]) * ts[i] ** 2 + p_n[i] * tu[i] ** 2
            t_slot += prob * mean_d
            dur_sq += prob * mean_d2
            busy[i] += prob * mean_d
            busy_sq[i] += prob * mean_d2
        else:
            hi = members[-1]
            p_ufail[hi] += prob
            d = tu[hi]
            t_slot += prob * d
            dur_sq += prob * d * d
            for i in members:
                busy[i] += prob * d
                busy_sq[i] += prob * d * d
    return {
        "p_empty": p_empty,
        "p_success": p_succ,
        "p_highest_failure": p_ufail,
        "t_slot": t_slot,
        "dur_sq": dur_sq,
        "airtime": busy / t_slot,
        "busy": busy,
        "busy_sq": busy_sq,
    }
