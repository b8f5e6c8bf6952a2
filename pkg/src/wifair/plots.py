"""Figure rendering for the CLI report paths.

Figures are written next to the delimited output; nothing here is consumed
programmatically, so layout choices are purely cosmetic.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEME_COLORS = {"dcf": "0.35", "pf": "tab:orange"}
SCHEME_NAMES = {"dcf": "DCF", "pf": "equal airtime"}


def figure_path(plot_dir: str, command: str, name: str) -> str:
    os.makedirs(plot_dir, exist_ok=True)
    return os.path.join(plot_dir, f"{command}_{name}.png")


def _bar_pair(ax, stations, by_scheme, ylabel):
    x = np.arange(len(stations))
    width = 0.38
    for k, scheme in enumerate(("dcf", "pf")):
        ax.bar(x + (k - 0.5) * width, by_scheme[scheme], width,
               label=SCHEME_NAMES[scheme], color=SCHEME_COLORS[scheme])
    ax.set_xticks(x, stations)
    ax.set_ylabel(ylabel)
    ax.grid(True, axis="y", alpha=0.4)


def plot_model(rows, path):
    stations = sorted({r["station"] for r in rows})
    thr = {s: {r["station"]: r["throughput_mbps"] for r in rows if r["scheme"] == s}
           for s in ("dcf", "pf")}
    air = {s: {r["station"]: r["airtime_frac"] for r in rows if r["scheme"] == s}
           for s in ("dcf", "pf")}
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    _bar_pair(ax1, stations, {s: [thr[s][st] for st in stations] for s in thr},
              "throughput (Mb/s)")
    _bar_pair(ax2, stations, {s: [air[s][st] for st in stations] for s in air},
              "airtime fraction")
    ax1.legend()
    ax2.set_xlabel("station")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_simulate(rows, path):
    stations = [r["station"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    x = np.arange(len(stations))
    ax1.bar(x, [r["throughput_mbps"] for r in rows], 0.6, color="tab:blue")
    ax1.set_ylabel("throughput (Mb/s)")
    ax1.grid(True, axis="y", alpha=0.4)
    ax2.bar(x, [r["airtime_frac"] for r in rows], 0.6, color="tab:green")
    ax2.set_ylabel("airtime fraction")
    ax2.set_xticks(x, stations)
    ax2.set_xlabel("station")
    ax2.grid(True, axis="y", alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_closed_loop(rows, path):
    stations = sorted({r["station"] for r in rows})
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for st in stations:
        pts = [(r["time_s"], r["throughput_mbps"], r["airtime_frac"])
               for r in rows if r["station"] == st]
        t = [p[0] for p in pts]
        ax1.plot(t, [p[1] for p in pts], label=st, linewidth=1.0)
        ax2.plot(t, [p[2] for p in pts], linewidth=1.0)
    ax1.set_ylabel("throughput (Mb/s)")
    ax1.legend(loc="upper right")
    ax1.grid(True, alpha=0.4)
    ax2.set_ylabel("airtime fraction")
    ax2.set_xlabel("time (s)")
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(rows, path):
    payloads = sorted({r["payload_bytes"] for r in rows})
    utility = {
        s: [next(r["utility_total"] for r in rows
                 if r["payload_bytes"] == p and r["scheme"] == s)
            for p in payloads]
        for s in ("dcf", "pf")
    }
    gap = [next(r["utility_gap"] for r in rows if r["payload_bytes"] == p)
           for p in payloads]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for s in ("dcf", "pf"):
        ax1.plot(payloads, utility[s], "o-", color=SCHEME_COLORS[s],
                 label=SCHEME_NAMES[s], markersize=3)
    ax1.set_ylabel("network utility")
    ax1.legend()
    ax1.grid(True, alpha=0.4)
    ax2.plot(payloads, gap, "s-", color="tab:red", markersize=3)
    ax2.set_ylabel("utility gain")
    ax2.set_xlabel("payload (bytes)")
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
