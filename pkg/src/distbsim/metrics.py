"""Reported quantities and their CSV emission.

Throughput is delivered constant-bit-rate bits over the simulation time;
communication overhead is the ratio of control (request/response) packets
to delivered CBR packets. Both are exact sums, no estimation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .traffic import Packet, PacketKind

DEFAULT_GAS_PER_TX = 21000
DEFAULT_TX_BASE_TIME_S = 0.005
CLOUD_STORE_J_PER_BLOCK = 0.0005

COMPONENTS = ("Controllers", "IoTDevices", "CloudStorage")


class MetricsError(Exception):
    pass


class ZeroDuration(MetricsError):
    pass


class ZeroCbr(MetricsError):
    """Eq.-style overhead is undefined without delivered CBR packets."""


@dataclass
class MetricsReport:
    throughput_bps: float = 0.0
    overhead_ratio: Optional[float] = None
    bandwidth_series: list = field(default_factory=list)    # [(t, bits/s)]
    latency_by_size: list = field(default_factory=list)     # [(bytes, s)]
    response_times: list = field(default_factory=list)      # [(file bytes, s)]
    energy_by_component: dict = field(default_factory=dict)
    cpu_series: list = field(default_factory=list)           # [(t, units/s, pct)]
    gas_total: int = 0
    tx_processing_times: list = field(default_factory=list)  # [(tx index, s)]
    packet_trace: list = field(default_factory=list)          # Packet records
    access_log: list = field(default_factory=list)            # (t, principal, decision)
    isolation_events: list = field(default_factory=list)      # (t, switch, action)
    energy_ledger: list = field(default_factory=list)         # (t, node, dJ, reason)
    summary: dict = field(default_factory=dict)


def throughput(cbr_received: Iterable[Packet], simulation_time: float) -> float:
    """Delivered CBR bits per second of simulated time."""
    if simulation_time <= 0:
        raise ZeroDuration("simulation time must be positive")
    total_bits = sum(p.bits for p in cbr_received
                     if p.kind is PacketKind.CBR_DATA and p.delivered_at is not None)
    return total_bits / simulation_time


def comm_overhead(rtr_packets: int, cbr_received: int) -> float:
    """Control packets per delivered CBR packet."""
    if cbr_received <= 0:
        raise ZeroCbr("no delivered CBR packets; overhead is undefined")
    return rtr_packets / cbr_received


def bandwidth_series(trace: Iterable[Packet], window: float,
                     horizon: Optional[float] = None) -> list[tuple]:
    """Delivered CBR bits/s in consecutive windows of `window` seconds.

    Windows tile [0, horizon); each entry is (window start, bits/s), so
    sum(bits/s) * window recovers the total delivered bits.
    """
    if window <= 0:
        raise MetricsError("window must be positive")
    deliveries = [(p.delivered_at, p.bits) for p in trace
                  if p.kind is PacketKind.CBR_DATA and p.delivered_at is not None]
    if horizon is None:
        horizon = max((t for t, _ in deliveries), default=0.0)
    n_windows = int(horizon / window + 1e-9)
    if horizon > n_windows * window:
        n_windows += 1
    bins = [0.0] * max(n_windows, 0)
    for t, bits in deliveries:
        idx = int(t / window)
        if 0 <= idx < len(bins):
            bins[idx] += bits
    return [(i * window, total / window) for i, total in enumerate(bins)]


def energy_report(ledger: Iterable[tuple]) -> dict:
    """Sum (time, component, joules) entries into the three-way split."""
    totals = {name: 0.0 for name in COMPONENTS}
    for _t, component, joules in ledger:
        totals[component] = totals.get(component, 0.0) + joules
    return totals


def gas_model(transactions: int, *, gas_per_tx: int = DEFAULT_GAS_PER_TX,
              base_time_s: float = DEFAULT_TX_BASE_TIME_S,
              mining_times: Optional[list] = None) -> tuple:
    """Linear gas plus constant-with-mining-jitter processing times.

    Returns (gas_total, [(tx index, seconds), ...]) where each transaction
    costs exactly `gas_per_tx` gas and takes `base_time_s` plus the mining
    time of its block.
    """
    if transactions < 0:
        raise MetricsError("transaction count must be non-negative")
    if mining_times is None:
        mining_times = [0.0] * transactions
    if len(mining_times) != transactions:
        raise MetricsError("need one mining time per transaction")
    series = [(i, base_time_s + mining_times[i]) for i in range(transactions)]
    return gas_per_tx * transactions, series


def cpu_series(work_events: Iterable[tuple], window: float,
               horizon: float) -> list[tuple]:
    """(window start, work units/s, normalized pct) from (t, units) events."""
    n_windows = int(horizon / window + 1e-9)
    if horizon > n_windows * window:
        n_windows += 1
    bins = [0.0] * max(n_windows, 1)
    for t, units in work_events:
        idx = int(t / window)
        if 0 <= idx < len(bins):
            bins[idx] += units
    peak = max(bins) if any(bins) else 1.0
    return [(i * window, total / window, 100.0 * total / peak)
            for i, total in enumerate(bins)]


def _write_csv(path: str, header: str, rows: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def emit_report(report: MetricsReport, out_dir: str) -> list[str]:
    """Write one CSV per series plus a key=value summary.

    Output is byte-stable for a fixed report: floats render via repr and
    iteration orders are already deterministic.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name: str, header: str, rows) -> None:
        path = os.path.join(out_dir, name)
        _write_csv(path, header, rows)
        written.append(path)

    throughput_mbps = report.throughput_bps / 1e6
    emit("throughput.csv", "nodes,throughput_bps,throughput_mbps",
         [f"{report.summary.get('nodes', 0)},{report.throughput_bps!r},{throughput_mbps!r}"])
    emit("bandwidth.csv", "t_s,bits_per_s",
         [f"{t!r},{bps!r}" for t, bps in report.bandwidth_series])
    emit("latency.csv", "bytes,seconds",
         [f"{size},{latency!r}" for size, latency in report.latency_by_size])
    emit("response_times.csv", "file_bytes,seconds",
         [f"{size},{seconds!r}" for size, seconds in report.response_times])
    emit("energy.csv", "component,joules",
         [f"{name},{report.energy_by_component.get(name, 0.0)!r}"
          for name in COMPONENTS])
    emit("cpu.csv", "t_s,work_units_per_s,utilization_pct",
         [f"{t!r},{units!r},{pct!r}" for t, units, pct in report.cpu_series])
    gas_per_tx = (report.gas_total // len(report.tx_processing_times)
                  if report.tx_processing_times else 0)
    emit("gas.csv", "tx,gas,proc_time_s",
         [f"{idx + 1},{gas_per_tx * (idx + 1)},{seconds!r}"
          for idx, seconds in report.tx_processing_times])
    emit("packets.csv", "id,kind,src,dst,size,sent,delivered",
         [f"{p.id},{p.kind.value},{p.src},{p.dst},{p.size},{p.sent_at!r},"
          f"{'' if p.delivered_at is None else repr(p.delivered_at)}"
          for p in report.packet_trace])
    emit("access_log.csv", "time,principal,decision",
         [f"{t!r},{principal},{decision}" for t, principal, decision in report.access_log])
    emit("isolation_events.csv", "time,switch,action",
         [f"{t!r},{switch},{action}" for t, switch, action in report.isolation_events])
    emit("energy_ledger.csv", "time,node,delta_J,reason",
         [f"{t!r},{node},{delta!r},{reason}" for t, node, delta, reason in report.energy_ledger])

    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"throughput_bps={report.throughput_bps!r}\n")
        fh.write(f"throughput_mbps={throughput_mbps!r}\n")
        overhead = "" if report.overhead_ratio is None else repr(report.overhead_ratio)
        fh.write(f"overhead_ratio={overhead}\n")
        fh.write(f"gas_total={report.gas_total}\n")
        for name in COMPONENTS:
            fh.write(f"energy_{name}_J={report.energy_by_component.get(name, 0.0)!r}\n")
        for key in sorted(report.summary):
            fh.write(f"{key}={report.summary[key]!r}\n")
    written.append(summary_path)
    return written
