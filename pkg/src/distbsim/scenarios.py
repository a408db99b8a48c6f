"""Canned experiment sweeps: the figure-style scenario tables.

Each scenario returns plain rows ready for CSV emission; the CLI's
`figures` subcommand writes one file per sweep. The `openflow-only`
fabric mode doubles as the plain-SDN / classical-chain baseline in every
comparison and is labeled `baseline` in the tables.
"""

from __future__ import annotations

import copy
import math
from dataclasses import replace
from typing import Optional

from . import iot, metrics
from .engine import (
    GATE_BUDGET_CHECK,
    MODE_DISTB,
    MODE_OPENFLOW_ONLY,
    ScenarioConfig,
)
from .rng import derive_seed, split_stream
from .traffic import AttackSchedule
from .world import World, run_scenario


def scenario_throughput_vs_nodes(node_counts, base: ScenarioConfig) -> list[dict]:
    """Delivered-throughput sweep over the device count, both fabric modes."""
    rows = []
    for n in node_counts:
        row = {"nodes": n}
        for mode in (MODE_DISTB, MODE_OPENFLOW_ONLY):
            cfg = replace(base, node_count=n, mode=mode)
            report = run_scenario(cfg)
            key = "distb_bps" if mode == MODE_DISTB else "baseline_bps"
            row[key] = report.throughput_bps
        rows.append(row)
    return rows


def default_attack(base: ScenarioConfig, peak_pps: float = 1450.0) -> AttackSchedule:
    """Flood ramp bracketing the tested 190 to 1400+ packets/s range."""
    start = min(5.0, base.duration_s / 5)
    ramp_end = min(start + 10.0, base.duration_s * 0.6)
    return AttackSchedule(start=start,
                          rate_curve=[(start, 190.0), (ramp_end, peak_pps)],
                          targets=["cloud"], size_bytes=512)


def scenario_ddos(base: ScenarioConfig) -> dict:
    """Bandwidth under a flood ramp: mitigated fabric vs plain baseline.

    Returns per-mode bandwidth series plus the nominal (pre-attack) and
    peak-rate window means the trend assertions use.
    """
    attack = base.attack or default_attack(base)
    out = {"attack": attack}
    arms = {
        "distb": replace(base, mode=MODE_DISTB, mitigation=True, attack=attack),
        "baseline": replace(base, mode=MODE_OPENFLOW_ONLY, mitigation=False,
                            attack=attack),
    }
    ramp_end = attack.rate_curve[-1][0]
    for name, cfg in arms.items():
        report = run_scenario(cfg)
        series = report.bandwidth_series
        nominal_windows = [bps for t, bps in series if 1.0 <= t < attack.start - 1.0]
        if not nominal_windows:
            nominal_windows = [bps for t, bps in series if t < attack.start]
        peak_windows = [bps for t, bps in series
                        if ramp_end + 1.0 <= t < cfg.duration_s - 1.0]
        out[name] = {
            "series": series,
            "nominal_bps": sum(nominal_windows) / len(nominal_windows),
            "peak_bps": sum(peak_windows) / len(peak_windows),
            "report": report,
        }
    return out


def scenario_response_time(base: ScenarioConfig, file_sizes,
                           mode: str = MODE_DISTB) -> list[tuple]:
    """File-transfer response times host -> cloud, one quiet run per size.

    The flood limiter stays off: a bulk transfer from one legitimate host
    would otherwise be clipped at the per-source admission cap.
    """
    rows = []
    for size in file_sizes:
        chunks = -(-size // base.packet_size_range[1])
        serialization = size * 8 / base.data_rate_bps
        # reactive mode detours every chunk through the controllers once
        # per switch hop; budget for that service plus slack
        reactive = (chunks * base.n_switches
                    / (base.n_controllers * base.controller_service_pps))
        horizon = max(base.duration_s, 2.0 * serialization + reactive + 10.0)
        cfg = replace(base, mode=mode, cbr_rate_pps=0.0, rtr_interval_s=0.0,
                      round_period_s=0.0, attack=None, mitigation=False,
                      duration_s=horizon)
        world = World(cfg)
        world.loop.at(1.0, lambda w=world, s=size: w.file_transfer("h0", "cloud", s))
        report = world.run()
        if not report.response_times:
            raise RuntimeError(f"{size}-byte transfer did not finish "
                               f"within {cfg.duration_s}s")
        rows.append((size, report.response_times[0][1]))
    return rows


def scenario_ch_comparison(base: ScenarioConfig, rounds: int) -> dict:
    """Energy-aware head election vs random-head baseline, paired rounds.

    Both arms run the same placement and the same per-round link draws are
    seeded independently; the station gate uses the budget-check reading
    so delivery reflects remaining battery. Returns per-round rows plus
    the mean energy/delay per arm.
    """
    seed = base.seed
    rng = split_stream(seed, "placement")
    nodes = [
        iot.SensorNode(id=i,
                       x=rng.uniform(0, base.area_m[0]),
                       y=rng.uniform(0, base.area_m[1]),
                       energy=rng.uniform(*base.energy_range_j),
                       trust=base.trust_j)
        for i in range(base.node_count)
    ]
    k = max(1, math.ceil(len(nodes) / 10))
    clusters = iot.partition_clusters(nodes, k, derive_seed(seed, "kmeans"))
    station = iot.BaseStation(x=base.area_m[0] / 2, y=base.area_m[1] / 2,
                              energy_budget=base.station_budget_j)
    radio = iot.RadioParams(data_rate_bps=base.data_rate_bps,
                            range_m=base.radio_range_m,
                            gate_semantics=GATE_BUDGET_CHECK)
    # 64-byte sensor readings keep 200-round sweeps within the battery budget
    payload_bits = 512

    arms = {}
    for arm in ("alg", "baseline"):
        arm_nodes = copy.deepcopy(nodes)
        arm_by_id = {n.id: n for n in arm_nodes}
        arm_clusters = copy.deepcopy(clusters)
        rows = []
        for r in range(rounds):
            live = []
            for cluster in arm_clusters:
                alive = [nid for nid in cluster.members if not arm_by_id[nid].dead]
                if alive:
                    live.append(iot.Cluster(id=cluster.id, members=alive,
                                            centroid=cluster.centroid))
            rng_round = split_stream(seed, "round", r, arm)
            energy = delay = 0.0
            delivered = 0
            if arm == "alg":
                iot.select_cluster_heads(arm_by_id, live, band=radio.head_band)
                results = [iot.transmit_round(c, arm_by_id, station, payload_bits,
                                              rng_round, radio) for c in live]
            else:
                results = [iot.baseline_round(c, arm_by_id, station, payload_bits,
                                              rng_round, radio) for c in live]
            for result in results:
                energy += sum(result.energy_spent.values())
                delay += result.end_to_end_delay
                delivered += int(result.delivered)
            rows.append({"round": r, "energy_j": energy, "delay_s": delay,
                         "delivered": delivered})
        arms[arm] = {
            "rows": rows,
            "mean_energy_j": sum(row["energy_j"] for row in rows) / len(rows),
            "mean_delay_s": sum(row["delay_s"] for row in rows) / len(rows),
        }
    return arms


def scenario_bandwidth_vs_packets(packet_counts, base: ScenarioConfig) -> list[dict]:
    """Delivered bandwidth against offered packet volume, both modes."""
    rows = []
    for total in packet_counts:
        rate = total / (base.duration_s * max(base.node_count, 1))
        row = {"packets": total}
        for mode, key in ((MODE_DISTB, "distb_bps"), (MODE_OPENFLOW_ONLY, "baseline_bps")):
            cfg = replace(base, mode=mode, cbr_rate_pps=rate, attack=None)
            report = run_scenario(cfg)
            row[key] = report.throughput_bps
        rows.append(row)
    return rows


def scenario_latency_vs_size(sizes, base: ScenarioConfig) -> list[dict]:
    """Single-message delivery latency against message size, both modes."""
    rows = []
    for size in sizes:
        row = {"bytes": size}
        for mode, key in ((MODE_DISTB, "distb_s"), (MODE_OPENFLOW_ONLY, "baseline_s")):
            samples = scenario_response_time(
                replace(base, duration_s=min(base.duration_s, 10.0)),
                [size], mode=mode)
            row[key] = samples[0][1]
        rows.append(row)
    return rows


def scenario_cpu_under_ddos(base: ScenarioConfig) -> list[tuple]:
    """Controller work-rate series while a mitigated flood ramps up."""
    attack = base.attack or default_attack(base)
    cfg = replace(base, mode=MODE_DISTB, mitigation=True, attack=attack)
    report = run_scenario(cfg)
    return report.cpu_series


def scenario_throughput_vs_time(base: ScenarioConfig) -> list[dict]:
    """Running average throughput over elapsed time, both modes."""
    series = {}
    for mode, key in ((MODE_DISTB, "distb_bps"), (MODE_OPENFLOW_ONLY, "baseline_bps")):
        report = run_scenario(replace(base, mode=mode, attack=None))
        cumulative = 0.0
        running = []
        for t, bps in report.bandwidth_series:
            cumulative += bps  # windows are 1 s wide
            running.append(cumulative / (t + 1.0))
        series[key] = running
    rows = []
    for i in range(len(series["distb_bps"])):
        rows.append({"t_s": float(i), "distb_bps": series["distb_bps"][i],
                     "baseline_bps": series["baseline_bps"][i]})
    return rows


def scenario_energy_split(base: ScenarioConfig) -> list[dict]:
    """Per-component energy, mitigated fabric vs reactive baseline."""
    reports = {}
    for mode in (MODE_DISTB, MODE_OPENFLOW_ONLY):
        reports[mode] = run_scenario(replace(base, mode=mode, attack=None))
    rows = []
    for component in metrics.COMPONENTS:
        rows.append({
            "component": component,
            "distb_j": reports[MODE_DISTB].energy_by_component[component],
            "baseline_j": reports[MODE_OPENFLOW_ONLY].energy_by_component[component],
        })
    return rows


def scenario_gas(tx_counts, base: Optional[ScenarioConfig] = None) -> list[dict]:
    """Gas and processing time against transaction volume."""
    hash_time = base.hash_time_s if base is not None else 1e-6
    difficulty = base.difficulty if base is not None else 12
    rows = []
    for n in tx_counts:
        rng = split_stream(0 if base is None else base.seed, "gas", n)
        # mining jitter: geometric attempts at the configured difficulty
        p = 2.0 ** -difficulty
        mining = [hash_time * _geometric(rng, p) for _ in range(n)]
        gas_total, times = metrics.gas_model(n, mining_times=mining)
        rows.append({"tx": n, "gas": gas_total,
                     "mean_proc_time_s": sum(t for _, t in times) / n})
    return rows


def _geometric(rng, p: float) -> int:
    """Number of Bernoulli(p) trials up to and including the first success."""
    u = rng.random()
    return 1 + int(math.log(max(u, 1e-300)) / math.log(1.0 - p))
