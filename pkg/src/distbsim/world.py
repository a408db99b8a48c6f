"""Scenario world: topology assembly and packet-level simulation.

Default fabric per the simulation-parameter table: hosts attach to 2
gateways, gateways feed a 4-switch line, 5 controllers overlay the
switches, and a cloud sink hangs off the last switch. Links serialize
packets FIFO at the configured data rate with a fixed per-hop latency and
a bounded buffer (tail drop).

Two fabric modes:

- ``distb``: routes are versioned on the control chain and proactively
  installed on every switch; periodic verification rounds hash the fleet
  against the chain head and isolate any switch whose table diverges.
- ``openflow-only``: the plain-SDN / classical-chain baseline. Switch
  tables stay empty, every table miss detours through a finite-rate
  controller (reactive forwarding), and the ledger stays at its genesis
  block. This mode stands in for the papers' OpenFlow-only and BCF
  baselines and is labeled as such in outputs.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional

from . import control, iot, ledger, metrics
from .engine import (
    GATE_BUDGET_CHECK,
    MODE_DISTB,
    MODE_OPENFLOW_ONLY,
    EventLoop,
    ScenarioConfig,
)
from .flowtable import (
    ACTION_CONTROLLER,
    ACTION_DROP,
    ACTION_FLOOD,
    FlowRule,
    Match,
    RuleSet,
    Switch,
    action_output_port,
    forward_packet,
)
from .rng import derive_seed, split_stream
from .traffic import AttackSchedule, Packet, PacketKind, cbr_source, ddos_ramp

RTR_PACKET_BYTES = 64
MITIGATION_DROP_PRIORITY = 60000


class Unreachable(Exception):
    pass


@dataclass
class Link:
    capacity_bps: float
    latency_s: float
    buffer_packets: int
    busy_until: float = 0.0
    queued: int = 0
    tail_dropped: int = 0

    def admit(self, now: float, size_bytes: int) -> Optional[float]:
        """Departure time for a packet, or None when the buffer tail-drops."""
        if self.queued >= self.buffer_packets:
            self.tail_dropped += 1
            return None
        depart = max(now, self.busy_until) + size_bytes * 8 / self.capacity_bps
        self.busy_until = depart
        self.queued += 1
        return depart


@dataclass
class Host:
    id: str
    addr: str
    gateway: str


@dataclass
class Gateway:
    id: str
    switch: int
    hosts: list = field(default_factory=list)


class _RateLimiter:
    """Per (switch, source) sliding admission: at most `cap` packets per
    one-second window, with persistence tracking for the drop-rule trigger."""

    def __init__(self, cap: int, persist_windows: int):
        self.cap = cap
        self.persist_windows = persist_windows
        self.state = {}

    def admit(self, switch_id: int, src_addr: str, now: float):
        """Returns (admitted, persistent_offender)."""
        key = (switch_id, src_addr)
        window = int(now)
        arrived, admitted, streak, last = self.state.get(key, (0, 0, 0, window))
        if window != last:
            streak = streak + 1 if arrived > self.cap else 0
            arrived, admitted, last = 0, 0, window
        arrived += 1
        ok = admitted < self.cap
        if ok:
            admitted += 1
        self.state[key] = (arrived, admitted, streak, last)
        return ok, streak >= self.persist_windows


class World:
    def __init__(self, config: ScenarioConfig):
        self.config = config.validate()
        self.loop = EventLoop()
        self.packets: list[Packet] = []
        self._next_packet_id = 0
        self.energy_ledger: list = []         # (t, node, delta_J, reason)
        self.response_times: list = []        # (file bytes, seconds)
        self.rtt_samples: list = []           # (t, seconds)
        self.blocked_sources: set = set()
        self._limiter = _RateLimiter(config.rate_limit_cap_pps,
                                     config.rate_limit_persist_windows)
        self._mining_log: list = []           # nonce attempts per mined block
        self._file_watch: list = []           # (file_bytes, started, n_chunks, packets)
        self._build_fabric()
        self._build_iot()
        self._schedule_workload()

    # -- construction -----------------------------------------------------

    def _build_fabric(self) -> None:
        cfg = self.config
        self.switches = {i: Switch(id=i) for i in range(1, cfg.n_switches + 1)}
        self.gateways = {}
        self.hosts = {}
        self.graph = defaultdict(dict)  # node -> {neighbor: None}

        def connect(a, b):
            self.graph[a][b] = None
            self.graph[b][a] = None

        # switch line
        for i in range(1, cfg.n_switches):
            connect(i, i + 1)
        # gateways at the line's ends
        gw_switches = [1, cfg.n_switches] + list(range(2, cfg.n_switches))
        for g in range(cfg.n_gateways):
            gid = f"g{g}"
            self.gateways[gid] = Gateway(id=gid, switch=gw_switches[g % len(gw_switches)])
            connect(gid, self.gateways[gid].switch)
        # cloud sink on the last switch
        self.cloud_id = "cloud"
        connect(self.cloud_id, cfg.n_switches)
        self.cloud_addr = "10.0.0.1"
        self.addr_of = {self.cloud_id: self.cloud_addr}

        for i in range(cfg.node_count):
            hid = f"h{i}"
            gid = f"g{i % cfg.n_gateways}"
            addr = f"10.0.{1 + i // 250}.{2 + i % 250}"
            self.hosts[hid] = Host(id=hid, addr=addr, gateway=gid)
            self.gateways[gid].hosts.append(hid)
            self.addr_of[hid] = addr
            connect(hid, gid)
        # attack source rides the first gateway
        self.attacker_id = "atk0"
        self.hosts[self.attacker_id] = Host(id=self.attacker_id, addr="10.0.9.9",
                                            gateway="g0")
        self.gateways["g0"].hosts.append(self.attacker_id)
        self.addr_of[self.attacker_id] = "10.0.9.9"
        connect(self.attacker_id, "g0")

        self.host_of_addr = {addr: node for node, addr in self.addr_of.items()}

        # port numbering: sorted neighbor order per switch
        for sid, switch in self.switches.items():
            for port, neighbor in enumerate(
                    sorted(self.graph[sid], key=str), start=1):
                switch.ports[port] = neighbor

        # directed links, one per adjacency
        self.links = {}
        for a in self.graph:
            for b in self.graph[a]:
                self.links[(a, b)] = Link(capacity_bps=cfg.data_rate_bps,
                                          latency_s=cfg.link_latency_s,
                                          buffer_packets=cfg.link_buffer_packets)

        self._next_hop = self._all_pairs_next_hop()
        initial_rules = self._routing_rules()
        self.cluster = control.ControllerCluster(
            control_chain=ledger.new_control_chain(initial_rules, cfg.difficulty, 0.0),
            data_chain=ledger.new_data_chain(cfg.difficulty, 0.0),
            switches=self.switches,
            n_controllers=cfg.n_controllers,
            verification_period=cfg.verification_period_s,
            access_registry=dict(cfg.access_registry),
        )
        self._chain_seen = [0, 0]
        self._note_new_blocks()
        self._blocks_at_start = len(self.cluster.control_chain) + len(self.cluster.data_chain)
        if cfg.mode == MODE_OPENFLOW_ONLY:
            # reactive baseline: no proactive installs, chain unused past genesis
            for switch in self.switches.values():
                switch.install(RuleSet())

    def _all_pairs_next_hop(self) -> dict:
        """BFS next hop for every (node, destination host/cloud) pair."""
        targets = list(self.hosts) + [self.cloud_id]
        table = {}
        for target in targets:
            # BFS from the target over the undirected graph
            parent = {target: None}
            frontier = deque([target])
            while frontier:
                node = frontier.popleft()
                for neighbor in sorted(self.graph[node], key=str):
                    if neighbor not in parent:
                        parent[neighbor] = node
                        frontier.append(neighbor)
            for node, towards in parent.items():
                if towards is not None:
                    table[(node, target)] = towards
        return table

    def _routing_rules(self) -> RuleSet:
        rules = []
        for sid, switch in self.switches.items():
            for target in list(self.hosts) + [self.cloud_id]:
                towards = self._next_hop.get((sid, target))
                if towards is None:
                    continue
                port = switch.port_to(towards)
                rules.append(FlowRule(dpid=sid, priority=100,
                                      match=Match(nw_dst=self.addr_of[target]),
                                      action=f"OUTPUT:{port}", version=0))
        return RuleSet(rules)

    def _build_iot(self) -> None:
        cfg = self.config
        if cfg.topology_file:
            self.nodes = iot.load_topology(cfg.topology_file)
        else:
            rng = split_stream(cfg.seed, "placement")
            self.nodes = [
                iot.SensorNode(
                    id=i,
                    x=rng.uniform(0, cfg.area_m[0]),
                    y=rng.uniform(0, cfg.area_m[1]),
                    energy=rng.uniform(*cfg.energy_range_j),
                    trust=cfg.trust_j,
                )
                for i in range(cfg.node_count)
            ]
        self.nodes_by_id = {n.id: n for n in self.nodes}
        self.station = iot.BaseStation(x=cfg.area_m[0] / 2, y=cfg.area_m[1] / 2,
                                       energy_budget=cfg.station_budget_j)
        k = max(1, math.ceil(len(self.nodes) / 10))
        self.clusters = iot.partition_clusters(
            self.nodes, k, derive_seed(cfg.seed, "kmeans"))
        self.radio = iot.RadioParams(
            data_rate_bps=cfg.data_rate_bps,
            range_m=cfg.radio_range_m,
            gate_semantics=cfg.gate_semantics,
        )

    # -- workload ---------------------------------------------------------

    def _schedule_workload(self) -> None:
        cfg = self.config
        for i, hid in enumerate(sorted(self.hosts)):
            if hid == self.attacker_id:
                continue
            for t, size in cbr_source(cfg.cbr_rate_pps, cfg.packet_size_range,
                                      cfg.duration_s, derive_seed(cfg.seed, "cbr", hid)):
                self.loop.at(t, self._make_sender(hid, self.cloud_id, size,
                                                  PacketKind.CBR_DATA))
            if cfg.rtr_interval_s > 0:
                t = cfg.rtr_interval_s * 0.5 + i * 0.013
                while t < cfg.duration_s:
                    self.loop.at(t, self._make_rtr(hid))
                    t += cfg.rtr_interval_s

        if cfg.attack is not None:
            for idx, (t, size) in enumerate(ddos_ramp(cfg.attack, cfg.duration_s)):
                target = cfg.attack.targets[idx % len(cfg.attack.targets)]
                src = cfg.attack.sources[idx % len(cfg.attack.sources)]
                self.loop.at(t, self._make_sender(src, target, size,
                                                  PacketKind.ATTACK_FLOOD))

        if cfg.mode == MODE_DISTB:
            period = cfg.verification_period_s
            t = period
            while t <= cfg.duration_s:
                self.loop.at(t, self._verification_round)
                t += period

        if cfg.round_period_s > 0:
            t = cfg.round_period_s
            round_idx = 0
            while t <= cfg.duration_s:
                self.loop.at(t, self._make_iot_round(round_idx))
                t += cfg.round_period_s
                round_idx += 1

    def _make_sender(self, src, dst, size, kind):
        def fire():
            self.send_packet(src, dst, size, kind)
        return fire

    def _make_rtr(self, hid):
        def fire():
            self.rtr_exchange(hid, self.cloud_id, strict=False)
        return fire

    def _make_iot_round(self, round_idx):
        def fire():
            self._iot_round(round_idx)
        return fire

    # -- IoT rounds -------------------------------------------------------

    def _iot_round(self, round_idx: int) -> None:
        cfg = self.config
        if cfg.mobility:
            rng = split_stream(cfg.seed, "mobility", round_idx)
            for node in self.nodes:
                if not node.dead:
                    iot.random_waypoint_step(node, cfg.round_period_s, rng, cfg.area_m)
            for cluster in self.clusters:
                alive = [self.nodes_by_id[nid] for nid in cluster.members]
                if alive:
                    cluster.centroid = (sum(n.x for n in alive) / len(alive),
                                        sum(n.y for n in alive) / len(alive))
        payload_bits = cfg.packet_size_range[0] * 8
        rng = split_stream(cfg.seed, "round", round_idx)
        if cfg.mode == MODE_DISTB:
            live = [c for c in self.clusters
                    if any(not self.nodes_by_id[n].dead for n in c.members)]
            pruned = [iot.Cluster(id=c.id, centroid=c.centroid, members=[
                n for n in c.members if not self.nodes_by_id[n].dead])
                for c in live]
            iot.select_cluster_heads(self.nodes_by_id, pruned, band=self.radio.head_band)
            results = [iot.transmit_round(c, self.nodes_by_id, self.station,
                                          payload_bits, rng, self.radio)
                       for c in pruned]
        else:
            results = [iot.baseline_round(c, self.nodes_by_id, self.station,
                                          payload_bits, rng, self.radio)
                       for c in self.clusters]
        now = self.loop.now
        for result in results:
            for nid in sorted(result.energy_spent):
                self.energy_ledger.append((now, nid, result.energy_spent[nid], "radio"))

    def _verification_round(self) -> None:
        self.cluster.run_verification_round(self.loop.now)
        self._note_new_blocks()

    def _note_new_blocks(self, _before: int = 0) -> None:
        """Record nonce-attempt counts for blocks mined since the last note."""
        for i, chain in enumerate((self.cluster.control_chain,
                                   self.cluster.data_chain)):
            seen = self._chain_seen[i]
            for block in chain.blocks[seen:]:
                self._mining_log.append(block.header.nonce + 1)
            self._chain_seen[i] = len(chain)

    # -- packet pipeline --------------------------------------------------

    def send_packet(self, src: str, dst: str, size: int, kind: PacketKind) -> Packet:
        packet = Packet(id=self._next_packet_id, src=src, dst=dst, size=size,
                        kind=kind, sent_at=self.loop.now,
                        nw_src=self.addr_of[src], nw_dst=self.addr_of[dst])
        self._next_packet_id += 1
        self.packets.append(packet)
        if src == self.cloud_id:
            self._transmit(packet, src, self.config.n_switches)
        else:
            self._transmit(packet, src, self.hosts[src].gateway)
        return packet

    def _transmit(self, packet: Packet, frm, to) -> None:
        link = self.links[(frm, to)]
        depart = link.admit(self.loop.now, packet.size)
        if depart is None:
            packet.dropped = True
            return
        arrive = depart + link.latency_s

        def arrival():
            link.queued -= 1
            self._arrive(packet, frm, to)

        self.loop.at(arrive, arrival)

    def _arrive(self, packet: Packet, frm, to) -> None:
        if to == self.cloud_id:
            self.loop.schedule(self.config.cloud_store_latency_s,
                               lambda: self._deliver(packet))
            return
        if isinstance(to, int):
            self._arrive_switch(packet, frm, to)
            return
        if to in self.gateways:
            self._arrive_gateway(packet, frm, to)
            return
        self._deliver(packet)  # a host

    def _deliver(self, packet: Packet) -> None:
        packet.delivered_at = self.loop.now
        if packet.kind is not PacketKind.RTR_CONTROL:
            return
        if packet.echo_of is None:
            # answer the request so the exchange completes
            response = self.send_packet(packet.dst, packet.src,
                                        RTR_PACKET_BYTES, PacketKind.RTR_CONTROL)
            response.echo_of = packet.sent_at
        else:
            self.rtt_samples.append((self.loop.now, self.loop.now - packet.echo_of))

    def _arrive_gateway(self, packet: Packet, frm, gid: str) -> None:
        gateway = self.gateways[gid]
        dst_node = self.host_of_addr.get(packet.nw_dst)
        if dst_node in gateway.hosts:
            self._transmit(packet, gid, dst_node)
        elif frm == gateway.switch:
            packet.dropped = True  # fabric handed us a packet for a foreign host
        else:
            self._transmit(packet, gid, gateway.switch)

    def _arrive_switch(self, packet: Packet, frm, sid: int) -> None:
        switch = self.switches[sid]
        if switch.isolated:
            packet.dropped = True
            return
        cfg = self.config
        if cfg.mitigation and frm in self.gateways:
            admitted, persistent = self._limiter.admit(sid, packet.nw_src, self.loop.now)
            if persistent and packet.nw_src not in self.blocked_sources:
                self._block_source(sid, packet.nw_src)
            if not admitted:
                packet.dropped = True
                switch.packets_dropped += 1
                return
        packet.in_port = switch.port_to(frm)
        miss = ACTION_CONTROLLER if cfg.mode == MODE_OPENFLOW_ONLY else ACTION_DROP
        action = forward_packet(switch, packet, table_miss=miss)
        if action == ACTION_DROP:
            packet.dropped = True
        elif action == ACTION_CONTROLLER:
            self._packet_in(packet, sid)
        elif action == ACTION_FLOOD:
            for port, neighbor in sorted(switch.ports.items()):
                if port != packet.in_port:
                    self._transmit(packet, sid, neighbor)
        else:
            port = action_output_port(action)
            self._transmit(packet, sid, switch.ports[port])

    def _packet_in(self, packet: Packet, sid: int) -> None:
        """Reactive detour: a finite-rate controller forwards the packet."""
        controller = self.cluster.charge_work(control.WORK_PACKET_IN, self.loop.now)
        service = 1.0 / self.config.controller_service_pps
        start = max(self.loop.now, controller.busy_until)
        controller.busy_until = start + service
        dst_node = self.host_of_addr.get(packet.nw_dst)

        def serviced():
            if dst_node is None:
                packet.dropped = True
                return
            towards = self._next_hop.get((sid, dst_node))
            if towards is None:
                packet.dropped = True
                return
            self._transmit(packet, sid, towards)

        self.loop.at(controller.busy_until, serviced)

    def _block_source(self, sid: int, src_addr: str) -> None:
        """Persist-offender response: drop rule for the source, on-chain in
        distb mode, direct table install in the reactive baseline."""
        self.blocked_sources.add(src_addr)
        drop = FlowRule(dpid=sid, priority=MITIGATION_DROP_PRIORITY,
                        match=Match(nw_src=src_addr), action=ACTION_DROP)
        if self.config.mode == MODE_DISTB:
            rules = self.cluster.effective_rules().with_rule(drop)
            self.cluster.submit_rule_update(rules, self.loop.now)
            self._note_new_blocks()
        else:
            switch = self.switches[sid]
            switch.install(switch.table.with_rule(drop))

    # -- library operations ----------------------------------------------

    def path_exists(self, src: str, dst: str) -> bool:
        frontier = deque([src])
        seen = {src}
        while frontier:
            node = frontier.popleft()
            if node == dst:
                return True
            for neighbor in sorted(self.graph[node], key=str):
                if neighbor in seen:
                    continue
                if isinstance(neighbor, int) and self.switches[neighbor].isolated:
                    continue
                seen.add(neighbor)
                frontier.append(neighbor)
        return False

    def rtr_exchange(self, client: str, server: str, strict: bool = True) -> None:
        """One request/response pair; RTT lands in `rtt_samples` on completion."""
        if strict and not self.path_exists(client, server):
            raise Unreachable(f"no path from {client} to {server}")
        if not self.path_exists(client, server):
            return
        self.send_packet(client, server, RTR_PACKET_BYTES, PacketKind.RTR_CONTROL)

    def file_transfer(self, src: str, dst: str, file_bytes: int) -> None:
        """Chunk a file into max-size packets and pipeline them.

        The sender paces chunks at the access-link rate, so the transfer
        streams instead of bursting past the first-hop buffer. The
        response time (first send to last chunk delivery) lands in
        `response_times` once the run completes the transfer.
        """
        if file_bytes <= 0:
            raise ValueError("file_bytes must be positive")
        if not self.path_exists(src, dst):
            raise Unreachable(f"no path from {src} to {dst}")
        chunk = self.config.packet_size_range[1]
        n_chunks = (file_bytes + chunk - 1) // chunk
        started = self.loop.now
        pace = chunk * 8 / self.config.data_rate_bps
        chunks: list[Packet] = []
        self._file_watch.append((file_bytes, started, n_chunks, chunks))
        for i in range(n_chunks):
            size = chunk if i < n_chunks - 1 else file_bytes - chunk * (n_chunks - 1)
            self.loop.at(started + i * pace,
                         lambda s=size: chunks.append(
                             self.send_packet(src, dst, s, PacketKind.CBR_DATA)))

    def tamper(self, switch_id: int, mutation, at: float) -> None:
        from .traffic import tamper_switch
        self.loop.at(at, lambda: tamper_switch(self.switches[switch_id], mutation))

    # -- run and report ----------------------------------------------------

    def run(self) -> metrics.MetricsReport:
        cfg = self.config
        self.loop.run_until(cfg.duration_s)
        for file_bytes, started, n_chunks, chunks in self._file_watch:
            if (len(chunks) == n_chunks
                    and all(p.delivered_at is not None for p in chunks)):
                last = max(p.delivered_at for p in chunks)
                self.response_times.append((file_bytes, last - started))
        return self._assemble_report()

    def _assemble_report(self) -> metrics.MetricsReport:
        cfg = self.config
        self._note_new_blocks()
        delivered_cbr = [p for p in self.packets
                         if p.kind is PacketKind.CBR_DATA and p.delivered_at is not None]
        rtr_count = sum(1 for p in self.packets if p.kind is PacketKind.RTR_CONTROL)
        report = metrics.MetricsReport()
        report.throughput_bps = metrics.throughput(self.packets, cfg.duration_s)
        try:
            report.overhead_ratio = metrics.comm_overhead(rtr_count, len(delivered_cbr))
        except metrics.ZeroCbr:
            report.overhead_ratio = None
        report.bandwidth_series = metrics.bandwidth_series(self.packets, 1.0,
                                                           horizon=cfg.duration_s)
        by_size = defaultdict(list)
        for p in delivered_cbr:
            by_size[p.size].append(p.delivered_at - p.sent_at)
        report.latency_by_size = [(size, sum(v) / len(v))
                                  for size, v in sorted(by_size.items())]
        report.response_times = sorted(self.response_times)
        blocks_total = len(self.cluster.control_chain) + len(self.cluster.data_chain)
        component_rows = [(0.0, "Controllers",
                           self.cluster.total_work_units() * cfg.controller_energy_per_unit_j),
                          (0.0, "IoTDevices",
                           sum(delta for _, _, delta, _ in self.energy_ledger)),
                          (0.0, "CloudStorage",
                           blocks_total * metrics.CLOUD_STORE_J_PER_BLOCK)]
        report.energy_by_component = metrics.energy_report(component_rows)
        report.cpu_series = metrics.cpu_series(self.cluster.work_events, 1.0,
                                               cfg.duration_s)
        transactions = blocks_total - self._blocks_at_start
        mining_times = [attempts * cfg.hash_time_s
                        for attempts in self._mining_log[2:2 + transactions]]
        report.gas_total, report.tx_processing_times = metrics.gas_model(
            transactions, mining_times=mining_times)
        report.packet_trace = list(self.packets)
        report.access_log = list(self.cluster.access_log)
        report.isolation_events = list(self.cluster.isolation_log)
        report.energy_ledger = [(t, f"n{nid}", delta, reason)
                                for t, nid, delta, reason in self.energy_ledger]
        delivered = sum(1 for p in self.packets if p.delivered_at is not None)
        dropped = sum(1 for p in self.packets if p.dropped)
        report.summary = {
            "nodes": cfg.node_count,
            "mode": cfg.mode,
            "seed": cfg.seed,
            "duration_s": cfg.duration_s,
            "packets_sent": len(self.packets),
            "packets_delivered": delivered,
            "packets_dropped": dropped,
            "packets_in_flight": len(self.packets) - delivered - dropped,
            "control_chain_length": len(self.cluster.control_chain),
            "data_chain_length": len(self.cluster.data_chain),
            "isolated_switches": sorted(s.id for s in self.switches.values() if s.isolated),
            "blocked_sources": sorted(self.blocked_sources),
            "rtt_samples": len(self.rtt_samples),
        }
        return report


def run_scenario(config: ScenarioConfig) -> metrics.MetricsReport:
    """Build a world from the config, run to the horizon, return the report."""
    return World(config).run()
