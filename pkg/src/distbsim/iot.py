"""IoT perception layer: clustering, head election, radio energy, rounds.

Head election works per cluster: members are selection-sorted ascending by
energy, the lowest gravity distance (node-to-centroid) anchors an
eligibility band, and the highest-energy member inside the band becomes
head (ties resolved toward smaller distance, then lower id).

Radio costs follow the first-order model
    E_tx(b, d) = E_elec * b + eps_amp * b * d^2
    E_rx(b)    = E_elec * b
with E_elec = 50 nJ/bit and eps_amp = 100 pJ/bit/m^2 by default.

Links degrade with distance: transmissions beyond `range_m` fail with a
probability growing linearly in the excess distance and are retried, so a
badly placed head costs both extra energy and extra airtime. A round's
end-to-end delay is its total airtime, the sum of every transmission
attempt's serialization time at the configured data rate (propagation is
taken as zero).
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence


class IotError(Exception):
    pass


class InvalidK(IotError):
    pass


class EmptyCluster(IotError):
    pass


class Role(enum.Enum):
    MEMBER = "member"
    CLUSTER_HEAD = "cluster_head"


@dataclass
class SensorNode:
    id: int
    x: float
    y: float
    energy: float
    trust: float = 5.0
    role: Role = Role.MEMBER
    dead: bool = False
    # random-waypoint state
    waypoint: Optional[tuple] = None
    speed: float = 0.0
    pause_left: float = 0.0

    @property
    def position(self) -> tuple:
        return (self.x, self.y)


@dataclass
class Cluster:
    id: int
    members: list  # sorted node ids
    head: Optional[int] = None
    centroid: tuple = (0.0, 0.0)


@dataclass
class BaseStation:
    x: float
    y: float
    energy_budget: float  # the station threshold constant (beta)

    @property
    def position(self) -> tuple:
        return (self.x, self.y)


@dataclass
class RadioParams:
    e_elec: float = 50e-9          # J/bit
    eps_amp: float = 100e-12       # J/bit/m^2
    data_rate_bps: float = 10e6
    range_m: float = 450.0         # loss-free link distance
    loss_slope: float = 1.2        # failure prob per unit of excess d/range
    loss_max: float = 0.85
    max_retries: int = 8
    request_bits: int = 64
    head_band: float = 0.10        # eligibility band above the lowest distance
    gate_semantics: str = "as-written"  # or "budget-check"
    station_reliable: bool = True  # uplink to the mains-powered station never retries


@dataclass
class RoundResult:
    energy_spent: dict            # node id -> J
    end_to_end_delay: float       # total airtime, seconds
    delivered: bool               # aggregate reached the station
    payload_bits: int = 0
    members_delivered: int = 0
    dead_nodes: list = field(default_factory=list)


def energy_tx(bits: int, distance_m: float, params: RadioParams = RadioParams()) -> float:
    if bits < 0 or distance_m < 0:
        raise IotError("bits and distance must be non-negative")
    return params.e_elec * bits + params.eps_amp * bits * distance_m * distance_m


def energy_rx(bits: int, params: RadioParams = RadioParams()) -> float:
    if bits < 0:
        raise IotError("bits must be non-negative")
    return params.e_elec * bits


def gravity_distance(node: SensorNode, cluster: Cluster) -> float:
    """Euclidean distance from the node to its cluster's center of gravity."""
    return math.dist(node.position, cluster.centroid)


def _centroid(nodes: Sequence[SensorNode]) -> tuple:
    n = len(nodes)
    return (sum(node.x for node in nodes) / n, sum(node.y for node in nodes) / n)


def partition_clusters(nodes: Sequence[SensorNode], k: int, seed: int) -> list[Cluster]:
    """Deterministic k-means with seeded farthest-point initialization.

    The first center is a seeded draw; each further center is the node
    farthest from the chosen set (ties to the lowest id). Lloyd iterations
    run to convergence or 100 passes; assignment ties go to the lowest
    cluster index.
    """
    if not 1 <= k <= len(nodes):
        raise InvalidK(f"k={k} outside [1, {len(nodes)}]")
    rng = random.Random(seed)
    ordered = sorted(nodes, key=lambda node: node.id)
    centers = [ordered[rng.randrange(len(ordered))].position]
    while len(centers) < k:
        best = max(ordered, key=lambda node: (
            min(math.dist(node.position, c) for c in centers), -node.id))
        centers.append(best.position)

    assignment = {}
    for _ in range(100):
        changed = False
        buckets = [[] for _ in range(k)]
        for node in ordered:
            idx = min(range(k), key=lambda i: (math.dist(node.position, centers[i]), i))
            buckets[idx].append(node)
            if assignment.get(node.id) != idx:
                assignment[node.id] = idx
                changed = True
        for i, bucket in enumerate(buckets):
            if bucket:
                centers[i] = _centroid(bucket)
            else:
                # re-seed an emptied cluster with the node farthest from its center
                loner = max(ordered, key=lambda node: (
                    math.dist(node.position, centers[assignment[node.id]]), -node.id))
                centers[i] = loner.position
        if not changed:
            break

    clusters = []
    for i in range(k):
        member_ids = sorted(node.id for node in ordered if assignment[node.id] == i)
        members = [node for node in ordered if node.id in set(member_ids)]
        clusters.append(Cluster(id=i, members=member_ids,
                                centroid=_centroid(members) if members else centers[i]))
    return clusters


def selection_sort_by_energy(nodes: list[SensorNode]) -> list[SensorNode]:
    """Ascending energy via selection sort (strict-less minimum, swap in place)."""
    items = list(nodes)
    n = len(items)
    for i in range(n - 1):
        low = i
        for j in range(i + 1, n):
            if items[j].energy < items[low].energy:
                low = j
        items[i], items[low] = items[low], items[i]
    return items


def select_cluster_heads(nodes_by_id: dict, clusters: Sequence[Cluster],
                         band: float = 0.10) -> list[tuple]:
    """Elect one head per cluster; returns [(cluster_id, head_id), ...].

    The head is the maximum-energy member whose gravity distance is within
    (1 + band) of the cluster's lowest distance separation; ties prefer the
    smaller distance, then the lower id. Role fields are updated in place.
    """
    chosen = []
    for cluster in clusters:
        members = [nodes_by_id[nid] for nid in cluster.members]
        if not members:
            raise EmptyCluster(f"cluster {cluster.id} has no members")
        ranked = selection_sort_by_energy(members)
        lds = min(gravity_distance(node, cluster) for node in ranked)
        eligible = [node for node in ranked
                    if gravity_distance(node, cluster) <= lds * (1.0 + band)]
        head = min(eligible, key=lambda node: (
            -node.energy, gravity_distance(node, cluster), node.id))
        for node in members:
            node.role = Role.CLUSTER_HEAD if node.id == head.id else Role.MEMBER
        cluster.head = head.id
        chosen.append((cluster.id, head.id))
    return chosen


def _fail_probability(distance_m: float, params: RadioParams) -> float:
    if distance_m <= params.range_m:
        return 0.0
    excess = (distance_m - params.range_m) / params.range_m
    return min(params.loss_max, params.loss_slope * excess)


class _RoundLedger:
    """Per-round debit bookkeeping honoring remaining battery charge."""

    def __init__(self):
        self.spent = {}
        self.dead = []

    def debit(self, node: SensorNode, amount: float) -> bool:
        """Charge `amount`; marks the node dead (and clips the charge) when
        the battery cannot cover it. Returns False on a failed (fatal) debit."""
        if node.dead:
            return False
        if amount > node.energy:
            self.spent[node.id] = self.spent.get(node.id, 0.0) + node.energy
            node.energy = 0.0
            node.dead = True
            self.dead.append(node.id)
            return False
        node.energy -= amount
        self.spent[node.id] = self.spent.get(node.id, 0.0) + amount
        return True


def _send_with_retries(sender: SensorNode, receiver: Optional[SensorNode],
                       bits: int, distance: float, rng: random.Random,
                       params: RadioParams, books: _RoundLedger,
                       reliable: bool = False) -> tuple:
    """One payload over one link; returns (delivered, airtime_s).

    A reliable link transmits exactly once; lossy links retry up to
    `max_retries` extra attempts, each burning radio energy and airtime.
    """
    airtime = 0.0
    attempts = 1 if reliable else params.max_retries + 1
    for _ in range(attempts):
        if not books.debit(sender, energy_tx(bits, distance, params)):
            return False, airtime
        if receiver is not None and not books.debit(receiver, energy_rx(bits, params)):
            return False, airtime
        airtime += bits / params.data_rate_bps
        if reliable or rng.random() >= _fail_probability(distance, params):
            return True, airtime
    return False, airtime


def transmit_round(cluster: Cluster, nodes_by_id: dict, station: BaseStation,
                   payload_bits: int, rng: random.Random,
                   params: RadioParams = RadioParams()) -> RoundResult:
    """One data-collection round through the elected head.

    Members relay their payload to the head; the head signals the station
    and, if the station gate admits it, forwards one fused payload-sized
    summary. The head's battery pays reception per member plus the uplink.
    """
    if cluster.head is None:
        raise IotError(f"cluster {cluster.id} has no head")
    head = nodes_by_id[cluster.head]
    books = _RoundLedger()
    airtime = 0.0
    members_delivered = 0

    if head.dead:
        return RoundResult(energy_spent={}, end_to_end_delay=0.0, delivered=False,
                           payload_bits=payload_bits)

    for nid in cluster.members:
        if nid == head.id:
            continue
        member = nodes_by_id[nid]
        if member.dead:
            continue
        ok, spent_air = _send_with_retries(
            member, head, payload_bits, math.dist(member.position, head.position),
            rng, params, books)
        airtime += spent_air
        members_delivered += int(ok)
        if head.dead:
            break

    delivered = False
    if not head.dead:
        d_station = math.dist(head.position, station.position)
        # request-to-send handshake, assumed loss-free
        if books.debit(head, energy_tx(params.request_bits, d_station, params)):
            airtime += params.request_bits / params.data_rate_bps
            if _station_gate(head, d_station, station, payload_bits, params):
                delivered, spent_air = _send_with_retries(
                    head, None, payload_bits, d_station, rng, params, books,
                    reliable=params.station_reliable)
                airtime += spent_air

    return RoundResult(energy_spent=books.spent, end_to_end_delay=airtime,
                       delivered=delivered, payload_bits=payload_bits,
                       members_delivered=members_delivered, dead_nodes=books.dead)


def _station_gate(head: SensorNode, d_station: float, station: BaseStation,
                  payload_bits: int, params: RadioParams) -> bool:
    if params.gate_semantics == "as-written":
        # the election algorithm's literal condition: beta > head energy
        return station.energy_budget > head.energy
    if params.gate_semantics == "budget-check":
        return head.energy >= energy_tx(payload_bits, d_station, params)
    raise IotError(f"unknown gate semantics {params.gate_semantics!r}")


def baseline_round(cluster: Cluster, nodes_by_id: dict, station: BaseStation,
                   payload_bits: int, rng: random.Random,
                   params: RadioParams = RadioParams()) -> RoundResult:
    """Comparison protocol: uniformly random head, no station gate.

    Radio accounting is identical to `transmit_round`; only the head
    choice (no energy or distance criterion) differs, and the uplink is
    never gated on the station threshold.
    """
    alive = [nid for nid in cluster.members if not nodes_by_id[nid].dead]
    if not alive:
        return RoundResult(energy_spent={}, end_to_end_delay=0.0, delivered=False,
                           payload_bits=payload_bits)
    head_id = alive[rng.randrange(len(alive))]
    head = nodes_by_id[head_id]
    cluster.head = head_id
    books = _RoundLedger()
    airtime = 0.0
    members_delivered = 0

    for nid in cluster.members:
        if nid == head_id:
            continue
        member = nodes_by_id[nid]
        if member.dead:
            continue
        ok, spent_air = _send_with_retries(
            member, head, payload_bits, math.dist(member.position, head.position),
            rng, params, books)
        airtime += spent_air
        members_delivered += int(ok)
        if head.dead:
            break

    delivered = False
    if not head.dead:
        d_station = math.dist(head.position, station.position)
        if books.debit(head, energy_tx(params.request_bits, d_station, params)):
            airtime += params.request_bits / params.data_rate_bps
            delivered, spent_air = _send_with_retries(
                head, None, payload_bits, d_station, rng, params, books,
                reliable=params.station_reliable)
            airtime += spent_air

    return RoundResult(energy_spent=books.spent, end_to_end_delay=airtime,
                       delivered=delivered, payload_bits=payload_bits,
                       members_delivered=members_delivered, dead_nodes=books.dead)


def random_waypoint_step(node: SensorNode, dt: float, rng: random.Random,
                         area: tuple, speed_range: tuple = (1.0, 5.0),
                         pause_range: tuple = (0.0, 2.0)) -> tuple:
    """Advance one node `dt` seconds under the random waypoint model.

    Pick a uniform waypoint, walk toward it at a uniform speed, pause on
    arrival, repeat. The position is clipped to the area. Returns the new
    (x, y) and stores it on the node.
    """
    if dt <= 0:
        raise IotError("dt must be positive")
    width, height = area
    remaining = dt
    while remaining > 1e-12:
        if node.pause_left > 0:
            used = min(node.pause_left, remaining)
            node.pause_left -= used
            remaining -= used
            continue
        if node.waypoint is None:
            node.waypoint = (rng.uniform(0, width), rng.uniform(0, height))
            node.speed = rng.uniform(*speed_range)
        dist_left = math.dist(node.position, node.waypoint)
        if dist_left <= node.speed * remaining:
            if node.speed > 0:
                remaining -= dist_left / node.speed
            node.x, node.y = node.waypoint
            node.waypoint = None
            node.pause_left = rng.uniform(*pause_range)
        else:
            frac = node.speed * remaining / dist_left
            node.x += (node.waypoint[0] - node.x) * frac
            node.y += (node.waypoint[1] - node.y) * frac
            remaining = 0.0
    node.x = min(max(node.x, 0.0), width)
    node.y = min(max(node.y, 0.0), height)
    return node.position


def load_topology(path) -> list[SensorNode]:
    """Read `id x y energy` lines; '#' starts a comment."""
    nodes = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise IotError(f"{path}:{lineno}: expected 'id x y energy'")
            nodes.append(SensorNode(id=int(parts[0]), x=float(parts[1]),
                                    y=float(parts[2]), energy=float(parts[3])))
    return nodes


def save_topology(nodes: Sequence[SensorNode], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# id x y energy_J\n")
        for node in sorted(nodes, key=lambda n: n.id):
            fh.write(f"{node.id} {node.x!r} {node.y!r} {node.energy!r}\n")
