"""Workload and attack generation: CBR streams, DDoS ramps, switch tampering.

Generators are pure: they return timed emission lists the event engine
schedules. Flood traffic is its own packet kind so delivered-throughput
accounting can exclude it.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .flowtable import FlowRule, Match, RuleSet, Switch

PROTO_CBR = 17      # UDP-like data
PROTO_RTR = 6       # TCP-like control exchange
PROTO_FLOOD = 255


class PacketKind(enum.Enum):
    CBR_DATA = "cbr"
    RTR_CONTROL = "rtr"
    ATTACK_FLOOD = "flood"


_KIND_PROTO = {
    PacketKind.CBR_DATA: PROTO_CBR,
    PacketKind.RTR_CONTROL: PROTO_RTR,
    PacketKind.ATTACK_FLOOD: PROTO_FLOOD,
}


@dataclass
class Packet:
    id: int
    src: str
    dst: str
    size: int                      # bytes
    kind: PacketKind
    sent_at: float
    delivered_at: Optional[float] = None
    dropped: bool = False
    nw_src: str = ""
    nw_dst: str = ""
    in_port: Optional[int] = None  # transient, set per hop
    echo_of: Optional[float] = None  # request sent_at, set on RTR responses

    @property
    def nw_proto(self) -> int:
        return _KIND_PROTO[self.kind]

    @property
    def bits(self) -> int:
        return self.size * 8


@dataclass
class AttackSchedule:
    """Flood rate curve: piecewise-linear (time, packets/s) points.

    The rate is zero before `start`, interpolates linearly between curve
    points, and holds the last value afterwards.
    """

    start: float
    rate_curve: list            # [(t, pps), ...] with non-decreasing t
    targets: list               # destination host ids
    size_bytes: int = 4096
    sources: list = field(default_factory=lambda: ["atk0"])

    def __post_init__(self):
        if any(rate < 0 for _, rate in self.rate_curve):
            raise ValueError("attack rates must be non-negative")

    def rate_at(self, t: float) -> float:
        if t < self.start or not self.rate_curve:
            return 0.0
        points = self.rate_curve
        if t <= points[0][0]:
            return points[0][1]
        for (t0, r0), (t1, r1) in zip(points, points[1:]):
            if t <= t1:
                if t1 == t0:
                    return r1
                return r0 + (r1 - r0) * (t - t0) / (t1 - t0)
        return points[-1][1]


def cbr_source(rate_pps: float, size_range: tuple, duration: float,
               seed: int) -> list[tuple]:
    """Constant-bit-rate emissions: [(time, size_bytes), ...].

    Packets leave at exact 1/rate intervals; sizes are seeded uniform
    draws from the inclusive range.
    """
    if rate_pps < 0:
        raise ValueError("rate must be non-negative")
    if rate_pps == 0:
        return []
    rng = random.Random(seed)
    lo, hi = size_range
    count = int(math.floor(rate_pps * duration + 1e-9))
    return [(k / rate_pps, rng.randint(lo, hi)) for k in range(1, count + 1)]


def ddos_ramp(schedule: AttackSchedule, horizon: float) -> list[tuple]:
    """Flood emission times under the schedule's rate curve.

    Packet k leaves when the integrated rate crosses k; within a linear
    segment the crossing solves a quadratic in closed form.
    """
    emissions = []
    if not schedule.rate_curve:
        return emissions
    points = [(max(t, schedule.start), r) for t, r in schedule.rate_curve]
    # extend the final rate to the horizon
    if points[-1][0] < horizon:
        points.append((horizon, points[-1][1]))
    cumulative = 0.0
    next_k = 1
    for (t0, r0), (t1, r1) in zip(points, points[1:]):
        if t1 <= t0:
            continue
        span = t1 - t0
        slope = (r1 - r0) / span
        segment_total = (r0 + r1) * span / 2.0
        while next_k <= cumulative + segment_total:
            need = next_k - cumulative
            if abs(slope) < 1e-12:
                dt = need / r0 if r0 > 0 else span
            else:
                # solve r0*dt + slope*dt^2/2 = need
                dt = (-r0 + math.sqrt(r0 * r0 + 2.0 * slope * need)) / slope
            t = t0 + dt
            if t > horizon:
                return emissions
            emissions.append((t, schedule.size_bytes))
            next_k += 1
        cumulative += segment_total
    return emissions


@dataclass(frozen=True)
class AddRule:
    rule: FlowRule


@dataclass(frozen=True)
class DropRule:
    dpid: int
    priority: int
    match: Match


@dataclass(frozen=True)
class EditPriority:
    dpid: int
    priority: int
    match: Match
    new_priority: int


def tamper_switch(switch: Switch, mutation) -> bool:
    """Mutate a switch's local table behind the ledger's back.

    Marks the switch compromised only if the table actually changed
    (an AddRule duplicating an existing triple is rejected by the rule-set
    invariant and leaves the table untouched). Returns whether it changed.
    """
    table = switch.table
    if isinstance(mutation, AddRule):
        key = mutation.rule.triple()
        if any(rule.triple() == key for rule in table):
            return False
        new_table = table.with_rule(mutation.rule)
    elif isinstance(mutation, DropRule):
        new_table = table.without(mutation.dpid, mutation.priority, mutation.match)
        if len(new_table) == len(table):
            return False
    elif isinstance(mutation, EditPriority):
        target = None
        for rule in table:
            if (rule.dpid, rule.priority, rule.match.key()) == (
                    mutation.dpid, mutation.priority, mutation.match.key()):
                target = rule
                break
        if target is None or mutation.new_priority == mutation.priority:
            return False
        new_table = table.without(mutation.dpid, mutation.priority, mutation.match)
        new_table = new_table.with_rule(replace(target, priority=mutation.new_priority))
    else:
        raise TypeError(f"unknown mutation {mutation!r}")
    switch.table = new_table
    switch.compromised = True
    return True
