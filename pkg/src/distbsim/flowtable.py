"""OpenFlow-style flow tables: rules, priority matching, canonical dumps.

The canonical wire form of a rule is JSON with lexicographically sorted
keys and no whitespace, e.g.

    {"actions":["OUTPUT:2"],"dpid":1,"match":{"in_port":1,"nw_src":"10.0.0.1",
     "nw_dst":"10.0.0.2","nw_proto":6},"priority":10,"version":0}

A table dump is the JSON array of its rules sorted by
(dpid, priority descending, match bytes); the byte-exact dump feeds
`flow_table_hash`, so two switches holding the same rules always hash
identically regardless of insertion order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

ACTION_DROP = "DROP"
ACTION_FLOOD = "FLOOD"
ACTION_CONTROLLER = "CONTROLLER"

MAX_PRIORITY = 65535

MATCH_FIELDS = ("in_port", "nw_src", "nw_dst", "nw_proto")


class RuleError(ValueError):
    """Malformed rule or rule-set input; `field_path` names the offender."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class DuplicateRule(RuleError):
    def __init__(self, triple):
        super().__init__("rules", f"duplicate (dpid, priority, match) triple {triple}")
        self.triple = triple


def action_output(port: int) -> str:
    return f"OUTPUT:{port}"


def action_output_port(action: str) -> Optional[int]:
    """Port of an OUTPUT action, None for DROP/FLOOD/CONTROLLER."""
    if action.startswith("OUTPUT:"):
        return int(action.split(":", 1)[1])
    return None


@dataclass(frozen=True)
class Match:
    """Partial packet predicate; absent fields are wildcards."""

    in_port: Optional[int] = None
    nw_src: Optional[str] = None
    nw_dst: Optional[str] = None
    nw_proto: Optional[int] = None

    def to_obj(self) -> dict:
        obj = {}
        for name in MATCH_FIELDS:
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        return obj

    def key(self) -> bytes:
        return canonical_json(self.to_obj())

    def covers(self, packet) -> bool:
        """True iff every present field equals the packet's field."""
        for name in MATCH_FIELDS:
            want = getattr(self, name)
            if want is not None and want != getattr(packet, name):
                return False
        return True


@dataclass(frozen=True)
class FlowRule:
    dpid: int
    priority: int
    match: Match
    action: str
    version: int = 0

    def __post_init__(self):
        if not 0 <= self.priority <= MAX_PRIORITY:
            raise RuleError("priority", f"must be in [0, {MAX_PRIORITY}]")
        if self.action not in (ACTION_DROP, ACTION_FLOOD, ACTION_CONTROLLER):
            if action_output_port(self.action) is None:
                raise RuleError("actions", f"unknown action {self.action!r}")

    def triple(self):
        return (self.dpid, self.priority, self.match.key())

    def sort_key(self):
        return (self.dpid, -self.priority, self.match.key())

    def to_obj(self) -> dict:
        return {
            "actions": [self.action],
            "dpid": self.dpid,
            "match": self.match.to_obj(),
            "priority": self.priority,
            "version": self.version,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_obj())


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class RuleSet:
    """Immutable collection of flow rules, unique per (dpid, priority, match)."""

    __slots__ = ("_rules",)

    def __init__(self, rules: Iterable[FlowRule] = ()):
        table = {}
        for rule in rules:
            key = rule.triple()
            if key in table:
                raise DuplicateRule(key)
            table[key] = rule
        object.__setattr__(self, "_rules", table)

    def __len__(self) -> int:
        return len(self._rules)

    def __iter__(self) -> Iterator[FlowRule]:
        return iter(self.sorted_rules())

    def __contains__(self, rule: FlowRule) -> bool:
        return self._rules.get(rule.triple()) == rule

    def __eq__(self, other) -> bool:
        if not isinstance(other, RuleSet):
            return NotImplemented
        return self._rules == other._rules

    def __hash__(self):
        return hash(self.canonical_bytes())

    def sorted_rules(self) -> list[FlowRule]:
        return sorted(self._rules.values(), key=FlowRule.sort_key)

    def with_rule(self, rule: FlowRule) -> "RuleSet":
        """New set with `rule` added; raises DuplicateRule on a triple clash."""
        if rule.triple() in self._rules:
            raise DuplicateRule(rule.triple())
        return RuleSet(list(self._rules.values()) + [rule])

    def without(self, dpid: int, priority: int, match: Match) -> "RuleSet":
        key = (dpid, priority, match.key())
        kept = [r for k, r in self._rules.items() if k != key]
        return RuleSet(kept)

    def filtered(self, predicate) -> "RuleSet":
        return RuleSet(r for r in self._rules.values() if predicate(r))

    def for_dpid(self, dpid: int) -> list[FlowRule]:
        return [r for r in self.sorted_rules() if r.dpid == dpid]

    def to_obj(self) -> list[dict]:
        return [rule.to_obj() for rule in self.sorted_rules()]

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_obj())

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_bytes()).digest()


def rules_from_obj(data, stamp_version: Optional[int] = None) -> RuleSet:
    """Parse a JSON-decoded list of rule objects into a RuleSet.

    Raises RuleError naming the offending field path, suitable for API
    diagnostics. `stamp_version` overrides every rule's version when given.
    """
    if not isinstance(data, list):
        raise RuleError("rules", "expected a JSON array of rule objects")
    rules = []
    for i, obj in enumerate(data):
        path = f"rules[{i}]"
        if not isinstance(obj, dict):
            raise RuleError(path, "expected a rule object")
        for req in ("dpid", "priority", "actions"):
            if req not in obj:
                raise RuleError(f"{path}.{req}", "missing required field")
        if not isinstance(obj["dpid"], int):
            raise RuleError(f"{path}.dpid", "must be an integer switch id")
        if not isinstance(obj["priority"], int):
            raise RuleError(f"{path}.priority", "must be an integer")
        actions = obj["actions"]
        if not isinstance(actions, list) or len(actions) != 1 or not isinstance(actions[0], str):
            raise RuleError(f"{path}.actions", "expected a single-action list")
        match_obj = obj.get("match", {})
        if not isinstance(match_obj, dict):
            raise RuleError(f"{path}.match", "expected an object")
        for key in match_obj:
            if key not in MATCH_FIELDS:
                raise RuleError(f"{path}.match.{key}", "unknown match field")
        version = obj.get("version", 0)
        if not isinstance(version, int):
            raise RuleError(f"{path}.version", "must be an integer")
        if stamp_version is not None:
            version = stamp_version
        try:
            rule = FlowRule(
                dpid=obj["dpid"],
                priority=obj["priority"],
                match=Match(**match_obj),
                action=actions[0],
                version=version,
            )
        except RuleError as exc:
            raise RuleError(f"{path}.{exc.field_path}", str(exc).split(": ", 1)[1])
        rules.append(rule)
    try:
        return RuleSet(rules)
    except DuplicateRule as exc:
        raise RuleError("rules", f"duplicate (dpid, priority, match) triple {exc.triple}")


def stamp_versions(rules: RuleSet, version: int) -> RuleSet:
    return RuleSet(replace(rule, version=version) for rule in rules)


@dataclass
class Switch:
    """A forwarding element holding the network-wide rule set.

    Every switch carries the full homogeneous table (the fleet keeps one
    rule set); matching considers only rules whose dpid names this switch.
    """

    id: int
    ports: dict = field(default_factory=dict)  # port-id -> neighbor node id
    table: RuleSet = field(default_factory=RuleSet)
    isolated: bool = False
    compromised: bool = False
    packets_matched: int = 0
    packets_forwarded: int = 0
    packets_dropped: int = 0

    def install(self, rules: RuleSet) -> None:
        self.table = rules

    def port_to(self, neighbor) -> Optional[int]:
        for port, peer in self.ports.items():
            if peer == neighbor:
                return port
        return None


def match_rule(table: RuleSet, dpid: int, packet) -> Optional[FlowRule]:
    """Highest-priority rule of `dpid` covering `packet`.

    Priority ties break toward the lowest canonical serialization, so the
    winner is independent of table insertion order.
    """
    best = None
    best_key = None
    for rule in table.sorted_rules():
        if rule.dpid != dpid or not rule.match.covers(packet):
            continue
        key = (-rule.priority, rule.canonical_bytes())
        if best_key is None or key < best_key:
            best = rule
            best_key = key
    return best


def forward_packet(switch: Switch, packet, table_miss: str = ACTION_DROP) -> str:
    """Resolve the action for `packet` at `switch` and bump counters."""
    rule = match_rule(switch.table, switch.id, packet)
    if rule is None:
        action = table_miss
    else:
        switch.packets_matched += 1
        action = rule.action
    if action == ACTION_DROP:
        switch.packets_dropped += 1
    elif action != ACTION_CONTROLLER:
        switch.packets_forwarded += 1
    return action


def dump_flows(switch: Switch) -> bytes:
    """Canonical serialization of the switch's table, tampering included."""
    return switch.table.canonical_bytes()


def flow_table_hash(switch: Switch) -> bytes:
    return hashlib.sha256(dump_flows(switch)).digest()


@dataclass(frozen=True)
class Verdict:
    consistent: bool
    observed: Optional[str] = None
    expected: Optional[str] = None
    violation: Optional[tuple] = None  # (packet, observed_action, expected_action)

    def __bool__(self) -> bool:
        return self.consistent


CONSISTENT = Verdict(consistent=True)


def verify_switch(switch: Switch, expected: bytes) -> Verdict:
    """Compare the switch's table hash against the ledger's expected digest."""
    observed = flow_table_hash(switch)
    if observed == expected:
        return CONSISTENT
    return Verdict(consistent=False, observed=observed.hex(), expected=expected.hex())


def ids_forwarding_check(tap, rules: RuleSet, dpid: int,
                         table_miss: str = ACTION_DROP) -> Verdict:
    """Replay tapped (packet, observed_action) pairs against the rule set.

    Flags the first observation whose action differs from what the
    installed rules dictate; a rerouting switch is caught even when its
    dump still hashes clean.
    """
    for packet, observed_action in tap:
        rule = match_rule(rules, dpid, packet)
        expected_action = rule.action if rule is not None else table_miss
        if observed_action != expected_action:
            return Verdict(consistent=False,
                           violation=(packet, observed_action, expected_action))
    return CONSISTENT


def ids_weighting_check(observed_counts: dict, expected_counts: dict,
                        tolerance: float = 0.05) -> Verdict:
    """Per-rule observed/expected packet-count ratio check.

    A ratio outside [1 - tolerance, 1 + tolerance] for any rule with
    expected traffic marks the switch inconsistent.
    """
    for key, expected in expected_counts.items():
        if expected == 0:
            continue
        ratio = observed_counts.get(key, 0) / expected
        if not (1.0 - tolerance) <= ratio <= (1.0 + tolerance):
            return Verdict(consistent=False, violation=(key, ratio, expected))
    return CONSISTENT
