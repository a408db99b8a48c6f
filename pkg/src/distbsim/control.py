"""Distributed controller cluster over the control and data chains.

All cluster state is owned by the single-threaded event loop; operations
here are synchronous calls from event handlers. A broadcast installs the
head block's effective rule set into every controller replica and every
non-isolated switch, so replica consistency is strong by construction —
`controllers_consistent` exists to make that claim testable rather than
assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import ledger
from .flowtable import (
    ACTION_DROP,
    MAX_PRIORITY,
    FlowRule,
    Match,
    RuleSet,
    Switch,
    Verdict,
    action_output_port,
    flow_table_hash,
    stamp_versions,
    verify_switch,
)

WORK_PACKET_IN = 1
WORK_BLOCK_MINED = 5
WORK_VERIFICATION = 2

DEFAULT_BROADCAST_HOP_DELAY_S = 0.002


class ControlError(Exception):
    pass


class AlreadyIsolated(ControlError):
    def __init__(self, target: int):
        super().__init__(f"switch {target} is already isolated")
        self.target = target


class NotIsolated(ControlError):
    def __init__(self, target: int):
        super().__init__(f"switch {target} is not isolated")
        self.target = target


class UnknownSwitch(ControlError):
    def __init__(self, target: int):
        super().__init__(f"switch {target} is not registered")
        self.target = target


@dataclass
class Controller:
    id: int
    head_hash: bytes = b""
    connected_switches: set = field(default_factory=set)
    work_units: int = 0
    busy_until: float = 0.0  # packet-in queue backlog (reactive mode)


@dataclass(frozen=True)
class AccessRequest:
    principal: str
    signature_token: str


def grant_access(request: AccessRequest, registry: dict) -> bool:
    """Pure request-grant policy: registered principal with matching token."""
    return registry.get(request.principal) == request.signature_token


class ControllerCluster:
    """Controllers plus the two ledgers and the registered switch fleet."""

    def __init__(self, control_chain: ledger.Chain, data_chain: ledger.Chain,
                 switches: dict, n_controllers: int = 5,
                 verification_period: float = 5.0,
                 access_registry: Optional[dict] = None,
                 broadcast_hop_delay: float = DEFAULT_BROADCAST_HOP_DELAY_S):
        if n_controllers < 1:
            raise ControlError("cluster needs at least one controller")
        if verification_period <= 0:
            raise ControlError("verification period must be positive")
        self.control_chain = control_chain
        self.data_chain = data_chain
        self.switches = switches
        self.verification_period = verification_period
        self.access_registry = access_registry or {}
        self.broadcast_hop_delay = broadcast_hop_delay
        self.controllers = [
            Controller(id=i, connected_switches=set(switches))
            for i in range(n_controllers)
        ]
        self.access_log: list = []       # (time, principal, decision)
        self.isolation_log: list = []    # (time, switch, action)
        self.work_events: list = []      # (time, units)
        self._work_rr = 0
        self.isolation_blocks = 0
        self._broadcast(clock=0.0)

    # -- bookkeeping ------------------------------------------------------

    def charge_work(self, units: int, clock: float) -> Controller:
        controller = self.controllers[self._work_rr]
        self._work_rr = (self._work_rr + 1) % len(self.controllers)
        controller.work_units += units
        self.work_events.append((clock, units))
        return controller

    def total_work_units(self) -> int:
        return sum(c.work_units for c in self.controllers)

    def broadcast_delay(self) -> float:
        # one overlay hop per controller replica plus one per reachable switch
        fanout = len(self.controllers) + len(self.switches)
        return self.broadcast_hop_delay * fanout

    def effective_rules(self) -> RuleSet:
        return ledger.effective_rules(self.control_chain)

    def _broadcast(self, clock: float) -> None:
        rules = self.effective_rules()
        head_hash = self.control_chain.head.block_hash
        for controller in self.controllers:
            controller.head_hash = head_hash
        for switch in self.switches.values():
            if not switch.isolated:
                switch.install(rules)

    # -- operations -------------------------------------------------------

    def submit_rule_update(self, rules: RuleSet, clock: float) -> ledger.Block:
        """Version the rules on the control chain and push them fleet-wide."""
        stamped = stamp_versions(rules, self.control_chain.head.index + 1)
        block = ledger.append_rules(self.control_chain, stamped, clock)
        self.charge_work(WORK_BLOCK_MINED, clock)
        self._broadcast(clock)
        return block

    def controllers_consistent(self) -> bool:
        hashes = {c.head_hash for c in self.controllers}
        return len(hashes) == 1

    def check_access(self, request: AccessRequest, clock: float) -> bool:
        granted = grant_access(request, self.access_registry)
        self.access_log.append((clock, request.principal,
                                "granted" if granted else "denied"))
        return granted

    def isolate_switch(self, target: int, clock: float) -> ledger.Block:
        """Cut a rogue switch off: drop rules on every peer-facing port.

        Neighbors lose their forwards toward the target and gain a
        top-priority drop on the facing ingress port; the order is mined
        onto the control chain and broadcast (the target, now isolated,
        keeps its stale table).
        """
        if target not in self.switches:
            raise UnknownSwitch(target)
        victim = self.switches[target]
        if victim.isolated:
            raise AlreadyIsolated(target)

        rules = self.effective_rules()
        for switch in self.switches.values():
            if switch.id == target:
                continue
            facing = switch.port_to(target)
            if facing is None:
                continue
            rules = rules.filtered(
                lambda r, sid=switch.id, p=facing: not (
                    r.dpid == sid and action_output_port(r.action) == p))
            drop = FlowRule(dpid=switch.id, priority=MAX_PRIORITY,
                            match=Match(in_port=facing), action=ACTION_DROP,
                            version=self.control_chain.head.index + 1)
            rules = rules.with_rule(drop)

        payload = ledger.IsolationOrder(target=target, new_rules=rules)
        block = self.control_chain.append(payload, clock)
        self.charge_work(WORK_BLOCK_MINED, clock)
        victim.isolated = True
        self.isolation_blocks += 1
        self.isolation_log.append((clock, target, "isolate"))
        self._broadcast(clock)
        return block

    def reinstate_switch(self, target: int, clock: float) -> ledger.Block:
        """Re-admit an isolated switch by restoring the pre-isolation rules.

        The restored set is recovered from chain history: current rules
        minus what the isolation order added, plus what it removed.
        """
        if target not in self.switches:
            raise UnknownSwitch(target)
        victim = self.switches[target]
        if not victim.isolated:
            raise NotIsolated(target)

        order_index = None
        for block in reversed(self.control_chain.blocks):
            payload = block.payload
            if isinstance(payload, ledger.IsolationOrder) and payload.target == target:
                order_index = block.index
                break
        if order_index is None:
            raise ControlError(f"no isolation order found for switch {target}")

        before = ledger.effective_rules(self.control_chain, order_index - 1)
        at_order = ledger.effective_rules(self.control_chain, order_index)
        added = [r for r in at_order if r not in before]
        removed = [r for r in before if r not in at_order]
        restored = self.effective_rules()
        for rule in added:
            if rule in restored:
                restored = restored.without(rule.dpid, rule.priority, rule.match)
        for rule in removed:
            if rule not in restored:
                restored = restored.with_rule(rule)

        block = ledger.append_rules(self.control_chain, restored, clock)
        self.charge_work(WORK_BLOCK_MINED, clock)
        victim.isolated = False
        self.isolation_log.append((clock, target, "reinstate"))
        self._broadcast(clock)
        return block

    def run_verification_round(self, clock: float) -> list[tuple]:
        """Hash the fleet, record the dump on unanimity, isolate offenders.

        A switch whose table digest differs from the head rule set's digest
        is isolated exactly once; a clean round appends one dump record.
        """
        expected = self.effective_rules().digest()
        verdicts = []
        digests = {}
        for sid in sorted(self.switches):
            switch = self.switches[sid]
            digests[sid] = flow_table_hash(switch)
            verdicts.append((sid, verify_switch(switch, expected)))
            self.charge_work(WORK_VERIFICATION, clock)
        outcome = ledger.append_dump(self.data_chain, digests, expected,
                                     registered=self.switches, clock=clock)
        if outcome.ok:
            self.charge_work(WORK_BLOCK_MINED, clock)
        for sid, verdict in verdicts:
            if not verdict and not self.switches[sid].isolated:
                self.isolate_switch(sid, clock)
        return verdicts


def build_cluster(initial_rules: RuleSet, switches: Iterable[Switch],
                  n_controllers: int = 5, difficulty: int = ledger.DEFAULT_DIFFICULTY,
                  verification_period: float = 5.0,
                  access_registry: Optional[dict] = None,
                  clock: float = 0.0) -> ControllerCluster:
    """Fresh cluster with mined genesis blocks holding `initial_rules`."""
    control_chain = ledger.new_control_chain(initial_rules, difficulty, clock)
    data_chain = ledger.new_data_chain(difficulty, clock)
    switch_map = {s.id: s for s in switches}
    return ControllerCluster(control_chain, data_chain, switch_map,
                             n_controllers=n_controllers,
                             verification_period=verification_period,
                             access_registry=access_registry)
