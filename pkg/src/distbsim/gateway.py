"""HTTP gateway over the ledger and switch fleet.

Endpoints mirror the stats/administration workflow:

    GET  /chain                  full chain, oldest block first
    POST /rules                  version a new rule set (auth required)
    GET  /stats/desc/{switch_id} live switch descriptor
    POST /verify/{switch_id}     hash-check one switch (auth required)

Writes require the request-grant headers `X-Principal` and
`Authorization: Bearer <token>` matching the access registry; a denied
request is answered 400 with the decision logged. Requests serialize onto
the simulation state under one lock, so reads see a consistent snapshot
and writes apply one at a time.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import ledger
from .control import AccessRequest, ControllerCluster
from .flowtable import RuleError, dump_flows, flow_table_hash, rules_from_obj, verify_switch

DEFAULT_BIND = ("127.0.0.1", 8080)


def _payload_kind(payload) -> str:
    return payload.to_obj()["kind"]


def chain_to_obj(chain: ledger.Chain) -> list[dict]:
    return [
        {
            "index": block.index,
            "timestamp": block.header.timestamp,
            "kind": _payload_kind(block.payload),
            "block_hash": block.block_hash.hex(),
            "prev_hash": block.header.prev_hash.hex(),
            "payload_digest": block.header.payload_digest.hex(),
            "nonce": block.header.nonce,
            "difficulty": block.header.difficulty,
        }
        for block in chain.blocks
    ]


def switch_descriptor(cluster: ControllerCluster, switch_id: int) -> dict:
    switch = cluster.switches[switch_id]
    return {
        "id": switch.id,
        "table_size": len(switch.table),
        "table_hash": flow_table_hash(switch).hex(),
        "dump_bytes": len(dump_flows(switch)),
        "isolated": switch.isolated,
        "counters": {
            "matched": switch.packets_matched,
            "forwarded": switch.packets_forwarded,
            "dropped": switch.packets_dropped,
        },
    }


class GatewayService:
    """Request handlers decoupled from HTTP so tests can drive them directly."""

    def __init__(self, cluster: ControllerCluster, clock=None):
        self.cluster = cluster
        self.lock = threading.Lock()
        self._clock = clock or (lambda: 0.0)

    def _now(self) -> float:
        return self._clock()

    def authorize(self, principal: str, token: str) -> bool:
        request = AccessRequest(principal=principal or "", signature_token=token or "")
        return self.cluster.check_access(request, self._now())

    def get_chain(self):
        with self.lock:
            return 200, chain_to_obj(self.cluster.control_chain)

    def post_rules(self, body: bytes, principal: str, token: str):
        if not self.authorize(principal, token):
            return 400, {"error": "access denied", "principal": principal or ""}
        try:
            data = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return 400, {"error": f"body is not valid JSON: {exc}"}
        if isinstance(data, dict):
            data = data.get("rules", data)
        try:
            rules = rules_from_obj(data)
        except RuleError as exc:
            return 400, {"error": str(exc), "field": exc.field_path}
        with self.lock:
            block = self.cluster.submit_rule_update(rules, self._now())
            return 200, {
                "index": block.index,
                "block_hash": block.block_hash.hex(),
                "rules": len(rules),
            }

    def get_stats_desc(self, switch_id: int):
        with self.lock:
            if switch_id not in self.cluster.switches:
                return 404, {"error": f"unknown switch {switch_id}"}
            return 200, switch_descriptor(self.cluster, switch_id)

    def post_verify(self, switch_id: int, principal: str, token: str):
        if not self.authorize(principal, token):
            return 400, {"error": "access denied", "principal": principal or ""}
        with self.lock:
            if switch_id not in self.cluster.switches:
                return 404, {"error": f"unknown switch {switch_id}"}
            switch = self.cluster.switches[switch_id]
            if switch.isolated:
                return 409, {"error": f"switch {switch_id} is isolated"}
            expected = self.cluster.effective_rules().digest()
            verdict = verify_switch(switch, expected)
            body = {"switch": switch_id, "consistent": verdict.consistent}
            if not verdict.consistent:
                body["observed"] = verdict.observed
                body["expected"] = verdict.expected
            return 200, body


class _Handler(BaseHTTPRequestHandler):
    service: GatewayService = None  # set by make_server

    def log_message(self, fmt, *args):
        pass

    def _reply(self, status: int, body) -> None:
        data = json.dumps(body, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _credentials(self):
        principal = self.headers.get("X-Principal", "")
        auth = self.headers.get("Authorization", "")
        token = auth[len("Bearer "):] if auth.startswith("Bearer ") else ""
        return principal, token

    def do_GET(self):
        parts = [p for p in self.path.split("/") if p]
        if parts == ["chain"]:
            self._reply(*self.service.get_chain())
        elif len(parts) == 3 and parts[0] == "stats" and parts[1] == "desc":
            try:
                switch_id = int(parts[2])
            except ValueError:
                self._reply(404, {"error": "switch id must be an integer"})
                return
            self._reply(*self.service.get_stats_desc(switch_id))
        else:
            self._reply(404, {"error": f"no such resource {self.path}"})

    def do_POST(self):
        parts = [p for p in self.path.split("/") if p]
        principal, token = self._credentials()
        if parts == ["rules"]:
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            self._reply(*self.service.post_rules(body, principal, token))
        elif len(parts) == 2 and parts[0] == "verify":
            try:
                switch_id = int(parts[1])
            except ValueError:
                self._reply(404, {"error": "switch id must be an integer"})
                return
            self._reply(*self.service.post_verify(switch_id, principal, token))
        else:
            self._reply(404, {"error": f"no such resource {self.path}"})


def make_server(service: GatewayService, host: str = DEFAULT_BIND[0],
                port: int = DEFAULT_BIND[1]) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
