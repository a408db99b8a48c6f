"""Gateway tests: endpoint contracts over a live localhost server."""

import hashlib
import http.client
import json
import threading

import pytest

from distbsim import control, traffic
from distbsim.flowtable import FlowRule, Match, RuleSet, Switch
from distbsim.gateway import GatewayService, make_server
from distbsim.ledger import validate_chain

REGISTRY = {"admin": "distb-token"}


def _fabric():
    switches = [Switch(id=i, ports={1: i - 1, 2: i + 1}) for i in range(1, 5)]
    rules = RuleSet([FlowRule(dpid=i, priority=100, match=Match(nw_dst="10.0.0.1"),
                              action="OUTPUT:2") for i in range(1, 5)])
    return control.build_cluster(rules, switches, difficulty=4,
                                 access_registry=REGISTRY)


@pytest.fixture()
def server():
    cluster = _fabric()
    service = GatewayService(cluster)
    httpd = make_server(service, host="127.0.0.1", port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield cluster, httpd.server_address[1]
    httpd.shutdown()
    httpd.server_close()


def _request(port, method, path, body=None, auth=True):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=5)
    headers = {"Content-Type": "application/json"}
    if auth:
        headers["X-Principal"] = "admin"
        headers["Authorization"] = "Bearer distb-token"
    conn.request(method, path, body=body, headers=headers)
    response = conn.getresponse()
    payload = json.loads(response.read().decode())
    conn.close()
    return response.status, payload


def test_fresh_chain_is_genesis_only(server):
    _cluster, port = server
    status, chain = _request(port, "GET", "/chain")
    assert status == 200
    assert len(chain) == 1
    assert chain[0]["index"] == 0
    assert chain[0]["prev_hash"] == "00" * 32


def test_post_rules_extends_chain_and_links_verify_client_side(server):
    cluster, port = server
    body = json.dumps([
        {"dpid": 1, "priority": 50, "match": {"nw_dst": "10.0.0.9"},
         "actions": ["OUTPUT:1"]},
        {"dpid": 2, "priority": 50, "match": {"nw_dst": "10.0.0.9"},
         "actions": ["DROP"]},
    ])
    status, summary = _request(port, "POST", "/rules", body=body)
    assert status == 200
    assert summary["index"] == 1

    status, chain = _request(port, "GET", "/chain")
    assert status == 200
    assert len(chain) == 2
    # client-side continuity: prev_hash links and the server chain validates
    assert chain[1]["prev_hash"] == chain[0]["block_hash"]
    assert validate_chain(cluster.control_chain) is None


def test_post_rules_names_missing_field(server):
    _cluster, port = server
    body = json.dumps([{"dpid": 1, "actions": ["DROP"]}])
    status, err = _request(port, "POST", "/rules", body=body)
    assert status == 400
    assert "priority" in err["field"]


def test_unauthorized_post_is_denied_and_logged(server):
    cluster, port = server
    body = json.dumps([])
    status, err = _request(port, "POST", "/rules", body=body, auth=False)
    assert status == 400
    assert err["error"] == "access denied"
    assert cluster.access_log[-1][2] == "denied"
    status, chain = _request(port, "GET", "/chain")
    assert len(chain) == 1  # nothing was written


def test_stats_descriptor_hash_matches_offline_recomputation(server):
    cluster, port = server
    status, desc = _request(port, "GET", "/stats/desc/1")
    assert status == 200
    switch = cluster.switches[1]
    offline = hashlib.sha256(switch.table.canonical_bytes()).hexdigest()
    assert desc["table_hash"] == offline
    assert desc["table_size"] == len(switch.table)
    assert desc["isolated"] is False


def test_stats_unknown_switch_is_404(server):
    _cluster, port = server
    status, err = _request(port, "GET", "/stats/desc/99")
    assert status == 404
    status, _ = _request(port, "GET", "/stats/desc/banana")
    assert status == 404


def test_verify_clean_tampered_and_isolated(server):
    cluster, port = server
    status, verdict = _request(port, "POST", "/verify/2")
    assert status == 200 and verdict["consistent"] is True

    traffic.tamper_switch(cluster.switches[2], traffic.AddRule(
        FlowRule(dpid=2, priority=1, match=Match(nw_proto=99), action="DROP")))
    status, verdict = _request(port, "POST", "/verify/2")
    assert status == 200 and verdict["consistent"] is False
    assert verdict["observed"] != verdict["expected"]

    cluster.isolate_switch(2, clock=1.0)
    status, err = _request(port, "POST", "/verify/2")
    assert status == 409

    status, _ = _request(port, "POST", "/verify/77")
    assert status == 404


def test_writes_only_happen_through_post_rules(server):
    cluster, port = server
    before = len(cluster.control_chain)
    for _ in range(3):
        _request(port, "GET", "/chain")
        _request(port, "GET", "/stats/desc/1")
        _request(port, "POST", "/verify/1")
    assert len(cluster.control_chain) == before
    _request(port, "POST", "/rules", body=json.dumps([]))
    assert len(cluster.control_chain) == before + 1
