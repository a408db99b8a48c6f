"""Ledger tests: golden digests, brute-force mining oracles, tamper detection.

The independent checker at the bottom re-implements header packing and
pairwise validation with nothing but hashlib and int.to_bytes, so the
mutation sweep cross-checks two separate code paths.
"""

import hashlib
import random

import pytest

from distbsim import ledger
from distbsim.flowtable import FlowRule, Match, RuleSet

# sha256 of 80 zero bytes, computed once with `openssl dgst -sha256` and frozen
GOLDEN_ZERO_HEADER = "5b6fb58e61fa475939767d68a446f97f1bff02c0e5935a3ea8bb51e6515783d8"


def _rules(n=2, dpid=1):
    return RuleSet(
        FlowRule(dpid=dpid, priority=10 + i, match=Match(nw_dst=f"10.0.0.{i + 1}"),
                 action=f"OUTPUT:{i + 1}")
        for i in range(n)
    )


def _pack_header_oracle(header) -> bytes:
    """Independent 80-byte serializer: little-endian ints, raw digests."""
    return (header.version.to_bytes(4, "little")
            + header.prev_hash
            + header.payload_digest
            + header.timestamp.to_bytes(4, "little")
            + header.difficulty.to_bytes(4, "little")
            + header.nonce.to_bytes(4, "little"))


def test_header_is_exactly_80_bytes_and_matches_oracle_packing():
    header = ledger.BlockHeader(version=1, prev_hash=bytes(range(32)),
                                payload_digest=bytes(range(32, 64)),
                                timestamp=1234, difficulty=12, nonce=99)
    packed = header.pack()
    assert len(packed) == 80
    assert packed == _pack_header_oracle(header)
    assert ledger.BlockHeader.unpack(packed) == header


def test_header_roundtrip_on_random_fields():
    rng = random.Random(7)
    for _ in range(200):
        header = ledger.BlockHeader(
            version=rng.randrange(2**32),
            prev_hash=bytes(rng.randrange(256) for _ in range(32)),
            payload_digest=bytes(rng.randrange(256) for _ in range(32)),
            timestamp=rng.randrange(2**32),
            difficulty=rng.randrange(33),
            nonce=rng.randrange(2**32),
        )
        assert ledger.BlockHeader.unpack(header.pack()) == header


def test_hash_block_deterministic_and_sensitive():
    header = ledger.BlockHeader(1, bytes(32), bytes(32), 0, 0, 7)
    assert ledger.hash_block(header) == ledger.hash_block(header)
    flipped = ledger.BlockHeader(1, bytes(32), bytes(32), 0, 0, 7 ^ 1)
    assert ledger.hash_block(header) != ledger.hash_block(flipped)


def test_hash_block_golden_all_zero_header():
    header = ledger.BlockHeader(0, bytes(32), bytes(32), 0, 0, 0)
    assert header.pack() == bytes(80)
    assert ledger.hash_block(header).hex() == GOLDEN_ZERO_HEADER


def test_payload_roundtrip_all_kinds():
    for payload in (
        ledger.RuleUpdate(rules=_rules()),
        ledger.DumpRecord.from_mapping({1: bytes(32), 2: bytes(range(32))}),
        ledger.IsolationOrder(target=3, new_rules=_rules(dpid=2)),
    ):
        data = ledger.payload_bytes(payload)
        assert ledger.payload_from_bytes(data) == payload


def test_mine_difficulty_zero_accepts_nonce_zero():
    block = ledger.mine_block(ledger.RuleUpdate(rules=_rules()), None, 0, 0.0)
    assert block.header.nonce == 0


def test_mine_matches_brute_force_scan_at_difficulty_8():
    payload = ledger.RuleUpdate(rules=_rules())
    prev = ledger.mine_block(payload, None, 0, 0.0)
    block = ledger.mine_block(payload, prev, 8, 5.0)

    # oracle: exhaustive hashlib scan for the first digest starting 0x00
    prefix = (block.header.version.to_bytes(4, "little") + prev.block_hash
              + ledger.payload_digest(payload) + (5).to_bytes(4, "little")
              + (8).to_bytes(4, "little"))
    expected_nonce = None
    for nonce in range(2**32):
        if hashlib.sha256(prefix + nonce.to_bytes(4, "little")).digest()[0] == 0:
            expected_nonce = nonce
            break
    assert block.header.nonce == expected_nonce
    assert block.block_hash[0] == 0


def test_mine_is_deterministic():
    payload = ledger.DumpRecord.from_mapping({1: bytes(32)})
    a = ledger.mine_block(payload, None, 8, 3.0)
    b = ledger.mine_block(payload, None, 8, 3.0)
    assert a == b


def test_mean_attempts_within_geometric_band():
    # 200 seeded payloads at difficulty 8: geometric mean 2^8, assert x2 band
    rng = random.Random(42)
    attempts = []
    for i in range(200):
        digests = {1: bytes(rng.randrange(256) for _ in range(32))}
        block = ledger.mine_block(ledger.DumpRecord.from_mapping(digests),
                                  None, 8, float(i))
        attempts.append(block.header.nonce + 1)
    mean = sum(attempts) / len(attempts)
    assert 128 <= mean <= 512


def test_nonce_exhaustion_is_reported():
    payload = ledger.RuleUpdate(rules=_rules())
    with pytest.raises(ledger.NonceExhausted):
        ledger.mine_block(payload, None, 32, 0.0, max_nonce=8)


def test_difficulty_above_32_rejected():
    with pytest.raises(ledger.LedgerError):
        ledger.mine_block(ledger.RuleUpdate(rules=_rules()), None, 33, 0.0)


def _chain(length=5, difficulty=6, kind="control"):
    if kind == "control":
        chain = ledger.new_control_chain(_rules(), difficulty, 0.0)
        for i in range(1, length):
            ledger.append_rules(chain, _rules(n=1 + i % 3), float(i))
    else:
        chain = ledger.new_data_chain(difficulty, 0.0)
        for i in range(1, length):
            ledger.append_dump(chain, {1: _rules().digest()}, _rules().digest(),
                               registered=[1], clock=float(i))
    return chain


def test_validate_block_accepts_freshly_mined():
    chain = _chain(3)
    for prev, block in zip(chain.blocks, chain.blocks[1:]):
        assert ledger.validate_block(block, prev) is None


def test_validate_block_flags_payload_mutation():
    chain = _chain(3)
    block = chain.blocks[2]
    tampered = ledger.Block(index=block.index, header=block.header,
                            payload=ledger.RuleUpdate(rules=_rules(n=3, dpid=9)),
                            block_hash=block.block_hash)
    assert (ledger.validate_block(tampered, chain.blocks[1])
            is ledger.ValidationError.PAYLOAD_DIGEST_MISMATCH)


def test_validate_block_flags_reparenting():
    chain = _chain(4)
    assert (ledger.validate_block(chain.blocks[3], chain.blocks[1])
            is ledger.ValidationError.LINK_MISMATCH)


def test_validate_chain_genesis_only_ok():
    assert ledger.validate_chain(_chain(1)) is None


def test_validate_chain_flags_zeroed_nonce_at_index():
    chain = _chain(10, difficulty=8)
    block = chain.blocks[4]
    bad_header = ledger.BlockHeader(block.header.version, block.header.prev_hash,
                                    block.header.payload_digest,
                                    block.header.timestamp,
                                    block.header.difficulty, nonce=0)
    chain.blocks[4] = ledger.Block(index=block.index, header=bad_header,
                                   payload=block.payload,
                                   block_hash=ledger.hash_block(bad_header))
    failure = ledger.validate_chain(chain)
    assert failure is not None
    assert failure[0] == 4


# -- independent pairwise checker (oracle for the mutation sweep) ----------

_CHECK_ORDER = ("LinkMismatch", "IndexGap", "PayloadDigestMismatch",
                "PowUnmet", "TimestampRegression")


def _oracle_hash(header) -> bytes:
    return hashlib.sha256(_pack_header_oracle(header)).digest()


def _oracle_zero_bits(digest: bytes) -> int:
    value = int.from_bytes(digest, "big")
    return 256 - value.bit_length() if value else 256


def _oracle_check_pair(block, prev) -> str:
    if block.header.prev_hash != _oracle_hash(prev.header):
        return "LinkMismatch"
    if block.index != prev.index + 1:
        return "IndexGap"
    if block.header.payload_digest != hashlib.sha256(
            ledger.payload_bytes(block.payload)).digest():
        return "PayloadDigestMismatch"
    if _oracle_zero_bits(_oracle_hash(block.header)) < block.header.difficulty:
        return "PowUnmet"
    if block.header.timestamp < prev.header.timestamp:
        return "TimestampRegression"
    return "ok"


def _oracle_check_chain(chain):
    genesis = chain.blocks[0]
    if genesis.header.prev_hash != bytes(32) or genesis.index != 0:
        return (0, "genesis")
    if genesis.header.payload_digest != hashlib.sha256(
            ledger.payload_bytes(genesis.payload)).digest():
        return (0, "PayloadDigestMismatch")
    if _oracle_zero_bits(_oracle_hash(genesis.header)) < genesis.header.difficulty:
        return (0, "PowUnmet")
    for i in range(1, len(chain.blocks)):
        verdict = _oracle_check_pair(chain.blocks[i], chain.blocks[i - 1])
        if verdict != "ok":
            return (i, verdict)
    return None


def _mutate_random_field(chain, rng):
    """One random semantic-field mutation on a random non-head block.

    Head blocks are excluded: nothing links after the head, so a header
    mutation that happens to re-satisfy the difficulty target would be
    legitimately undetectable. Every non-head mutation must be caught.
    """
    idx = rng.randrange(len(chain.blocks) - 1)
    block = chain.blocks[idx]
    header = block.header
    choice = rng.choice(["nonce", "timestamp", "prev_hash", "payload", "index",
                         "version", "payload_digest"])
    index, payload = block.index, block.payload
    if choice == "nonce":
        header = ledger.BlockHeader(header.version, header.prev_hash,
                                    header.payload_digest, header.timestamp,
                                    header.difficulty, header.nonce ^ (1 << rng.randrange(32)))
    elif choice == "timestamp":
        header = ledger.BlockHeader(header.version, header.prev_hash,
                                    header.payload_digest,
                                    header.timestamp + rng.randrange(1, 1000),
                                    header.difficulty, header.nonce)
    elif choice == "version":
        header = ledger.BlockHeader(header.version ^ 1, header.prev_hash,
                                    header.payload_digest, header.timestamp,
                                    header.difficulty, header.nonce)
    elif choice == "prev_hash":
        mutated = bytearray(header.prev_hash)
        mutated[rng.randrange(32)] ^= 1 << rng.randrange(8)
        header = ledger.BlockHeader(header.version, bytes(mutated),
                                    header.payload_digest, header.timestamp,
                                    header.difficulty, header.nonce)
    elif choice == "payload_digest":
        mutated = bytearray(header.payload_digest)
        mutated[rng.randrange(32)] ^= 1 << rng.randrange(8)
        header = ledger.BlockHeader(header.version, header.prev_hash,
                                    bytes(mutated), header.timestamp,
                                    header.difficulty, header.nonce)
    elif choice == "payload":
        payload = ledger.RuleUpdate(rules=_rules(n=3, dpid=9))
    elif choice == "index":
        index = block.index + rng.choice([-1, 1, 5])
    chain.blocks[idx] = ledger.Block(index=index, header=header, payload=payload,
                                     block_hash=ledger.hash_block(header))
    return idx


def test_mutation_sweep_matches_independent_checker():
    """500 seeded chains, one random single-field mutation each: the
    implementation and the oracle agree on the first failing index."""
    rng = random.Random(2024)
    for trial in range(500):
        length = 2 + rng.randrange(49)
        chain = ledger.new_control_chain(_rules(), 6, 0.0)
        for i in range(1, length):
            ledger.append_rules(chain, _rules(n=1 + (i + trial) % 3), float(i))
        assert ledger.validate_chain(chain) is None
        _mutate_random_field(chain, rng)
        got = ledger.validate_chain(chain)
        expected = _oracle_check_chain(chain)
        assert got is not None, "mutation must be detected"
        assert expected is not None
        assert got[0] == expected[0], (trial, got, expected)


def test_append_rules_is_a_version_log():
    chain = ledger.new_control_chain(_rules(n=1), 4, 0.0)
    sets = [_rules(n=1), _rules(n=2), _rules(n=3)]
    for i, rules in enumerate(sets, start=1):
        ledger.append_rules(chain, rules, float(i))
    assert len(chain) == 4
    assert ledger.head(chain).payload.rules == sets[-1]
    for i, rules in enumerate(sets, start=1):
        assert chain.blocks[i].payload.rules == rules
    # identical set appended twice stays two distinct blocks
    ledger.append_rules(chain, sets[-1], 7.0)
    assert len(chain) == 5
    assert chain.blocks[3].block_hash != chain.blocks[4].block_hash
    assert ledger.validate_chain(chain) is None


def test_append_dump_unanimity_and_rejection():
    expected = _rules().digest()
    for k in (1, 2, 8):
        chain = ledger.new_data_chain(4, 0.0)
        digests = {sid: expected for sid in range(k)}
        outcome = ledger.append_dump(chain, digests, expected,
                                     registered=range(k), clock=1.0)
        assert outcome.ok and outcome.appended.index == 1

    chain = ledger.new_data_chain(4, 0.0)
    digests = {sid: expected for sid in range(4)}
    digests[3] = hashlib.sha256(b"tampered").digest()
    outcome = ledger.append_dump(chain, digests, expected,
                                 registered=range(4), clock=1.0)
    assert not outcome.ok
    assert outcome.mismatched == (3,)
    assert len(chain) == 1


def test_append_dump_requires_full_coverage():
    chain = ledger.new_data_chain(4, 0.0)
    with pytest.raises(ledger.MissingSwitch) as err:
        ledger.append_dump(chain, {1: bytes(32)}, bytes(32),
                           registered=[1, 2], clock=1.0)
    assert err.value.switch_id == 2


def test_head_and_append_only_property():
    chain = _chain(6)
    assert ledger.head(chain) is chain.blocks[-1]
    assert ledger.head(chain).index == 5
    frozen = list(chain.blocks[:5])
    ledger.append_rules(chain, _rules(), 10.0)
    assert chain.blocks[:5] == frozen


def test_timestamps_non_decreasing_after_appends():
    chain = _chain(5)
    stamps = [b.header.timestamp for b in chain.blocks]
    assert stamps == sorted(stamps)


def test_effective_rules_tracks_latest_rule_bearing_block():
    chain = ledger.new_control_chain(_rules(n=1), 4, 0.0)
    second = _rules(n=2)
    ledger.append_rules(chain, second, 1.0)
    assert ledger.effective_rules(chain) == second
    assert ledger.effective_rules(chain, upto_index=0) == _rules(n=1)


def test_chain_persistence_roundtrip(tmp_path):
    chain = _chain(5, kind="control")
    path = tmp_path / "chain.bin"
    ledger.save_chain(chain, path)
    loaded = ledger.load_chain(path)
    assert loaded.kind is chain.kind
    assert loaded.difficulty == chain.difficulty
    assert loaded.blocks == chain.blocks
    assert ledger.validate_chain(loaded) is None


def test_truncated_chain_file_reports_record_index(tmp_path):
    chain = _chain(4)
    path = tmp_path / "chain.bin"
    ledger.save_chain(chain, path)
    data = path.read_bytes()
    path.write_bytes(data[:-7])
    with pytest.raises(ledger.LedgerError) as err:
        ledger.load_chain(path)
    assert "block 3" in str(err.value)
