import time

import pytest
from hypothesis import given, strategies as st

from esspi.script import Script
from esspi.storage import (
    METHODS,
    NONSTANDARD,
    STANDARD,
    StorageError,
    UnsupportedError,
    decode_user_input,
    dust_spend_bytes,
    dust_threshold,
    encode_user_input,
    envelope_extract,
    envelope_script,
    expansion_factor,
    per_tx_capacity,
    program_input_kind,
)

KB100 = 100_000


def payload(n):
    return bytes((i * 31 + 5) & 0xFF for i in range(n))


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("size", [1, 79, 80, 4096, KB100])
def test_encode_decode_inverse(method, size):
    data = payload(size)
    plan = encode_user_input(method, data)
    assert decode_user_input(plan) == data


def test_example_counts():
    assert encode_user_input("op_return", payload(KB100)).n_txs == 1250
    p2wsh = encode_user_input("p2wsh_addr", payload(KB100))
    assert p2wsh.n_outputs == 3125
    assert p2wsh.n_txs == 2
    assert per_tx_capacity("p2wsh_addr") == 80_000
    env = encode_user_input("envelope", payload(KB100))
    assert env.n_txs == 2  # commit and reveal


@pytest.mark.parametrize("method,target,tol", [
    ("op_return", 14, 0.15), ("p2wsh_addr", 19, 0.15), ("p2pk", 19, 0.15), ("bare_multisig", 13, 0.15),
])
def test_expansion_factors(method, target, tol):
    f = expansion_factor(method, KB100).factor
    assert abs(f - target) / target <= tol


def test_envelope_close_to_one():
    assert expansion_factor("envelope", KB100).factor <= 1.2


def test_dust_model():
    seg, legacy = Script.p2wsh(bytes(32)), Script.p2sh(bytes(20))
    assert dust_spend_bytes(seg) * 4 == 271
    assert dust_spend_bytes(legacy) * 4 == 592
    # P2WSH output is 43 bytes: (43 + 67.75) * 3 sat/vB
    assert dust_threshold(seg) == 332
    assert dust_threshold(Script.op_return(b"x")) == 0


def test_caps():
    with pytest.raises(StorageError):
        encode_user_input("envelope", bytes(STANDARD.envelope_max + 1))
    assert encode_user_input("op_return", bytes(1000), NONSTANDARD).n_txs == 1
    with pytest.raises(StorageError):
        encode_user_input("op_return", b"")
    with pytest.raises(StorageError):
        encode_user_input("carrier_pigeon", b"x")
    for tx in encode_user_input("op_return", payload(500)).txs:
        assert len(tx.outputs[0].script_pubkey.ops()[1].data) <= 80


def test_envelope_script_dead_branch():
    s = envelope_script(b"hello" * 200)
    assert envelope_extract(s) == b"hello" * 200
    assert [str(op) for op in s.ops()][2:4] == ["0", "OP_IF"]


def test_program_input_rows():
    assert "D'" in program_input_kind("P2SH", "Tx output")
    assert "tapleaf" in program_input_kind("P2TR", "Script")
    with pytest.raises(UnsupportedError):
        program_input_kind("P2SH", "scriptSig")


@pytest.mark.parametrize("method", METHODS)
def test_factor_non_increasing_on_capacity_multiples(method):
    cap = {"op_return": 80, "envelope": 4096, "p2wsh_addr": 32, "p2pk": 64, "bare_multisig": 192}[method]
    fs = [expansion_factor(method, k * cap).factor for k in (1, 2, 4, 8, 16)]
    assert all(b <= a + 1e-9 for a, b in zip(fs, fs[1:]))


@given(st.sampled_from(METHODS), st.binary(min_size=1, max_size=700))
def test_roundtrip_property(method, data):
    assert encode_user_input(method, data).decode() == data


def test_table_is_fast():
    t = time.perf_counter()
    for m in METHODS:
        expansion_factor(m, KB100)
    assert time.perf_counter() - t < 1.0
