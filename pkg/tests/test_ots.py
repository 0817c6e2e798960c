import itertools

import pytest
from hypothesis import given, strategies as st

from esspi.ots import (
    OtParams,
    OtPublicKey,
    OtSignature,
    msg_digits,
    ot_keygen,
    ot_public_from_secret,
    ot_sign,
    ot_verify,
    ot_witness_cost,
)

SEED = bytes(32)
SMALL = OtParams(hash_len_bytes=8, digit_bits=4, msg_len_bytes=2)


def test_digit_counts_default():
    p = OtParams()
    # 256 bits / 4 = 64 digits; max checksum 64 * 15 = 960 needs three base-16 digits
    assert p.n_msg_digits == 64
    assert p.n_checksum_digits == 3
    assert p.n_digits == 67


@pytest.mark.parametrize("bits,n_msg,n_chk", [(1, 256, 9), (2, 128, 5), (8, 32, 2)])
def test_digit_counts_other_widths(bits, n_msg, n_chk):
    p = OtParams(20, bits, 32)
    assert (p.n_msg_digits, p.n_checksum_digits) == (n_msg, n_chk)


def test_bad_digit_bits():
    with pytest.raises(ValueError):
        OtParams(digit_bits=3)


def test_keygen_deterministic_and_consistent():
    a = ot_keygen(OtParams(), SEED)
    b = ot_keygen(OtParams(), SEED)
    assert a == b
    assert ot_public_from_secret(a[0]) == a[1]
    assert ot_keygen(OtParams(), bytes([1]) + bytes(31))[1] != a[1]


def test_roundtrip_and_wrong_key():
    sk, pk = ot_keygen(OtParams(), SEED)
    msg = bytes(range(32))
    sig = ot_sign(sk, msg)
    assert ot_verify(pk, msg, sig)
    _, other = ot_keygen(OtParams(), b"\x02" * 32)
    assert not ot_verify(other, msg, sig)


def test_zero_message_reveals_secret_elements():
    sk, _ = ot_keygen(OtParams(), SEED)
    sig = ot_sign(sk, bytes(32))
    p = sk.params
    assert sig.chains[:p.n_msg_digits] == sk.chains[:p.n_msg_digits]


def test_length_mismatch():
    sk, pk = ot_keygen(OtParams(), SEED)
    with pytest.raises(ValueError):
        ot_sign(sk, bytes(31))
    assert not ot_verify(pk, bytes(31), ot_sign(sk, bytes(32)))


def test_truncated_element_rejected():
    sk, pk = ot_keygen(OtParams(), SEED)
    sig = ot_sign(sk, bytes(32))
    cut = OtSignature((sig.chains[0][:-1],) + sig.chains[1:], sig.params)
    assert not ot_verify(pk, bytes(32), cut)
    short = OtSignature(sig.chains[:-1], sig.params)
    assert not ot_verify(pk, bytes(32), short)


def test_every_single_bit_flip_rejected():
    p = OtParams(hash_len_bytes=20, digit_bits=4, msg_len_bytes=4)
    sk, pk = ot_keygen(p, SEED)
    msg = bytes.fromhex("a5c30f71")
    sig = ot_sign(sk, msg)
    for bit in range(32):
        flipped = (int.from_bytes(msg, "big") ^ (1 << bit)).to_bytes(4, "big")
        assert not ot_verify(pk, flipped, sig), bit


def test_all_two_byte_messages_exhaustive():
    sk, pk = ot_keygen(SMALL, SEED)
    msg = b"\x12\x34"
    sig = ot_sign(sk, msg)
    accepted = [m for m in (bytes(t) for t in itertools.product(range(256), repeat=2)) if ot_verify(pk, m, sig)]
    assert accepted == [msg]


def test_serialization_roundtrip():
    sk, pk = ot_keygen(OtParams(), SEED)
    sig = ot_sign(sk, bytes(32))
    assert OtSignature.from_bytes(sig.to_bytes()) == sig
    assert OtPublicKey.from_bytes(pk.to_bytes()) == pk
    with pytest.raises(ValueError):
        OtSignature.from_bytes(sig.to_bytes()[:-1])


def test_checksum_digits_complement():
    p = OtParams()
    d = msg_digits(p, b"\xff" * 32)
    assert d[p.n_msg_digits:] == [0, 0, 0]
    d = msg_digits(p, bytes(32))
    assert int("".join(f"{x:x}" for x in d[p.n_msg_digits:]), 16) == 960


def test_cost_anchor_256_bits():
    c = ot_witness_cost(OtParams(), 256)
    assert abs(c.total - 6400) / 6400 <= 0.10
    assert 20 <= c.per_bit <= 30
    assert c.total == c.signature_bytes + c.digit_bytes + c.pubkey_script_bytes + c.opcode_bytes


@given(st.integers(4, 512))
def test_cost_ratio_band(n_bytes):
    # below 4 bytes the fixed checksum digits dominate
    assert 20 <= ot_witness_cost(OtParams(), 8 * n_bytes).per_bit <= 30


def test_short_messages_pay_for_checksum():
    assert ot_witness_cost(OtParams(), 8).per_bit > 30


@given(st.integers(1, 256))
def test_cost_linear_in_bits(n_bytes):
    a = ot_witness_cost(OtParams(), 8 * n_bytes)
    b = ot_witness_cost(OtParams(), 16 * n_bytes)
    elem = 1 + OtParams().hash_len_bytes
    chk_a = OtParams(msg_len_bytes=n_bytes).n_checksum_digits
    chk_b = OtParams(msg_len_bytes=2 * n_bytes).n_checksum_digits
    assert b.signature_bytes - chk_b * elem == 2 * (a.signature_bytes - chk_a * elem)


@given(st.binary(min_size=2, max_size=2), st.binary(min_size=32, max_size=32))
def test_sign_verify_property(msg, seed):
    sk, pk = ot_keygen(SMALL, seed)
    assert ot_verify(pk, msg, ot_sign(sk, msg))


@given(st.binary(min_size=2, max_size=2), st.binary(min_size=2, max_size=2))
def test_other_message_rejected_property(m1, m2):
    sk, pk = ot_keygen(SMALL, SEED)
    assert ot_verify(pk, m2, ot_sign(sk, m1)) == (m1 == m2)
