"""Winternitz one-time signatures and their on-chain cost model.

Chains use single SHA-256 truncated to ``hash_len_bytes``.  The checksum is
the usual sum of complements, written in the same digit base as the
message.  Messages are split into digits most-significant nibble first.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

__all__ = [
    "OtParams",
    "OtSecretKey",
    "OtPublicKey",
    "OtSignature",
    "OtCost",
    "ot_keygen",
    "ot_public_from_secret",
    "ot_sign",
    "ot_verify",
    "ot_witness_cost",
    "msg_digits",
    "OPCODES_PER_DIGIT",
]

# Script opcode budget per signed digit in the cost model.  Calibrated once so
# that the default parameters land on ~25 vbytes per signed bit, then frozen.
OPCODES_PER_DIGIT = 52


@dataclass(frozen=True)
class OtParams:
    hash_len_bytes: int = 20
    digit_bits: int = 4
    msg_len_bytes: int = 32

    def __post_init__(self) -> None:
        if self.digit_bits not in (1, 2, 4, 8):
            raise ValueError(f"digit_bits must be one of 1, 2, 4, 8 (got {self.digit_bits})")
        if not 1 <= self.hash_len_bytes <= 32:
            raise ValueError("hash_len_bytes must be in 1..32")
        if self.msg_len_bytes < 1:
            raise ValueError("msg_len_bytes must be positive")

    @property
    def chain_len(self) -> int:
        """Largest digit value, i.e. the number of hashes from secret to public."""
        return (1 << self.digit_bits) - 1

    @property
    def n_msg_digits(self) -> int:
        return self.msg_len_bytes * 8 // self.digit_bits

    @property
    def n_checksum_digits(self) -> int:
        max_sum = self.n_msg_digits * self.chain_len
        n = 1
        while (1 << (self.digit_bits * n)) <= max_sum:
            n += 1
        return n

    @property
    def n_digits(self) -> int:
        return self.n_msg_digits + self.n_checksum_digits


def _chain(x: bytes, steps: int, n: int) -> bytes:
    for _ in range(steps):
        x = hashlib.sha256(x).digest()[:n]
    return x


def msg_digits(params: OtParams, msg: bytes) -> list[int]:
    """Message digits followed by checksum digits."""
    if len(msg) != params.msg_len_bytes:
        raise ValueError(f"message must be {params.msg_len_bytes} bytes, got {len(msg)}")
    w = params.digit_bits
    mask = params.chain_len
    value = int.from_bytes(msg, "big")
    total_bits = params.msg_len_bytes * 8
    digits = [(value >> (total_bits - w * (i + 1))) & mask for i in range(params.n_msg_digits)]
    csum = sum(mask - d for d in digits)
    nc = params.n_checksum_digits
    digits += [(csum >> (w * (nc - 1 - i))) & mask for i in range(nc)]
    return digits


def _pack(params: OtParams, chains: tuple[bytes, ...]) -> bytes:
    head = struct.pack(">BBI", params.digit_bits, params.hash_len_bytes, params.msg_len_bytes)
    return head + struct.pack(">H", len(chains)) + b"".join(chains)


def _unpack(raw: bytes) -> tuple[OtParams, tuple[bytes, ...]]:
    if len(raw) < 8:
        raise ValueError("truncated OT encoding")
    digit_bits, hash_len, msg_len = struct.unpack(">BBI", raw[:6])
    (count,) = struct.unpack(">H", raw[6:8])
    body = raw[8:]
    if len(body) != count * hash_len:
        raise ValueError("OT encoding length does not match header")
    params = OtParams(hash_len, digit_bits, msg_len)
    return params, tuple(body[i * hash_len:(i + 1) * hash_len] for i in range(count))


@dataclass(frozen=True)
class _Chains:
    chains: tuple[bytes, ...]
    params: OtParams = field(default_factory=OtParams)

    def to_bytes(self) -> bytes:
        return _pack(self.params, self.chains)

    @classmethod
    def from_bytes(cls, raw: bytes):
        params, chains = _unpack(raw)
        return cls(chains, params)

    def hex(self) -> str:
        return self.to_bytes().hex()


class OtSecretKey(_Chains):
    pass


class OtPublicKey(_Chains):
    pass


class OtSignature(_Chains):
    pass


def ot_keygen(params: OtParams, seed: bytes) -> tuple[OtSecretKey, OtPublicKey]:
    """Deterministic key pair; every secret chain element is derived from ``seed``."""
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    n = params.hash_len_bytes
    sk = tuple(hashlib.sha256(seed + struct.pack(">I", i)).digest()[:n] for i in range(params.n_digits))
    secret = OtSecretKey(sk, params)
    return secret, ot_public_from_secret(secret)


def ot_public_from_secret(sk: OtSecretKey) -> OtPublicKey:
    p = sk.params
    return OtPublicKey(tuple(_chain(x, p.chain_len, p.hash_len_bytes) for x in sk.chains), p)


def ot_sign(sk: OtSecretKey, msg: bytes) -> OtSignature:
    p = sk.params
    digits = msg_digits(p, msg)
    return OtSignature(tuple(_chain(x, d, p.hash_len_bytes) for x, d in zip(sk.chains, digits)), p)


def ot_verify(pk: OtPublicKey, msg: bytes, sig: OtSignature) -> bool:
    p = pk.params
    if sig.params != p or len(msg) != p.msg_len_bytes:
        return False
    if len(sig.chains) != p.n_digits or len(pk.chains) != p.n_digits:
        return False
    if any(len(s) != p.hash_len_bytes for s in sig.chains):
        return False
    digits = msg_digits(p, msg)
    return all(
        _chain(s, p.chain_len - d, p.hash_len_bytes) == y
        for s, d, y in zip(sig.chains, digits, pk.chains)
    )


@dataclass(frozen=True)
class OtCost:
    msg_bits: int
    digits: int
    signature_bytes: int
    digit_bytes: int
    pubkey_script_bytes: int
    opcode_bytes: int

    @property
    def total(self) -> int:
        return self.signature_bytes + self.digit_bytes + self.pubkey_script_bytes + self.opcode_bytes

    @property
    def per_bit(self) -> float:
        return self.total / self.msg_bits

    def as_dict(self) -> dict:
        return {
            "msg_bits": self.msg_bits,
            "digits": self.digits,
            "signature_bytes": self.signature_bytes,
            "digit_bytes": self.digit_bytes,
            "pubkey_script_bytes": self.pubkey_script_bytes,
            "opcode_bytes": self.opcode_bytes,
            "total": self.total,
            "per_bit": self.per_bit,
        }


def ot_witness_cost(params: OtParams, msg_bits: int) -> OtCost:
    """vbyte estimate for verifying one Winternitz signature in script.

    Per digit: a pushed chain element (1 + hash_len), the pushed digit value
    (1), the public chain end committed in the script (1 + hash_len) and a
    fixed opcode budget (:data:`OPCODES_PER_DIGIT`) for the unrolled chain
    walk and checksum accumulation.
    """
    if msg_bits <= 0:
        raise ValueError("msg_bits must be positive")
    w = params.digit_bits
    n_msg = -(-msg_bits // w)
    max_sum = n_msg * params.chain_len
    n_chk = 1
    while (1 << (w * n_chk)) <= max_sum:
        n_chk += 1
    digits = n_msg + n_chk
    elem = 1 + params.hash_len_bytes
    return OtCost(
        msg_bits=msg_bits,
        digits=digits,
        signature_bytes=digits * elem,
        digit_bytes=digits,
        pubkey_script_bytes=digits * elem,
        opcode_bytes=digits * OPCODES_PER_DIGIT,
    )
