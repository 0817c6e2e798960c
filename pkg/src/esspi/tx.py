"""Transactions: byte-exact serialization, txid and weight."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO

from .hashcore import sha256d
from .script import Script

SEQUENCE_FINAL = 0xFFFFFFFF
# BIP-68 bits
SEQUENCE_DISABLE_FLAG = 1 << 31
SEQUENCE_TYPE_FLAG = 1 << 22
SEQUENCE_MASK = 0x0000FFFF


def compact_size(n: int) -> bytes:
    if n < 0xFD:
        return bytes([n])
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    if n <= 0xFFFFFFFF:
        return b"\xfe" + struct.pack("<I", n)
    return b"\xff" + struct.pack("<Q", n)


def read_compact_size(s: BinaryIO) -> int:
    b = _read(s, 1)[0]
    if b < 0xFD:
        return b
    width = {0xFD: 2, 0xFE: 4, 0xFF: 8}[b]
    return int.from_bytes(_read(s, width), "little")


def _read(s: BinaryIO, n: int) -> bytes:
    data = s.read(n)
    if len(data) != n:
        raise ValueError("unexpected end of data")
    return data


def ser_bytes(b: bytes) -> bytes:
    return compact_size(len(b)) + b


def read_bytes(s: BinaryIO) -> bytes:
    return _read(s, read_compact_size(s))


@dataclass(frozen=True)
class OutPoint:
    txid: bytes
    vout: int

    def serialize(self) -> bytes:
        # txid is kept in internal byte order (as hashed)
        return self.txid + struct.pack("<I", self.vout)

    @classmethod
    def read(cls, s: BinaryIO) -> "OutPoint":
        txid = _read(s, 32)
        (vout,) = struct.unpack("<I", _read(s, 4))
        return cls(txid, vout)

    def __str__(self) -> str:
        return f"{self.txid[::-1].hex()}:{self.vout}"


@dataclass(frozen=True)
class TxOut:
    amount: int
    script_pubkey: Script

    def serialize(self) -> bytes:
        return struct.pack("<q", self.amount) + ser_bytes(self.script_pubkey.raw)

    @classmethod
    def read(cls, s: BinaryIO) -> "TxOut":
        (amount,) = struct.unpack("<q", _read(s, 8))
        return cls(amount, Script(read_bytes(s)))

    @classmethod
    def parse(cls, raw: bytes) -> "TxOut":
        s = io.BytesIO(raw)
        out = cls.read(s)
        if s.read(1):
            raise ValueError("trailing bytes after CTxOut")
        return out


@dataclass(frozen=True)
class TxIn:
    prevout: OutPoint
    script_sig: Script = Script()
    sequence: int = SEQUENCE_FINAL
    witness: tuple[bytes, ...] = ()

    def serialize(self, script_sig: Script | None = None) -> bytes:
        sig = self.script_sig if script_sig is None else script_sig
        return self.prevout.serialize() + ser_bytes(sig.raw) + struct.pack("<I", self.sequence)


@dataclass(frozen=True)
class Tx:
    inputs: tuple[TxIn, ...]
    outputs: tuple[TxOut, ...]
    version: int = 2
    locktime: int = 0

    def has_witness(self) -> bool:
        return any(i.witness for i in self.inputs)

    def serialize(self, with_witness: bool = True) -> bytes:
        parts = [struct.pack("<i", self.version)]
        segwit = with_witness and self.has_witness()
        if segwit:
            parts.append(b"\x00\x01")
        parts.append(compact_size(len(self.inputs)))
        parts += [i.serialize() for i in self.inputs]
        parts.append(compact_size(len(self.outputs)))
        parts += [o.serialize() for o in self.outputs]
        if segwit:
            for i in self.inputs:
                parts.append(compact_size(len(i.witness)))
                parts += [ser_bytes(w) for w in i.witness]
        parts.append(struct.pack("<I", self.locktime))
        return b"".join(parts)

    @classmethod
    def parse(cls, raw: bytes) -> "Tx":
        s = io.BytesIO(raw)
        (version,) = struct.unpack("<i", _read(s, 4))
        n_in = read_compact_size(s)
        segwit = False
        if n_in == 0:
            flag = _read(s, 1)
            if flag != b"\x01":
                raise ValueError("bad segwit flag")
            segwit = True
            n_in = read_compact_size(s)
        ins = []
        for _ in range(n_in):
            prev = OutPoint.read(s)
            sig = Script(read_bytes(s))
            (seq,) = struct.unpack("<I", _read(s, 4))
            ins.append(TxIn(prev, sig, seq))
        outs = [TxOut.read(s) for _ in range(read_compact_size(s))]
        if segwit:
            ins = [
                replace(i, witness=tuple(read_bytes(s) for _ in range(read_compact_size(s))))
                for i in ins
            ]
        (locktime,) = struct.unpack("<I", _read(s, 4))
        if s.read(1):
            raise ValueError("trailing bytes after transaction")
        return cls(tuple(ins), tuple(outs), version, locktime)

    @property
    def txid(self) -> bytes:
        """Internal-byte-order txid; witness data is not hashed."""
        return sha256d(self.serialize(with_witness=False))

    @property
    def txid_hex(self) -> str:
        return self.txid[::-1].hex()

    @property
    def weight(self) -> int:
        base = len(self.serialize(with_witness=False))
        total = len(self.serialize(with_witness=True))
        return base * 3 + total

    @property
    def vsize(self) -> int:
        return -(-self.weight // 4)

    def with_input(self, index: int, **changes) -> "Tx":
        ins = list(self.inputs)
        ins[index] = replace(ins[index], **changes)
        return replace(self, inputs=tuple(ins))

    def strip_witness(self) -> "Tx":
        return replace(self, inputs=tuple(replace(i, witness=()) for i in self.inputs))

    def hex(self) -> str:
        return self.serialize().hex()


def txid(tx: Tx) -> bytes:
    return tx.txid
