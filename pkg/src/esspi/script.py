"""Byte-level Bitcoin script encoding for the small opcode vocabulary we need."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

OP_0 = 0x00
OP_PUSHDATA1 = 0x4C
OP_PUSHDATA2 = 0x4D
OP_PUSHDATA4 = 0x4E
OP_1NEGATE = 0x4F
OP_1 = 0x51
OP_3 = 0x53
OP_16 = 0x60
OP_NOP = 0x61
OP_IF = 0x63
OP_NOTIF = 0x64
OP_ELSE = 0x67
OP_ENDIF = 0x68
OP_VERIFY = 0x69
OP_RETURN = 0x6A
OP_DROP = 0x75
OP_DUP = 0x76
OP_EQUAL = 0x87
OP_EQUALVERIFY = 0x88
OP_HASH160 = 0xA9
OP_CHECKSIG = 0xAC
OP_CHECKSIGVERIFY = 0xAD
OP_CHECKMULTISIG = 0xAE
OP_CHECKSEQUENCEVERIFY = 0xB2
# OP_NOP4 repurposed as the emulated Winternitz verification gadget.  On a
# real chain this expands to a long hash-chain script whose size is what
# ots.ot_witness_cost accounts for.
OP_OT_CHECKSIGVERIFY = 0xB3

OPNAMES = {
    OP_0: "OP_0",
    OP_PUSHDATA1: "OP_PUSHDATA1",
    OP_PUSHDATA2: "OP_PUSHDATA2",
    OP_PUSHDATA4: "OP_PUSHDATA4",
    OP_1NEGATE: "OP_1NEGATE",
    OP_NOP: "OP_NOP",
    OP_IF: "OP_IF",
    OP_NOTIF: "OP_NOTIF",
    OP_ELSE: "OP_ELSE",
    OP_ENDIF: "OP_ENDIF",
    OP_VERIFY: "OP_VERIFY",
    OP_RETURN: "OP_RETURN",
    OP_DROP: "OP_DROP",
    OP_DUP: "OP_DUP",
    OP_EQUAL: "OP_EQUAL",
    OP_EQUALVERIFY: "OP_EQUALVERIFY",
    OP_HASH160: "OP_HASH160",
    OP_CHECKSIG: "OP_CHECKSIG",
    OP_CHECKSIGVERIFY: "OP_CHECKSIGVERIFY",
    OP_CHECKMULTISIG: "OP_CHECKMULTISIG",
    OP_CHECKSEQUENCEVERIFY: "OP_CHECKSEQUENCEVERIFY",
    OP_OT_CHECKSIGVERIFY: "OP_OT_CHECKSIGVERIFY",
}
for _n in range(1, 17):
    OPNAMES[OP_1 + _n - 1] = f"OP_{_n}"


class ScriptError(ValueError):
    pass


def encode_num(n: int) -> bytes:
    """Minimal CScriptNum encoding."""
    if n == 0:
        return b""
    neg = n < 0
    n = abs(n)
    out = bytearray()
    while n:
        out.append(n & 0xFF)
        n >>= 8
    if out[-1] & 0x80:
        out.append(0x80 if neg else 0x00)
    elif neg:
        out[-1] |= 0x80
    return bytes(out)


def decode_num(data: bytes) -> int:
    if not data:
        return 0
    n = int.from_bytes(data, "little")
    if data[-1] & 0x80:
        return -(n & ~(0x80 << (8 * (len(data) - 1))))
    return n


def push_bytes(data: bytes) -> bytes:
    n = len(data)
    if n == 0:
        return bytes([OP_0])
    if n < OP_PUSHDATA1:
        return bytes([n]) + data
    if n <= 0xFF:
        return bytes([OP_PUSHDATA1, n]) + data
    if n <= 0xFFFF:
        return bytes([OP_PUSHDATA2]) + struct.pack("<H", n) + data
    return bytes([OP_PUSHDATA4]) + struct.pack("<I", n) + data


def push_int(n: int) -> bytes:
    if n == 0:
        return bytes([OP_0])
    if n == -1:
        return bytes([OP_1NEGATE])
    if 1 <= n <= 16:
        return bytes([OP_1 + n - 1])
    return push_bytes(encode_num(n))


class Num(int):
    """Marks an int in :meth:`Script.build` as a number push rather than an opcode."""


Item = Union[int, bytes, Num]


@dataclass(frozen=True)
class Op:
    """One parsed script element: an opcode, or a push with its payload."""

    code: int
    data: bytes | None = None
    offset: int = 0

    @property
    def is_push(self) -> bool:
        return self.data is not None

    def __str__(self) -> str:
        if self.data is not None:
            if self.code == OP_0:
                return "0"
            return self.data.hex() if self.data else "0"
        if OP_1 <= self.code <= OP_16:
            return str(self.code - OP_1 + 1)
        return OPNAMES.get(self.code, f"OP_UNKNOWN[{self.code:#04x}]")


@dataclass(frozen=True)
class Script:
    raw: bytes = b""

    @classmethod
    def build(cls, items: Iterable[Item]) -> "Script":
        out = bytearray()
        for it in items:
            if isinstance(it, (bytes, bytearray)):
                out += push_bytes(bytes(it))
            elif isinstance(it, Num):
                out += push_int(int(it))
            elif isinstance(it, Script):
                out += it.raw
            else:
                out.append(int(it))
        return cls(bytes(out))

    def __add__(self, other: "Script") -> "Script":
        return Script(self.raw + other.raw)

    def __len__(self) -> int:
        return len(self.raw)

    def __iter__(self) -> Iterator[Op]:
        return iter(self.ops())

    def ops(self) -> list[Op]:
        raw = self.raw
        i = 0
        out = []
        while i < len(raw):
            start = i
            c = raw[i]
            i += 1
            if c == OP_0:
                out.append(Op(c, b"", start))
            elif c < OP_PUSHDATA1:
                out.append(Op(c, self._take(raw, i, c), start))
                i += c
            elif c in (OP_PUSHDATA1, OP_PUSHDATA2, OP_PUSHDATA4):
                width = {OP_PUSHDATA1: 1, OP_PUSHDATA2: 2, OP_PUSHDATA4: 4}[c]
                n = int.from_bytes(self._take(raw, i, width), "little")
                i += width
                out.append(Op(c, self._take(raw, i, n), start))
                i += n
            else:
                out.append(Op(c, None, start))
        return out

    @staticmethod
    def _take(raw: bytes, i: int, n: int) -> bytes:
        if i + n > len(raw):
            raise ScriptError("push past end of script")
        return raw[i:i + n]

    def is_push_only(self) -> bool:
        return all(op.is_push or OP_1 <= op.code <= OP_16 or op.code == OP_1NEGATE for op in self.ops())

    def hex(self) -> str:
        return self.raw.hex()

    def disassemble(self) -> str:
        try:
            return " ".join(str(op) for op in self.ops())
        except ScriptError:
            return f"<invalid {self.raw.hex()}>"

    def __str__(self) -> str:
        return self.disassemble()

    # Standard output templates

    @classmethod
    def p2tr(cls, output_key: bytes) -> "Script":
        return cls(bytes([OP_1, 32]) + output_key)

    @classmethod
    def p2sh(cls, script_hash: bytes) -> "Script":
        return cls(bytes([OP_HASH160, 20]) + script_hash + bytes([OP_EQUAL]))

    @classmethod
    def p2wsh(cls, script_hash: bytes) -> "Script":
        return cls(bytes([OP_0, 32]) + script_hash)

    @classmethod
    def op_return(cls, data: bytes) -> "Script":
        return cls(bytes([OP_RETURN]) + push_bytes(data))

    def is_p2tr(self) -> bool:
        return len(self.raw) == 34 and self.raw[0] == OP_1 and self.raw[1] == 32

    def is_p2sh(self) -> bool:
        return len(self.raw) == 23 and self.raw[:2] == bytes([OP_HASH160, 20]) and self.raw[-1] == OP_EQUAL

    def is_op_return(self) -> bool:
        return len(self.raw) > 0 and self.raw[0] == OP_RETURN
