"""A small script interpreter covering what the covenant DAGs execute.

Supported: pushes, small ints, IF/NOTIF/ELSE/ENDIF, VERIFY, RETURN, DROP, DUP,
EQUAL(VERIFY), HASH160, CHECKSIG(VERIFY) in legacy and tapscript flavours,
CHECKSEQUENCEVERIFY, and the emulated Winternitz gadget OP_OT_CHECKSIGVERIFY.

``eval_script`` never raises on bad input; every outcome is an
:class:`EvalResult` carrying a reason.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

from .hashcore import hash160
from .keys import ecdsa_verify_raw, schnorr_verify_raw
from .ots import OtParams, OtPublicKey, OtSignature, msg_digits, ot_verify
from .script import (
    OP_0,
    OP_1,
    OP_1NEGATE,
    OP_16,
    OP_CHECKSEQUENCEVERIFY,
    OP_CHECKSIG,
    OP_CHECKSIGVERIFY,
    OP_DROP,
    OP_DUP,
    OP_ELSE,
    OP_ENDIF,
    OP_EQUAL,
    OP_EQUALVERIFY,
    OP_HASH160,
    OP_IF,
    OP_NOP,
    OP_NOTIF,
    OP_OT_CHECKSIGVERIFY,
    OP_RETURN,
    OP_VERIFY,
    OPNAMES,
    Num,
    Script,
    ScriptError,
    decode_num,
    encode_num,
)
from .sighash import SIGHASH_ALL, ScriptExt, SighashError, legacy_sighash, taproot_sighash
from .tx import SEQUENCE_DISABLE_FLAG, Tx, TxOut

MAX_SCRIPT_SIZE = 10_000  # legacy / witness v0 cap
MAX_RELATIVE_LOCK = 0x80000000


class EvalError(Exception):
    pass


@dataclass
class ExecContext:
    tx: Tx
    input_index: int
    spent_outputs: Sequence[TxOut]
    confirmations: int = 0
    sigversion: str = "tapscript"  # or "legacy"
    tapleaf_hash: bytes | None = None
    annex: bytes | None = None
    script_code: Script | None = None  # legacy: script the signature commits to

    def __post_init__(self) -> None:
        if self.confirmations < 0:
            raise ValueError("confirmations must be non-negative")

    @property
    def spent_output(self) -> TxOut:
        return self.spent_outputs[self.input_index]

    @property
    def sequence(self) -> int:
        return self.tx.inputs[self.input_index].sequence


@dataclass
class EvalResult:
    ok: bool
    reason: str = ""
    ot_messages: list[bytes] = field(default_factory=list)
    stack: list[bytes] = field(default_factory=list)
    skipped_pushes: int = 0
    executed_pushes: int = 0

    def __bool__(self) -> bool:
        return self.ok


# OT slot codec: a value is carried as a Winternitz message of fixed capacity,
# 2-byte big-endian length prefix then zero padding.


def ot_slot_params(capacity: int, base: OtParams | None = None) -> OtParams:
    b = base or OtParams()
    return OtParams(b.hash_len_bytes, b.digit_bits, capacity + 2)


def ot_slot_encode(value: bytes, capacity: int) -> bytes:
    if len(value) > capacity:
        raise ValueError(f"value of {len(value)} bytes exceeds slot capacity {capacity}")
    return struct.pack(">H", len(value)) + value + bytes(capacity - len(value))


def ot_slot_decode(msg: bytes) -> bytes:
    (n,) = struct.unpack(">H", msg[:2])
    if n > len(msg) - 2 or any(msg[2 + n:]):
        raise ValueError("malformed OT slot encoding")
    return msg[2:2 + n]


def msg_to_digit_element(params: OtParams, msg: bytes) -> bytes:
    """Stack form of a message: one byte per message digit."""
    return bytes(msg_digits(params, msg)[: params.n_msg_digits])


def digit_element_to_msg(params: OtParams, elem: bytes) -> bytes:
    if len(elem) != params.n_msg_digits:
        raise EvalError("digit element has wrong length")
    w = params.digit_bits
    value = 0
    for d in elem:
        if d > params.chain_len:
            raise EvalError("digit out of range")
        value = (value << w) | d
    return value.to_bytes(params.msg_len_bytes, "big")


# Script fragment builders


def csigv(pubkey: bytes) -> Script:
    return Script.build([pubkey, OP_CHECKSIGVERIFY])


def cseqv(t: int) -> Script:
    if not 0 <= t < MAX_RELATIVE_LOCK:
        raise ValueError("relative lock out of range")
    return Script.build([Num(t), OP_CHECKSEQUENCEVERIFY, OP_DROP])


def covenant_check(pk_a: bytes, pk_b: bytes) -> Script:
    return csigv(pk_a) + csigv(pk_b)


def ot_csigv(pubkeys: Sequence[OtPublicKey]) -> Script:
    if not pubkeys:
        raise ValueError("OT-CSIGV needs at least one key")
    p = pubkeys[0].params
    if any(pk.params != p for pk in pubkeys):
        raise ValueError("OT keys in one check must share parameters")
    return Script.build([*(pk.to_bytes() for pk in pubkeys), Num(len(pubkeys)), OP_OT_CHECKSIGVERIFY])


def ot_gadget_items(params: OtParams, msg: bytes, sigs: Sequence[OtSignature]) -> list[bytes]:
    """Stack items (bottom to top) one OT-CSIGV consumes: signatures, then the message."""
    return [s.to_bytes() for s in reversed(sigs)] + [msg_to_digit_element(params, msg)]


def witness_for_gadgets(gadgets: Sequence[list[bytes]]) -> list[bytes]:
    """Order per-gadget stack items so the first gadget executed finds its items on top."""
    out: list[bytes] = []
    for items in reversed(gadgets):
        out += items
    return out


def _truthy(v: bytes) -> bool:
    for i, b in enumerate(v):
        if b != 0:
            return not (i == len(v) - 1 and b == 0x80)
    return False


class _Machine:
    def __init__(self, ctx: ExecContext):
        self.ctx = ctx
        self.stack: list[bytes] = []
        self.ot_messages: list[bytes] = []
        self.skipped = 0
        self.executed = 0

    def pop(self) -> bytes:
        if not self.stack:
            raise EvalError("stack underflow")
        return self.stack.pop()

    def checksig(self, sig: bytes, pubkey: bytes) -> bool:
        ctx = self.ctx
        if not sig:
            return False
        if ctx.sigversion == "tapscript":
            if len(pubkey) != 32:
                raise EvalError("tapscript key must be 32 bytes")
            if len(sig) == 64:
                hash_type = 0
            elif len(sig) == 65:
                hash_type = sig[64]
                if hash_type == 0:
                    raise EvalError("explicit SIGHASH_DEFAULT byte")
            else:
                raise EvalError("bad schnorr signature size")
            try:
                digest = taproot_sighash(
                    ctx.tx, ctx.input_index, ctx.spent_outputs, hash_type,
                    ScriptExt(ctx.tapleaf_hash) if ctx.tapleaf_hash else None, ctx.annex,
                )
            except (SighashError, IndexError) as e:
                raise EvalError(str(e)) from e
            return schnorr_verify_raw(pubkey, digest, sig[:64])
        if ctx.sigversion == "legacy":
            hash_type = sig[-1]
            code = ctx.script_code if ctx.script_code is not None else ctx.spent_output.script_pubkey
            try:
                digest = legacy_sighash(ctx.tx, ctx.input_index, code, hash_type)
            except (SighashError, IndexError) as e:
                raise EvalError(str(e)) from e
            if len(pubkey) not in (33, 65):
                raise EvalError("bad ECDSA public key size")
            return ecdsa_verify_raw(pubkey, digest, sig[:-1])
        raise EvalError(f"unknown sigversion {ctx.sigversion}")

    def checksequence(self, t: int) -> None:
        if t < 0:
            raise EvalError("negative relative lock")
        seq = self.ctx.sequence
        if seq & SEQUENCE_DISABLE_FLAG:
            raise EvalError("sequence has relative locks disabled")
        if self.ctx.tx.version < 2:
            raise EvalError("relative locks need tx version >= 2")
        if (seq & 0xFFFF) < t:
            raise EvalError(f"sequence {seq & 0xFFFF} below required {t}")
        if self.ctx.confirmations < t:
            raise EvalError(f"immature: {self.ctx.confirmations} confirmations, need {t}")

    def ot_checksigverify(self) -> None:
        k = decode_num(self.pop())
        if not 1 <= k <= 16:
            raise EvalError("bad OT key count")
        keys = [OtPublicKey.from_bytes(self.pop()) for _ in range(k)][::-1]
        params = keys[0].params
        msg = digit_element_to_msg(params, self.pop())
        for pk in keys:
            try:
                sig = OtSignature.from_bytes(self.pop())
            except ValueError as e:
                raise EvalError(f"malformed OT signature: {e}") from e
            if not ot_verify(pk, msg, sig):
                raise EvalError("OT signature verification failed")
        self.ot_messages.append(msg)

    def run(self, script: Script) -> None:
        if self.ctx.sigversion != "tapscript" and len(script) > MAX_SCRIPT_SIZE:
            raise EvalError("script exceeds size limit")
        try:
            ops = script.ops()
        except ScriptError as e:
            raise EvalError(str(e)) from e
        exec_stack: list[bool] = []
        for op in ops:
            executing = all(exec_stack)
            c = op.code
            if op.is_push:
                if executing:
                    self.stack.append(op.data)
                    self.executed += 1
                else:
                    self.skipped += 1
                continue
            if c in (OP_IF, OP_NOTIF):
                if executing:
                    v = _truthy(self.pop())
                    exec_stack.append(v if c == OP_IF else not v)
                else:
                    exec_stack.append(False)
                continue
            if c == OP_ELSE:
                if not exec_stack:
                    raise EvalError("ELSE without IF")
                exec_stack[-1] = not exec_stack[-1]
                continue
            if c == OP_ENDIF:
                if not exec_stack:
                    raise EvalError("ENDIF without IF")
                exec_stack.pop()
                continue
            if not executing:
                continue
            if OP_1 <= c <= OP_16 or c == OP_1NEGATE:
                self.stack.append(encode_num(c - OP_1 + 1 if c != OP_1NEGATE else -1))
            elif c == OP_NOP:
                pass
            elif c == OP_VERIFY:
                if not _truthy(self.pop()):
                    raise EvalError("VERIFY failed")
            elif c == OP_RETURN:
                raise EvalError("OP_RETURN executed")
            elif c == OP_DROP:
                self.pop()
            elif c == OP_DUP:
                v = self.pop()
                self.stack += [v, v]
            elif c in (OP_EQUAL, OP_EQUALVERIFY):
                eq = self.pop() == self.pop()
                if c == OP_EQUALVERIFY:
                    if not eq:
                        raise EvalError("EQUALVERIFY failed")
                else:
                    self.stack.append(b"\x01" if eq else b"")
            elif c == OP_HASH160:
                self.stack.append(hash160(self.pop()))
            elif c in (OP_CHECKSIG, OP_CHECKSIGVERIFY):
                pubkey = self.pop()
                sig = self.pop()
                ok = self.checksig(sig, pubkey)
                if c == OP_CHECKSIGVERIFY:
                    if not ok:
                        raise EvalError("CHECKSIGVERIFY failed")
                else:
                    if not ok and sig and self.ctx.sigversion == "tapscript":
                        raise EvalError("non-empty failing signature")
                    self.stack.append(b"\x01" if ok else b"")
            elif c == OP_CHECKSEQUENCEVERIFY:
                if not self.stack:
                    raise EvalError("stack underflow")
                self.checksequence(decode_num(self.stack[-1]))
            elif c == OP_OT_CHECKSIGVERIFY:
                self.ot_checksigverify()
            else:
                raise EvalError(f"unsupported opcode {OPNAMES.get(c, hex(c))}")
        if exec_stack:
            raise EvalError("unbalanced conditional")


def eval_script(script: Script, witness_stack: Sequence[bytes], ctx: ExecContext) -> EvalResult:
    """Run ``script`` on ``witness_stack`` (bottom first).

    Success needs no failed check and a final stack that is either empty or a
    single true element.
    """
    m = _Machine(ctx)
    m.stack = list(witness_stack)
    try:
        m.run(script)
    except (EvalError, ValueError) as e:
        return EvalResult(False, str(e), m.ot_messages, m.stack, m.skipped, m.executed)
    if len(m.stack) > 1:
        return EvalResult(False, "stack not clean", m.ot_messages, m.stack, m.skipped, m.executed)
    if m.stack and not _truthy(m.stack[0]):
        return EvalResult(False, "false on top of stack", m.ot_messages, m.stack, m.skipped, m.executed)
    return EvalResult(True, "", m.ot_messages, m.stack, m.skipped, m.executed)


def schnorr_sig_with_type(sig64: bytes, hash_type: int) -> bytes:
    return sig64 if hash_type == 0 else sig64 + bytes([hash_type])


def ecdsa_sig_with_type(der: bytes, hash_type: int = SIGHASH_ALL) -> bytes:
    return der + bytes([hash_type])


def compile_named_scripts(params) -> dict[str, Script]:
    """Every named script of the enveloping DA-DAG, built from ``params``."""
    from .dag import named_scripts

    return named_scripts(params)
