"""Signature messages: legacy (pre-segwit) and the taproot common signature message."""
from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, replace
from typing import Sequence, Union

from .hashcore import sha256, sha256d, tagged_hash
from .script import Script
from .tx import OutPoint, Tx, TxOut, compact_size, read_bytes, ser_bytes

SIGHASH_DEFAULT = 0x00
SIGHASH_ALL = 0x01
SIGHASH_NONE = 0x02
SIGHASH_SINGLE = 0x03
SIGHASH_ANYONECANPAY = 0x80

TAPSIGHASH_TAG = "TapSighash"


class SighashError(ValueError):
    pass


class Base(enum.IntEnum):
    ALL = SIGHASH_ALL
    NONE = SIGHASH_NONE
    SINGLE = SIGHASH_SINGLE


@dataclass(frozen=True)
class SighashFlag:
    base: Base = Base.ALL
    anyonecanpay: bool = False
    default: bool = False  # taproot SIGHASH_DEFAULT (0x00), behaves as ALL

    @property
    def byte(self) -> int:
        if self.default:
            return SIGHASH_DEFAULT
        return int(self.base) | (SIGHASH_ANYONECANPAY if self.anyonecanpay else 0)

    @classmethod
    def from_byte(cls, b: int) -> "SighashFlag":
        if b == SIGHASH_DEFAULT:
            return cls(Base.ALL, False, True)
        base = b & 0x1F
        if base not in (1, 2, 3) or b & ~(0x1F | SIGHASH_ANYONECANPAY):
            raise SighashError(f"invalid hash_type {b:#04x}")
        return cls(Base(base), bool(b & SIGHASH_ANYONECANPAY))

    def __str__(self) -> str:
        if self.default:
            return "DEFAULT"
        return self.base.name + ("|ANYONECANPAY" if self.anyonecanpay else "")


ALL = SighashFlag()
SINGLE_ACP = SighashFlag(Base.SINGLE, True)

FlagLike = Union[SighashFlag, int]


def _flag(flag: FlagLike) -> SighashFlag:
    return flag if isinstance(flag, SighashFlag) else SighashFlag.from_byte(flag)


# Legacy


def legacy_signed_message(tx: Tx, input_index: int, script_code: Script, flag: FlagLike = ALL) -> bytes:
    """The byte string D' covered by a legacy signature.

    Other inputs get an empty scriptSig, the signed input carries
    ``script_code`` (the scriptPubKey, or the redeem script for P2SH), and the
    4-byte hash type is appended.  ``sha256d`` of the result is the sighash.
    """
    f = _flag(flag)
    if not 0 <= input_index < len(tx.inputs):
        raise IndexError(f"input index {input_index} out of range")
    if f.default:
        raise SighashError("SIGHASH_DEFAULT is taproot-only")
    if f.base == Base.SINGLE and input_index >= len(tx.outputs):
        raise SighashError("SIGHASH_SINGLE without a matching output")
    parts = [struct.pack("<i", tx.version)]
    if f.anyonecanpay:
        parts += [compact_size(1), tx.inputs[input_index].serialize(script_code)]
    else:
        parts.append(compact_size(len(tx.inputs)))
        for i, txin in enumerate(tx.inputs):
            if i == input_index:
                parts.append(txin.serialize(script_code))
            else:
                seq = txin.sequence if f.base == Base.ALL else 0
                parts.append(txin.prevout.serialize() + ser_bytes(b"") + struct.pack("<I", seq))
    if f.base == Base.NONE:
        parts.append(compact_size(0))
    elif f.base == Base.SINGLE:
        parts.append(compact_size(input_index + 1))
        parts += [TxOut(-1, Script()).serialize()] * input_index
        parts.append(tx.outputs[input_index].serialize())
    else:
        parts.append(compact_size(len(tx.outputs)))
        parts += [o.serialize() for o in tx.outputs]
    parts.append(struct.pack("<I", tx.locktime))
    parts.append(struct.pack("<I", f.byte))
    return b"".join(parts)


def legacy_sighash(tx: Tx, input_index: int, script_code: Script, flag: FlagLike = ALL) -> bytes:
    return sha256d(legacy_signed_message(tx, input_index, script_code, flag))


# Taproot


@dataclass(frozen=True)
class ScriptExt:
    tapleaf_hash: bytes
    key_version: int = 0
    codesep_pos: int = 0xFFFFFFFF


@dataclass(frozen=True)
class CommonSigMsg:
    """Common signature message plus the optional script-path extension.

    ``None`` marks a field the hash type excludes.  Serialization follows the
    row order of the taproot signature message definition.
    """

    hash_type: int
    n_version: int
    n_lock_time: int
    sha_prevouts: bytes | None
    sha_amounts: bytes | None
    sha_scriptpubkeys: bytes | None
    sha_sequences: bytes | None
    sha_outputs: bytes | None
    spend_type: int
    outpoint: bytes | None
    amount: int | None
    script_pubkey: bytes | None
    n_sequence: int | None
    input_index: int | None
    sha_annex: bytes | None
    sha_single_output: bytes | None
    tapleaf_hash: bytes | None = None
    key_version: int | None = None
    codesep_pos: int | None = None

    @property
    def flag(self) -> SighashFlag:
        return SighashFlag.from_byte(self.hash_type)

    @property
    def has_annex(self) -> bool:
        return bool(self.spend_type & 1)

    @property
    def ext_flag(self) -> int:
        return self.spend_type >> 1

    def serialize(self) -> bytes:
        out = bytearray()
        out.append(self.hash_type)
        out += struct.pack("<iI", self.n_version, self.n_lock_time)
        for f in (self.sha_prevouts, self.sha_amounts, self.sha_scriptpubkeys, self.sha_sequences, self.sha_outputs):
            if f is not None:
                out += f
        out.append(self.spend_type)
        if self.outpoint is not None:
            out += self.outpoint
            out += struct.pack("<q", self.amount)
            out += ser_bytes(self.script_pubkey)
            out += struct.pack("<I", self.n_sequence)
        if self.input_index is not None:
            out += struct.pack("<I", self.input_index)
        for f in (self.sha_annex, self.sha_single_output, self.tapleaf_hash):
            if f is not None:
                out += f
        if self.tapleaf_hash is not None:
            out.append(self.key_version)
            out += struct.pack("<I", self.codesep_pos)
        return bytes(out)

    def message(self) -> bytes:
        """Epoch byte followed by the serialized fields: the tagged-hash input."""
        return b"\x00" + self.serialize()

    def sighash(self) -> bytes:
        return tagged_hash(TAPSIGHASH_TAG, self.message())

    @classmethod
    def parse(cls, data: bytes) -> "CommonSigMsg":
        """Inverse of :meth:`message` (the leading epoch byte is required)."""
        s = io.BytesIO(data)

        def take(n: int) -> bytes:
            b = s.read(n)
            if len(b) != n:
                raise SighashError("truncated signature message")
            return b

        if take(1) != b"\x00":
            raise SighashError("unknown sighash epoch")
        hash_type = take(1)[0]
        f = SighashFlag.from_byte(hash_type)
        version, locktime = struct.unpack("<iI", take(8))
        agg = [None] * 4
        if not f.anyonecanpay:
            agg = [take(32) for _ in range(4)]
        sha_outputs = take(32) if f.base == Base.ALL else None
        spend_type = take(1)[0]
        if spend_type > 3:
            raise SighashError("invalid spend_type")
        outpoint = amount = spk = seq = idx = None
        if f.anyonecanpay:
            outpoint = take(36)
            (amount,) = struct.unpack("<q", take(8))
            spk = read_bytes(s)
            (seq,) = struct.unpack("<I", take(4))
        else:
            (idx,) = struct.unpack("<I", take(4))
        sha_annex = take(32) if spend_type & 1 else None
        sha_single = take(32) if f.base == Base.SINGLE else None
        leaf = kv = cs = None
        if spend_type >> 1:
            leaf = take(32)
            kv = take(1)[0]
            (cs,) = struct.unpack("<I", take(4))
        if s.read(1):
            raise SighashError("trailing bytes in signature message")
        return cls(hash_type, version, locktime, *agg, sha_outputs, spend_type, outpoint, amount, spk, seq,
                   idx, sha_annex, sha_single, leaf, kv, cs)

    def field_names_present(self) -> list[str]:
        names = []
        for name in self.__dataclass_fields__:
            if getattr(self, name) is not None:
                names.append(name)
        return names


def sha_prevouts(tx: Tx) -> bytes:
    return sha256(b"".join(i.prevout.serialize() for i in tx.inputs))


def sha_amounts(spent: Sequence[TxOut]) -> bytes:
    return sha256(b"".join(struct.pack("<q", o.amount) for o in spent))


def sha_scriptpubkeys(spent: Sequence[TxOut]) -> bytes:
    return sha256(b"".join(ser_bytes(o.script_pubkey.raw) for o in spent))


def sha_sequences(tx: Tx) -> bytes:
    return sha256(b"".join(struct.pack("<I", i.sequence) for i in tx.inputs))


def sha_outputs(outputs: Sequence[TxOut]) -> bytes:
    return sha256(b"".join(o.serialize() for o in outputs))


def annex_hash(annex: bytes) -> bytes:
    return sha256(ser_bytes(annex))


def taproot_common(
    tx: Tx,
    input_index: int,
    spent_outputs: Sequence[TxOut],
    flag: FlagLike = SIGHASH_DEFAULT,
    script_ext: ScriptExt | None = None,
    annex: bytes | None = None,
) -> CommonSigMsg:
    f = _flag(flag)
    if not 0 <= input_index < len(tx.inputs):
        raise IndexError(f"input index {input_index} out of range")
    if len(spent_outputs) != len(tx.inputs):
        raise SighashError("spent_outputs must cover every input")
    if f.base == Base.SINGLE and input_index >= len(tx.outputs):
        raise SighashError("SIGHASH_SINGLE without a matching output")
    if annex is not None and (not annex or annex[0] != 0x50):
        raise SighashError("annex must start with 0x50")
    txin = tx.inputs[input_index]
    acp = f.anyonecanpay
    return CommonSigMsg(
        hash_type=f.byte,
        n_version=tx.version,
        n_lock_time=tx.locktime,
        sha_prevouts=None if acp else sha_prevouts(tx),
        sha_amounts=None if acp else sha_amounts(spent_outputs),
        sha_scriptpubkeys=None if acp else sha_scriptpubkeys(spent_outputs),
        sha_sequences=None if acp else sha_sequences(tx),
        sha_outputs=sha_outputs(tx.outputs) if f.base == Base.ALL else None,
        spend_type=(2 if script_ext else 0) + (1 if annex is not None else 0),
        outpoint=txin.prevout.serialize() if acp else None,
        amount=spent_outputs[input_index].amount if acp else None,
        script_pubkey=spent_outputs[input_index].script_pubkey.raw if acp else None,
        n_sequence=txin.sequence if acp else None,
        input_index=None if acp else input_index,
        sha_annex=annex_hash(annex) if annex is not None else None,
        sha_single_output=sha256(tx.outputs[input_index].serialize()) if f.base == Base.SINGLE else None,
        tapleaf_hash=script_ext.tapleaf_hash if script_ext else None,
        key_version=script_ext.key_version if script_ext else None,
        codesep_pos=script_ext.codesep_pos if script_ext else None,
    )


def taproot_sigmsg(
    tx: Tx,
    input_index: int,
    spent_outputs: Sequence[TxOut],
    flag: FlagLike = SIGHASH_DEFAULT,
    script_ext: ScriptExt | None = None,
    annex: bytes | None = None,
) -> bytes:
    """Message M' (epoch included) whose TapSighash tagged hash is signed."""
    return taproot_common(tx, input_index, spent_outputs, flag, script_ext, annex).message()


def taproot_sighash(
    tx: Tx,
    input_index: int,
    spent_outputs: Sequence[TxOut],
    flag: FlagLike = SIGHASH_DEFAULT,
    script_ext: ScriptExt | None = None,
    annex: bytes | None = None,
) -> bytes:
    return tagged_hash(TAPSIGHASH_TAG, taproot_sigmsg(tx, input_index, spent_outputs, flag, script_ext, annex))


def outpoint_from_bytes(raw: bytes) -> OutPoint:
    return OutPoint(raw[:32], struct.unpack("<I", raw[32:36])[0])
