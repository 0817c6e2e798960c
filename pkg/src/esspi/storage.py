"""Ways of putting user input on chain, and what each costs.

Costs are in weight units (4 per non-witness byte, 1 per witness byte), which
is the unit the expansion factors are quoted in.  Every method is priced from
the serialized template transactions it actually produces, plus the dust the
created outputs must carry, expressed as the weight a spender would later
consume (Bitcoin Core's dust estimator: the output plus a 67.75 byte segwit or
148 byte legacy spend).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .hashcore import sha256
from .script import (
    OP_0,
    OP_1,
    OP_3,
    OP_CHECKMULTISIG,
    OP_CHECKSIG,
    OP_ENDIF,
    OP_IF,
    Script,
    ScriptError,
)
from .taproot import TaprootAddress
from .tx import OutPoint, Tx, TxIn, TxOut

METHODS = ("op_return", "envelope", "p2wsh_addr", "p2pk", "bare_multisig")

DUST_FEERATE = 3  # sat/vB, Bitcoin Core's dust relay fee
SEGWIT_SPEND_BYTES = 67.75
LEGACY_SPEND_BYTES = 148

# Placeholder key and signature bytes for size-accurate templates.
_DUMMY_PK = bytes([0x02]) + bytes(range(1, 33))
_DUMMY_DER_SIG = bytes([0x30]) + bytes(71)
_DUMMY_SCHNORR_SIG = bytes(64)


class StorageError(ValueError):
    pass


class UnsupportedError(NotImplementedError):
    pass


@dataclass(frozen=True)
class Policy:
    name: str
    op_return_max: int
    max_outputs: int
    envelope_max: int
    bare_multisig: bool = True


STANDARD = Policy("standard", op_return_max=80, max_outputs=2500, envelope_max=400_000)
NONSTANDARD = Policy("nonstandard", op_return_max=100_000, max_outputs=100_000, envelope_max=4_000_000)


def policy_by_name(name: str) -> Policy:
    try:
        return {"standard": STANDARD, "nonstandard": NONSTANDARD}[name]
    except KeyError:
        raise StorageError(f"unknown policy {name!r}") from None


def is_segwit_script(spk: Script) -> bool:
    raw = spk.raw
    return 4 <= len(raw) <= 42 and (raw[0] == OP_0 or OP_1 <= raw[0] <= 0x60) and raw[1] == len(raw) - 2


def dust_spend_bytes(spk: Script) -> float:
    return SEGWIT_SPEND_BYTES if is_segwit_script(spk) else LEGACY_SPEND_BYTES


def dust_threshold(spk: Script) -> int:
    """Minimum standard amount for an output with this script, in satoshis."""
    if spk.is_op_return():
        return 0
    size = len(TxOut(0, spk).serialize())
    return int((size + dust_spend_bytes(spk)) * DUST_FEERATE)


def dust_weight(out: TxOut) -> float:
    """Weight a future spend of ``out`` costs: the price of having created it."""
    if out.script_pubkey.is_op_return():
        return 0.0
    return (len(out.serialize()) + dust_spend_bytes(out.script_pubkey)) * 4


def _chunks(data: bytes, n: int) -> list[bytes]:
    return [data[i:i + n] for i in range(0, len(data), n)]


def _funding(i: int) -> OutPoint:
    return OutPoint(sha256(b"storage/funding" + i.to_bytes(4, "big")), 0)


def _p2tr_keypath_input(i: int) -> TxIn:
    return TxIn(_funding(i), witness=(_DUMMY_SCHNORR_SIG,))


def _p2sh_sig_input(i: int) -> TxIn:
    redeem = Script.build([_DUMMY_PK, OP_CHECKSIG])
    return TxIn(_funding(i), Script.build([_DUMMY_DER_SIG, redeem.raw]))


def _dust_out(spk: Script) -> TxOut:
    return TxOut(dust_threshold(spk), spk)


# Per-method output encoders.  Each maps a fixed-size chunk to a script and back.


def _p2pk_script(chunk: bytes) -> Script:
    return Script.build([b"\x04" + chunk, OP_CHECKSIG])


def _multisig_script(chunk: bytes) -> Script:
    keys = [b"\x04" + c for c in _chunks(chunk, 64)]
    return Script.build([OP_1, *keys, OP_3, OP_CHECKMULTISIG])


_OUTPUT_METHODS: dict[str, tuple[int, Callable[[bytes], Script]]] = {
    "p2wsh_addr": (32, Script.p2wsh),
    "p2pk": (64, _p2pk_script),
    "bare_multisig": (192, _multisig_script),
}


def envelope_script(data: bytes, pubkey: bytes = _DUMMY_PK[1:]) -> Script:
    """``<pk> CHECKSIG 0 IF <data> ENDIF``: data sits in a branch never taken.

    The whole payload goes in a single push, matching the reveal-script shape
    the DA-DAG uses.
    """
    return Script.build([pubkey, OP_CHECKSIG, OP_0, OP_IF, data, OP_ENDIF])


def envelope_extract(script: Script) -> bytes:
    ops = script.ops()
    for i, op in enumerate(ops):
        if op.code == OP_IF and i >= 1 and ops[i - 1].code == OP_0 and ops[i - 1].data == b"":
            if i + 2 < len(ops) and ops[i + 1].is_push and ops[i + 2].code == OP_ENDIF:
                return ops[i + 1].data
    raise ScriptError("no envelope block found")


@dataclass
class StoragePlan:
    method: str
    data_len: int
    policy: Policy
    txs: list[Tx] = field(default_factory=list)
    # weight of handle/commitment outputs created elsewhere that the data txs spend
    handle_weight: int = 0

    @property
    def n_txs(self) -> int:
        return len(self.txs)

    @property
    def n_outputs(self) -> int:
        return sum(len(t.outputs) for t in self.txs)

    def decode(self) -> bytes:
        return decode_user_input(self)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "data_len": self.data_len,
            "policy": self.policy.name,
            "txs": [t.hex() for t in self.txs],
        }


def encode_user_input(method: str, data: bytes, policy: Policy | str = STANDARD) -> StoragePlan:
    if isinstance(policy, str):
        policy = policy_by_name(policy)
    if not data:
        raise StorageError("data must be nonempty")
    if method == "op_return":
        return _encode_op_return(data, policy)
    if method == "envelope":
        return _encode_envelope(data, policy)
    if method in _OUTPUT_METHODS:
        if method == "bare_multisig" and not policy.bare_multisig:
            raise StorageError("bare multisig outputs are not permitted by this policy")
        return _encode_outputs(method, data, policy)
    raise StorageError(f"unknown storage method {method!r}")


def _encode_op_return(data: bytes, policy: Policy) -> StoragePlan:
    cap = policy.op_return_max
    plan = StoragePlan("op_return", len(data), policy)
    handle = TxOut(dust_threshold(Script.p2sh(bytes(20))), Script.p2sh(bytes(20)))
    for i, chunk in enumerate(_chunks(data, cap)):
        plan.txs.append(Tx((_p2sh_sig_input(i),), (TxOut(0, Script.op_return(chunk)),)))
        plan.handle_weight += len(handle.serialize()) * 4
    return plan


def _encode_outputs(method: str, data: bytes, policy: Policy) -> StoragePlan:
    size, make = _OUTPUT_METHODS[method]
    padded = data + bytes(-len(data) % size)
    outs = [_dust_out(make(c)) for c in _chunks(padded, size)]
    plan = StoragePlan(method, len(data), policy)
    for i, group in enumerate(_chunks_list(outs, policy.max_outputs)):
        plan.txs.append(Tx((_p2tr_keypath_input(i),), tuple(group)))
    return plan


def _chunks_list(items: list, n: int) -> list[list]:
    return [items[i:i + n] for i in range(0, len(items), n)]


def _encode_envelope(data: bytes, policy: Policy) -> StoragePlan:
    if len(data) > policy.envelope_max:
        raise StorageError(f"envelope payload {len(data)} bytes exceeds {policy.name} cap {policy.envelope_max}")
    script = envelope_script(data)
    addr = TaprootAddress.from_scripts([script])
    commit = Tx((_p2tr_keypath_input(0),), (_dust_out(addr.script_pubkey),))
    reveal_in = TxIn(OutPoint(commit.txid, 0), witness=(_DUMMY_SCHNORR_SIG, script.raw, addr.control_block(script)))
    reveal = Tx((reveal_in,), (TxOut(0, Script.op_return(b"")),))
    plan = StoragePlan("envelope", len(data), policy, [commit, reveal])
    return plan


def decode_user_input(plan: StoragePlan) -> bytes:
    m = plan.method
    if m == "op_return":
        out = b"".join(o.script_pubkey.ops()[1].data for t in plan.txs for o in t.outputs)
    elif m == "envelope":
        out = envelope_extract(Script(plan.txs[1].inputs[0].witness[1]))
    elif m == "p2wsh_addr":
        out = b"".join(o.script_pubkey.raw[2:] for t in plan.txs for o in t.outputs)
    elif m == "p2pk":
        out = b"".join(o.script_pubkey.ops()[0].data[1:] for t in plan.txs for o in t.outputs)
    elif m == "bare_multisig":
        out = b"".join(op.data[1:] for t in plan.txs for o in t.outputs for op in o.script_pubkey.ops()[1:4])
    else:
        raise StorageError(f"unknown storage method {m!r}")
    return out[:plan.data_len]


@dataclass(frozen=True)
class Expansion:
    method: str
    data_len: int
    n_txs: int
    n_outputs: int
    tx_weight: int
    handle_weight: int
    dust_weight: float

    @property
    def total_weight(self) -> float:
        return self.tx_weight + self.handle_weight + self.dust_weight

    @property
    def factor(self) -> float:
        return self.total_weight / self.data_len

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "data_len": self.data_len,
            "n_txs": self.n_txs,
            "n_outputs": self.n_outputs,
            "tx_weight": self.tx_weight,
            "handle_weight": self.handle_weight,
            "dust_weight": self.dust_weight,
            "total_weight": self.total_weight,
            "factor": round(self.factor, 4),
        }


def plan_cost(plan: StoragePlan) -> Expansion:
    dust = sum(dust_weight(o) for t in plan.txs for o in t.outputs)
    if plan.method == "envelope":
        # the commit output is spent by the reveal itself, so its dust is not stranded
        dust = 0.0
    return Expansion(
        plan.method,
        plan.data_len,
        plan.n_txs,
        plan.n_outputs,
        sum(t.weight for t in plan.txs),
        plan.handle_weight,
        dust,
    )


def expansion_factor(method: str, data_len: int, policy: Policy | str = STANDARD) -> Expansion:
    """Weight per input byte for storing ``data_len`` bytes with ``method``."""
    if data_len <= 0:
        raise StorageError("data_len must be positive")
    data = bytes((i * 131 + 7) & 0xFF for i in range(data_len))
    return plan_cost(encode_user_input(method, data, policy))


def per_tx_capacity(method: str, policy: Policy = STANDARD) -> int:
    if method == "op_return":
        return policy.op_return_max
    if method == "envelope":
        return policy.envelope_max
    size, _ = _OUTPUT_METHODS[method]
    return size * policy.max_outputs


# Which bytes become the program input, per handle output type.

PROGRAM_INPUT_ROWS = {
    ("P2SH", "Tx output"): "legacy signed message D' (ECDSA scheme)",
    ("P2TR", "Script"): "tapleaf preimage M of the reveal script (envelope scheme)",
}

UNSUPPORTED_ROWS = {
    ("P2TR", "Tx output"): "a CTxOut referenced by sha_single_output",
    ("P2WSH", "WitnessScript"): "a scriptPub",
    ("P2WSH", "Tx output"): "a CTxOut referenced by hashOutputs",
    ("P2SH", "scriptSig"): "impossible: the scriptSig is not signed",
}


def program_input_kind(handle_type: str, location: str) -> str:
    key = (handle_type, location)
    if key in PROGRAM_INPUT_ROWS:
        return PROGRAM_INPUT_ROWS[key]
    if key in UNSUPPORTED_ROWS:
        raise UnsupportedError(f"program input for {handle_type}/{location} ({UNSUPPORTED_ROWS[key]}) is not supported")
    raise UnsupportedError(f"unknown handle/storage combination {handle_type}/{location}")


def weight_to_vbytes(weight: float) -> int:
    return math.ceil(weight / 4)
