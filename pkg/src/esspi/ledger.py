"""Deterministic simulated chain: UTXO set, mempool, blocks, script checks.

An output's age is ``height - confirmation_height``; unconfirmed outputs have
age 0.  A relative lock of t therefore opens t blocks after the funding
transaction was mined.  Replacement of unconfirmed transactions is
unconditional, a superset of what real relay policy allows.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .hashcore import hash160, sha256
from .script import Script, ScriptError
from .scriptvm import ExecContext, EvalResult, eval_script
from .sighash import SighashError, taproot_sighash
from .keys import schnorr_verify_raw
from .taproot import TAPSCRIPT_LEAF_VERSION, tapleaf_hash, verify_control_block
from .tx import OutPoint, Tx, TxOut


class LedgerError(Exception):
    pass


@dataclass
class Coin:
    out: TxOut
    height: int | None  # None while the creating tx is unconfirmed
    txid: bytes


@dataclass
class SubmitResult:
    accepted: bool
    reason: str = ""
    txid: bytes = b""

    def __bool__(self) -> bool:
        return self.accepted


def verify_input(tx: Tx, index: int, spent: list[TxOut], age: int) -> EvalResult:
    """Check one input's spending conditions against the output it consumes."""
    spk = spent[index].script_pubkey
    txin = tx.inputs[index]
    if spk.is_op_return():
        return EvalResult(False, "output is provably unspendable")
    if spk.is_p2tr():
        wit = list(txin.witness)
        if txin.script_sig.raw:
            return EvalResult(False, "taproot input with non-empty scriptSig")
        annex = None
        if len(wit) >= 2 and wit[-1][:1] == b"\x50":
            annex = wit.pop()
        if not wit:
            return EvalResult(False, "empty witness")
        output_key = spk.raw[2:]
        if len(wit) == 1:
            sig = wit[0]
            if len(sig) not in (64, 65) or (len(sig) == 65 and sig[64] == 0):
                return EvalResult(False, "bad key-path signature encoding")
            try:
                digest = taproot_sighash(tx, index, spent, sig[64] if len(sig) == 65 else 0, None, annex)
            except (SighashError, IndexError) as e:
                return EvalResult(False, str(e))
            ok = schnorr_verify_raw(output_key, digest, sig[:64])
            return EvalResult(ok, "" if ok else "key-path signature invalid")
        control = wit.pop()
        script = Script(wit.pop())
        if not verify_control_block(output_key, script, control):
            return EvalResult(False, "control block does not open the output key")
        leaf_version = control[0] & 0xFE
        if leaf_version != TAPSCRIPT_LEAF_VERSION:
            return EvalResult(False, "unknown leaf version")
        ctx = ExecContext(tx, index, spent, age, "tapscript", tapleaf_hash(script, leaf_version), annex)
        return eval_script(script, wit, ctx)
    if spk.is_p2sh():
        try:
            ops = txin.script_sig.ops()
        except ScriptError as e:
            return EvalResult(False, str(e))
        if not ops or not txin.script_sig.is_push_only() or not ops[-1].is_push:
            return EvalResult(False, "P2SH scriptSig must be push-only ending in the redeem script")
        redeem = Script(ops[-1].data)
        if hash160(redeem.raw) != spk.raw[2:22]:
            return EvalResult(False, "redeem script hash mismatch")
        stack = [op.data if op.is_push else _small_int(op.code) for op in ops[:-1]]
        ctx = ExecContext(tx, index, spent, age, "legacy", script_code=redeem)
        return eval_script(redeem, stack, ctx)
    # bare legacy script
    if not txin.script_sig.is_push_only():
        return EvalResult(False, "scriptSig must be push-only")
    stack = [op.data if op.is_push else _small_int(op.code) for op in txin.script_sig.ops()]
    ctx = ExecContext(tx, index, spent, age, "legacy", script_code=spk)
    return eval_script(spk, stack, ctx)


def _small_int(code: int) -> bytes:
    from .script import encode_num, OP_1, OP_1NEGATE

    return encode_num(-1 if code == OP_1NEGATE else code - OP_1 + 1)


class Ledger:
    def __init__(self) -> None:
        self.height = 0
        self.utxos: dict[OutPoint, Coin] = {}
        self.mempool: dict[bytes, Tx] = {}
        self.confirmed: dict[bytes, tuple[Tx, int]] = {}
        self.observed: dict[bytes, Tx] = {}
        self.labels: dict[bytes, str] = {}
        self.spent_by: dict[OutPoint, bytes] = {}
        self.history: list[dict] = []
        self.minted = 0
        self.fees = 0
        self.burned = 0
        self._fund_counter = 0
        self.funded: dict[OutPoint, tuple[TxOut, int]] = {}

    # setup

    def fund(self, out: TxOut, label: str = "funding") -> OutPoint:
        """Create a confirmed coin out of thin air (genesis allocation)."""
        self._fund_counter += 1
        txid = sha256(b"ledger/fund" + self._fund_counter.to_bytes(4, "big"))
        op = OutPoint(txid, 0)
        self.utxos[op] = Coin(out, self.height, txid)
        self.funded[op] = (out, self.height)
        self.minted += out.amount
        self.labels[txid] = label
        self.history.append({"event": "fund", "outpoint": str(op), "amount": out.amount, "height": self.height})
        return op

    # queries

    def age(self, op: OutPoint) -> int:
        coin = self.utxos[op]
        return 0 if coin.height is None else self.height - coin.height

    def is_confirmed(self, txid: bytes) -> bool:
        return txid in self.confirmed

    def get_tx(self, txid: bytes) -> Tx | None:
        if txid in self.confirmed:
            return self.confirmed[txid][0]
        return self.mempool.get(txid)

    def is_unspent(self, op: OutPoint) -> bool:
        return op in self.utxos

    def label_of(self, txid: bytes) -> str:
        return self.labels.get(txid, txid[::-1].hex()[:16])

    # validation

    def check(self, tx: Tx) -> SubmitResult:
        txid = tx.txid
        if txid in self.mempool or txid in self.confirmed:
            return SubmitResult(False, "duplicate transaction", txid)
        if not tx.inputs:
            return SubmitResult(False, "no inputs", txid)
        seen = set()
        spent = []
        for txin in tx.inputs:
            op = txin.prevout
            if op in seen:
                return SubmitResult(False, "duplicate input", txid)
            seen.add(op)
            if op not in self.utxos:
                if op in self.spent_by:
                    return SubmitResult(False, f"double-spend of {op}", txid)
                return SubmitResult(False, f"missing input {op}", txid)
            spent.append(self.utxos[op].out)
        if any(o.amount < 0 for o in tx.outputs):
            return SubmitResult(False, "negative output", txid)
        if sum(o.amount for o in tx.outputs) > sum(o.amount for o in spent):
            return SubmitResult(False, "outputs exceed inputs", txid)
        for i, txin in enumerate(tx.inputs):
            res = verify_input(tx, i, spent, self.age(txin.prevout))
            if not res.ok:
                return SubmitResult(False, f"input {i}: {res.reason}", txid)
        return SubmitResult(True, "", txid)

    def submit(self, tx: Tx, label: str | None = None) -> SubmitResult:
        self.observed[tx.txid] = tx
        if label:
            self.labels[tx.txid] = label
        res = self.check(tx)
        self.history.append({
            "event": "submit", "txid": tx.txid[::-1].hex(), "label": label or "", "accepted": res.accepted,
            "reason": res.reason, "height": self.height,
        })
        if res.accepted:
            self._apply(tx)
        return res

    def _apply(self, tx: Tx) -> None:
        txid = tx.txid
        spent_total = 0
        for txin in tx.inputs:
            coin = self.utxos.pop(txin.prevout)
            spent_total += coin.out.amount
            self.spent_by[txin.prevout] = txid
        out_total = 0
        for vout, out in enumerate(tx.outputs):
            out_total += out.amount
            if out.script_pubkey.is_op_return():
                self.burned += out.amount
                continue
            self.utxos[OutPoint(txid, vout)] = Coin(out, None, txid)
        self.fees += spent_total - out_total
        self.mempool[txid] = tx

    def mine(self, n: int = 1) -> list[bytes]:
        """Confirm the whole mempool in the next block, then advance ``n`` blocks in total."""
        if n < 1:
            raise LedgerError("mine at least one block")
        mined = list(self.mempool)
        self.height += 1
        for txid in mined:
            tx = self.mempool.pop(txid)
            self.confirmed[txid] = (tx, self.height)
            for vout in range(len(tx.outputs)):
                op = OutPoint(txid, vout)
                if op in self.utxos:
                    self.utxos[op].height = self.height
        self.height += n - 1
        self.history.append({"event": "mine", "blocks": n, "height": self.height,
                             "txids": [t[::-1].hex() for t in mined]})
        return mined

    def replace(self, old_txid: bytes, new_tx: Tx, label: str | None = None) -> SubmitResult:
        """Swap an unconfirmed transaction (and its descendants) for ``new_tx``."""
        if old_txid not in self.mempool:
            raise LedgerError("can only replace an unconfirmed transaction")
        snapshot = self.to_json()
        self._evict(old_txid)
        res = self.submit(new_tx, label)
        if not res.accepted:
            observed = dict(self.observed)
            history = list(self.history)
            self._load(json.loads(snapshot))
            self.observed.update(observed)
            self.history = history
        self.history.append({"event": "replace", "old": old_txid[::-1].hex(), "new": new_tx.txid[::-1].hex(),
                             "accepted": res.accepted})
        return res

    def _evict(self, txid: bytes) -> None:
        tx = self.mempool[txid]
        # descendants first: restoring their inputs needs this tx still in the mempool
        for vout in range(len(tx.outputs)):
            op = OutPoint(txid, vout)
            child = self.spent_by.get(op)
            if child is not None and child in self.mempool:
                self._evict(child)
        del self.mempool[txid]
        spent_total = 0
        for txin in tx.inputs:
            del self.spent_by[txin.prevout]
            prev_txid = txin.prevout.txid
            prev = self.get_tx(prev_txid)
            if prev is not None:
                out = prev.outputs[txin.prevout.vout]
                height = self.confirmed[prev_txid][1] if prev_txid in self.confirmed else None
            elif txin.prevout in self.funded:
                out, height = self.funded[txin.prevout]
            else:
                raise LedgerError(f"unknown coin {txin.prevout}")
            self.utxos[txin.prevout] = Coin(out, height, prev_txid)
            spent_total += out.amount
        out_total = 0
        for vout, out in enumerate(tx.outputs):
            out_total += out.amount
            if out.script_pubkey.is_op_return():
                self.burned -= out.amount
            else:
                self.utxos.pop(OutPoint(txid, vout), None)
        self.fees -= spent_total - out_total

    # conservation and persistence

    def total_value(self) -> int:
        return sum(c.out.amount for c in self.utxos.values()) + self.fees + self.burned

    def to_json(self) -> str:
        return json.dumps(self.dump(), sort_keys=True)

    def dump(self) -> dict:
        return {
            "height": self.height,
            "utxos": [
                {"txid": op.txid.hex(), "vout": op.vout, "out": c.out.serialize().hex(), "height": c.height,
                 "src": c.txid.hex()}
                for op, c in sorted(self.utxos.items(), key=lambda kv: (kv[0].txid, kv[0].vout))
            ],
            "mempool": [t.hex() for t in self.mempool.values()],
            "confirmed": [[t.hex(), h] for t, h in self.confirmed.values()],
            "spent_by": [[op.txid.hex(), op.vout, t.hex()] for op, t in self.spent_by.items()],
            "labels": {k.hex(): v for k, v in self.labels.items()},
            "minted": self.minted,
            "fees": self.fees,
            "burned": self.burned,
            "fund_counter": self._fund_counter,
            "funded": [[op.txid.hex(), op.vout, o.serialize().hex(), h] for op, (o, h) in self.funded.items()],
            "history": self.history,
        }

    def _load(self, d: dict) -> None:
        self.height = d["height"]
        self.utxos = {
            OutPoint(bytes.fromhex(u["txid"]), u["vout"]): Coin(TxOut.parse(bytes.fromhex(u["out"])), u["height"],
                                                                  bytes.fromhex(u["src"]))
            for u in d["utxos"]
        }
        self.mempool = {}
        for h in d["mempool"]:
            t = Tx.parse(bytes.fromhex(h))
            self.mempool[t.txid] = t
        self.confirmed = {}
        for h, height in d["confirmed"]:
            t = Tx.parse(bytes.fromhex(h))
            self.confirmed[t.txid] = (t, height)
        self.spent_by = {OutPoint(bytes.fromhex(a), b): bytes.fromhex(c) for a, b, c in d["spent_by"]}
        self.labels = {bytes.fromhex(k): v for k, v in d["labels"].items()}
        self.minted = d["minted"]
        self.fees = d["fees"]
        self.burned = d["burned"]
        self._fund_counter = d["fund_counter"]
        self.funded = {
            OutPoint(bytes.fromhex(a), b): (TxOut.parse(bytes.fromhex(c)), h) for a, b, c, h in d["funded"]
        }
        self.history = list(d["history"])
        self.observed = {**{t: x for t, x in self.mempool.items()}, **{t: x for t, (x, _) in self.confirmed.items()}}

    @classmethod
    def restore(cls, d: dict | str) -> "Ledger":
        if isinstance(d, str):
            d = json.loads(d)
        led = cls()
        led._load(d)
        return led

    def state_hash(self) -> str:
        d = self.dump()
        d.pop("history")
        return sha256(json.dumps(d, sort_keys=True).encode()).hex()
