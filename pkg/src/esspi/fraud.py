"""Fraud checks run by the secondary instance.

Every check is a pure function returning a :class:`Verdict`.  A claim that
cannot even be established (a signature that does not verify against the
bytes Bob supplies) is *rejected*, which counts as a prover win.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

from .dag import (
    COMMIT_AMOUNT,
    DUMMY_OUTPUT,
    FRAUD_FORM_GRINDING,
    FRAUD_FORM_TEMPLATE,
    S2_HASH_TYPE,
    DaDag,
    build_pbr,
    pbr_spent,
    slot_params,
    w_leaf,
)
from .hashcore import Midstate, embedded_bitcount, owcf_compress, sha256, tagged_hash
from .keys import NUMS_KEY, ecdsa_verify_raw, schnorr_verify_raw, taproot_tweak_pubkey
from .ots import OtPublicKey, OtSignature, ot_verify
from .scriptvm import digit_element_to_msg, ot_slot_decode, ot_slot_encode
from .sighash import (
    SIGHASH_ALL,
    SIGHASH_DEFAULT,
    TAPSIGHASH_TAG,
    CommonSigMsg,
    ScriptExt,
    SighashError,
    outpoint_from_bytes,
    sha_outputs,
    sha_prevouts,
    taproot_sigmsg,
)
from .taproot import root_from_path, tapbranch_hash, tapleaf_hash
from .script import Script
from .tx import OutPoint, Tx, TxOut, compact_size, read_compact_size

PROVER = "prover"
VERIFIER = "verifier"

CHALLENGES = ("challenge1", "challenge2", "challenge3", "challenge4", "grinding")


@dataclass(frozen=True)
class Verdict:
    winner: str
    failed_check: str
    detail: str = ""
    rejected: bool = False

    @property
    def verifier_wins(self) -> bool:
        return self.winner == VERIFIER

    def as_dict(self) -> dict:
        return {"winner": self.winner, "failed_check": self.failed_check, "detail": self.detail,
                "rejected": self.rejected}


def _win(check: str, detail: str = "") -> Verdict:
    return Verdict(VERIFIER, check, detail)


def _lose(check: str, detail: str = "") -> Verdict:
    return Verdict(PROVER, check, detail)


def _reject(check: str, detail: str = "") -> Verdict:
    return Verdict(PROVER, check, detail, rejected=True)


# Bundles: length-prefixed concatenations that travel in one OT slot


def pack(*parts: bytes) -> bytes:
    return b"".join(compact_size(len(p)) + p for p in parts)


def unpack(data: bytes) -> list[bytes]:
    s = io.BytesIO(data)
    out = []
    while s.tell() < len(data):
        n = read_compact_size(s)
        b = s.read(n)
        if len(b) != n:
            raise ValueError("truncated bundle")
        out.append(b)
    return out


def _split_sig(sig: bytes) -> tuple[bytes, int] | None:
    if len(sig) == 64:
        return sig, SIGHASH_DEFAULT
    if len(sig) == 65 and sig[64] != SIGHASH_DEFAULT:
        return sig[:64], sig[64]
    return None


def _sig_over(msg: bytes, sig: bytes, pk: bytes) -> CommonSigMsg | None:
    """Parse a signature message and check ``sig`` over it; None if anything is off."""
    parts = _split_sig(sig)
    if parts is None:
        return None
    try:
        m = CommonSigMsg.parse(msg)
    except (SighashError, struct.error, ValueError):
        return None
    if m.hash_type != parts[1]:
        return None
    if not schnorr_verify_raw(pk, tagged_hash(TAPSIGHASH_TAG, msg), parts[0]):
        return None
    return m


# Setup-time constants the fraud programs hardcode


@dataclass(frozen=True)
class FraudContext:
    pk_s1: bytes
    pk_s2: bytes
    pk_w: bytes
    pk_y: bytes
    opk_a_v: OtPublicKey
    w_leaf_hash: bytes
    ka_leaf_hash: bytes
    pbr_leaf_hash: bytes
    ka_outpoint: OutPoint
    ka_o1: TxOut
    ka_o2: TxOut
    dag: DaDag = field(repr=False, compare=False, default=None)
    nums: bytes = NUMS_KEY

    @classmethod
    def from_dag(cls, dag: DaDag) -> "FraudContext":
        p = dag.params
        return cls(p.pk("A", "S1"), p.pk("A", "S2"), p.pk("A", "W"), p.pk("A", "Y"), p.otpk("A", "V"),
                   tapleaf_hash(w_leaf(dag)), tapleaf_hash(dag.scripts["script_KA_O1_CA"]),
                   tapleaf_hash(dag.scripts["script_KA_O2_PBR"]), dag.outpoint("K^A", 0),
                   dag.output("K^A", 0), dag.output("K^A", 1), dag, p.nums)

    def expected_x(self, v: bytes) -> bytes:
        root = tapbranch_hash(v, self.w_leaf_hash)
        return taproot_tweak_pubkey(self.nums, root)[0]


# ECDSA secondary instance


def verify_secondary_ecdsa(v: bytes, s: bytes, l_val: bytes, alice_pubkey: bytes) -> Verdict:
    """Checks 2 and 3 (check 1, the OT signatures, is enforced by script).

    ``s`` is Alice's DER signature with its hash-type byte; it signs
    sha256(L) when L = sha256(D') is the true V.
    """
    if len(l_val) != 32 or not s:
        return _reject("s_verifies", "malformed L or S")
    if not ecdsa_verify_raw(alice_pubkey, sha256(l_val), s[:-1]):
        return _reject("s_verifies", "S is not Alice's signature of sha256(L)")
    if l_val != v:
        return _win("l_equals_v", "Alice OT-signed a V that is not the hash of the data transaction")
    return _lose("l_equals_v")


# Challenge 1: malformed commit transaction


@dataclass
class Opening:
    internal_key: bytes
    path: list[bytes]
    leaf_hash: bytes

    def to_bytes(self) -> bytes:
        return self.internal_key + self.leaf_hash + b"".join(self.path)

    @classmethod
    def from_bytes(cls, b: bytes) -> "Opening":
        if len(b) < 64 or (len(b) - 64) % 32:
            raise ValueError("bad opening")
        return cls(b[:32], [b[64 + 32 * i: 96 + 32 * i] for i in range((len(b) - 64) // 32)], b[32:64])

    @classmethod
    def from_control(cls, control: bytes, leaf_script) -> "Opening":
        return cls(control[1:33], [control[33 + 32 * i: 65 + 32 * i] for i in range((len(control) - 33) // 32)],
                   tapleaf_hash(leaf_script, control[0] & 0xFE))


def challenge1(ctx: FraudContext, c1: bytes, c2: bytes, s1: bytes, s2: bytes, ctxout: bytes,
               opening: bytes = b"", v: bytes | None = None, v_sig: OtSignature | None = None) -> Verdict:
    m1 = _sig_over(c1, s1, ctx.pk_s1)
    m2 = _sig_over(c2, s2, ctx.pk_s2)
    if m1 is None or m2 is None:
        return _reject("sigs_verify", "S1/S2 do not verify against the supplied messages")
    if m1.tapleaf_hash != ctx.ka_leaf_hash or m2.tapleaf_hash != ctx.ka_leaf_hash:
        return _reject("sigs_verify", "messages are not for the commit leaf")
    if m1.hash_type not in (SIGHASH_DEFAULT, SIGHASH_ALL):
        return _win("s1_hash_type", f"S1 hash_type {m1.hash_type:#04x}")
    if m2.hash_type != S2_HASH_TYPE:
        return _win("s2_hash_type", f"S2 hash_type {m2.hash_type:#04x}")
    if m1.sha_outputs != m2.sha_single_output:
        return _win("single_output", "commit has more than one output")
    if sha256(ctxout) != m2.sha_single_output:
        return _reject("ctxout_matches", "supplied output does not hash to sha_single_output")
    try:
        out = TxOut.parse(ctxout)
    except Exception:
        return _reject("ctxout_matches", "unparsable output")
    if out.amount != COMMIT_AMOUNT:
        return _win("amount", f"amount {out.amount} != {COMMIT_AMOUNT}")
    if not out.script_pubkey.is_p2tr():
        return _win("address", "output is not P2TR")
    x = out.script_pubkey.raw[2:]
    op = None
    if opening:
        try:
            op = Opening.from_bytes(opening)
        except ValueError:
            op = None
        if op is not None and taproot_tweak_pubkey(op.internal_key, root_from_path(op.leaf_hash, op.path))[0] != x:
            op = None
    if op is not None:
        if op.internal_key != ctx.nums:
            return _win("taptree", "internal key is not the unspendable point")
        if op.path != [ctx.w_leaf_hash]:
            return _win("taptree", "tree is not exactly {V, W-leaf}")
    else:
        if v is None or v_sig is None or not ot_verify(ctx.opk_a_v, ot_slot_encode(v, 32), v_sig):
            return _reject("taptree", "no opening and no Alice-signed V to rebuild the tree")
        if x != ctx.expected_x(v):
            return _win("taptree", "output key differs from taproot(NUMS, {V, W-leaf})")
    if m1.sha_prevouts != sha256(m2.outpoint):
        return _win("single_input", "commit spends more than the handle")
    if m1.has_annex or m2.has_annex:
        return _win("annex", "commit input carries an annex")
    # nLockTime / nSequence cannot hurt Bob, so they are not checked
    return _lose("all_checks")


def pack_ec(c1: bytes, c2: bytes, ctxout: bytes, opening: bytes = b"") -> bytes:
    return pack(c1, c2, ctxout, opening)


def challenge1_bundle(ctx: FraudContext, ec: bytes, s1: bytes, s2: bytes, v=None, v_sig=None) -> Verdict:
    try:
        c1, c2, ctxout, opening = unpack(ec)
    except ValueError:
        return _reject("bundle", "malformed E_C")
    return challenge1(ctx, c1, c2, s1, s2, ctxout, opening, v, v_sig)


def challenge1_padding_method(midstate: Midstate, final_block: bytes, claimed_digest: bytes,
                              expected_bitcount: int) -> Verdict:
    """Prove an output count by the bit length embedded in the final padded block.

    Soundness rests on SHA-256 resisting free-start collisions: an arbitrary
    midstate could otherwise be chosen to reach ``claimed_digest``.
    """
    if len(final_block) != 64:
        return _reject("digest", "final block must be 64 bytes")
    if owcf_compress(midstate, final_block).digest() != claimed_digest:
        return _reject("digest", "midstate and block do not reproduce the digest")
    got = embedded_bitcount(final_block)
    if got != expected_bitcount:
        return _win("bitcount", f"embedded bitcount {got} != {expected_bitcount}")
    return _lose("bitcount")


# Challenge 2: V is not the envelope leaf


def challenge2(ctx: FraudContext, r_msg: bytes, y: bytes, v: bytes) -> Verdict:
    m = _sig_over(r_msg, y, ctx.pk_y)
    if m is None:
        return _reject("y_verifies", "Y does not verify against R'")
    if m.tapleaf_hash is None:
        return _reject("y_verifies", "R' is not a script-path message")
    if m.tapleaf_hash != v:
        return _win("l_equals_v", "revealed leaf differs from the OT-signed V")
    return _lose("l_equals_v")


def challenge2_bundle(ctx: FraudContext, c_prime: bytes, v: bytes) -> Verdict:
    try:
        r_msg, y = unpack(c_prime)
    except ValueError:
        return _reject("bundle", "malformed C'")
    return challenge2(ctx, r_msg, y, v)


# Challenge 3: W does not authorise the hardcoded penalty


def challenge3(ctx: FraudContext, w_slot: bytes, s1: bytes, ca_bytes: bytes) -> Verdict:
    try:
        ca = Tx.parse(ca_bytes)
    except Exception:
        return _reject("s1_verifies", "unparsable commit")
    if not ca.inputs or not ca.outputs:
        return _reject("s1_verifies", "commit has no inputs or outputs")
    parts = _split_sig(s1)
    if parts is None:
        return _reject("s1_verifies", "bad S1 encoding")
    try:
        msg = taproot_sigmsg(ca, 0, [ctx.ka_o1], parts[1], ScriptExt(ctx.ka_leaf_hash))
    except (SighashError, IndexError):
        return _reject("s1_verifies", "commit does not match the handle template")
    if ca.inputs[0].prevout != ctx.ka_outpoint or \
            not schnorr_verify_raw(ctx.pk_s1, tagged_hash(TAPSIGHASH_TAG, msg), parts[0]):
        return _reject("s1_verifies", "S1 does not sign these commit bytes")
    w = w_slot[32:]
    wparts = _split_sig(w)
    if wparts is None:
        return _win("w_verifies", "W is not a Schnorr signature")
    pbr = build_pbr(ctx.dag, ca.txid)
    try:
        m = taproot_sigmsg(pbr, 1, pbr_spent(ctx.dag, ca.outputs[0]), wparts[1], ScriptExt(ctx.pbr_leaf_hash))
    except SighashError:
        return _win("w_verifies", "W hash type unusable")
    if not schnorr_verify_raw(ctx.pk_w, tagged_hash(TAPSIGHASH_TAG, m), wparts[0]):
        return _win("w_verifies", "W does not authorise the penalty spending this commit")
    return _lose("w_verifies")


# Challenge 4: reveal deviates from its template, or two reveals


def pack_er(prevouts: Sequence[OutPoint], outputs: Sequence[TxOut]) -> bytes:
    return pack(b"".join(p.serialize() for p in prevouts), b"".join(o.serialize() for o in outputs))


def challenge4(ctx: FraudContext, r_msg: bytes, y: bytes, er: bytes) -> Verdict:
    m = _sig_over(r_msg, y, ctx.pk_y)
    if m is None:
        return _reject("y_verifies", "Y does not verify against R'")
    if m.hash_type not in (SIGHASH_DEFAULT, SIGHASH_ALL):
        return _win("hash_type", f"Y hash_type {m.hash_type:#04x}")
    try:
        prev_raw, out_raw = unpack(er)
        if len(prev_raw) % 36:
            raise ValueError
        prevouts = [outpoint_from_bytes(prev_raw[i:i + 36]) for i in range(0, len(prev_raw), 36)]
        s = io.BytesIO(out_raw)
        outputs = []
        while s.tell() < len(out_raw):
            outputs.append(TxOut.read(s))
    except Exception:
        return _reject("er_matches", "malformed E_R")
    if sha256(prev_raw) != m.sha_prevouts or sha_outputs(outputs) != m.sha_outputs:
        return _reject("er_matches", "E_R does not hash to the signed commitments")
    if len(prevouts) != 1:
        return _win("template", f"{len(prevouts)} inputs")
    if outputs != [DUMMY_OUTPUT]:
        return _win("template", "outputs differ from the single dummy output")
    return _lose("template")


def grinding_proof(ctx: FraudContext, g1: bytes, g2: bytes, y1: bytes, y2: bytes) -> Verdict:
    for g, y in ((g1, y1), (g2, y2)):
        parts = _split_sig(y)
        if parts is None or len(g) != 32 or not schnorr_verify_raw(ctx.pk_y, g, parts[0]):
            return _reject("sigs_verify", "a Y signature does not verify over its digest")
    if g1 != g2:
        return _win("distinct", "Alice signed two different reveal transactions")
    return _lose("distinct")


# Claims


@dataclass
class FraudClaim:
    """Fraud index, form and the slot values Bob OT-signs in K^B_2."""

    index: int | str  # 1..4, or "ecdsa"
    values: dict[str, bytes]
    form: int = FRAUD_FORM_TEMPLATE
    extras: dict[str, bytes] = field(default_factory=dict)  # public data checked natively (not slot-carried)

    @property
    def challenge(self) -> str:
        if self.index == 4:
            return "grinding" if self.form == FRAUD_FORM_GRINDING else "challenge4"
        return "ecdsa" if self.index == "ecdsa" else f"challenge{self.index}"

    def slot_values(self) -> dict[str, bytes]:
        if self.index == "ecdsa":
            return dict(self.values)
        return {"F": bytes([self.index, self.form]), **self.values}

    def to_json(self) -> dict:
        return {"fraud_index": self.index, "form": self.form, "challenge": self.challenge,
                "values": {k: v.hex() for k, v in self.values.items()},
                "extras": {k: v.hex() for k, v in self.extras.items()}}

    @classmethod
    def from_json(cls, d: dict | str) -> "FraudClaim":
        if isinstance(d, str):
            d = json.loads(d)
        return cls(d["fraud_index"], {k: bytes.fromhex(v) for k, v in d["values"].items()}, d.get("form", 0),
                   {k: bytes.fromhex(v) for k, v in d.get("extras", {}).items()})

    @classmethod
    def from_slots(cls, slots: dict[str, bytes], extras: dict | None = None) -> "FraudClaim":
        f = slots["F"]
        vals = {k: v for k, v in slots.items() if k != "F"}
        return cls(f[0], vals, f[1], dict(extras or {}))


def evaluate(ctx: FraudContext, claim: FraudClaim) -> Verdict:
    v = claim.values
    try:
        if claim.challenge == "challenge1":
            v_sig = None
            if "V_sig" in claim.extras:
                v_sig = OtSignature.from_bytes(claim.extras["V_sig"])
            return challenge1_bundle(ctx, v["EC"], v["S1"], v["S2"], claim.extras.get("V"), v_sig)
        if claim.challenge == "challenge2":
            return challenge2_bundle(ctx, v["C'"], v["V"])
        if claim.challenge == "challenge3":
            return challenge3(ctx, v["W"], v["S1"], v["C"])
        if claim.challenge == "challenge4":
            return challenge4(ctx, v["RA'"], v["Y"], v["ER"])
        if claim.challenge == "grinding":
            g1, g2 = v["RA'"][:32], v["RA'"][32:]
            return grinding_proof(ctx, g1, g2, v["Y"], v["ER"])
    except KeyError as e:
        return _reject("inputs", f"missing claim input {e}")
    return _reject("inputs", f"unknown fraud index {claim.index}")


# Building claims from what Bob sees on chain


@dataclass
class CommitView:
    """Values recovered from a published commit transaction."""

    tx: Tx
    spent: list[TxOut]
    s1: bytes
    s2: bytes
    v: bytes
    w: bytes
    v_sig: bytes
    w_sig: bytes
    annex: bytes | None

    def alice_ot_sigs(self) -> dict:
        return {"V": OtSignature.from_bytes(self.v_sig), "W": OtSignature.from_bytes(self.w_sig)}


def view_commit(commit: Tx, spent: list[TxOut]) -> CommitView:
    wit = list(commit.inputs[0].witness)
    annex = wit.pop() if len(wit) >= 2 and wit[-1][:1] == b"\x50" else None
    wit = wit[:-2]  # script, control block
    s1, s2 = wit[-1], wit[-2]
    v_digits, v_sig = wit[-3], wit[-4]
    w_digits, w_sig = wit[-5], wit[-6]
    v = ot_slot_decode(digit_element_to_msg(slot_params("V"), v_digits))
    w = ot_slot_decode(digit_element_to_msg(slot_params("W"), w_digits))
    return CommitView(commit, spent, s1, s2, v, w, v_sig, w_sig, annex)


def reveal_parts(reveal: Tx, commit: Tx):
    """(R', Y, opening, script) of a reveal spending the commit's output through the envelope leaf."""
    wit = list(reveal.inputs[0].witness)
    y, script_raw, control = wit[0], wit[1], wit[2]
    script = Script(script_raw)
    parts = _split_sig(y)
    ht = parts[1] if parts else SIGHASH_DEFAULT
    r_msg = taproot_sigmsg(reveal, 0, [commit.outputs[0]], ht, ScriptExt(tapleaf_hash(script)))
    return r_msg, y, Opening.from_control(control, script), script


def build_claims(ctx: FraudContext, commit: Tx, spent: list[TxOut], reveals: Sequence[Tx] = ()) -> dict[str, FraudClaim]:
    """One claim per challenge, each filled from public chain data."""
    cv = view_commit(commit, spent)
    h1 = _split_sig(cv.s1)[1] if _split_sig(cv.s1) else SIGHASH_ALL
    h2 = _split_sig(cv.s2)[1] if _split_sig(cv.s2) else SIGHASH_ALL
    ext = ScriptExt(ctx.ka_leaf_hash)
    c1 = taproot_sigmsg(commit, 0, spent, h1, ext, cv.annex)
    c2 = taproot_sigmsg(commit, 0, spent, h2, ext, cv.annex)
    ctxout = commit.outputs[0].serialize()
    opening = b""
    r = None
    if reveals:
        r_msg, y, op, _ = reveal_parts(reveals[0], commit)
        opening = op.to_bytes()
        r = (r_msg, y)
    claims = {
        "challenge1": FraudClaim(1, {"EC": pack_ec(c1, c2, ctxout, opening), "W": cv.w, "S1": cv.s1, "S2": cv.s2},
                                 extras={"V": cv.v, "V_sig": cv.v_sig}),
        "challenge3": FraudClaim(3, {"W": cv.w, "S1": cv.s1, "C": commit.strip_witness().serialize(False)}),
    }
    if r is not None:
        r_msg, y = r
        rtx = reveals[0]
        claims["challenge2"] = FraudClaim(2, {"C'": pack(r_msg, y), "V": cv.v})
        claims["challenge4"] = FraudClaim(4, {"RA'": r_msg, "Y": y,
                                              "ER": pack_er([i.prevout for i in rtx.inputs], rtx.outputs)})
        digests = []
        for rv in reveals[:2]:
            m, yy, _, _ = reveal_parts(rv, commit)
            digests.append((tagged_hash(TAPSIGHASH_TAG, m), yy))
        if len(digests) == 1:
            digests.append(digests[0])
        (g1, y1), (g2, y2) = digests
        claims["grinding"] = FraudClaim(4, {"RA'": g1 + g2, "Y": y1, "ER": y2}, FRAUD_FORM_GRINDING)
    return claims


def run_all(ctx: FraudContext, claims: dict[str, FraudClaim]) -> dict[str, Verdict]:
    out = {}
    for name in CHALLENGES:
        if name in claims:
            out[name] = evaluate(ctx, claims[name])
        else:
            out[name] = _reject("inputs", "no data to build this claim")
    return out
