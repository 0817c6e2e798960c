"""Pre-signed transaction graphs for forcing publication of a program input.

Three variants are built here:

* ``simple``: a handle output that Alice must spend with a data transaction
  before a relative timelock, otherwise Bob burns the stake.
* ``ecdsa``: a legacy P2SH handle whose spending transaction D^A carries the
  user input in its outputs, plus a commit transaction C^A that OT-signs
  V = sha256(D').
* ``envelope``: the commit/reveal graph where the user input lives in a
  never-executed branch of a tapscript leaf and V is that leaf's hash.

Covenants are emulated by two independent Schnorr (or ECDSA, for legacy
scripts) signatures, one per party, collected at setup time.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

from .hashcore import hash160
from .keys import NUMS_KEY, KeyPair, schnorr_sign_raw, taproot_tweak_seckey
from .ots import OtParams, OtPublicKey, OtSecretKey, ot_keygen, ot_sign
from .script import (
    OP_0,
    OP_CHECKSEQUENCEVERIFY,
    OP_CHECKSIG,
    OP_CHECKSIGVERIFY,
    OP_DROP,
    OP_ELSE,
    OP_ENDIF,
    OP_IF,
    Num,
    Script,
)
from .scriptvm import (
    cseqv,
    csigv,
    covenant_check,
    ecdsa_sig_with_type,
    ot_csigv,
    ot_gadget_items,
    ot_slot_encode,
    ot_slot_params,
    schnorr_sig_with_type,
    witness_for_gadgets,
)
from .sighash import (
    SIGHASH_ALL,
    SIGHASH_ANYONECANPAY,
    SIGHASH_DEFAULT,
    SIGHASH_SINGLE,
    ScriptExt,
    legacy_sighash,
    taproot_sighash,
)
from .taproot import TAPSCRIPT_LEAF_VERSION, TaprootAddress, tapleaf_hash, tapleaf_preimage
from .tx import OutPoint, Tx, TxIn, TxOut

# Fixed template amounts (satoshis).  Every pre-signed transaction and every
# fraud check hardcodes these.
FUND_AMOUNT = 100_000
HANDLE_AMOUNT = 20_000
STOP_AMOUNT = 70_000
COMMIT_AMOUNT = 10_000
PENALTY_FEE = 1_000
CONTINUE_AMOUNT = STOP_AMOUNT - PENALTY_FEE
DEFAULT_T = 6

S2_HASH_TYPE = SIGHASH_SINGLE | SIGHASH_ANYONECANPAY
DUMMY_OUTPUT = TxOut(0, Script.op_return(b""))

# Capacity (bytes) of every OT-signed slot, keyed by slot name.
SLOT_CAPACITY = {
    "V": 32,
    "W": 97,  # txid of C^A (32) followed by the Schnorr signature W (64 or 65)
    "S1": 65,
    "S2": 65,
    "F": 2,  # fraud index, form
    "X": 32,
    "L": 32,
    "C'": 512,
    "C": 256,
    "EC": 768,
    "ER": 512,
    "RA'": 512,
    "Y": 65,
    "S": 73,  # DER ECDSA signature plus hash type
}

# (owner, slot) pairs of every OT key the envelope graph uses.
ENVELOPE_OT_KEYS = (
    ("A", "W"), ("B", "W"), ("A", "V"), ("B", "V"), ("B", "S1"), ("B", "S2"), ("B", "F"), ("B", "X"),
    ("B", "L"), ("B", "C'"), ("B", "C"), ("B", "EC"), ("B", "ER"), ("B", "RA'"), ("B", "Y"),
)
ECDSA_OT_KEYS = (("A", "V"), ("B", "V"), ("B", "S"), ("B", "L"))

ALICE_KEYS = ("W", "Y", "S1", "S2", "COV", "FUND", "D", "EXTRA")
BOB_KEYS = ("Q1", "Q2", "COV", "OUT")

FRAUD_FORM_TEMPLATE = 0
FRAUD_FORM_GRINDING = 1


class DagError(Exception):
    pass


class PrecreationError(DagError):
    """A transaction cannot be signed at setup because it depends on an unknown txid."""


class TamperKind(str, enum.Enum):
    EXTRA_OUTPUT = "extra_output"
    WRONG_SIGHASH = "wrong_sighash"
    WRONG_TAPTREE = "wrong_taptree"
    SPENDABLE_INTERNAL_KEY = "spendable_internal_key"
    EXTRA_INPUT = "extra_input"
    WITH_ANNEX = "with_annex"
    BAD_V = "bad_V"
    BAD_W = "bad_W"
    BAD_R_TEMPLATE = "bad_R_template"
    BAD_SCRIPT_U = "bad_script_U"
    GRIND_R = "grind_R"


# Keys


def slot_params(slot: str) -> OtParams:
    return ot_slot_params(SLOT_CAPACITY[slot])


@lru_cache(maxsize=256)
def _ot_pair(seed: bytes, owner: str, slot: str) -> tuple[OtSecretKey, OtPublicKey]:
    s = hashlib.sha256(b"esspi/ot/" + seed + owner.encode() + b"/" + slot.encode()).digest()
    return ot_keygen(slot_params(slot), s)


@dataclass(frozen=True)
class PartySecrets:
    """One party's Schnorr/ECDSA key pairs and OT secret keys."""

    name: str
    keys: dict
    ot: dict

    def key(self, name: str) -> KeyPair:
        try:
            return self.keys[name]
        except KeyError:
            raise DagError(f"party {self.name} has no key {name}") from None

    def ot_sign(self, slot: str, value: bytes):
        sk = self.ot[slot]
        return ot_sign(sk, ot_slot_encode(value, SLOT_CAPACITY[slot]))


@dataclass(frozen=True)
class DagParams:
    """Public setup data: party keys, OT public keys, timelock and amounts."""

    alice: dict
    bob: dict
    ot: dict  # "A_V" -> OtPublicKey
    T: int = DEFAULT_T
    nums: bytes = NUMS_KEY
    alice_ecdsa: dict = field(default_factory=dict)
    bob_ecdsa: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.T < 1:
            raise DagError("timelock T must be at least one block")
        keys = list(self.alice.values()) + list(self.bob.values())
        if len(set(keys)) != len(keys):
            raise DagError("party keys must be distinct")

    def otpk(self, owner: str, slot: str) -> OtPublicKey:
        try:
            return self.ot[f"{owner}_{slot}"]
        except KeyError:
            raise DagError(f"missing OT key {owner}_{slot}") from None

    def pk(self, party: str, name: str) -> bytes:
        table = self.alice if party == "A" else self.bob
        try:
            return table[name]
        except KeyError:
            raise DagError(f"missing key {party}_{name}") from None


@dataclass(frozen=True)
class Setup:
    params: DagParams
    alice: PartySecrets
    bob: PartySecrets


def make_setup(seed: bytes | str = b"", T: int = DEFAULT_T, ot_keys=ENVELOPE_OT_KEYS) -> Setup:
    """Deterministic keys for both parties."""
    if isinstance(seed, str):
        seed = seed.encode()
    a_keys = {n: KeyPair.from_seed(b"A/" + n.encode() + b"/" + seed) for n in ALICE_KEYS}
    b_keys = {n: KeyPair.from_seed(b"B/" + n.encode() + b"/" + seed) for n in BOB_KEYS}
    a_ot, b_ot, pub = {}, {}, {}
    for owner, slot in ot_keys:
        sk, pk = _ot_pair(seed, owner, slot)
        (a_ot if owner == "A" else b_ot)[slot] = sk
        pub[f"{owner}_{slot}"] = pk
    params = DagParams(
        alice={n: k.xonly for n, k in a_keys.items()},
        bob={n: k.xonly for n, k in b_keys.items()},
        ot=pub,
        T=T,
        alice_ecdsa={n: k.pubkey for n, k in a_keys.items()},
        bob_ecdsa={n: k.pubkey for n, k in b_keys.items()},
    )
    return Setup(params, PartySecrets("alice", a_keys, a_ot), PartySecrets("bob", b_keys, b_ot))


# Named scripts of the enveloping graph


def _sver(params: DagParams, slot: str, owners: str = "B") -> Script:
    return ot_csigv([params.otpk(o, slot) for o in owners])


def named_scripts(params: DagParams, user_input: bytes | None = None) -> dict[str, Script]:
    """Every named script of the enveloping graph (script_U only when a user input is given)."""
    cov = covenant_check(params.pk("A", "COV"), params.pk("B", "COV"))
    s: dict[str, Script] = {
        "sver_V": _sver(params, "V", "AB"),
        "sver_F": _sver(params, "F"),
        "sver_EC": _sver(params, "EC"),
        "sver_W": _sver(params, "W", "AB"),
        "sver_S1": _sver(params, "S1"),
        "sver_S2": _sver(params, "S2"),
        "sver_C'": _sver(params, "C'"),
        "sver_CA": _sver(params, "C"),
        "sver_X": _sver(params, "X"),
        "sver_L": _sver(params, "L"),
        "sver_RA'": _sver(params, "RA'"),
        "sver_ER": _sver(params, "ER"),
        "sver_Y": _sver(params, "Y"),
    }
    s["script_F1"] = s["sver_F"] + s["sver_EC"] + s["sver_W"] + s["sver_S1"] + s["sver_S2"]
    s["script_F2"] = s["sver_F"] + s["sver_C'"] + s["sver_V"]
    s["script_F3"] = s["sver_F"] + s["sver_W"] + s["sver_S1"] + s["sver_CA"]
    s["script_F4"] = s["sver_F"] + s["sver_RA'"] + s["sver_Y"] + s["sver_ER"]
    s["script_KA_O1_CA"] = (
        csigv(params.pk("A", "S1")) + csigv(params.pk("A", "S2"))
        + ot_csigv([params.otpk("A", "V")]) + ot_csigv([params.otpk("A", "W")])
    )
    s["script_KA_O1_PBC"] = cseqv(params.T) + cov
    s["script_KA_O2_PBC"] = cov
    s["script_KA_O2_PBR"] = csigv(params.pk("B", "Q1")) + csigv(params.pk("A", "W"))
    s["script_KA_O2_KB1"] = s["sver_V"]
    s["script_CA_O1_PBR"] = cseqv(params.T) + csigv(params.pk("B", "Q2"))
    if user_input is not None:
        s["script_U"] = script_u(params.pk("A", "Y"), user_input)
    return s


FRAGMENTS = ("sver_V", "sver_F", "sver_EC", "sver_W", "sver_S1", "sver_S2", "sver_C'", "sver_CA", "sver_X",
             "sver_L", "sver_RA'", "sver_ER", "sver_Y")


# Envelope script and program input


def script_u(pk_y: bytes, payload: bytes) -> Script:
    """``CSIGV(PK_Y) 0 IF <payload> ENDIF`` with the payload in one push."""
    return csigv(pk_y) + Script.build([OP_0, OP_IF, payload, OP_ENDIF])


def program_input(script: Script) -> bytes:
    """M = tag_hash || tag_hash || leaf_version || compact_size(U) || U; sha256(M) is the leaf hash."""
    th = hashlib.sha256(b"TapLeaf").digest()
    return th + th + tapleaf_preimage(script.raw, TAPSCRIPT_LEAF_VERSION)


def pad_user_input(user_input: bytes, pk_y: bytes) -> bytes:
    """Append 0x80 0x00.. so that the program input built around it is a whole number of blocks."""
    for extra in range(1, 200):
        payload = user_input + b"\x80" + bytes(extra - 1)
        if len(program_input(script_u(pk_y, payload))) % 64 == 0:
            return payload
    raise DagError("could not pad user input")  # pragma: no cover


def unpad_user_input(payload: bytes) -> bytes:
    i = payload.rstrip(b"\x00")
    if not i or i[-1] != 0x80:
        raise DagError("user input padding marker missing")
    return i[:-1]


# Signing helpers


def sign_tapscript(kp: KeyPair, tx: Tx, idx: int, spent, leaf: Script, hash_type: int = SIGHASH_DEFAULT,
                   annex: bytes | None = None) -> bytes:
    d = taproot_sighash(tx, idx, spent, hash_type, ScriptExt(tapleaf_hash(leaf)), annex)
    return schnorr_sig_with_type(kp.sign_schnorr(d), hash_type)


def sign_keypath(kp: KeyPair, tx: Tx, idx: int, spent, hash_type: int = SIGHASH_DEFAULT) -> bytes:
    d = taproot_sighash(tx, idx, spent, hash_type)
    return schnorr_sig_with_type(schnorr_sign_raw(taproot_tweak_seckey(kp.seckey, b""), d), hash_type)


def sign_legacy(kp: KeyPair, tx: Tx, idx: int, script_code: Script, hash_type: int = SIGHASH_ALL) -> bytes:
    return ecdsa_sig_with_type(kp.sign_ecdsa(legacy_sighash(tx, idx, script_code, hash_type)), hash_type)


def tapscript_witness(stack: list[bytes], addr: TaprootAddress, leaf: Script, annex: bytes | None = None):
    w = list(stack) + [leaf.raw, addr.control_block(leaf)]
    if annex is not None:
        w.append(annex)
    return tuple(w)


def key_address(xonly: bytes) -> TaprootAddress:
    return TaprootAddress.key_only(xonly)


def funding_output(params: DagParams, amount: int = FUND_AMOUNT) -> TxOut:
    return TxOut(amount, key_address(params.pk("A", "FUND")).script_pubkey)


def burn_output(amount: int) -> TxOut:
    return TxOut(amount, Script.op_return(b"penalty"))


# Graph containers


@dataclass
class Spend:
    prev: str  # name of the transaction whose output is consumed
    vout: int
    leaf: str | None  # named script used, None for key-path / legacy spends


@dataclass
class TxTemplate:
    name: str
    tx: Tx
    spends: list[Spend]
    spent: list[TxOut]
    covenant: list[int] = field(default_factory=list)
    presigned: bool = True

    @property
    def txid(self) -> bytes:
        return self.tx.txid


@dataclass
class DaDag:
    variant: str
    params: DagParams
    txs: dict[str, TxTemplate]
    scripts: dict[str, Script]
    addresses: dict[str, TaprootAddress]  # "K^A:0" -> address
    redeem: dict[str, Script] = field(default_factory=dict)  # P2SH redeem scripts
    covsigs: dict[tuple[str, int], tuple[bytes, bytes]] = field(default_factory=dict)
    funding: OutPoint | None = None

    def tx(self, name: str) -> Tx:
        return self.txs[name].tx

    def outpoint(self, name: str, vout: int) -> OutPoint:
        return OutPoint(self.txs[name].txid, vout)

    def output(self, name: str, vout: int) -> TxOut:
        return self.txs[name].tx.outputs[vout]

    def is_presigned(self) -> bool:
        return all(all(k in self.covsigs for k in ((t.name, i) for i in t.covenant))
                   for t in self.txs.values() if t.presigned)

    def script_usage(self) -> dict[str, tuple[int, int]]:
        """name -> (times committed in an output tree, times referenced by an input)."""
        committed: dict[str, int] = {}
        for addr in self.addresses.values():
            if addr.tree is None:
                continue
            for lf in addr.tree.leaves:
                for name, sc in self.scripts.items():
                    if name not in FRAGMENTS and sc == lf.script:
                        committed[name] = committed.get(name, 0) + 1
        referenced: dict[str, int] = {}
        for t in self.txs.values():
            for sp in t.spends:
                if sp.leaf:
                    referenced[sp.leaf] = referenced.get(sp.leaf, 0) + 1
        names = set(committed) | set(referenced)
        return {n: (committed.get(n, 0), referenced.get(n, 0)) for n in sorted(names)}

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "T": self.params.T,
            "transactions": {
                n: {
                    "txid": t.tx.txid_hex,
                    "hex": t.tx.hex(),
                    "inputs": [{"prev": s.prev, "vout": s.vout, "leaf": s.leaf} for s in t.spends],
                    "outputs": [{"amount": o.amount, "script": o.script_pubkey.hex()} for o in t.tx.outputs],
                    "covenant_inputs": t.covenant,
                    "presigned": t.presigned,
                }
                for n, t in self.txs.items()
            },
            "scripts": {n: {"hex": s.hex(), "size": len(s), "tapleaf_hash": tapleaf_hash(s).hex()}
                        for n, s in self.scripts.items()},
            "addresses": {k: {"output_key": a.output_key.hex(), "internal_key": a.internal_key.hex(),
                              "merkle_root": a.merkle_root.hex()} for k, a in self.addresses.items()},
            "redeem_scripts": {k: v.hex() for k, v in self.redeem.items()},
            "covenant_signatures": {f"{k[0]}:{k[1]}": [a.hex(), b.hex()] for k, (a, b) in self.covsigs.items()},
        }


def _tpl(name, ins, outs, spends, spent, covenant=(), presigned=True, locktime=0) -> TxTemplate:
    tx = Tx(tuple(ins), tuple(outs), 2, locktime)
    return TxTemplate(name, tx, list(spends), list(spent), list(covenant), presigned)


def _kick_off(dag_name: str, params: DagParams, funding: OutPoint, outs: list[TxOut]) -> TxTemplate:
    return _tpl(dag_name, [TxIn(funding)], outs, [Spend("funding", funding.vout, None)],
                [funding_output(params)])


# Enveloping graph


def build_envelope_dag(params: DagParams, funding: OutPoint) -> DaDag:
    s = named_scripts(params)
    o1 = TaprootAddress.from_scripts([s["script_KA_O1_CA"], s["script_KA_O1_PBC"]], params.nums)
    o2 = TaprootAddress.from_scripts(
        [s["script_KA_O2_PBC"], s["script_KA_O2_PBR"], s["script_KA_O2_KB1"]]
        + [s[f"script_F{i}"] for i in range(1, 5)], params.nums)
    ka = _kick_off("K^A", params, funding, [TxOut(HANDLE_AMOUNT, o1.script_pubkey), TxOut(STOP_AMOUNT, o2.script_pubkey)])
    ka_o1, ka_o2 = ka.tx.outputs
    k = ka.txid
    bob_out = TxOut(CONTINUE_AMOUNT, key_address(params.pk("B", "OUT")).script_pubkey)
    txs = {"K^A": ka}
    txs["P^B_C"] = _tpl(
        "P^B_C", [TxIn(OutPoint(k, 0), sequence=params.T), TxIn(OutPoint(k, 1), sequence=params.T)],
        [burn_output(HANDLE_AMOUNT + STOP_AMOUNT - PENALTY_FEE)],
        [Spend("K^A", 0, "script_KA_O1_PBC"), Spend("K^A", 1, "script_KA_O2_PBC")], [ka_o1, ka_o2], [0, 1])
    txs["K^B_1"] = _tpl("K^B_1", [TxIn(OutPoint(k, 1))], [bob_out], [Spend("K^A", 1, "script_KA_O2_KB1")], [ka_o2])
    for i in range(1, 5):
        txs[f"K^B_2({i})"] = _tpl(f"K^B_2({i})", [TxIn(OutPoint(k, 1))], [bob_out],
                                  [Spend("K^A", 1, f"script_F{i}")], [ka_o2])
    dag = DaDag("envelope", params, txs, s, {"K^A:0": o1, "K^A:1": o2}, funding=funding)
    return dag


def presign_covenants(dag: DaDag, alice: PartySecrets, bob: PartySecrets) -> DaDag:
    """Collect both parties' covenant signatures for every pre-signed covenant input."""
    for t in dag.txs.values():
        if not t.presigned:
            continue
        for i in t.covenant:
            sp = t.spends[i]
            if sp.leaf is None:  # legacy P2SH covenant path
                code = dag.redeem[f"{sp.prev}:{sp.vout}"]
                sa = sign_legacy(alice.key("COV"), t.tx, i, code)
                sb = sign_legacy(bob.key("COV"), t.tx, i, code)
            else:
                leaf = dag.scripts[sp.leaf]
                sa = sign_tapscript(alice.key("COV"), t.tx, i, t.spent, leaf)
                sb = sign_tapscript(bob.key("COV"), t.tx, i, t.spent, leaf)
            dag.covsigs[(t.name, i)] = (sa, sb)
    if "K^A" in dag.txs:
        ka = dag.txs["K^A"]
        sig = sign_keypath(alice.key("FUND"), ka.tx, 0, ka.spent)
        ka.tx = ka.tx.with_input(0, witness=(sig,))
    return dag


def cov_stack(dag: DaDag, name: str, idx: int) -> list[bytes]:
    """Covenant signatures in stack order (Alice's on top, checked first)."""
    try:
        sa, sb = dag.covsigs[(name, idx)]
    except KeyError:
        raise DagError(f"no covenant signatures for {name} input {idx}") from None
    return [sb, sa]


def finalize(dag: DaDag, name: str, extra: dict[int, list[bytes]] | None = None) -> Tx:
    """Attach covenant signatures (plus any extra bottom-of-stack items) to a pre-signed template."""
    t = dag.txs[name]
    tx = t.tx
    extra = extra or {}
    for i, sp in enumerate(t.spends):
        if sp.leaf is None:
            continue
        stack = list(extra.get(i, []))
        if i in t.covenant:
            stack += cov_stack(dag, name, i)
        addr = dag.addresses[f"{sp.prev}:{sp.vout}"]
        tx = tx.with_input(i, witness=tapscript_witness(stack, addr, dag.scripts[sp.leaf]))
    return tx


# Runtime commit / reveal


@dataclass
class CommitReveal:
    """Alice's runtime transactions for one user input, plus what Bob needs later."""

    commit: Tx
    reveal: Tx
    script_u: Script
    x: TaprootAddress
    v_signed: bytes
    w_sig: bytes
    pbr: Tx  # unsigned P^B_R template bound to this commit
    payload: bytes
    tamper: TamperKind | None = None
    reveal_alt: Tx | None = None
    commit_spent: list[TxOut] = field(default_factory=list)
    annex: bytes | None = None

    @property
    def program_input(self) -> bytes:
        return program_input(self.script_u)


def build_pbr(dag: DaDag, commit_txid: bytes) -> Tx:
    p = dag.params
    k = dag.txs["K^A"].txid
    return Tx((TxIn(OutPoint(commit_txid, 0), sequence=p.T), TxIn(OutPoint(k, 1))),
              (burn_output(COMMIT_AMOUNT + STOP_AMOUNT - PENALTY_FEE),), 2, 0)


def pbr_spent(dag: DaDag, commit_out: TxOut) -> list[TxOut]:
    return [commit_out, dag.output("K^A", 1)]


def w_leaf(dag: DaDag) -> Script:
    return dag.scripts["script_CA_O1_PBR"]


def instantiate_commit_reveal(dag: DaDag, user_input: bytes, alice: PartySecrets,
                              tamper: TamperKind | str | None = None,
                              extra_coin: tuple[OutPoint, TxOut] | None = None) -> CommitReveal:
    """Build and sign C^A and R^A for ``user_input``; ``tamper`` applies one deliberate defect."""
    if dag.variant != "envelope":
        raise DagError("commit/reveal only exists in the enveloping graph")
    from .storage import STANDARD

    if not user_input or len(user_input) > STANDARD.envelope_max:
        raise DagError("user input must be non-empty and fit the envelope cap")
    tamper = TamperKind(tamper) if tamper is not None else None
    p = dag.params
    pk_y = p.pk("A", "Y")
    payload = pad_user_input(user_input, pk_y)
    if tamper is TamperKind.BAD_SCRIPT_U:
        half = len(payload) // 2
        u = csigv(pk_y) + Script.build([OP_0, OP_IF, payload[:half], payload[half:], OP_ENDIF])
        # keep the program input block-aligned by trimming/extending the trailing zeros
        while len(program_input(u)) % 64:
            payload += b"\x00"
            u = csigv(pk_y) + Script.build([OP_0, OP_IF, payload[:half], payload[half:], OP_ENDIF])
    else:
        u = script_u(pk_y, payload)
    v_true = tapleaf_hash(u)
    wl = w_leaf(dag)
    if tamper is TamperKind.WRONG_TAPTREE:
        escape = csigv(p.pk("A", "EXTRA"))
        x = TaprootAddress.from_scripts([u, wl, escape], p.nums)
    elif tamper is TamperKind.SPENDABLE_INTERNAL_KEY:
        x = TaprootAddress.from_scripts([u, wl], p.pk("A", "EXTRA"))
    else:
        x = TaprootAddress.from_scripts([u, wl], p.nums)
    v_signed = v_true
    if tamper is TamperKind.BAD_V:
        v_signed = tapleaf_hash(script_u(pk_y, pad_user_input(b"a different input", pk_y)))

    ka_o1 = dag.output("K^A", 0)
    ins = [TxIn(dag.outpoint("K^A", 0))]
    spent = [ka_o1]
    outs = [TxOut(COMMIT_AMOUNT, x.script_pubkey)]
    if tamper is TamperKind.EXTRA_OUTPUT:
        outs.append(TxOut(HANDLE_AMOUNT - COMMIT_AMOUNT - PENALTY_FEE, key_address(p.pk("A", "EXTRA")).script_pubkey))
    if tamper is TamperKind.EXTRA_INPUT:
        if extra_coin is None:
            raise DagError("extra_input tamper needs an extra coin of Alice's")
        ins.append(TxIn(extra_coin[0]))
        spent.append(extra_coin[1])
    commit = Tx(tuple(ins), tuple(outs), 2, 0)
    annex = b"\x50" + b"unexpected annex" if tamper is TamperKind.WITH_ANNEX else None

    # W: Alice's signature of P^B_R, which spends this commit's first output
    pbr = build_pbr(dag, commit.txid)
    spent_pbr = pbr_spent(dag, outs[0])
    o2_leaf = dag.scripts["script_KA_O2_PBR"]
    if tamper is TamperKind.BAD_W:
        grafted = build_pbr(dag, hashlib.sha256(b"some other commit").digest())
        w_sig = sign_tapscript(alice.key("W"), grafted, 1, spent_pbr, o2_leaf)
    else:
        w_sig = sign_tapscript(alice.key("W"), pbr, 1, spent_pbr, o2_leaf)

    leaf = dag.scripts["script_KA_O1_CA"]
    s1_type = SIGHASH_ALL
    s2_type = SIGHASH_ALL if tamper is TamperKind.WRONG_SIGHASH else S2_HASH_TYPE
    s1 = sign_tapscript(alice.key("S1"), commit, 0, spent, leaf, s1_type, annex)
    s2 = sign_tapscript(alice.key("S2"), commit, 0, spent, leaf, s2_type, annex)
    o_v = alice.ot_sign("V", v_signed)
    o_w = alice.ot_sign("W", commit.txid + w_sig)
    gadgets = [
        ot_gadget_items(slot_params("V"), ot_slot_encode(v_signed, SLOT_CAPACITY["V"]), [o_v]),
        ot_gadget_items(slot_params("W"), ot_slot_encode(commit.txid + w_sig, SLOT_CAPACITY["W"]), [o_w]),
    ]
    stack = witness_for_gadgets(gadgets) + [s2, s1]
    commit = commit.with_input(0, witness=tapscript_witness(stack, dag.addresses["K^A:0"], leaf, annex))
    if tamper is TamperKind.EXTRA_INPUT:
        sig = sign_keypath(alice.key("EXTRA"), commit, 1, spent)
        commit = commit.with_input(1, witness=(sig,))

    reveal = _reveal(commit, x, u, alice, tamper, locktime=0)
    alt = _reveal(commit, x, u, alice, tamper, locktime=1) if tamper is TamperKind.GRIND_R else None
    return CommitReveal(commit, reveal, u, x, v_signed, w_sig, pbr, payload, tamper, alt, spent, annex)


def _reveal(commit: Tx, x: TaprootAddress, u: Script, alice: PartySecrets, tamper, locktime: int) -> Tx:
    outs = [DUMMY_OUTPUT]
    if tamper is TamperKind.BAD_R_TEMPLATE:
        outs.append(TxOut(COMMIT_AMOUNT // 2, key_address(alice.key("EXTRA").xonly).script_pubkey))
    r = Tx((TxIn(OutPoint(commit.txid, 0)),), tuple(outs), 2, locktime)
    spent = [commit.outputs[0]]
    y = sign_tapscript(alice.key("Y"), r, 0, spent, u, SIGHASH_ALL)
    return r.with_input(0, witness=tapscript_witness([y], x, u))


def sign_pbr(dag: DaDag, cr: CommitReveal, bob: PartySecrets) -> Tx:
    """Bob completes P^B_R with Q_2 (commit output) and Q_1 plus Alice's W (stop output)."""
    pbr = cr.pbr
    spent = pbr_spent(dag, cr.commit.outputs[0])
    wl = w_leaf(dag)
    o2_leaf = dag.scripts["script_KA_O2_PBR"]
    q2 = sign_tapscript(bob.key("Q2"), pbr, 0, spent, wl)
    q1 = sign_tapscript(bob.key("Q1"), pbr, 1, spent, o2_leaf)
    pbr = pbr.with_input(0, witness=tapscript_witness([q2], cr.x, wl))
    pbr = pbr.with_input(1, witness=tapscript_witness([cr.w_sig, q1], dag.addresses["K^A:1"], o2_leaf))
    return pbr


def kick_off_b1(dag: DaDag, v_signed: bytes, bob: PartySecrets, alice_ov) -> Tx:
    """K^B_1: continue with the primary instance, co-signing V."""
    o_b = bob.ot_sign("V", v_signed)
    items = ot_gadget_items(slot_params("V"), ot_slot_encode(v_signed, SLOT_CAPACITY["V"]), [alice_ov, o_b])
    return finalize(dag, "K^B_1", {0: items})


FRAUD_SLOTS = {
    1: ("F", "EC", "W", "S1", "S2"),
    2: ("F", "C'", "V"),
    3: ("F", "W", "S1", "C"),
    4: ("F", "RA'", "Y", "ER"),
}
SHARED_SLOTS = {"V", "W"}  # co-signed: Alice's OT signature comes from the commit witness


def kick_off_b2(dag: DaDag, index: int, values: dict[str, bytes], bob: PartySecrets,
                alice_sigs: dict | None = None) -> Tx:
    """K^B_2 through script_F(index): OT-sign each fraud input and assemble the witness."""
    alice_sigs = alice_sigs or {}
    gadgets = []
    for slot in FRAUD_SLOTS[index]:
        val = values[slot]
        enc = ot_slot_encode(val, SLOT_CAPACITY[slot])
        sigs = [bob.ot_sign(slot, val)]
        if slot in SHARED_SLOTS:
            if slot not in alice_sigs:
                raise DagError(f"Alice's OT signature for {slot} is required")
            sigs = [alice_sigs[slot]] + sigs
        gadgets.append(ot_gadget_items(slot_params(slot), enc, sigs))
    return finalize(dag, f"K^B_2({index})", {0: witness_for_gadgets(gadgets)})


# Program-input parser used by the primary program


class ProgramInputError(ValueError):
    pass


def parse_envelope_program_input(pi: bytes) -> bytes:
    """Extract the user input from M, rejecting any script that is not the exact envelope shape."""
    th = hashlib.sha256(b"TapLeaf").digest()
    if pi[:64] != th + th:
        raise ProgramInputError("tag prefix missing")
    if len(pi) < 66 or pi[64] != TAPSCRIPT_LEAF_VERSION:
        raise ProgramInputError("unexpected leaf version")
    from .tx import read_compact_size
    import io

    s = io.BytesIO(pi[65:])
    n = read_compact_size(s)
    raw = s.read()
    if len(raw) != n:
        raise ProgramInputError("script length mismatch")
    try:
        ops = Script(raw).ops()
    except Exception as e:
        raise ProgramInputError(f"unparsable script: {e}") from e
    shape = [(o.code if not o.is_push else "push") for o in ops]
    if shape != ["push", OP_CHECKSIGVERIFY, "push", OP_IF, "push", OP_ENDIF] or ops[2].data != b"" \
            or len(ops[0].data) != 32:
        raise ProgramInputError("script is not <pk> CHECKSIGVERIFY 0 IF <data> ENDIF")
    try:
        return unpad_user_input(ops[4].data)
    except DagError as e:
        raise ProgramInputError(str(e)) from e


# ECDSA / legacy-handle graph


def handle_redeem(params: DagParams) -> Script:
    a, b = params.alice_ecdsa, params.bob_ecdsa
    return Script.build([
        OP_IF, a["D"], OP_CHECKSIG,
        OP_ELSE, Num(params.T), OP_CHECKSEQUENCEVERIFY, OP_DROP,
        a["COV"], OP_CHECKSIGVERIFY, b["COV"], OP_CHECKSIGVERIFY,
        OP_ENDIF,
    ])


def ecdsa_scripts(params: DagParams) -> dict[str, Script]:
    cov = covenant_check(params.pk("A", "COV"), params.pk("B", "COV"))
    return {
        "script_KA_O2_CA": cov + ot_csigv([params.otpk("A", "V")]),
        "script_KA_O2_PBC": cseqv(params.T) + cov,
        "script_CA_O1_KB1": cov,
        "script_CA_O1_KB2": cov + ot_csigv([params.otpk("A", "V"), params.otpk("B", "V")])
        + ot_csigv([params.otpk("B", "S")]) + ot_csigv([params.otpk("B", "L")]),
    }


def build_ecdsa_dag(params: DagParams, funding: OutPoint) -> DaDag:
    s = ecdsa_scripts(params)
    redeem = handle_redeem(params)
    handle_spk = Script.p2sh(hash160(redeem.raw))
    o2 = TaprootAddress.from_scripts([s["script_KA_O2_CA"], s["script_KA_O2_PBC"]], params.nums)
    ka = _kick_off("K^A", params, funding, [TxOut(HANDLE_AMOUNT, handle_spk), TxOut(STOP_AMOUNT, o2.script_pubkey)])
    k = ka.txid
    ka_o1, ka_o2 = ka.tx.outputs
    c_addr = TaprootAddress.from_scripts([s["script_CA_O1_KB1"], s["script_CA_O1_KB2"]], params.nums)
    txs = {"K^A": ka}
    txs["C^A"] = _tpl("C^A", [TxIn(OutPoint(k, 1))], [TxOut(STOP_AMOUNT - PENALTY_FEE, c_addr.script_pubkey)],
                      [Spend("K^A", 1, "script_KA_O2_CA")], [ka_o2], [0])
    c = txs["C^A"].txid
    c_o1 = txs["C^A"].tx.outputs[0]
    bob_out = TxOut(STOP_AMOUNT - 2 * PENALTY_FEE, key_address(params.pk("B", "OUT")).script_pubkey)
    txs["P^B_C"] = _tpl("P^B_C", [TxIn(OutPoint(k, 1), sequence=params.T)], [burn_output(STOP_AMOUNT - PENALTY_FEE)],
                        [Spend("K^A", 1, "script_KA_O2_PBC")], [ka_o2], [0])
    txs["P^B_D"] = _tpl("P^B_D", [TxIn(OutPoint(k, 0), sequence=params.T)],
                        [burn_output(HANDLE_AMOUNT - PENALTY_FEE)], [Spend("K^A", 0, None)], [ka_o1], [0])
    txs["K^B_1"] = _tpl("K^B_1", [TxIn(OutPoint(c, 0))], [bob_out], [Spend("C^A", 0, "script_CA_O1_KB1")], [c_o1], [0])
    txs["K^B_2"] = _tpl("K^B_2", [TxIn(OutPoint(c, 0))], [bob_out], [Spend("C^A", 0, "script_CA_O1_KB2")], [c_o1], [0])
    return DaDag("ecdsa", params, txs, s, {"K^A:1": o2, "C^A:0": c_addr}, {"K^A:0": redeem}, funding=funding)


def build_data_tx(dag: DaDag, user_input: bytes, alice: PartySecrets, outputs: list[TxOut] | None = None) -> Tx:
    """D^A for the legacy handle: user input in an OP_RETURN output, Alice's ECDSA signature in scriptSig."""
    redeem = dag.redeem["K^A:0"]
    outs = outputs if outputs is not None else [TxOut(0, Script.op_return(user_input))]
    d = Tx((TxIn(dag.outpoint("K^A", 0)),), tuple(outs), 2, 0)
    sig = sign_legacy(alice.key("D"), d, 0, redeem)
    return d.with_input(0, script_sig=Script.build([sig, Num(1), redeem.raw]))


def data_program_input(dag: DaDag, d: Tx) -> bytes:
    """D': the legacy signed message of the data transaction; V must equal sha256(D')."""
    from .sighash import legacy_signed_message

    return legacy_signed_message(d, 0, dag.redeem["K^A:0"], SIGHASH_ALL)


def finalize_pbd(dag: DaDag) -> Tx:
    redeem = dag.redeem["K^A:0"]
    sa, sb = dag.covsigs[("P^B_D", 0)]
    return dag.tx("P^B_D").with_input(0, script_sig=Script.build([sb, sa, OP_0, redeem.raw]))


def ecdsa_commit(dag: DaDag, v_signed: bytes, alice: PartySecrets):
    """Pre-signed C^A with Alice's OT signature of V attached; returns (tx, O^A_V)."""
    o_v = alice.ot_sign("V", v_signed)
    items = ot_gadget_items(slot_params("V"), ot_slot_encode(v_signed, SLOT_CAPACITY["V"]), [o_v])
    return finalize(dag, "C^A", {0: items}), o_v


def ecdsa_kick_off_b2(dag: DaDag, v: bytes, s: bytes, l_val: bytes, o_v_alice, bob: PartySecrets) -> Tx:
    gadgets = [
        ot_gadget_items(slot_params("V"), ot_slot_encode(v, SLOT_CAPACITY["V"]), [o_v_alice, bob.ot_sign("V", v)]),
        ot_gadget_items(slot_params("S"), ot_slot_encode(s, SLOT_CAPACITY["S"]), [bob.ot_sign("S", s)]),
        ot_gadget_items(slot_params("L"), ot_slot_encode(l_val, SLOT_CAPACITY["L"]), [bob.ot_sign("L", l_val)]),
    ]
    return finalize(dag, "K^B_2", {0: witness_for_gadgets(gadgets)})


# Simple graph


def simple_scripts(params: DagParams) -> dict[str, Script]:
    return {
        "script_K_O1_DA": csigv(params.pk("A", "D")),
        "script_K_O1_PBD": cseqv(params.T) + covenant_check(params.pk("A", "COV"), params.pk("B", "COV")),
        "script_K_O2_cov": covenant_check(params.pk("A", "COV"), params.pk("B", "COV")),
    }


def build_simple_dag(params: DagParams, funding: OutPoint) -> DaDag:
    s = simple_scripts(params)
    o1 = TaprootAddress.from_scripts([s["script_K_O1_DA"], s["script_K_O1_PBD"]], params.nums)
    o2 = TaprootAddress.from_scripts([s["script_K_O2_cov"]], params.nums)
    k = _kick_off("K", params, funding, [TxOut(HANDLE_AMOUNT, o1.script_pubkey), TxOut(STOP_AMOUNT, o2.script_pubkey)])
    kid = k.txid
    txs = {"K": k}
    txs["P^B_D"] = _tpl(
        "P^B_D", [TxIn(OutPoint(kid, 0), sequence=params.T), TxIn(OutPoint(kid, 1))],
        [burn_output(HANDLE_AMOUNT + STOP_AMOUNT - PENALTY_FEE)],
        [Spend("K", 0, "script_K_O1_PBD"), Spend("K", 1, "script_K_O2_cov")], list(k.tx.outputs), [0, 1])
    txs["E^B"] = _tpl("E^B", [TxIn(OutPoint(kid, 1))],
                      [TxOut(CONTINUE_AMOUNT, key_address(params.pk("B", "OUT")).script_pubkey)],
                      [Spend("K", 1, "script_K_O2_cov")], [k.tx.outputs[1]], [0])
    return DaDag("simple", params, txs, s, {"K:0": o1, "K:1": o2}, funding=funding)


def presign_simple_kickoff(dag: DaDag, alice: PartySecrets) -> None:
    k = dag.txs["K"]
    k.tx = k.tx.with_input(0, witness=(sign_keypath(alice.key("FUND"), k.tx, 0, k.spent),))


def build_simple_data_tx(dag: DaDag, user_input: bytes, alice: PartySecrets) -> Tx:
    d = Tx((TxIn(dag.outpoint("K", 0)),), (TxOut(0, Script.op_return(user_input)),), 2, 0)
    spent = [dag.output("K", 0)]
    leaf = dag.scripts["script_K_O1_DA"]
    sig = sign_tapscript(alice.key("D"), d, 0, spent, leaf)
    return d.with_input(0, witness=tapscript_witness([sig], dag.addresses["K:0"], leaf))


def build_naive_envelope_dag(params: DagParams, funding: OutPoint) -> DaDag:
    """The straightforward commit/reveal extension of the simple graph.

    It cannot be built: the punishment for a missing reveal spends the commit
    output, so it must name the commit's txid, which does not exist until
    Alice creates the commit at runtime.
    """
    simple = build_simple_dag(params, funding)
    # C^A would spend K.o1; its txid depends on Alice's runtime choices, so
    # P^B_R (spending C^A.o1 after T) has no prevout to sign over.
    raise PrecreationError(
        "P^B_R cannot be pre-created: its first input spends C^A, whose transaction ID is unknown at setup "
        f"(K = {simple.tx('K').txid_hex})"
    )


def build_dag(variant: str, params: DagParams, funding: OutPoint) -> DaDag:
    builders = {"simple": build_simple_dag, "ecdsa": build_ecdsa_dag, "envelope": build_envelope_dag}
    try:
        return builders[variant](params, funding)
    except KeyError:
        raise DagError(f"unknown DAG variant {variant!r}") from None


def dag_json(dag: DaDag) -> str:
    return json.dumps(dag.to_json(), indent=2, sort_keys=True)
