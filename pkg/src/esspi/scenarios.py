"""End-to-end runs of honest and adversarial protocol executions on the simulated ledger."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache

from . import dag as D
from .cpu import make_spi, run_sections
from .dispute import ProverTamper, Workload, run_dispute
from .fraud import (
    FraudClaim,
    FraudContext,
    build_claims,
    evaluate,
    verify_secondary_ecdsa,
    view_commit,
)
from .hashcore import sha256
from .ledger import Ledger, verify_input
from .scriptvm import ot_slot_decode
from .tx import TxOut

DEFAULT_INPUT = b"block header batch #7: " + bytes(range(48)) + b" end"

SCENARIOS = (
    "honest", "C_MIS", "C_INV_OUT", "C_INV_SH", "C_INV_TT", "C_INV_IK", "C_INV_INP", "C_INV_ANNEX", "R_MIS",
    "R_INV", "R_INV_SCRIPT", "R_INV_V", "C_FR", "R_FR", "C_INV_W", "R_GRIND", "ECDSA_HONEST", "ECDSA_BAD_V",
)
ATTACK_VECTORS = SCENARIOS[1:14]

TAMPER_OF = {
    "C_INV_OUT": D.TamperKind.EXTRA_OUTPUT,
    "C_INV_SH": D.TamperKind.WRONG_SIGHASH,
    "C_INV_TT": D.TamperKind.WRONG_TAPTREE,
    "C_INV_IK": D.TamperKind.SPENDABLE_INTERNAL_KEY,
    "C_INV_INP": D.TamperKind.EXTRA_INPUT,
    "C_INV_ANNEX": D.TamperKind.WITH_ANNEX,
    "R_INV": D.TamperKind.BAD_R_TEMPLATE,
    "R_INV_SCRIPT": D.TamperKind.BAD_SCRIPT_U,
    "R_INV_V": D.TamperKind.BAD_V,
    "C_INV_W": D.TamperKind.BAD_W,
    "R_GRIND": D.TamperKind.GRIND_R,
}

# scenario -> (winner, winning path)
EXPECTED = {
    "honest": ("prover", "K^B_1"),
    "C_MIS": ("verifier", "P^B_C"),
    "C_INV_OUT": ("verifier", "K^B_2(1)"),
    "C_INV_SH": ("verifier", "K^B_2(1)"),
    "C_INV_TT": ("verifier", "K^B_2(1)"),
    "C_INV_IK": ("verifier", "K^B_2(1)"),
    "C_INV_INP": ("verifier", "K^B_2(1)"),
    "C_INV_ANNEX": ("verifier", "K^B_2(1)"),
    "R_MIS": ("verifier", "P^B_R"),
    "R_INV": ("verifier", "K^B_2(4)"),
    "R_INV_SCRIPT": ("verifier", "primary_halt"),
    "R_INV_V": ("verifier", "K^B_2(2)"),
    "C_FR": ("prover", "K^B_1"),
    "R_FR": ("prover", "K^B_1"),
    "C_INV_W": ("verifier", "K^B_2(3)"),
    "R_GRIND": ("verifier", "K^B_2(4)"),
    "ECDSA_HONEST": ("prover", "K^B_1"),
    "ECDSA_BAD_V": ("verifier", "K^B_2"),
}

_CPU_RE = re.compile(r"^CPU_TAMPER\((\w+),\s*(\d+)\)$")


class ScenarioError(ValueError):
    pass


@dataclass
class Report:
    scenario: str
    winner: str
    winning_path: str
    rounds: int
    vbytes: int
    ledger_state: str
    expected: tuple[str, str]
    detail: dict = field(default_factory=dict)
    transcript: list = field(default_factory=list)
    dispute_log: list = field(default_factory=list)
    ledger_dump: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (self.winner, self.winning_path) == tuple(self.expected)

    def transcript_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.transcript, sort_keys=True).encode()).hexdigest()

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario, "verdict": {"winner": self.winner, "ok": self.ok},
            "winning_path": self.winning_path, "rounds": self.rounds, "vbytes": self.vbytes,
            "ledger_state": self.ledger_state, "expected": {"winner": self.expected[0], "path": self.expected[1]},
            "detail": self.detail, "transcript_hash": self.transcript_hash(),
        }


@lru_cache(maxsize=16)
def setup_for(seed: int, T: int = D.DEFAULT_T, variant: str = "envelope") -> D.Setup:
    keys = D.ECDSA_OT_KEYS if variant == "ecdsa" else D.ENVELOPE_OT_KEYS
    return D.make_setup(f"scenario-seed-{seed}", T, keys)


class _Run:
    """Shared state of one scenario execution."""

    def __init__(self, name: str, seed: int, user_input: bytes, variant: str = "envelope"):
        self.name = name
        self.setup = setup_for(seed, variant=variant)
        self.p = self.setup.params
        self.alice, self.bob = self.setup.alice, self.setup.bob
        self.ui = user_input
        self.ledger = Ledger()
        fund = self.ledger.fund(D.funding_output(self.p), "alice funding")
        self.dag = D.build_dag(variant, self.p, fund)
        D.presign_covenants(self.dag, self.alice, self.bob)
        self.T = self.p.T
        self.notes: dict = {}

    def submit(self, tx, label: str, expect: bool = True):
        res = self.ledger.submit(tx, label)
        if expect and not res.accepted:
            raise ScenarioError(f"{self.name}: {label} rejected: {res.reason}")
        return res

    def vbytes(self) -> int:
        return sum(tx.vsize for tx, _ in self.ledger.confirmed.values())

    def report(self, winner: str, path: str, rounds: int = 0, dispute_log=None, **detail) -> Report:
        transcript = list(self.ledger.history)
        if dispute_log:
            transcript += dispute_log
        return Report(self.name, winner, path, rounds, self.vbytes(), self.ledger.state_hash(),
                      EXPECTED.get(self.name, ("verifier", "dispute")), {**self.notes, **detail}, transcript,
                      list(dispute_log or ()), self.ledger.dump())


def _decode_claim(run: _Run, kb2, index: int, extras: dict) -> FraudClaim:
    spent = [run.dag.output("K^A", 1)]
    res = verify_input(kb2, 0, spent, run.ledger.age(kb2.inputs[0].prevout))
    slots = [ot_slot_decode(m) for m in res.ot_messages]
    return FraudClaim.from_slots(dict(zip(D.FRAUD_SLOTS[index], slots)), extras)


def _primary_instance(run: _Run, cr: D.CommitReveal, tamper: ProverTamper | None = None, step: int = 0):
    """Section A hashes the program input against V; section B extracts the user input."""
    pi = cr.program_input
    try:
        ui = D.parse_envelope_program_input(pi)
    except D.ProgramInputError as e:
        return "verifier", "primary_halt", 0, None, {"halt_reason": str(e)}
    spi = make_spi(cr.v_signed, len(pi), pi[:8])
    wl = Workload(pi, spi, run_sections(pi, spi, max_steps=1).ab)
    res = run_dispute(wl, tamper, step)
    return res.winner, "K^B_1" if res.winner == "prover" else "dispute", res.rounds, res.log, {
        "user_input": ui.hex(), "dispute": res.as_dict()}


def _open_commit(run: _Run, tamper=None):
    """K^A confirmed, then Alice publishes C^A (and R^A) for the user input."""
    run.submit(run.dag.tx("K^A"), "K^A")
    run.ledger.mine(1)
    extra = None
    spent = [run.dag.output("K^A", 0)]
    if tamper is D.TamperKind.EXTRA_INPUT:
        out = TxOut(5_000, D.key_address(run.p.pk("A", "EXTRA")).script_pubkey)
        extra = (run.ledger.fund(out, "alice extra coin"), out)
        spent.append(out)
    cr = D.instantiate_commit_reveal(run.dag, run.ui, run.alice, tamper, extra)
    return cr, spent


def _continue(run: _Run, cr: D.CommitReveal, **kw) -> Report:
    cv = view_commit(cr.commit, cr.commit_spent)
    o_v = cv.alice_ot_sigs()["V"]
    kb1 = D.kick_off_b1(run.dag, cv.v, run.bob, o_v)
    run.submit(kb1, "K^B_1")
    run.ledger.mine(1)
    winner, path, rounds, log, detail = _primary_instance(run, cr, **kw)
    return run.report(winner, path, rounds, log, **detail)


def _envelope(run: _Run, tamper: D.TamperKind | None) -> Report:
    cr, spent = _open_commit(run, tamper)
    run.submit(cr.commit, "C^A")
    run.ledger.mine(1)
    run.submit(cr.reveal, "R^A")
    if cr.reveal_alt is not None:
        res = run.ledger.replace(cr.reveal.txid, cr.reveal_alt, "R^A'")
        if not res.accepted:
            raise ScenarioError(f"replacement rejected: {res.reason}")
    run.ledger.mine(1)
    # Bob gathers every reveal he saw, confirmed or replaced
    reveals = [tx for tx in run.ledger.observed.values()
               if tx.inputs and tx.inputs[0].prevout.txid == cr.commit.txid and len(tx.inputs[0].witness) == 3]
    ctx = FraudContext.from_dag(run.dag)
    claims = build_claims(ctx, cr.commit, spent, reveals)
    cv = view_commit(cr.commit, spent)
    for name, claim in claims.items():
        if not evaluate(ctx, claim).verifier_wins:
            continue
        kb2 = D.kick_off_b2(run.dag, claim.index, claim.slot_values(), run.bob, cv.alice_ot_sigs())
        onchain = _decode_claim(run, kb2, claim.index, claim.extras)
        run.submit(kb2, f"K^B_2({claim.index})")
        run.ledger.mine(1)
        verdict = evaluate(ctx, onchain)
        run.notes["challenge"] = name
        run.notes["fraud_verdict"] = verdict.as_dict()
        return run.report(verdict.winner, f"K^B_2({claim.index})", 1)
    run.notes["challenges"] = "none applicable"
    return _continue(run, cr)


def _c_mis(run: _Run) -> Report:
    run.submit(run.dag.tx("K^A"), "K^A")
    run.ledger.mine(1)
    pbc = D.finalize(run.dag, "P^B_C")
    early = run.submit(pbc, "P^B_C", expect=False)
    run.notes["early_penalty"] = early.reason
    run.ledger.mine(run.T)
    run.submit(pbc, "P^B_C")
    run.ledger.mine(1)
    return run.report("verifier", "P^B_C")


def _r_mis(run: _Run) -> Report:
    cr, _ = _open_commit(run)
    run.submit(cr.commit, "C^A")
    run.ledger.mine(1)
    pbr = D.sign_pbr(run.dag, cr, run.bob)
    run.notes["early_penalty"] = run.submit(pbr, "P^B_R", expect=False).reason
    run.ledger.mine(run.T)
    run.submit(pbr, "P^B_R")
    run.ledger.mine(1)
    return run.report("verifier", "P^B_R")


def _c_fr(run: _Run) -> Report:
    cr, _ = _open_commit(run)
    run.ledger.mine(run.T)
    # Alice's late commit reaches the mempool just before Bob's penalty
    run.submit(cr.commit, "C^A")
    pbc = run.submit(D.finalize(run.dag, "P^B_C"), "P^B_C", expect=False)
    run.notes["penalty_rejected"] = pbc.reason
    run.ledger.mine(1)
    run.submit(cr.reveal, "R^A")
    run.ledger.mine(1)
    return _continue(run, cr)


def _r_fr(run: _Run) -> Report:
    cr, _ = _open_commit(run)
    run.submit(cr.commit, "C^A")
    run.ledger.mine(run.T)
    run.submit(cr.reveal, "R^A")
    pbr = run.submit(D.sign_pbr(run.dag, cr, run.bob), "P^B_R", expect=False)
    run.notes["penalty_rejected"] = pbr.reason
    run.ledger.mine(1)
    return _continue(run, cr)


def _ecdsa(run: _Run, bad_v: bool) -> Report:
    dag = run.dag
    run.submit(dag.tx("K^A"), "K^A")
    run.ledger.mine(1)
    d = D.build_data_tx(dag, run.ui, run.alice)
    run.submit(d, "D^A")
    run.ledger.mine(1)
    v_true = sha256(D.data_program_input(dag, d))
    v = sha256(b"not the data transaction") if bad_v else v_true
    ca, o_v = D.ecdsa_commit(dag, v, run.alice)
    run.submit(ca, "C^A")
    run.ledger.mine(1)
    # Bob recomputes L from D^A and takes Alice's signature S from its scriptSig
    l_val = sha256(D.data_program_input(dag, d))
    s = d.inputs[0].script_sig.ops()[0].data
    verdict = verify_secondary_ecdsa(v, s, l_val, run.p.alice_ecdsa["D"])
    run.notes["secondary_verdict"] = verdict.as_dict()
    if verdict.verifier_wins:
        kb2 = D.ecdsa_kick_off_b2(dag, v, s, l_val, o_v, run.bob)
        run.submit(kb2, "K^B_2")
        run.ledger.mine(1)
        return run.report("verifier", "K^B_2", 1)
    run.submit(D.finalize(dag, "K^B_1"), "K^B_1")
    run.ledger.mine(1)
    pbd = run.submit(D.finalize_pbd(dag), "P^B_D", expect=False)
    run.notes["late_penalty"] = pbd.reason
    return run.report("prover", "K^B_1")


def _cpu_tamper(run: _Run, kind: ProverTamper, step: int) -> Report:
    cr, _ = _open_commit(run)
    run.submit(cr.commit, "C^A")
    run.ledger.mine(1)
    run.submit(cr.reveal, "R^A")
    run.ledger.mine(1)
    return _continue(run, cr, tamper=kind, step=step)


def parse_scenario(name: str) -> tuple[str, ProverTamper | None, int]:
    m = _CPU_RE.match(name.strip())
    if m:
        try:
            return "CPU_TAMPER", ProverTamper(m.group(1)), int(m.group(2))
        except ValueError:
            raise ScenarioError(f"unknown CPU tamper {m.group(1)!r}") from None
    if name not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {name!r}")
    return name, None, 0


def run_scenario(name: str, seed: int = 0, user_input: bytes | None = None) -> Report:
    base, kind, step = parse_scenario(name)
    ui = DEFAULT_INPUT if user_input is None else user_input
    if base.startswith("ECDSA"):
        run = _Run(name, seed, ui, "ecdsa")
        return _ecdsa(run, base == "ECDSA_BAD_V")
    run = _Run(name, seed, ui)
    if base == "CPU_TAMPER":
        return _cpu_tamper(run, kind, step)
    if base == "C_MIS":
        return _c_mis(run)
    if base == "R_MIS":
        return _r_mis(run)
    if base == "C_FR":
        return _c_fr(run)
    if base == "R_FR":
        return _r_fr(run)
    return _envelope(run, TAMPER_OF.get(base))


def naive_envelope_error(seed: int = 0) -> str:
    """The commit/reveal graph without pre-signed commit output cannot be set up."""
    s = setup_for(seed)
    led = Ledger()
    try:
        D.build_naive_envelope_dag(s.params, led.fund(D.funding_output(s.params)))
    except D.PrecreationError as e:
        return str(e)
    raise AssertionError("naive construction unexpectedly succeeded")  # pragma: no cover
