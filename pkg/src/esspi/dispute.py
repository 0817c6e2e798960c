"""Prover/verifier dispute over a committed execution trace.

The prover commits to the final step hash of its run and to the midstate at
the input-check boundary AB.  A verifier that disagrees runs a k-ary
partition search for the first step ``r`` whose step hash it disputes, has
the prover reveal the trace records at ``r - 1`` and ``r``, then routes the
challenge by opcode:

* ``r >= AB`` or an ordinary opcode: a referee re-executes the step.
* a hashing opcode: the prover must open (MIB_{r-1}, MEB_r, MIB_r) so that one
  compression maps the first to the last, and every word of MEB_r must equal
  the value last written to it.
* an LSSW: the word it read cannot be checked directly, so the prover names
  the next hashing step ``x``, the same two checks run there, and if they pass
  the verifier searches the midstates between ``x`` and AB for the step ``z``
  where a wrong midstate turns into a right one.  The prover must then show a
  block compressing MIB_z into MIB_{z+1}.

Every prover payload is one-time signed; signing two values for one slot
loses immediately.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache

from .cpu import (
    HASH_OPS,
    MEB_BASE,
    MEB_LEN,
    OP_LSSW,
    STEP_HASH_SEED,
    FullTraceRecord,
    RunResult,
    make_spi,
    meb_offset,
    opcode_of,
    referee_step,
    replay_to,
    run_sections,
    step_hash,
    step_hash_chain,
)
from .hashcore import IV, Midstate, owcf_compress, sha256
from .ots import OtParams, ot_keygen, ot_sign, ot_verify

PROVER = "prover"
VERIFIER = "verifier"


class ProtocolBroken(RuntimeError):
    """A cheating prover answered a challenge that should be infeasible."""


class ProverTamper(str, enum.Enum):
    WRITE_VALUE = "write_value"
    WRITE_ADDR = "write_addr"
    PC_NEXT = "pc_next"
    MIB = "mib"
    LSSW_LIE = "lssw_lie"
    MEB_CLAIM = "meb_claim"
    MIB_MUTATION = "mib_mutation"
    INCONSISTENT_REVEAL = "inconsistent_reveal"
    EQUIVOCATE = "equivocate"
    STOP_RESPONDING = "stop_responding"


FIELD_TAMPERS = (ProverTamper.WRITE_VALUE, ProverTamper.WRITE_ADDR, ProverTamper.PC_NEXT, ProverTamper.MIB)


@dataclass(frozen=True)
class DisputeConfig:
    arity: int = 2
    timeout: int = 6  # blocks each party has to answer
    sign: bool = True

    def __post_init__(self) -> None:
        if self.arity < 2:
            raise ValueError("arity must be at least 2")


# Workloads


@dataclass(frozen=True)
class Workload:
    upi: bytes
    spi: bytes
    ab: int

    @property
    def v(self) -> bytes:
        return self.spi[:32]


def make_workload(upi: bytes, header_words: int = 2, spin: int = 0) -> Workload:
    spi = make_spi(sha256(upi), len(upi), upi[: 4 * header_words], spin)
    return Workload(upi, spi, run_sections(upi, spi, max_steps=1).ab)


def workload_for_steps(n_steps: int, upi_len: int = 64, seed: int = 0) -> Workload:
    """A workload whose honest run is exactly ``n_steps`` long (spin loop padding)."""
    upi = random.Random(seed).randbytes(upi_len)
    base = _honest_run(make_workload(upi, spin=0)).n
    extra = n_steps - base
    if extra < 0 or extra % 3:
        # each spin iteration costs three steps; tweak header length to fix the residue
        for hw in range(0, 4):
            wl = make_workload(upi, header_words=hw, spin=0)
            b = _honest_run(wl).n
            if n_steps >= b and (n_steps - b) % 3 == 0:
                wl = make_workload(upi, header_words=hw, spin=(n_steps - b) // 3)
                assert _honest_run(wl).n == n_steps
                return wl
        raise ValueError(f"cannot hit exactly {n_steps} steps with a {upi_len}-byte input")
    wl = make_workload(upi, spin=extra // 3)
    assert _honest_run(wl).n == n_steps
    return wl


@lru_cache(maxsize=64)
def _honest_run(wl: Workload) -> RunResult:
    return run_sections(wl.upi, wl.spi)


# Trace sources


def reconstruct_meb(records: list[FullTraceRecord], upto: int) -> bytes:
    """MEB contents right before step ``upto``, rebuilt from the recorded writes."""
    meb = bytearray(MEB_LEN)
    for rec in records[:upto]:
        t = rec.trace
        if opcode_of(t.opcode) == OP_LSSW:
            o = meb_offset(t.write_addr)
        elif MEB_BASE <= t.write_addr < MEB_BASE + MEB_LEN:
            o = t.write_addr - MEB_BASE
        else:
            continue
        meb[o:o + 4] = t.write_value.to_bytes(4, "little")
    return bytes(meb)


def last_meb_write(records: list[FullTraceRecord], upto: int, word: int) -> int | None:
    for i in range(upto - 1, -1, -1):
        t = records[i].trace
        if opcode_of(t.opcode) == OP_LSSW and meb_offset(t.write_addr) == 4 * word:
            return i
        if t.write_addr == MEB_BASE + 4 * word and opcode_of(t.opcode) != OP_LSSW:
            return i
    return None


def _midstate(b: bytes) -> Midstate:
    return Midstate.from_digest(b)


@dataclass
class TraceSource:
    """A party's view of the execution: records and step hashes."""

    records: list[FullTraceRecord]
    hashes: list[bytes]
    ab: int

    @property
    def n(self) -> int:
        return len(self.records)

    def hash_at(self, i: int) -> bytes:
        return STEP_HASH_SEED if i < 0 else self.hashes[i]

    def mib(self, i: int) -> bytes:
        return IV.digest() if i < 0 else self.records[i].trace.mib

    def meb_before(self, i: int) -> bytes:
        return reconstruct_meb(self.records, i)

    def next_hash_step(self, r: int) -> int | None:
        for i in range(r + 1, min(self.ab, self.n)):
            if opcode_of(self.records[i].trace.opcode) in HASH_OPS:
                return i
        return None

    @classmethod
    def from_records(cls, records: list[FullTraceRecord], ab: int) -> "TraceSource":
        return cls(records, step_hash_chain([r.trace for r in records]), ab)


def honest_source(wl: Workload) -> TraceSource:
    run = _honest_run(wl)
    return TraceSource(list(run.records), list(run.step_hashes), run.ab)


def _set(rec: FullTraceRecord, **kw) -> FullTraceRecord:
    return rec.with_trace(**kw)


def _flip(b: bytes) -> bytes:
    return bytes([b[0] ^ 1]) + b[1:]


def tampered_records(wl: Workload, kind: ProverTamper, s: int) -> tuple[list[FullTraceRecord], int]:
    """Prover records carrying one deliberate fault, and the step where it starts."""
    hon = _honest_run(wl)
    recs = list(hon.records)
    n, ab = len(recs), hon.ab
    s = max(0, min(s, n - 1))
    if kind in (ProverTamper.WRITE_VALUE, ProverTamper.INCONSISTENT_REVEAL, ProverTamper.EQUIVOCATE,
                ProverTamper.STOP_RESPONDING):
        recs[s] = _set(recs[s], write_value=recs[s].trace.write_value ^ 1)
    elif kind is ProverTamper.WRITE_ADDR:
        recs[s] = _set(recs[s], write_addr=recs[s].trace.write_addr ^ 4)
    elif kind is ProverTamper.PC_NEXT:
        recs[s] = _set(recs[s], pc_next=recs[s].trace.pc_next ^ 4)
    elif kind is ProverTamper.MIB:
        recs[s] = _set(recs[s], mib=_flip(recs[s].trace.mib))
    elif kind is ProverTamper.MIB_MUTATION:
        cands = [i for i in range(ab) if opcode_of(recs[i].trace.opcode) not in HASH_OPS]
        s = min(cands, key=lambda i: (abs(i - s), i))
        recs[s] = _set(recs[s], mib=_flip(recs[s].trace.mib))
    elif kind is ProverTamper.LSSW_LIE:
        s = _nearest(recs, s, ab, {OP_LSSW})
        recs = _run_with_lie(wl, recs, s)
    elif kind is ProverTamper.MEB_CLAIM:
        s = _nearest(recs, s, ab, HASH_OPS)
        recs = _run_with_bad_block(wl, recs, s)
    else:  # pragma: no cover
        raise ValueError(kind)
    return recs, s


def _nearest(recs, s, ab, ops) -> int:
    cands = [i for i in range(ab) if opcode_of(recs[i].trace.opcode) in ops]
    return min(cands, key=lambda i: (abs(i - s), i))


def _patch_tail_mibs(recs: list[FullTraceRecord], hon: list[FullTraceRecord], ab: int) -> list[FullTraceRecord]:
    """Claim the honest midstate from the last hashing step on, so MIB at AB still equals V."""
    last = max(i for i in range(ab) if opcode_of(hon[i].trace.opcode) in HASH_OPS)
    return recs[:last] + [_set(r, mib=h.trace.mib) for r, h in zip(recs[last:], hon[last:])]


def _run_with_lie(wl: Workload, hon: list[FullTraceRecord], s: int) -> list[FullTraceRecord]:
    """Execute with one UPI word changed at LSSW step ``s``, then hide it at the boundary."""
    addr = hon[s].read1_addr
    off = addr - 0x00100000
    upi = bytearray(wl.upi)
    upi[off] ^= 1
    run = run_sections(bytes(upi), wl.spi, wl.ab, strict_icm=False)
    recs = list(hon[:s]) + list(run.records[s:])
    if len(recs) != len(hon):
        recs = (recs + hon[len(recs):])[: len(hon)]
    return _patch_tail_mibs(recs, hon, wl.ab)


def bad_block(recs: list[FullTraceRecord], x: int) -> bytes:
    meb = bytearray(reconstruct_meb(recs, x))
    meb[0] ^= 1
    return bytes(meb)


def _run_with_bad_block(wl: Workload, hon: list[FullTraceRecord], x: int) -> list[FullTraceRecord]:
    """Hash a block differing in one word at step ``x`` and carry the wrong midstate forward."""
    meb = bad_block(hon, x)
    mib = owcf_compress(_midstate(hon[x - 1].trace.mib if x else IV.digest()), bytes(meb))
    recs = list(hon[:x])
    cur = mib
    for i in range(x, len(hon)):
        t = hon[i].trace
        if i > x and opcode_of(t.opcode) in HASH_OPS and i < wl.ab:
            cur = owcf_compress(cur, reconstruct_meb(hon, i))
        recs.append(_set(hon[i], mib=cur.digest()))
    last = max(i for i in range(wl.ab) if opcode_of(hon[i].trace.opcode) in HASH_OPS)
    return recs if x == last else _patch_tail_mibs(recs, hon, wl.ab)


# One-time signing of prover payloads


class Signer:
    def __init__(self, seed: bytes, enabled: bool = True):
        self.seed = seed
        self.enabled = enabled
        self.params = OtParams()
        self.used: dict[str, bytes] = {}

    def _keys(self, slot: str):
        return ot_keygen(self.params, hashlib.sha256(self.seed + slot.encode()).digest())

    def sign(self, slot: str, payload: bytes) -> bytes:
        if not self.enabled:
            return b""
        sk, _ = self._keys(slot)
        return ot_sign(sk, sha256(payload)).to_bytes()

    def verify(self, slot: str, payload: bytes, sig: bytes) -> bool:
        if not self.enabled:
            return True
        from .ots import OtSignature

        _, pk = self._keys(slot)
        try:
            return ot_verify(pk, sha256(payload), OtSignature.from_bytes(sig))
        except Exception:
            return False


# Parties


class Prover:
    """Answers from its (possibly tampered) records; ``kind`` adds protocol-level misbehaviour."""

    def __init__(self, src: TraceSource, kind: ProverTamper | None = None, honest: TraceSource | None = None,
                 stop_after: int = 2):
        self.src = src
        self.kind = kind
        self.honest = honest
        self.stop_after = stop_after
        self.answers = 0
        self.meb_override: dict[int, bytes] = {}

    def _tick(self) -> bool:
        self.answers += 1
        return self.kind is ProverTamper.STOP_RESPONDING and self.answers > self.stop_after

    def step_hashes(self, idx: list[int]) -> list[bytes] | None:
        if self._tick():
            return None
        return [self.src.hash_at(i) for i in idx]

    def reveal(self, i: int) -> FullTraceRecord | None:
        if self._tick():
            return None
        if self.kind is ProverTamper.INCONSISTENT_REVEAL and self.honest is not None and i >= 0:
            return self.honest.records[i]
        return self.src.records[i]

    def next_hash(self, r: int) -> int | None:
        if self._tick():
            return None
        return self.src.next_hash_step(r)

    def owcf_open(self, x: int) -> tuple[bytes, bytes, bytes] | None:
        if self._tick():
            return None
        return self.src.mib(x - 1), self.meb_override.get(x) or self.src.meb_before(x), self.src.mib(x)

    def mib_claim(self, z: int) -> bytes | None:
        if self._tick():
            return None
        return self.src.mib(z)

    def preimage(self, z: int) -> bytes | None:
        if self._tick():
            return None
        return self.src.meb_before(z + 1)


class Verifier:
    """Honest verifier: decides from its own correct trace."""

    adversarial = False

    def __init__(self, src: TraceSource, v: bytes):
        self.src = src
        self.v = v

    def disputes(self, final_hash: bytes, n: int) -> bool:
        return n != self.src.n or final_hash != self.src.hash_at(self.src.n - 1)

    def pick(self, points: list[int], claims: list[bytes]) -> int:
        """Index of the first point whose claimed hash is wrong (len(points) if none)."""
        for k, (i, h) in enumerate(zip(points, claims)):
            if h != self.src.hash_at(i):
                return k
        return len(points)

    def mib_wrong(self, z: int, claim: bytes) -> bool:
        return claim != self.src.mib(z)

    def action(self, r: int, rec: FullTraceRecord, prev: FullTraceRecord | None, ab: int) -> str:
        op = opcode_of(rec.trace.opcode)
        if r >= ab:
            return "referee"
        prev_mib = prev.trace.mib if prev is not None else IV.digest()
        if op in HASH_OPS:
            return "hash"
        if op == OP_LSSW:
            return "lssw"
        return "mutation" if rec.trace.mib != prev_mib else "referee"

    def meb_word(self, claimed: bytes, x: int, records: list[FullTraceRecord]) -> int:
        truth = self.src.meb_before(x)
        for w in range(16):
            if claimed[4 * w: 4 * w + 4] != truth[4 * w: 4 * w + 4]:
                return w
        return 0


class AdversarialVerifier(Verifier):
    """Disputes everything and makes random choices; must never beat an honest prover."""

    adversarial = True

    def __init__(self, src: TraceSource, v: bytes, rng: random.Random):
        super().__init__(src, v)
        self.rng = rng

    def disputes(self, final_hash: bytes, n: int) -> bool:
        return True

    def pick(self, points, claims) -> int:
        return self.rng.randrange(len(points) + 1)

    def mib_wrong(self, z, claim) -> bool:
        return self.rng.random() < 0.5

    def action(self, r, rec, prev, ab) -> str:
        return self.rng.choice(["referee", "hash", "lssw", "mutation"])

    def meb_word(self, claimed, x, records) -> int:
        return self.rng.randrange(16)


# Session


@dataclass
class DisputeResult:
    winner: str
    reason: str
    rounds: int
    r: int | None = None
    x: int | None = None
    z: int | None = None
    log: list[dict] = field(default_factory=list)

    def transcript_hash(self) -> str:
        h = hashlib.sha256()
        for line in self.log:
            h.update(json.dumps(line, sort_keys=True).encode())
        return h.hexdigest()

    def as_dict(self) -> dict:
        return {"winner": self.winner, "reason": self.reason, "rounds": self.rounds, "r": self.r, "x": self.x,
                "z": self.z, "transcript_hash": self.transcript_hash()}


def round_bound(n: int, ab: int, x: int | None = None) -> int:
    span = max(ab - (x if x is not None else 0), 1)
    return math.ceil(math.log2(max(n, 2))) + math.ceil(math.log2(max(span, 2))) + 6


class _Done(Exception):
    def __init__(self, winner: str, reason: str):
        self.winner, self.reason = winner, reason


class DisputeSession:
    def __init__(self, prover: Prover, verifier: Verifier, ab: int, v: bytes, reference: TraceSource,
                 config: DisputeConfig = DisputeConfig(), seed: bytes = b"dispute"):
        self.p = prover
        self.vf = verifier
        self.ab = ab
        self.v = v
        self.ref = reference  # state the referee re-executes from (reconstructible from the agreed prefix)
        self.cfg = config
        self.signer = Signer(seed, config.sign)
        self.signed: dict[str, bytes] = {}
        self.rounds = 0
        self.log: list[dict] = []
        self.r = self.x = self.z = None
        self.lo: int = -1
        self.hi: int = -1

    # plumbing

    def _log(self, actor: str, kind: str, **payload) -> None:
        entry = {"round": self.rounds, "actor": actor, "kind": kind}
        for k, v in payload.items():
            entry[k] = v.hex() if isinstance(v, bytes) else v
        self.log.append(entry)

    def _prover_says(self, slot: str, value: bytes | None, kind: str) -> bytes:
        if value is None:
            self._log(PROVER, "timeout", slot=slot, deadline=self.cfg.timeout)
            raise _Done(VERIFIER, f"timeout: prover did not answer {kind}")
        sig = self.signer.sign(slot, value)
        if not self.signer.verify(slot, value, sig):
            raise _Done(VERIFIER, "unsigned payload")
        prev = self.signed.get(slot)
        self._log(PROVER, kind, slot=slot, value_hash=sha256(value), sig_hash=sha256(sig) if sig else b"")
        if prev is not None and prev != value:
            raise _Done(VERIFIER, f"equivocation on {slot}")
        self.signed[slot] = value
        return value

    def _round(self) -> None:
        self.rounds += 1

    # protocol

    def run(self) -> DisputeResult:
        try:
            self._run()
        except _Done as d:
            self._log("referee", "verdict", winner=d.winner, reason=d.reason)
            return DisputeResult(d.winner, d.reason, self.rounds, self.r, self.x, self.z, self.log)
        raise AssertionError("dispute ended without verdict")  # pragma: no cover

    def _run(self) -> None:
        n = self.p.src.n
        final = self._prover_says(f"H[{n - 1}]", self.p.src.hash_at(n - 1), "commit_final")
        mib_ab = self._prover_says("MIB_AB", self.p.src.mib(self.ab - 1), "commit_boundary")
        if not self.vf.disputes(final, n):
            raise _Done(PROVER, "no challenge before timeout")
        if mib_ab != self.v:
            raise _Done(VERIFIER, "midstate at the boundary is not V")
        r = self.partition_search(n)
        self.r = r
        prev, rec = self.reveal(r)
        self.dispatch(r, rec, prev)

    def partition_search(self, n: int) -> int:
        lo, hi = -1, n - 1
        k = self.cfg.arity
        while hi - lo > 1:
            self._round()
            span = hi - lo
            pts = sorted({lo + max(1, (span * j) // k) for j in range(1, k)} - {hi})
            pts = [p for p in pts if lo < p < hi]
            if self.p.kind is ProverTamper.EQUIVOCATE and self.rounds == 2:
                # re-sign an already committed index with a different value
                self._prover_says(f"H[{hi}]", _flip(self.p.src.hash_at(hi)), "partition_reply")
            self._log(VERIFIER, "partition_query", points=pts)
            claims = self.p.step_hashes(pts)
            if claims is None:
                self._prover_says("H?", None, "partition_reply")
            for p, h in zip(pts, claims):
                self._prover_says(f"H[{p}]", h, "partition_reply")
            j = self.vf.pick(pts, claims)
            lo = pts[j - 1] if j > 0 else lo
            hi = pts[j] if j < len(pts) else hi
            self.lo, self.hi = lo, hi
        return hi

    def reveal(self, r: int):
        self._round()
        self._log(VERIFIER, "trace_query", step=r)
        rec = self.p.reveal(r)
        self._prover_says(f"T[{r}]", rec.serialize() if rec else None, "trace_reveal")
        h_prev = STEP_HASH_SEED if r == 0 else self.signed[f"H[{r - 1}]"]
        if step_hash(h_prev, rec.trace) != self.signed[f"H[{r}]"]:
            raise _Done(VERIFIER, "revealed trace does not match its step hash")
        prev = None
        if r > 0:
            prev = self.p.reveal(r - 1)
            self._prover_says(f"T[{r - 1}]", prev.serialize() if prev else None, "trace_reveal")
            h2 = self.p.step_hashes([r - 2])
            self._prover_says(f"H[{r - 2}]", h2[0] if h2 else None, "trace_reveal")
            if step_hash(h2[0], prev.trace) != h_prev:
                raise _Done(VERIFIER, "revealed trace does not match its step hash")
        return prev, rec

    def dispatch(self, r: int, rec: FullTraceRecord, prev: FullTraceRecord | None) -> None:
        act = self.vf.action(r, rec, prev, self.ab)
        self._log(VERIFIER, "challenge", action=act, step=r)
        self._round()
        op = opcode_of(rec.trace.opcode)
        prev_mib = prev.trace.mib if prev is not None else IV.digest()
        if act == "referee":
            self.referee(r, rec)
        elif act == "mutation":
            if op not in HASH_OPS and r < self.ab and rec.trace.mib != prev_mib:
                raise _Done(VERIFIER, "midstate changed under a non-hashing opcode")
            raise _Done(PROVER, "midstate-mutation challenge failed")
        elif act == "hash":
            if op not in HASH_OPS or r >= self.ab:
                raise _Done(PROVER, "hash challenge on a non-hashing step")
            self.x = r
            self.referee(r, rec, ignore=("mib",), final=False)
            meb = self.owcf(r)
            self.meb_write(r, meb, word=None)
            raise _Done(PROVER, "hash step consistent")
        elif act == "lssw":
            if op != OP_LSSW or r >= self.ab:
                raise _Done(PROVER, "LSSW challenge on another opcode")
            if rec.trace.mib != prev_mib:
                raise _Done(VERIFIER, "midstate changed under LSSW")
            self.referee(r, rec, ignore=("write_value",), final=False)
            self._round()
            self._log(VERIFIER, "x_query", step=r)
            x = self.p.next_hash(r)
            self._prover_says("x", None if x is None else x.to_bytes(4, "big"), "x_reply")
            if x is None or not r < x < self.ab:
                raise _Done(VERIFIER, "no hashing step after the LSSW")
            self.x = x
            meb = self.owcf(x)
            self.meb_write(x, meb, word=meb_offset(rec.read1_addr) // 4, writer=r, writer_rec=rec)
            self.midstate_search(x)
        else:  # pragma: no cover
            raise _Done(PROVER, "unknown challenge")

    def referee(self, r: int, rec: FullTraceRecord, ignore: tuple = (), final: bool = True) -> None:
        pre = replay_to(self.ref_upi, self.ref_spi, self.ab, r)
        truth = referee_step(pre)
        fields = ("write_addr", "write_value", "pc_next", "mib", "opcode", "flags")
        bad = [f for f in fields if f not in ignore and getattr(truth.trace, f) != getattr(rec.trace, f)]
        self._log("referee", "reexecute", step=r, mismatched=bad)
        if bad:
            raise _Done(VERIFIER, f"referee re-execution mismatch in {', '.join(bad)}")
        if final:
            raise _Done(PROVER, "step re-executes correctly")

    def owcf(self, x: int) -> bytes:
        self._round()
        self._log(VERIFIER, "owcf_challenge", step=x)
        opened = self.p.owcf_open(x)
        if opened is None:
            self._prover_says("OWCF", None, "owcf_open")
        before, meb, after = opened
        self._prover_says(f"MIB[{x - 1}]", before, "owcf_open")
        self._prover_says(f"MEB[{x}]", meb, "owcf_open")
        self._prover_says(f"MIB[{x}]", after, "owcf_open")
        if x - 1 >= 0 and before != self.p.src.mib(x - 1):
            raise _Done(VERIFIER, "opened midstate differs from the revealed trace")
        if owcf_compress(_midstate(before), meb).digest() != after:
            raise _Done(VERIFIER, "compression of MEB from MIB_{x-1} does not give MIB_x")
        return meb

    def meb_write(self, x: int, meb: bytes, word: int | None, writer: int | None = None,
                  writer_rec: FullTraceRecord | None = None) -> None:
        self._round()
        if word is None:
            word = self.vf.meb_word(meb, x, self.p.src.records)
            writer = last_meb_write(self.p.src.records, x, word)
            if writer is None:
                raise _Done(PROVER, "no write to challenge")
            writer_rec = self.p.src.records[writer]
            self._prover_says(f"T[{writer}]", writer_rec.serialize(), "trace_reveal")
        self._log(VERIFIER, "meb_write_challenge", step=x, word=word, writer=writer)
        if writer_rec.trace.write_value.to_bytes(4, "little") != meb[4 * word: 4 * word + 4]:
            raise _Done(VERIFIER, f"MEB word {word} differs from the value written at step {writer}")

    def midstate_search(self, x: int) -> None:
        lo, hi = x, self.ab - 1
        claims = {lo: self.signed[f"MIB[{x}]"], hi: self.signed["MIB_AB"]}
        if not self.vf.mib_wrong(lo, claims[lo]):
            raise _Done(PROVER, "midstate after x is correct")
        while hi - lo > 1:
            self._round()
            m = (lo + hi) // 2
            self._log(VERIFIER, "midstate_query", step=m)
            c = self._prover_says(f"MIB[{m}]", self.p.mib_claim(m), "midstate_reply")
            claims[m] = c
            if self.vf.mib_wrong(m, c):
                lo = m
            else:
                hi = m
        self.z = lo
        self._round()
        self._log(VERIFIER, "final_preimage_demand", step=lo)
        if claims[lo] == claims[hi]:
            raise _Done(PROVER, "claimed transition has equal midstates")
        block = self._prover_says(f"B[{lo}]", self.p.preimage(lo), "final_preimage_response")
        if len(block) == 64 and owcf_compress(_midstate(claims[lo]), block).digest() == claims[hi]:
            if not self.vf.adversarial and claims[lo] != self.vf.src.mib(lo) and claims[hi] == self.vf.src.mib(hi):
                raise ProtocolBroken("prover exhibited a block linking a wrong midstate to a right one")
            raise _Done(PROVER, "preimage block supplied")
        raise _Done(VERIFIER, "prover cannot link the midstates at the search boundary")

    # referee inputs are the workload the agreed prefix commits to
    ref_upi: bytes = b""
    ref_spi: bytes = b""


def run_dispute(wl: Workload, kind: ProverTamper | None = None, step: int = 0,
                config: DisputeConfig = DisputeConfig(), verifier: str = "honest", rng_seed: int = 0,
                stop_after: int = 2) -> DisputeResult:
    """Run one dispute.  ``kind`` None means an honest prover."""
    honest = honest_source(wl)
    if kind is None:
        psrc = honest
    else:
        recs, s_eff = tampered_records(wl, kind, step)
        psrc = TraceSource.from_records(recs, wl.ab)
    prover = Prover(psrc, kind, honest, stop_after)
    if kind is ProverTamper.MEB_CLAIM:
        prover.meb_override[s_eff] = bad_block(honest.records, s_eff)
    if verifier == "honest":
        vf = Verifier(honest, wl.v)
    else:
        vf = AdversarialVerifier(honest, wl.v, random.Random(rng_seed))
    seed = hashlib.sha256(json.dumps([wl.upi.hex(), kind and kind.value, step, rng_seed]).encode()).digest()
    s = DisputeSession(prover, vf, wl.ab, wl.v, honest, config, seed)
    s.ref_upi, s.ref_spi = wl.upi, wl.spi
    res = s.run()
    res.log.insert(0, {"round": 0, "actor": "setup", "kind": "config", "upi": wl.upi.hex(), "spi": wl.spi.hex(),
                       "ab": wl.ab, "tamper": kind.value if kind else None, "step": step, "verifier": verifier,
                       "rng_seed": rng_seed, "arity": config.arity, "sign": config.sign, "stop_after": stop_after})
    return res


def dump_log(res: DisputeResult) -> str:
    return "\n".join(json.dumps(line, sort_keys=True) for line in res.log) + "\n"


def replay(log: str | list[dict]) -> DisputeResult:
    """Re-run the dispute described by a JSON-lines log and check it reproduces line for line."""
    lines = [json.loads(x) for x in log.splitlines() if x.strip()] if isinstance(log, str) else list(log)
    cfg = lines[0]
    if cfg.get("kind") != "config":
        raise ValueError("log does not start with a config line")
    wl = Workload(bytes.fromhex(cfg["upi"]), bytes.fromhex(cfg["spi"]), cfg["ab"])
    kind = ProverTamper(cfg["tamper"]) if cfg["tamper"] else None
    res = run_dispute(wl, kind, cfg["step"], DisputeConfig(cfg["arity"], sign=cfg["sign"]), cfg["verifier"],
                      cfg["rng_seed"], cfg["stop_after"])
    if [json.dumps(x, sort_keys=True) for x in res.log] != [json.dumps(x, sort_keys=True) for x in lines]:
        raise ValueError("replayed transcript differs from the log")
    return res
