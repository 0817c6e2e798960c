"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL <title>`` line; the
lines are repeated in the terminal summary so they show up without ``-s``.
"""
import contextlib
import hashlib
import random
import time

from esspi import dag as D
from esspi.cpu import FLAG_HALT, UPI_BASE, TraceRecord, lssw, make_spi, new_state, run_sections
from esspi.dispute import ProverTamper, dump_log, replay, round_bound, run_dispute, workload_for_steps
from esspi.fraud import CHALLENGES, FraudContext, build_claims, run_all
from esspi.hashcore import IV, compress_chain, midstate_finalize, padding, sha256
from esspi.ledger import Ledger
from esspi.ots import OtParams, ot_witness_cost
from esspi.scenarios import ATTACK_VECTORS, EXPECTED, naive_envelope_error, run_scenario
from esspi.sighash import ScriptExt, legacy_sighash, taproot_sighash
from esspi.script import Script
from esspi.storage import encode_user_input, expansion_factor, per_tx_capacity
from esspi.taproot import tapleaf_hash
from esspi.tx import Tx, TxOut

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(n: int, title: str):
    try:
        yield
    except BaseException:
        line = f"ACCEPTANCE {n:>2} FAIL {title}"
        RESULTS.append(line)
        print(line)
        raise
    line = f"ACCEPTANCE {n:>2} PASS {title}"
    RESULTS.append(line)
    print(line)


KB100 = 100_000


def test_1_storage_economics():
    with criterion(1, "storage expansion factors"):
        t0 = time.perf_counter()
        targets = {"op_return": 14, "p2wsh_addr": 19, "p2pk": 19, "bare_multisig": 13}
        for method, target in targets.items():
            f = expansion_factor(method, KB100).factor
            assert abs(f - target) / target <= 0.15, (method, f)
        assert expansion_factor("envelope", KB100).factor <= 1.2
        assert time.perf_counter() - t0 < 1.0


def test_2_example_counts():
    with criterion(2, "100 KB example counts"):
        data = bytes(range(256)) * (KB100 // 256) + bytes(KB100 % 256)
        assert encode_user_input("op_return", data).n_txs == 1250
        plan = encode_user_input("p2wsh_addr", data)
        assert (plan.n_outputs, plan.n_txs) == (3125, 2)
        assert per_tx_capacity("p2wsh_addr") == 80_000


def test_3_ots_cost():
    with criterion(3, "one-time signature cost anchors"):
        p = OtParams()
        for n_bytes in (4, 8, 16, 20, 32, 64):
            assert 20 <= ot_witness_cost(p, 8 * n_bytes).per_bit <= 30
        total = ot_witness_cost(p, 256).total
        assert abs(total - 6400) / 6400 <= 0.10


FIPS = {
    b"": "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
    b"abc": "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
    b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq":
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
    b"abcdefghbcdefghicdefghijdefghijkefghijklfghijklmghijklmnhijklmnoijklmnopjklmnopqklmnopqrlmnopqrsmnopqrstnopqrstu":
        "cf5b16a778af8380036ce59e7b0492370b249b11e8f07a51afac45037afee9d1",
    bytes.fromhex("bd"): "68325720aabd7c82f30f554b313d0570c95accbb7dc4b5aae11204c08ffe732b",
    bytes.fromhex("c98c8e55"): "7abc22c0ae5af26ce93dbb94433a0e0b2e119d014f8e7f65bd56c61ccccd9504",
}


def test_4_hash_substrate():
    with criterion(4, "SHA-256 substrate"):
        for msg, want in FIPS.items():
            assert sha256(msg).hex() == want
        for n in range(193):
            msg = bytes((i * 7 + 3) & 0xFF for i in range(n))
            padded = msg + padding(n)
            assert compress_chain(padded).digest() == hashlib.sha256(msg).digest()
            full = n // 64 * 64
            assert midstate_finalize(compress_chain(msg[:full]), 8 * n, msg[full:]) == hashlib.sha256(msg).digest()
        rec = TraceRecord(1, 2, 3, bytes(32), 4, 5).serialize()
        assert len(rec) == 49 and len(rec + padding(49)) == 64
        assert compress_chain(rec + padding(49), IV).digest() == hashlib.sha256(rec).digest()


def test_5_sighash_oracle(vectors):
    with criterion(5, "sighash messages match the reference oracles"):
        seen = set()
        assert len(vectors["fixtures"]) >= 5
        for fx in vectors["fixtures"]:
            tx = Tx.parse(bytes.fromhex(fx["tx"]))
            spent = [TxOut.parse(bytes.fromhex(h)) for h in fx["spent"]]
            idx = fx["index"]
            for c in fx["cases"]:
                if c["kind"] == "legacy":
                    got = legacy_sighash(tx, idx, Script(bytes.fromhex(c["script_code"])), c["hash_type"])
                else:
                    ext = ScriptExt(tapleaf_hash(Script(bytes.fromhex(c["leaf"])))) if c["leaf"] else None
                    annex = bytes.fromhex(c["annex"]) if c["annex"] else None
                    got = taproot_sighash(tx, idx, spent, c["hash_type"], ext, annex)
                assert got.hex() == c["digest"], c
                seen.add((c["kind"], c["hash_type"] & 0x83, bool(c.get("annex"))))
        for kind in ("legacy", "taproot"):
            for ht in (0x01, 0x03, 0x81, 0x83):
                assert (kind, ht, False) in seen
        assert any(k == "taproot" and annex for k, _, annex in seen)


def test_6_cpu_input_check():
    with criterion(6, "input-check mode hashes the UPI exactly"):
        rng = random.Random(6)
        for _ in range(100):
            n = 64 * rng.randint(1, 64)
            upi = rng.randbytes(n)
            r = run_sections(upi, make_spi(hashlib.sha256(upi).digest(), n, upi[:8]))
            assert r.mib_at_ab == hashlib.sha256(upi).digest()
        for n in (64, 128, 4096):
            for delta in (1, 2, 3):
                st = new_state(bytes(n), make_spi(bytes(32), n))
                assert lssw(st, UPI_BASE + n - 4 + delta).trace.flags & FLAG_HALT and st.halted


def test_7_dispute_soundness():
    with criterion(7, "dispute soundness, completeness and round bound"):
        t0 = time.perf_counter()
        small = workload_for_steps(64)
        for kind in ProverTamper:
            for s in range(64):
                res = run_dispute(small, kind, s)
                assert res.winner == "verifier", (kind, s, res.reason)
                assert res.rounds <= round_bound(64, small.ab, res.x)
        big = workload_for_steps(4096, upi_len=1024)
        rng = random.Random(4096)
        kinds = list(ProverTamper)
        for _ in range(200):
            kind, s = rng.choice(kinds), rng.randrange(4096)
            res = run_dispute(big, kind, s)
            assert res.winner == "verifier", (kind, s, res.reason)
            assert res.rounds <= round_bound(4096, big.ab, res.x)
        for seed in range(200):
            res = run_dispute(big, None, 0, verifier="adversarial", rng_seed=seed)
            assert res.winner == "prover", (seed, res.reason)
        assert time.perf_counter() - t0 < 300


DESIGNATED = {
    D.TamperKind.EXTRA_OUTPUT: "challenge1",
    D.TamperKind.WRONG_SIGHASH: "challenge1",
    D.TamperKind.WRONG_TAPTREE: "challenge1",
    D.TamperKind.SPENDABLE_INTERNAL_KEY: "challenge1",
    D.TamperKind.EXTRA_INPUT: "challenge1",
    D.TamperKind.WITH_ANNEX: "challenge1",
    D.TamperKind.BAD_V: "challenge2",
    D.TamperKind.BAD_W: "challenge3",
    D.TamperKind.BAD_R_TEMPLATE: "challenge4",
    D.TamperKind.GRIND_R: "grinding",
    D.TamperKind.BAD_SCRIPT_U: None,  # halts the primary program's parser instead
}


def _matrix_row(setup, tamper):
    led = Ledger()
    dag = D.build_envelope_dag(setup.params, led.fund(D.funding_output(setup.params)))
    D.presign_covenants(dag, setup.alice, setup.bob)
    led.submit(dag.tx("K^A"))
    led.mine(1)
    spent, extra = [dag.output("K^A", 0)], None
    if tamper is D.TamperKind.EXTRA_INPUT:
        out = TxOut(5000, D.key_address(setup.params.pk("A", "EXTRA")).script_pubkey)
        extra = (led.fund(out), out)
        spent.append(out)
    cr = D.instantiate_commit_reveal(dag, b"acceptance matrix input", setup.alice, tamper, extra)
    reveals = [cr.reveal] + ([cr.reveal_alt] if cr.reveal_alt else [])
    ctx = FraudContext.from_dag(dag)
    return cr, run_all(ctx, build_claims(ctx, cr.commit, spent, reveals))


def test_8_fraud_matrix():
    with criterion(8, "tamper x challenge matrix has no cross-fire"):
        setup = D.make_setup("acceptance")
        assert set(DESIGNATED) == set(D.TamperKind)
        _, honest = _matrix_row(setup, None)
        assert not any(v.verifier_wins for v in honest.values())
        for tamper, target in DESIGNATED.items():
            cr, row = _matrix_row(setup, tamper)
            assert set(row) == set(CHALLENGES)
            for name, v in row.items():
                assert v.verifier_wins == (name == target), (tamper, name, v)
            if target is None:
                try:
                    D.parse_envelope_program_input(cr.program_input)
                    raise AssertionError("malformed script was accepted by the parser")
                except D.ProgramInputError:
                    pass


def test_9_attack_scenarios():
    with criterion(9, "security-analysis scenarios end to end"):
        assert len(ATTACK_VECTORS) == 13
        for name in ATTACK_VECTORS:
            rep = run_scenario(name)
            assert (rep.winner, rep.winning_path) == EXPECTED[name], (name, rep.winner, rep.winning_path)
        assert "cannot be pre-created" in naive_envelope_error()


def test_10_determinism():
    with criterion(10, "fixed seeds replay to identical transcripts"):
        for name in ("honest", "C_INV_OUT", "R_GRIND", "ECDSA_BAD_V", "CPU_TAMPER(lssw_lie,5)"):
            for seed in (0, 1, 42):
                assert run_scenario(name, seed).transcript_hash() == run_scenario(name, seed).transcript_hash()
        wl = workload_for_steps(64)
        res = run_dispute(wl, ProverTamper.MEB_CLAIM, 11, verifier="adversarial", rng_seed=9)
        assert replay(dump_log(res)).transcript_hash() == res.transcript_hash()
