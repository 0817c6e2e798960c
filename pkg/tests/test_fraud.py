import pytest
from hypothesis import given, settings, strategies as st

from esspi import dag as D
from esspi.fraud import (
    CHALLENGES, FraudClaim, FraudContext, build_claims, challenge1_padding_method, challenge2, challenge3,
    evaluate, grinding_proof, run_all, verify_secondary_ecdsa, view_commit,
)
from esspi.hashcore import compress_chain, padding, sha256
from esspi.keys import KeyPair
from esspi.ledger import Ledger
from esspi.tx import TxOut

T = D.TamperKind

# tamper -> the one challenge that must convict; None means no fraud proof applies
DESIGNATED = {
    None: None,
    T.EXTRA_OUTPUT: "challenge1",
    T.WRONG_SIGHASH: "challenge1",
    T.WRONG_TAPTREE: "challenge1",
    T.SPENDABLE_INTERNAL_KEY: "challenge1",
    T.EXTRA_INPUT: "challenge1",
    T.WITH_ANNEX: "challenge1",
    T.BAD_V: "challenge2",
    T.BAD_W: "challenge3",
    T.BAD_R_TEMPLATE: "challenge4",
    T.GRIND_R: "grinding",
    T.BAD_SCRIPT_U: None,  # the primary program's parser halts instead
}

SETUP = D.make_setup("fraud-tests")


def instantiate(tamper, ui=b"fraud test input", setup=SETUP):
    led = Ledger()
    dag = D.build_envelope_dag(setup.params, led.fund(D.funding_output(setup.params)))
    D.presign_covenants(dag, setup.alice, setup.bob)
    led.submit(dag.tx("K^A"))
    led.mine(1)
    extra = None
    spent = [dag.output("K^A", 0)]
    if tamper is T.EXTRA_INPUT:
        out = TxOut(5000, D.key_address(setup.params.pk("A", "EXTRA")).script_pubkey)
        extra = (led.fund(out), out)
        spent.append(out)
    cr = D.instantiate_commit_reveal(dag, ui, setup.alice, tamper, extra)
    reveals = [cr.reveal] + ([cr.reveal_alt] if cr.reveal_alt else [])
    ctx = FraudContext.from_dag(dag)
    return ctx, cr, build_claims(ctx, cr.commit, spent, reveals), led


def verdicts(tamper, ui=b"fraud test input"):
    ctx, _, claims, _ = instantiate(tamper, ui)
    return run_all(ctx, claims)


def test_every_tamper_kind_has_a_row():
    assert set(DESIGNATED) - {None} == set(T)
    assert len(T) == 11


@pytest.mark.parametrize("tamper", list(DESIGNATED), ids=lambda t: t.value if t else "honest")
def test_tamper_matrix_row(tamper):
    row = verdicts(tamper)
    assert set(row) == set(CHALLENGES)
    for name, v in row.items():
        if name == DESIGNATED[tamper]:
            assert v.verifier_wins, (name, v)
        else:
            assert not v.verifier_wins, (name, v)
            assert v.winner == "prover" or v.rejected


def test_bad_script_u_left_to_primary():
    _, cr, _, _ = instantiate(T.BAD_SCRIPT_U, b"x" * 200)
    with pytest.raises(D.ProgramInputError):
        D.parse_envelope_program_input(cr.program_input)


@settings(max_examples=20)
@given(st.sampled_from(list(DESIGNATED)), st.binary(min_size=1, max_size=120))
def test_no_cross_fire(tamper, ui):
    row = verdicts(tamper, ui)
    winners = {n for n, v in row.items() if v.verifier_wins}
    assert winners == ({DESIGNATED[tamper]} if DESIGNATED[tamper] else set())


def test_verdicts_deterministic():
    ctx, _, claims, _ = instantiate(T.BAD_V)
    a = {k: v.as_dict() for k, v in run_all(ctx, claims).items()}
    b = {k: v.as_dict() for k, v in run_all(ctx, claims).items()}
    assert a == b


def test_claim_json_roundtrip():
    ctx, _, claims, _ = instantiate(T.BAD_W)
    for c in claims.values():
        back = FraudClaim.from_json(c.to_json())
        assert back == c
        assert evaluate(ctx, back).as_dict() == evaluate(ctx, c).as_dict()


def test_claim_missing_input_rejected():
    ctx, _, claims, _ = instantiate(None)
    c = claims["challenge3"]
    v = evaluate(ctx, FraudClaim(3, {"W": c.values["W"]}))
    assert v.rejected


def test_challenge3_grafted_signature():
    # W valid for one commit, replayed against another commit of the same handle
    ctx_a, cr_a, _, _ = instantiate(None, b"first input")
    _, cr_b, claims_b, _ = instantiate(None, b"second input")
    assert cr_a.commit.txid != cr_b.commit.txid
    honest = claims_b["challenge3"].values
    assert not challenge3(ctx_a, honest["W"], honest["S1"], honest["C"]).verifier_wins
    grafted = cr_b.commit.txid + cr_a.w_sig
    assert challenge3(ctx_a, grafted, honest["S1"], honest["C"]).verifier_wins


def test_challenge3_bad_s1_rejected():
    ctx, _, claims, _ = instantiate(T.BAD_W)
    vals = claims["challenge3"].values
    s1 = bytearray(vals["S1"])
    s1[5] ^= 1
    v = challenge3(ctx, vals["W"], bytes(s1), vals["C"])
    assert v.rejected and not v.verifier_wins


def test_challenge2_invalid_y_prover_wins():
    ctx, cr, claims, _ = instantiate(T.BAD_V)
    from esspi.fraud import unpack

    r_msg, y = unpack(claims["challenge2"].values["C'"])
    tampered = r_msg[:-1] + bytes([r_msg[-1] ^ 1])
    assert not challenge2(ctx, tampered, y, cr.v_signed).verifier_wins
    assert challenge2(ctx, r_msg, y, cr.v_signed).verifier_wins


def test_grinding_needs_valid_sigs():
    ctx, _, claims, _ = instantiate(T.GRIND_R)
    v = claims["grinding"].values
    g1, g2 = v["RA'"][:32], v["RA'"][32:]
    assert grinding_proof(ctx, g1, g2, v["Y"], v["ER"]).verifier_wins
    assert grinding_proof(ctx, g1, g2, v["Y"], v["Y"]).rejected
    assert not grinding_proof(ctx, g1, g1, v["Y"], v["Y"]).verifier_wins


def test_replaced_reveal_observed_on_ledger():
    _, cr, _, led = instantiate(T.GRIND_R)
    assert led.submit(cr.commit).accepted
    led.mine(1)
    assert led.submit(cr.reveal).accepted
    assert led.replace(cr.reveal.txid, cr.reveal_alt).accepted
    seen = [t for t in led.observed.values() if t.inputs[0].prevout.txid == cr.commit.txid]
    assert {t.txid for t in seen} == {cr.reveal.txid, cr.reveal_alt.txid}


def test_commit_view_recovers_values():
    _, cr, _, _ = instantiate(None)
    cv = view_commit(cr.commit, cr.commit_spent)
    assert cv.v == cr.v_signed
    assert cv.w == cr.commit.txid + cr.w_sig


# ECDSA secondary instance

ALICE = KeyPair.from_seed("alice-ecdsa")


def _sig_for(l_val: bytes) -> bytes:
    return ALICE.sign_ecdsa(sha256(l_val)) + b"\x01"


def test_ecdsa_honest_claim_fails_check3():
    l_val = sha256(b"data tx message")
    v = verify_secondary_ecdsa(l_val, _sig_for(l_val), l_val, ALICE.pubkey)
    assert v.winner == "prover" and v.failed_check == "l_equals_v"


def test_ecdsa_wrong_v_convicts():
    l_val = sha256(b"data tx message")
    v = verify_secondary_ecdsa(sha256(b"something else"), _sig_for(l_val), l_val, ALICE.pubkey)
    assert v.verifier_wins


def test_ecdsa_l_not_matching_s():
    l_val = sha256(b"data tx message")
    other = sha256(b"forged")
    v = verify_secondary_ecdsa(sha256(b"x"), _sig_for(l_val), other, ALICE.pubkey)
    assert not v.verifier_wins and v.failed_check == "s_verifies"


@settings(max_examples=25)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
def test_ecdsa_verdict_iff_mismatch(l_val, v_val):
    v = verify_secondary_ecdsa(v_val, _sig_for(l_val), l_val, ALICE.pubkey)
    assert v.verifier_wins == (v_val != l_val)


# padding bitcount method

def _final(msg: bytes):
    full = msg + padding(len(msg))
    return compress_chain(full[:-64]), full[-64:], sha256(msg)


def _outputs(n: int) -> bytes:
    return b"".join(TxOut(1000 + i, D.key_address(bytes([2] * 32)).script_pubkey).serialize() for i in range(n))


def test_padding_method_detects_output_count():
    one = len(_outputs(1)) * 8
    mid, block, digest = _final(_outputs(3))
    v = challenge1_padding_method(mid, block, digest, one)
    assert v.verifier_wins


def test_padding_method_honest():
    msg = _outputs(1)
    mid, block, digest = _final(msg)
    assert not challenge1_padding_method(mid, block, digest, len(msg) * 8).verifier_wins


def test_padding_method_digest_mismatch():
    mid, block, _ = _final(_outputs(3))
    v = challenge1_padding_method(mid, block, sha256(b"other"), 8)
    assert v.rejected


@settings(max_examples=40)
@given(st.binary(max_size=300), st.integers(min_value=0, max_value=4000))
def test_padding_method_property(msg, expected_bits):
    mid, block, digest = _final(msg)
    v = challenge1_padding_method(mid, block, digest, expected_bits)
    assert v.verifier_wins == (expected_bits != len(msg) * 8)
