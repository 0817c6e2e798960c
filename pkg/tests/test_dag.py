import json

import pytest
from hypothesis import given, settings, strategies as st

from esspi import dag as D
from esspi.hashcore import sha256
from esspi.ledger import Ledger
from esspi.sighash import SIGHASH_ALL
from esspi.taproot import TaprootAddress, tapleaf_hash
from esspi.tx import Tx, TxOut, compact_size

UI = b"twelve bytes"


@pytest.fixture(scope="module")
def setup():
    return D.make_setup("dag-tests")


def _envelope(setup):
    led = Ledger()
    fund = led.fund(D.funding_output(setup.params))
    dag = D.build_envelope_dag(setup.params, fund)
    D.presign_covenants(dag, setup.alice, setup.bob)
    assert led.submit(dag.tx("K^A")).accepted
    led.mine(1)
    return led, dag


# setup parameters

def test_params_reject_bad_timelock(setup):
    p = setup.params
    with pytest.raises(D.DagError):
        D.DagParams(p.alice, p.bob, p.ot, T=0)


def test_params_reject_shared_key(setup):
    p = setup.params
    bob = dict(p.bob)
    bob["Q1"] = p.alice["W"]
    with pytest.raises(D.DagError):
        D.DagParams(p.alice, bob, p.ot)


def test_all_party_keys_distinct(setup):
    keys = list(setup.params.alice.values()) + list(setup.params.bob.values())
    assert len(set(keys)) == len(keys)
    ots = [pk.to_bytes() if hasattr(pk, "to_bytes") else repr(pk) for pk in setup.params.ot.values()]
    assert len(set(ots)) == len(ots)


def test_setup_is_deterministic():
    a, b = D.make_setup("same"), D.make_setup("same")
    assert a.params.alice == b.params.alice and a.params.bob == b.params.bob


# envelope graph structure

def test_envelope_transactions(setup):
    _, dag = _envelope(setup)
    assert set(dag.txs) == {"K^A", "P^B_C", "K^B_1", "K^B_2(1)", "K^B_2(2)", "K^B_2(3)", "K^B_2(4)"}
    assert dag.is_presigned()


def test_kick_off_trees(setup):
    _, dag = _envelope(setup)
    s = dag.scripts
    o1 = [lf.script for lf in dag.addresses["K^A:0"].tree.leaves]
    o2 = [lf.script for lf in dag.addresses["K^A:1"].tree.leaves]
    assert sorted(x.raw for x in o1) == sorted(s[n].raw for n in ("script_KA_O1_CA", "script_KA_O1_PBC"))
    want = ["script_KA_O2_PBC", "script_KA_O2_PBR", "script_KA_O2_KB1"] + [f"script_F{i}" for i in range(1, 5)]
    assert sorted(x.raw for x in o2) == sorted(s[n].raw for n in want)
    for addr in dag.addresses.values():
        assert addr.internal_key == setup.params.nums


def test_named_scripts_match_graph(setup):
    _, dag = _envelope(setup)
    fresh = D.named_scripts(setup.params)
    assert {n: s.raw for n, s in fresh.items()} == {n: s.raw for n, s in dag.scripts.items()}
    for frag in ("sver_X", "sver_L"):
        assert frag in D.FRAGMENTS


def test_script_usage_static_and_runtime(setup):
    led, dag = _envelope(setup)
    usage = dag.script_usage()
    # spenders of these two leaves (C^A, P^B_R) only exist after instantiation
    runtime_spent = {"script_KA_O1_CA", "script_KA_O2_PBR"}
    for name, (committed, referenced) in usage.items():
        assert committed == 1
        assert referenced == (0 if name in runtime_spent else 1), name
    cr = D.instantiate_commit_reveal(dag, UI, setup.alice)
    leaves = [lf.script.raw for lf in cr.x.tree.leaves]
    assert leaves.count(dag.scripts["script_CA_O1_PBR"].raw) == 1
    assert leaves.count(cr.script_u.raw) == 1


def test_pbr_input_scripts(setup):
    _, dag = _envelope(setup)
    p = setup.params
    w = dag.scripts["script_CA_O1_PBR"].raw
    assert D.cseqv(p.T).raw in w and p.pk("B", "Q2") in w
    o2 = dag.scripts["script_KA_O2_PBR"].raw
    assert p.pk("B", "Q1") in o2 and p.pk("A", "W") in o2


def test_dag_json_roundtrip(setup):
    _, dag = _envelope(setup)
    d = json.loads(D.dag_json(dag))
    assert d["variant"] == "envelope"
    assert set(d["transactions"]) == set(dag.txs)
    for n, t in d["transactions"].items():
        assert t["txid"] == dag.tx(n).txid_hex
    assert d["scripts"]["script_F1"]["tapleaf_hash"] == tapleaf_hash(dag.scripts["script_F1"]).hex()


def test_naive_envelope_cannot_be_prebuilt(setup):
    led = Ledger()
    fund = led.fund(D.funding_output(setup.params))
    with pytest.raises(D.PrecreationError, match="transaction ID"):
        D.build_naive_envelope_dag(setup.params, fund)


# covenants

def test_presigned_penalty_matures_at_timelock(setup):
    led, dag = _envelope(setup)
    pbc = D.finalize(dag, "P^B_C")
    led.mine(setup.params.T - 1)
    assert not led.submit(pbc).accepted
    led.mine(1)
    assert led.submit(pbc).accepted


def test_mutated_template_fails(setup):
    led, dag = _envelope(setup)
    led.mine(setup.params.T)
    pbc = D.finalize(dag, "P^B_C")
    out = pbc.outputs[0]
    bad = Tx(pbc.inputs, (TxOut(out.amount - 1, out.script_pubkey),), pbc.version, pbc.locktime)
    res = led.submit(bad)
    assert not res.accepted and "input" in res.reason


def test_one_covenant_signature_missing(setup):
    led, dag = _envelope(setup)
    led.mine(setup.params.T)
    sa, sb = dag.covsigs[("P^B_C", 0)]
    dag.covsigs[("P^B_C", 0)] = (sa, bytes(64))
    try:
        assert not led.submit(D.finalize(dag, "P^B_C")).accepted
    finally:
        dag.covsigs[("P^B_C", 0)] = (sa, sb)


def test_stop_output_mutual_exclusion(setup):
    led, dag = _envelope(setup)
    cr = D.instantiate_commit_reveal(dag, UI, setup.alice)
    assert led.submit(cr.commit).accepted
    led.mine(1)
    from esspi.fraud import view_commit

    cv = view_commit(cr.commit, cr.commit_spent)
    kb1 = D.kick_off_b1(dag, cv.v, setup.bob, cv.alice_ot_sigs()["V"])
    assert led.submit(kb1).accepted
    led.mine(setup.params.T + 1)
    assert not led.submit(D.finalize(dag, "P^B_C")).accepted
    res = led.submit(D.sign_pbr(dag, cr, setup.bob))
    assert not res.accepted and "double-spend" in res.reason


# runtime commit / reveal

def test_honest_commit_reveal(setup):
    led, dag = _envelope(setup)
    cr = D.instantiate_commit_reveal(dag, UI, setup.alice)
    c = cr.commit
    assert len(c.inputs) == 1 and len(c.outputs) == 1
    x = TaprootAddress.from_scripts([cr.script_u, D.w_leaf(dag)], setup.params.nums)
    assert c.outputs[0].script_pubkey == x.script_pubkey
    assert cr.v_signed == tapleaf_hash(cr.script_u)
    assert led.submit(c).accepted
    led.mine(1)
    assert led.submit(cr.reveal).accepted


def test_program_input_layout(setup):
    _, dag = _envelope(setup)
    cr = D.instantiate_commit_reveal(dag, UI, setup.alice)
    u = cr.script_u.raw
    th = sha256(b"TapLeaf")
    assert cr.program_input == th + th + bytes([0xC0]) + compact_size(len(u)) + u
    assert sha256(cr.program_input) == cr.v_signed
    assert D.parse_envelope_program_input(cr.program_input) == UI


def test_w_signs_pbr(setup):
    led, dag = _envelope(setup)
    cr = D.instantiate_commit_reveal(dag, UI, setup.alice)
    assert led.submit(cr.commit).accepted
    led.mine(setup.params.T)
    assert not led.submit(D.sign_pbr(dag, cr, setup.bob)).accepted
    led.mine(1)
    assert led.submit(D.sign_pbr(dag, cr, setup.bob)).accepted


@pytest.mark.parametrize("ui", [b"", b"x" * 400_001], ids=["empty", "over-cap"])
def test_bad_user_input_length(setup, ui):
    _, dag = _envelope(setup)
    with pytest.raises(D.DagError):
        D.instantiate_commit_reveal(dag, ui, setup.alice)


def test_commit_needs_envelope_variant():
    s = D.make_setup("e", ot_keys=D.ECDSA_OT_KEYS)
    led = Ledger()
    dag = D.build_ecdsa_dag(s.params, led.fund(D.funding_output(s.params)))
    with pytest.raises(D.DagError):
        D.instantiate_commit_reveal(dag, UI, s.alice)


def test_extra_input_needs_coin(setup):
    _, dag = _envelope(setup)
    with pytest.raises(D.DagError):
        D.instantiate_commit_reveal(dag, UI, setup.alice, D.TamperKind.EXTRA_INPUT)


@settings(max_examples=15)
@given(st.binary(min_size=1, max_size=300))
def test_parser_recovers_any_input(ui):
    s = D.make_setup("parse")
    payload = D.pad_user_input(ui, s.params.pk("A", "Y"))
    pi = D.program_input(D.script_u(s.params.pk("A", "Y"), payload))
    assert len(pi) % 64 == 0
    assert D.parse_envelope_program_input(pi) == ui


def test_parser_rejects_split_push(setup):
    _, dag = _envelope(setup)
    cr = D.instantiate_commit_reveal(dag, UI * 20, setup.alice, D.TamperKind.BAD_SCRIPT_U)
    with pytest.raises(D.ProgramInputError):
        D.parse_envelope_program_input(cr.program_input)


# simple graph

def _simple():
    s = D.make_setup("simple")
    led = Ledger()
    dag = D.build_simple_dag(s.params, led.fund(D.funding_output(s.params)))
    D.presign_covenants(dag, s.alice, s.bob)
    D.presign_simple_kickoff(dag, s.alice)
    assert led.submit(dag.tx("K")).accepted
    led.mine(1)
    return s, led, dag


def test_simple_data_before_timeout_blocks_penalty():
    s, led, dag = _simple()
    assert led.submit(D.build_simple_data_tx(dag, UI, s.alice)).accepted
    led.mine(s.params.T + 1)
    assert not led.submit(D.finalize(dag, "P^B_D")).accepted


def test_simple_missing_data_punished():
    s, led, dag = _simple()
    pbd = D.finalize(dag, "P^B_D")
    assert len(pbd.inputs) == 2  # also consumes the continuation output
    led.mine(s.params.T)
    assert led.submit(pbd).accepted
    assert not led.submit(D.finalize(dag, "E^B")).accepted


# ECDSA graph

def _ecdsa():
    s = D.make_setup("ecdsa", ot_keys=D.ECDSA_OT_KEYS)
    led = Ledger()
    dag = D.build_ecdsa_dag(s.params, led.fund(D.funding_output(s.params)))
    D.presign_covenants(dag, s.alice, s.bob)
    assert led.submit(dag.tx("K^A")).accepted
    led.mine(1)
    return s, led, dag


def test_ecdsa_handle_is_p2sh():
    s, led, dag = _ecdsa()
    assert dag.output("K^A", 0).script_pubkey.is_p2sh()
    d = D.build_data_tx(dag, UI, s.alice)
    assert led.submit(d).accepted
    assert len(D.data_program_input(dag, d)) > 0


def test_ecdsa_missing_commit_punished():
    s, led, dag = _ecdsa()
    pbc = D.finalize(dag, "P^B_C")
    assert not led.submit(pbc).accepted
    led.mine(s.params.T)
    assert led.submit(pbc).accepted


def test_ecdsa_fraud_path_needs_ot_inputs():
    s, led, dag = _ecdsa()
    d = D.build_data_tx(dag, UI, s.alice)
    led.submit(d)
    led.mine(1)
    v = sha256(b"wrong")
    ca, o_v = D.ecdsa_commit(dag, v, s.alice)
    assert led.submit(ca).accepted
    led.mine(1)
    bare = D.finalize(dag, "K^B_2")
    assert not led.submit(bare).accepted
    sig = d.inputs[0].script_sig.ops()[0].data
    l_val = sha256(D.data_program_input(dag, d))
    assert led.submit(D.ecdsa_kick_off_b2(dag, v, sig, l_val, o_v, s.bob)).accepted


def test_ecdsa_sighash_all_on_data(setup):
    s, led, dag = _ecdsa()
    d = D.build_data_tx(dag, UI, s.alice)
    assert d.inputs[0].script_sig.ops()[0].data[-1] == SIGHASH_ALL
