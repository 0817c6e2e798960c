import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from esspi.cpu import UPI_BASE, meb_offset
from esspi.dispute import (
    FIELD_TAMPERS, DisputeConfig, ProverTamper, dump_log, honest_source, replay, round_bound, run_dispute,
    tampered_records, workload_for_steps,
)

N = 64


@pytest.fixture(scope="module")
def wl():
    return workload_for_steps(N)


def _partition_rounds(res) -> int:
    return sum(1 for line in res.log if line["kind"] == "partition_query")


def test_workload_has_exact_length(wl):
    assert honest_source(wl).n == N
    assert 0 < wl.ab < N


def test_honest_prover_wins_without_rounds(wl):
    res = run_dispute(wl)
    assert res.winner == "prover" and res.rounds == 0


def test_config_rejects_unary_search():
    with pytest.raises(ValueError):
        DisputeConfig(arity=1)


@pytest.mark.parametrize("kind", FIELD_TAMPERS[1:3], ids=lambda k: k.value)
@pytest.mark.parametrize("step", [0, 1, 5, 31, 63])
def test_search_finds_first_bad_step(wl, kind, step):
    _, s_eff = tampered_records(wl, kind, step)
    res = run_dispute(wl, kind, step)
    assert res.winner == "verifier"
    assert res.r == s_eff


@pytest.mark.parametrize("arity", [2, 4, 8])
def test_partition_rounds_logarithmic(wl, arity):
    bound = math.ceil(math.log(N, arity)) + 1
    for step in range(0, N, 3):
        res = run_dispute(wl, ProverTamper.PC_NEXT, step, DisputeConfig(arity=arity))
        assert res.winner == "verifier"
        assert _partition_rounds(res) <= bound


def test_stop_responding_loses_by_timeout(wl):
    res = run_dispute(wl, ProverTamper.STOP_RESPONDING, 10)
    assert res.winner == "verifier" and res.reason.startswith("timeout")


def test_equivocation_is_immediate_loss(wl):
    res = run_dispute(wl, ProverTamper.EQUIVOCATE, 10)
    assert res.winner == "verifier" and "equivocation" in res.reason


def test_midstate_mutation_caught(wl):
    res = run_dispute(wl, ProverTamper.MIB_MUTATION, 3)
    assert res.winner == "verifier" and "midstate changed" in res.reason


def test_lssw_lie_reaches_midstate_search(wl):
    res = run_dispute(wl, ProverTamper.LSSW_LIE, 5)
    assert res.winner == "verifier"
    assert res.x is not None and res.z is not None
    assert res.x <= res.z < wl.ab
    kinds = {line["kind"] for line in res.log}
    assert "final_preimage_demand" in kinds or "timeout" in kinds


def test_inconsistent_reveal(wl):
    res = run_dispute(wl, ProverTamper.INCONSISTENT_REVEAL, 20)
    assert res.winner == "verifier" and "step hash" in res.reason


def test_meb_offset_wraps():
    assert meb_offset(UPI_BASE + 68) == 4
    assert meb_offset(UPI_BASE) == 0
    assert meb_offset(UPI_BASE + 63) == 63


def test_round_bound_formula():
    assert round_bound(64, 44) == 6 + 6 + 6
    assert round_bound(64, 44, 40) == 6 + 2 + 6
    assert round_bound(1, 1, 1) == 1 + 1 + 6


@settings(max_examples=40)
@given(st.sampled_from(list(ProverTamper)), st.integers(0, N - 1))
def test_any_single_fault_is_caught_within_bound(wl, kind, step):
    res = run_dispute(wl, kind, step)
    assert res.winner == "verifier"
    assert res.rounds <= round_bound(N, wl.ab, res.x)


@settings(max_examples=40)
@given(st.integers(0, 2**32))
def test_honest_prover_beats_adversarial_verifier(wl, seed):
    res = run_dispute(wl, None, 0, verifier="adversarial", rng_seed=seed)
    assert res.winner == "prover"


def test_transcript_deterministic(wl):
    a = run_dispute(wl, ProverTamper.WRITE_VALUE, 12)
    b = run_dispute(wl, ProverTamper.WRITE_VALUE, 12)
    assert a.transcript_hash() == b.transcript_hash()
    assert a.transcript_hash() != run_dispute(wl, ProverTamper.WRITE_VALUE, 13).transcript_hash()


def test_log_lines_are_json(wl):
    res = run_dispute(wl, ProverTamper.MEB_CLAIM, 7)
    lines = dump_log(res).splitlines()
    assert len(lines) == len(res.log)
    first = json.loads(lines[0])
    assert first["kind"] == "config" and first["tamper"] == "meb_claim"
    assert all({"round", "actor", "kind"} <= set(json.loads(x)) for x in lines)


def test_replay_roundtrip(wl):
    res = run_dispute(wl, ProverTamper.LSSW_LIE, 9, verifier="adversarial", rng_seed=3)
    again = replay(dump_log(res))
    assert again.transcript_hash() == res.transcript_hash()


def test_replay_detects_edit(wl):
    res = run_dispute(wl, ProverTamper.WRITE_ADDR, 9)
    lines = dump_log(res).splitlines()
    last = json.loads(lines[-1])
    last["winner"] = "prover"
    lines[-1] = json.dumps(last, sort_keys=True)
    with pytest.raises(ValueError):
        replay("\n".join(lines))


def test_replay_needs_config_line(wl):
    res = run_dispute(wl, ProverTamper.WRITE_ADDR, 9)
    with pytest.raises(ValueError):
        replay("\n".join(dump_log(res).splitlines()[1:]))


def test_completeness_thousand_adversarial_verifiers(wl):
    losses = [s for s in range(1000) if run_dispute(wl, None, 0, verifier="adversarial", rng_seed=s).winner != "prover"]
    assert losses == []
