import hashlib
import random

import pytest
from hypothesis import given, settings, strategies as st

from esspi import dag as D
from esspi.cpu import (
    FLAG_FAULT,
    FLAG_HALT,
    FLAG_SWITCH,
    HASH_OPS,
    MEB_BASE,
    MIB_BASE,
    OP_LSSW,
    STEP_HASH_SEED,
    UPI_BASE,
    CpuError,
    FullTraceRecord,
    TraceRecord,
    assemble,
    build_program,
    disassemble,
    encode,
    icm_steps,
    lssw,
    make_spi,
    meb_offset,
    new_state,
    referee_step,
    replay_to,
    run_sections,
    step,
    step_hash,
    step_hash_chain,
)
from esspi.hashcore import IV, owcf_compress


def upi_of(n, seed=0):
    r = random.Random(seed)
    return bytes(r.randrange(256) for _ in range(n))


def run(upi, **kw):
    spi = make_spi(hashlib.sha256(upi).digest(), len(upi), upi[:8])
    return run_sections(upi, spi, **kw)


def test_trace_record_size():
    tr = TraceRecord(1, 2, 3, bytes(32), 4, 5)
    assert len(tr.serialize()) == 49
    assert TraceRecord.parse(tr.serialize()) == tr
    f = FullTraceRecord(1, 2, 3, 4, 5, 6, tr)
    assert FullTraceRecord.parse(f.serialize()) == f


def test_zero_upi():
    r = run(bytes(64))
    assert r.mib_at_ab == hashlib.sha256(bytes(64)).digest()
    assert r.state.output == 1


def test_program_input_matches_leaf_hash():
    setup = D.make_setup("cpu-v")
    payload = D.pad_user_input(b"some user input", setup.params.pk("A", "Y"))
    script = D.script_u(setup.params.pk("A", "Y"), payload)
    pi = D.program_input(script)
    from esspi.taproot import tapleaf_hash
    assert run(pi).mib_at_ab == tapleaf_hash(script)


def test_nop_record():
    st_ = new_state(bytes(64), make_spi(bytes(32), 64))
    st_.program = [encode("NOP")]
    rec = step(st_)
    assert (rec.trace.write_addr, rec.trace.write_value, rec.trace.pc_next) == (0, 0, 4)
    assert st_.step == 1


def test_hash_update_compresses_meb():
    st_ = new_state(bytes(64), make_spi(bytes(32), 64))
    st_.meb[:] = bytes(range(64))
    st_.program = [encode("HASH_UPDATE")]
    rec = step(st_)
    assert rec.trace.mib == owcf_compress(IV, bytes(range(64))).digest()


def test_illegal_opcode_faults():
    st_ = new_state(bytes(64), make_spi(bytes(32), 64))
    st_.program = [0xEE000000]
    rec = step(st_)
    assert rec.trace.flags & FLAG_FAULT and st_.halted
    with pytest.raises(CpuError):
        step(st_)


def test_mib_store_in_icm_is_visible():
    st_ = new_state(bytes(64), make_spi(bytes(32), 64))
    st_.regs[1] = 0xDEADBEEF
    st_.program = [encode("SW", 1, 0, MIB_BASE)]
    rec = step(st_)
    assert rec.trace.mib != IV.digest()
    assert rec.op not in HASH_OPS
    assert st_.icm_violations


def test_lssw_offsets():
    upi = upi_of(128)
    st_ = new_state(upi, make_spi(bytes(32), 128))
    rec = lssw(st_, UPI_BASE)
    assert rec.read1_addr == UPI_BASE and rec.trace.write_addr == UPI_BASE
    assert rec.trace.write_value == rec.read1_value == int.from_bytes(upi[:4], "little")
    assert st_.meb[:4] == upi[:4]
    rec = lssw(st_, UPI_BASE + 64)
    assert st_.meb[:4] == upi[64:68]
    assert meb_offset(UPI_BASE + 68) == 4
    assert bytes(st_.upi) == upi


@pytest.mark.parametrize("delta", [-4, -3, -2, -1])
def test_lssw_straddle_end_halts(delta):
    st_ = new_state(bytes(64), make_spi(bytes(32), 64))
    rec = lssw(st_, UPI_BASE + 64 + delta + (4 if delta == -4 else 0))
    assert rec.trace.flags & FLAG_HALT and st_.halted


@pytest.mark.parametrize("addr", [UPI_BASE - 4, UPI_BASE - 2, UPI_BASE - 1, MEB_BASE])
def test_lssw_outside_halts(addr):
    st_ = new_state(bytes(64), make_spi(bytes(32), 64))
    assert lssw(st_, addr).trace.flags & FLAG_FAULT


def test_step_hash_chain_bruteforce():
    r = run(bytes(64))
    recs = [x.trace for x in r.records[:3]]
    h = STEP_HASH_SEED
    for tr in recs:
        h = hashlib.sha256(h + tr.serialize()).digest()
    assert step_hash_chain(recs)[-1] == h
    assert step_hash(STEP_HASH_SEED, recs[0]) == step_hash_chain(recs)[0]
    # no steps: no heads, the chain is just its all-zero seed
    assert step_hash_chain([]) == []
    assert STEP_HASH_SEED == bytes(32)


def test_chain_prefix_sensitivity():
    r = run(upi_of(64))
    traces = r.traces
    base = step_hash_chain(traces)
    i = 10
    mutated = list(traces)
    mutated[i] = TraceRecord(traces[i].write_addr ^ 1, *[getattr(traces[i], f) for f in
                                                          ("write_value", "pc_next", "mib", "opcode", "flags")])
    other = step_hash_chain(mutated)
    assert other[:i] == base[:i]
    assert all(a != b for a, b in zip(other[i:], base[i:]))


def test_boundary_and_switch_flag():
    upi = upi_of(192)
    r = run(upi)
    assert r.ab == icm_steps(192)
    assert r.records[r.ab - 1].trace.flags & FLAG_SWITCH


def test_each_word_read_once_per_block():
    upi = upi_of(256, 3)
    r = run(upi)
    lssws = [x for x in r.records[:r.ab] if x.op == OP_LSSW]
    assert sorted(x.read1_addr for x in lssws) == list(range(UPI_BASE, UPI_BASE + 256, 4))
    # between consecutive HASH_UPDATEs each MEB word is written exactly once
    block = []
    for x in r.records[:r.ab]:
        if x.op == OP_LSSW:
            block.append(meb_offset(x.read1_addr))
        elif x.op in HASH_OPS and block:
            assert sorted(block) == list(range(0, 64, 4))
            block = []


def test_referee_and_replay():
    upi = upi_of(64)
    r = run(upi)
    spi = make_spi(hashlib.sha256(upi).digest(), 64, upi[:8])
    for i in (0, 5, r.ab - 1, r.n - 1):
        pre = replay_to(upi, spi, r.ab, i)
        assert referee_step(pre) == r.records[i]


def test_bad_boundary_rejected():
    with pytest.raises(CpuError):
        run(bytes(64), ab=icm_steps(64) - 1)
    with pytest.raises(CpuError):
        run_sections(bytes(63), make_spi(bytes(32), 63))


def test_assembler():
    assert assemble("ADDI r1, r2, -1") == [encode("ADDI", 1, 2, 0xFFFF)]
    assert assemble("top:\n  NOP\n  JMP top") == [encode("NOP"), encode("JMP", 0, 0, 0)]
    assert disassemble(encode("ADDI", 1, 2, 0xFFFF)) == "ADDI rd=r1 rs1=r2 imm=-1"
    assert len(build_program().words) > icm_steps(64) // 20


def test_icm_steps_64():
    assert icm_steps(64) == 44


@settings(max_examples=25)
@given(st.integers(1, 64), st.integers(0, 2**32))
def test_mib_at_ab_is_sha256(blocks, seed):
    upi = upi_of(64 * blocks, seed)
    assert run(upi).mib_at_ab == hashlib.sha256(upi).digest()
