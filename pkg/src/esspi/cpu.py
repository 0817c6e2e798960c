"""A minimal 32-bit word machine with an input-check mode (ICM).

Instruction words are ``op(8) | rd(4) | rs1(4) | imm(16)``; three-register
ops take rs2 from the low nibble of imm.  Branch and jump targets are
absolute instruction indices.  pc is a byte address (index * 4) into a
separate program memory.  Data memory is little-endian and split into
regions:

    ======  ==========  ======================================
    region  base        notes
    ======  ==========  ======================================
    SPI     0x00001000  OT-signed input (V, length, bitcount...)
    MEB     0x00001100  64-byte hash message buffer
    MIB     0x00001140  32-byte midstate buffer (big-endian words)
    RAM     0x00002000  general purpose, output word at RAM base
    UPI     0x00100000  unsigned program input
    REGS    0xFFFF0000  registers, so register writes are memory writes
    ======  ==========  ======================================

Opcode map (op byte -> mnemonic)::

    00 NOP   01 HALT  02 LI    03 LUI   04 ADD   05 ADDI  06 SUB   07 XOR
    08 AND   09 OR    0A LW    0B SW    0C LSSW  0D BEQ   0E BNE   0F JMP
    10 HASH_UPDATE    11 HASH_FINAL     12 HASH_RESET     13 SRLI  14 SLLI
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field, replace

from .hashcore import IV, Midstate, owcf_compress, sha256

SPI_BASE = 0x1000
SPI_LEN = 0x100
MEB_BASE = 0x1100
MEB_LEN = 64
MIB_BASE = 0x1140
MIB_LEN = 32
RAM_BASE = 0x2000
UPI_BASE = 0x00100000
REG_BASE = 0xFFFF0000
OUT_ADDR = RAM_BASE

NOREAD = 0xFFFFFFFF
INIT_STEP = 0xFFFFFFFF

FLAG_HALT = 0x01
FLAG_FAULT = 0x02
FLAG_ICM = 0x04
FLAG_SWITCH = 0x08

OPCODES = {
    "NOP": 0x00, "HALT": 0x01, "LI": 0x02, "LUI": 0x03, "ADD": 0x04, "ADDI": 0x05,
    "SUB": 0x06, "XOR": 0x07, "AND": 0x08, "OR": 0x09, "LW": 0x0A, "SW": 0x0B,
    "LSSW": 0x0C, "BEQ": 0x0D, "BNE": 0x0E, "JMP": 0x0F, "HASH_UPDATE": 0x10,
    "HASH_FINAL": 0x11, "HASH_RESET": 0x12, "SRLI": 0x13, "SLLI": 0x14,
}
MNEMONICS = {v: k for k, v in OPCODES.items()}
HASH_OPS = {OPCODES["HASH_UPDATE"], OPCODES["HASH_FINAL"]}
OP_LSSW = OPCODES["LSSW"]

# SPI layout used by the prelude and the section-B checker
SPI_V = 0
SPI_LEN_BYTES = 32
SPI_BITCOUNT = 36
SPI_HDR_WORDS = 44
SPI_HDR = 48
SPI_SPIN = 112
SPI_SIZE = 116

M32 = 0xFFFFFFFF


class CpuError(Exception):
    pass


def opcode_of(word: int) -> int:
    return (word >> 24) & 0xFF


def encode(op: str, rd: int = 0, rs1: int = 0, imm: int = 0) -> int:
    return (OPCODES[op] << 24) | ((rd & 0xF) << 20) | ((rs1 & 0xF) << 16) | (imm & 0xFFFF)


def _sext16(v: int) -> int:
    return v - 0x10000 if v & 0x8000 else v


@dataclass(frozen=True)
class TraceRecord:
    """The hashed per-step trace: 4+4+4+32+4+1 = 49 bytes."""

    write_addr: int
    write_value: int
    pc_next: int
    mib: bytes
    opcode: int
    flags: int

    SIZE = 49

    def serialize(self) -> bytes:
        return struct.pack(">III", self.write_addr, self.write_value, self.pc_next) + self.mib + struct.pack(
            ">IB", self.opcode, self.flags
        )

    @classmethod
    def parse(cls, raw: bytes) -> "TraceRecord":
        if len(raw) != cls.SIZE:
            raise ValueError("trace record must be 49 bytes")
        wa, wv, pc = struct.unpack(">III", raw[:12])
        op, fl = struct.unpack(">IB", raw[44:])
        return cls(wa, wv, pc, raw[12:44], op, fl)


@dataclass(frozen=True)
class FullTraceRecord:
    read1_addr: int
    read1_value: int
    read1_laststep: int
    read2_addr: int
    read2_value: int
    read2_laststep: int
    trace: TraceRecord

    @property
    def op(self) -> int:
        return opcode_of(self.trace.opcode)

    def serialize(self) -> bytes:
        return struct.pack(">6I", self.read1_addr, self.read1_value, self.read1_laststep, self.read2_addr,
                           self.read2_value, self.read2_laststep) + self.trace.serialize()

    @classmethod
    def parse(cls, raw: bytes) -> "FullTraceRecord":
        head = struct.unpack(">6I", raw[:24])
        return cls(*head, TraceRecord.parse(raw[24:]))

    def with_trace(self, **changes) -> "FullTraceRecord":
        return replace(self, trace=replace(self.trace, **changes))


STEP_HASH_SEED = bytes(32)


def step_hash(prev: bytes, tr: TraceRecord) -> bytes:
    return sha256(prev + tr.serialize())


def step_hash_chain(traces: list[TraceRecord], seed: bytes = STEP_HASH_SEED) -> list[bytes]:
    out = []
    h = seed
    for tr in traces:
        h = step_hash(h, tr)
        out.append(h)
    return out


# Assembler

_LINE = re.compile(r"^\s*(?:(\w+):)?\s*(.*?)\s*(?:#.*)?$")
_MEMREF = re.compile(r"^(-?\w+)\((r\d+)\)$")


def _reg(tok: str) -> int:
    if not re.fullmatch(r"r(\d|1[0-5])", tok):
        raise CpuError(f"bad register {tok!r}")
    return int(tok[1:])


def _imm(tok: str, labels: dict[str, int]) -> int:
    if tok in labels:
        return labels[tok]
    return int(tok, 0)


def assemble(text: str) -> list[int]:
    """One instruction per line: ``[label:] MNEMONIC operands  # comment``."""
    rows = []
    labels: dict[str, int] = {}
    for line in text.splitlines():
        m = _LINE.match(line)
        label, body = m.group(1), m.group(2)
        if label:
            labels[label] = len(rows)
        if body:
            rows.append(body)
    out = []
    for body in rows:
        parts = body.replace(",", " ").split()
        op, args = parts[0].upper(), parts[1:]
        if op not in OPCODES:
            raise CpuError(f"unknown mnemonic {op}")
        if op in ("NOP", "HALT", "HASH_UPDATE", "HASH_FINAL", "HASH_RESET"):
            out.append(encode(op))
        elif op in ("LI", "LUI"):
            out.append(encode(op, _reg(args[0]), 0, _imm(args[1], labels)))
        elif op in ("ADD", "SUB", "XOR", "AND", "OR"):
            out.append(encode(op, _reg(args[0]), _reg(args[1]), _reg(args[2])))
        elif op in ("ADDI", "SRLI", "SLLI"):
            out.append(encode(op, _reg(args[0]), _reg(args[1]), _imm(args[2], labels)))
        elif op in ("LW", "SW"):
            mm = _MEMREF.match(args[1])
            if not mm:
                raise CpuError(f"bad memory operand {args[1]!r}")
            out.append(encode(op, _reg(args[0]), _reg(mm.group(2)), _imm(mm.group(1), labels)))
        elif op == "LSSW":
            mm = _MEMREF.match(args[0])
            if not mm:
                raise CpuError(f"bad memory operand {args[0]!r}")
            out.append(encode(op, 0, _reg(mm.group(2)), _imm(mm.group(1), labels)))
        elif op in ("BEQ", "BNE"):
            out.append(encode(op, _reg(args[0]), _reg(args[1]), _imm(args[2], labels)))
        elif op == "JMP":
            out.append(encode(op, 0, 0, _imm(args[0], labels)))
    return out


def disassemble(word: int) -> str:
    op = MNEMONICS.get(opcode_of(word), f"?{opcode_of(word):02x}")
    rd, rs1, imm = (word >> 20) & 0xF, (word >> 16) & 0xF, word & 0xFFFF
    return f"{op} rd=r{rd} rs1=r{rs1} imm={_sext16(imm)}"


# Machine state


@dataclass
class MemLayout:
    upi_len: int
    spi_len: int = SPI_SIZE

    def __post_init__(self) -> None:
        regions = self.regions()
        spans = sorted((b, b + n) for b, n in regions.values())
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if a1 > b0:
                raise CpuError("memory regions overlap")
        if self.spi_len > SPI_LEN:
            raise CpuError("SPI too large")

    def regions(self) -> dict[str, tuple[int, int]]:
        return {
            "SPI": (SPI_BASE, self.spi_len),
            "MEB": (MEB_BASE, MEB_LEN),
            "MIB": (MIB_BASE, MIB_LEN),
            "UPI": (UPI_BASE, self.upi_len),
        }

    def in_upi(self, addr: int, n: int = 4) -> bool:
        return UPI_BASE <= addr and addr + n <= UPI_BASE + self.upi_len


@dataclass
class CpuState:
    program: list[int]
    upi: bytearray
    spi: bytes
    layout: MemLayout
    ab: int
    main_entry: int
    pc: int = 0
    regs: list[int] = field(default_factory=lambda: [0] * 16)
    meb: bytearray = field(default_factory=lambda: bytearray(MEB_LEN))
    mib: Midstate = IV
    ram: dict[int, int] = field(default_factory=dict)
    mode: str = "ICM"
    step: int = 0
    halted: bool = False
    fault: str = ""
    last_write: dict[int, int] = field(default_factory=dict)
    icm_violations: list[str] = field(default_factory=list)

    def copy(self) -> "CpuState":
        return CpuState(
            list(self.program), bytearray(self.upi), self.spi, self.layout, self.ab, self.main_entry, self.pc,
            list(self.regs), bytearray(self.meb), self.mib, dict(self.ram), self.mode, self.step, self.halted,
            self.fault, dict(self.last_write), list(self.icm_violations),
        )

    # memory

    def _icm_check(self, addr: int, what: str) -> None:
        if self.mode != "ICM":
            return
        if MEB_BASE <= addr < MEB_BASE + MEB_LEN or addr >= REG_BASE:
            return
        if what == "read" and SPI_BASE <= addr < SPI_BASE + self.layout.spi_len:
            return
        self.icm_violations.append(f"step {self.step}: {what} {addr:#x}")

    def load(self, addr: int) -> int:
        if addr % 4:
            raise CpuError(f"unaligned load {addr:#x}")
        if SPI_BASE <= addr < SPI_BASE + SPI_LEN:
            off = addr - SPI_BASE
            return int.from_bytes(self.spi[off:off + 4].ljust(4, b"\x00"), "little")
        if MEB_BASE <= addr < MEB_BASE + MEB_LEN:
            off = addr - MEB_BASE
            return int.from_bytes(self.meb[off:off + 4], "little")
        if MIB_BASE <= addr < MIB_BASE + MIB_LEN:
            return self.mib.words[(addr - MIB_BASE) // 4]
        if self.layout.in_upi(addr):
            off = addr - UPI_BASE
            return int.from_bytes(self.upi[off:off + 4], "little")
        return self.ram.get(addr, 0)

    def store(self, addr: int, value: int) -> None:
        if addr % 4:
            raise CpuError(f"unaligned store {addr:#x}")
        value &= M32
        if SPI_BASE <= addr < SPI_BASE + SPI_LEN or UPI_BASE <= addr < UPI_BASE + max(self.layout.upi_len, 1):
            raise CpuError(f"store to read-only input {addr:#x}")
        if MEB_BASE <= addr < MEB_BASE + MEB_LEN:
            off = addr - MEB_BASE
            self.meb[off:off + 4] = value.to_bytes(4, "little")
        elif MIB_BASE <= addr < MIB_BASE + MIB_LEN:
            words = list(self.mib.words)
            words[(addr - MIB_BASE) // 4] = value
            self.mib = Midstate(tuple(words), self.mib.bytes_compressed)
        else:
            self.ram[addr] = value

    @property
    def output(self) -> int:
        return self.ram.get(OUT_ADDR, 0)


def _reg_addr(r: int) -> int:
    return REG_BASE + 4 * r


def step(st: CpuState) -> FullTraceRecord:
    """Execute one instruction in place and return its full trace record."""
    if st.halted:
        raise CpuError("machine is halted")
    idx = st.pc // 4
    word = st.program[idx] if 0 <= idx < len(st.program) else 0xFF000000
    op = opcode_of(word)
    rd, rs1, imm = (word >> 20) & 0xF, (word >> 16) & 0xF, word & 0xFFFF
    simm = _sext16(imm)
    r1 = r2 = (NOREAD, 0, NOREAD)
    waddr, wval = 0, 0
    pc_next = st.pc + 4
    flags = FLAG_ICM if st.mode == "ICM" else 0

    def rreg(r: int) -> tuple[int, int, int]:
        a = _reg_addr(r)
        return a, st.regs[r], st.last_write.get(a, INIT_STEP)

    def rmem(a: int) -> tuple[int, int, int]:
        st._icm_check(a, "read")
        return a, st.load(a), st.last_write.get(a, INIT_STEP)

    def wreg(r: int, v: int) -> tuple[int, int]:
        v &= M32
        st.regs[r] = v
        return _reg_addr(r), v

    try:
        name = MNEMONICS.get(op)
        if name is None:
            raise CpuError(f"illegal opcode {op:#04x}")
        if name == "NOP":
            pass
        elif name == "HALT":
            st.halted = True
            pc_next = st.pc
            flags |= FLAG_HALT
        elif name == "LI":
            waddr, wval = wreg(rd, simm)
        elif name == "LUI":
            waddr, wval = wreg(rd, imm << 16)
        elif name in ("ADD", "SUB", "XOR", "AND", "OR"):
            r1, r2 = rreg(rs1), rreg(imm & 0xF)
            a, b = r1[1], r2[1]
            v = {"ADD": a + b, "SUB": a - b, "XOR": a ^ b, "AND": a & b, "OR": a | b}[name]
            waddr, wval = wreg(rd, v)
        elif name in ("ADDI", "SRLI", "SLLI"):
            r1 = rreg(rs1)
            a = r1[1]
            v = {"ADDI": a + simm, "SRLI": a >> (imm & 31), "SLLI": a << (imm & 31)}[name]
            waddr, wval = wreg(rd, v)
        elif name == "LW":
            r1 = rreg(rs1)
            addr = (r1[1] + simm) & M32
            if st.mode == "ICM" and st.layout.in_upi(addr, 1):
                st.icm_violations.append(f"step {st.step}: LW from UPI in ICM")
            r2 = rmem(addr)
            waddr, wval = wreg(rd, r2[1])
        elif name == "SW":
            r1, r2 = rreg(rs1), rreg(rd)
            addr = (r1[1] + simm) & M32
            st._icm_check(addr, "write")
            st.store(addr, r2[1])
            waddr, wval = addr, r2[1]
        elif name == "LSSW":
            base = rreg(rs1)
            addr = (base[1] + simm) & M32
            r1, waddr, wval = _lssw(st, addr)
            r2 = base
        elif name in ("BEQ", "BNE"):
            r1, r2 = rreg(rd), rreg(rs1)
            taken = (r1[1] == r2[1]) == (name == "BEQ")
            if taken:
                pc_next = imm * 4
        elif name == "JMP":
            pc_next = imm * 4
        elif name in ("HASH_UPDATE", "HASH_FINAL"):
            st.mib = owcf_compress(st.mib, bytes(st.meb))
        elif name == "HASH_RESET":
            st.mib = IV
    except CpuError as e:
        st.halted = True
        st.fault = str(e)
        flags |= FLAG_HALT | FLAG_FAULT
        pc_next = st.pc
        waddr, wval = 0, 0
    if waddr:
        st.last_write[waddr] = st.step
    if not st.halted and st.mode == "ICM" and st.step == st.ab - 1:
        st.mode = "NORMAL"
        pc_next = st.main_entry * 4
        flags |= FLAG_SWITCH
    tr = TraceRecord(waddr, wval, pc_next, st.mib.digest(), word, flags)
    st.pc = pc_next
    st.step += 1
    return FullTraceRecord(*r1, *r2, tr)


def _lssw(st: CpuState, addr: int):
    if not st.layout.in_upi(addr):
        raise CpuError(f"LSSW word at {addr:#x} not inside UPI")
    if addr % 4:
        raise CpuError(f"unaligned LSSW {addr:#x}")
    off = addr - UPI_BASE
    value = int.from_bytes(st.upi[off:off + 4], "little")
    read1 = (addr, value, st.last_write.get(addr, INIT_STEP))
    st.upi[off:off + 4] = value.to_bytes(4, "little")
    meb_off = off % MEB_LEN
    st.meb[meb_off:meb_off + 4] = value.to_bytes(4, "little")
    st.last_write[MEB_BASE + meb_off] = st.step
    return read1, addr, value


def lssw(st: CpuState, addr: int) -> FullTraceRecord:
    """Run a single LSSW at ``addr`` (base register r0) regardless of pc."""
    if not -0x8000 <= addr - st.regs[0] < 0x8000:
        saved = st.regs[15]
        st.regs[15] = addr
        st.program = st.program + [encode("LSSW", 0, 15, 0)]
        st.pc = (len(st.program) - 1) * 4
        rec = step(st)
        st.regs[15] = saved
        return rec
    st.program = st.program + [encode("LSSW", 0, 0, addr)]
    st.pc = (len(st.program) - 1) * 4
    return step(st)


def meb_offset(read1_addr: int) -> int:
    return (read1_addr - UPI_BASE) % MEB_LEN


# Programs


def icm_prelude_text() -> str:
    stores = "\n".join(f"  SW r0, {MEB_BASE + 4 * k:#x}(r0)" for k in range(1, 14))
    lssws = "\n".join(f"  LSSW {4 * k}(r2)" for k in range(16))
    return f"""
  LUI r2, {UPI_BASE >> 16:#x}
  LW r1, {SPI_BASE + SPI_LEN_BYTES:#x}(r0)
  ADD r3, r2, r1
loop:
  BEQ r2, r3, pad
{lssws}
  HASH_UPDATE
  ADDI r2, r2, 64
  JMP loop
pad:
  LI r4, 0x80
  SW r4, {MEB_BASE:#x}(r0)
{stores}
  LW r5, {SPI_BASE + SPI_BITCOUNT:#x}(r0)
  SW r5, {MEB_BASE + 56:#x}(r0)
  LW r5, {SPI_BASE + SPI_BITCOUNT + 4:#x}(r0)
  SW r5, {MEB_BASE + 60:#x}(r0)
  HASH_FINAL
sled:
  NOP
  JMP sled
"""


def section_b_text() -> str:
    """Toy checker: compare a header of the rewritten UPI against SPI, spin, report."""
    return f"""
main:
  LUI r2, {UPI_BASE >> 16:#x}
  LW r7, {SPI_BASE + SPI_HDR_WORDS:#x}(r0)
  LI r6, {SPI_BASE + SPI_HDR:#x}
hdr:
  BEQ r7, r0, hdr_ok
  LW r4, 0(r2)
  LW r5, 0(r6)
  BNE r4, r5, fail
  ADDI r2, r2, 4
  ADDI r6, r6, 4
  ADDI r7, r7, -1
  JMP hdr
hdr_ok:
  LW r8, {SPI_BASE + SPI_SPIN:#x}(r0)
spin:
  BEQ r8, r0, done
  ADDI r8, r8, -1
  JMP spin
done:
  LI r9, 1
  SW r9, {OUT_ADDR:#x}(r0)
  HALT
fail:
  SW r0, {OUT_ADDR:#x}(r0)
  HALT
"""


@dataclass(frozen=True)
class Program:
    words: tuple[int, ...]
    main_entry: int


def build_program() -> Program:
    pre = assemble(icm_prelude_text())
    main = assemble(section_b_text())
    # section-B branch targets are relative to its own start; relocate
    base = len(pre)
    relocated = []
    for w in main:
        op = opcode_of(w)
        if op in (OPCODES["BEQ"], OPCODES["BNE"], OPCODES["JMP"]):
            w = (w & 0xFFFF0000) | ((w & 0xFFFF) + base)
        relocated.append(w)
    return Program(tuple(pre + relocated), base)


def icm_steps(upi_len: int) -> int:
    """Steps the prelude needs to reach and execute HASH_FINAL."""
    blocks = upi_len // 64
    return 3 + 20 * blocks + 1 + 2 + 13 + 4 + 1


def make_spi(v: bytes, upi_len: int, header: bytes = b"", spin: int = 0) -> bytes:
    if len(v) != 32:
        raise ValueError("V must be 32 bytes")
    if len(header) % 4 or len(header) > 64:
        raise ValueError("header must be a multiple of 4 bytes, at most 64")
    spi = bytearray(SPI_SIZE)
    spi[SPI_V:SPI_V + 32] = v
    spi[SPI_LEN_BYTES:SPI_LEN_BYTES + 4] = upi_len.to_bytes(4, "little")
    spi[SPI_BITCOUNT:SPI_BITCOUNT + 8] = (upi_len * 8).to_bytes(8, "big")
    spi[SPI_HDR_WORDS:SPI_HDR_WORDS + 4] = (len(header) // 4).to_bytes(4, "little")
    spi[SPI_HDR:SPI_HDR + len(header)] = header
    spi[SPI_SPIN:SPI_SPIN + 4] = spin.to_bytes(4, "little")
    return bytes(spi)


def new_state(upi: bytes, spi: bytes, ab: int | None = None, program: Program | None = None) -> CpuState:
    if len(upi) % 64:
        raise CpuError("program input length must be a multiple of 64")
    prog = program or build_program()
    if ab is None:
        ab = icm_steps(len(upi))
    return CpuState(list(prog.words), bytearray(upi), spi, MemLayout(len(upi)), ab, prog.main_entry)


@dataclass
class RunResult:
    records: list[FullTraceRecord]
    step_hashes: list[bytes]
    state: CpuState
    ab: int
    meb_at: dict[int, bytes]  # MEB contents consumed by each hash step

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def traces(self) -> list[TraceRecord]:
        return [r.trace for r in self.records]

    def mib(self, i: int) -> bytes:
        """MIB after step i; i = -1 is the initial IV."""
        return IV.digest() if i < 0 else self.records[i].trace.mib

    @property
    def mib_at_ab(self) -> bytes:
        return self.mib(self.ab - 1)

    def meb_before(self, i: int) -> bytes:
        return self.meb_at[i]


def run_sections(upi: bytes, spi: bytes, ab: int | None = None, max_steps: int = 1_000_000,
                 program: Program | None = None, strict_icm: bool = True) -> RunResult:
    st = new_state(upi, spi, ab, program)
    if st.ab < icm_steps(len(upi)):
        raise CpuError(f"boundary {st.ab} too small for {len(upi)} input bytes (need {icm_steps(len(upi))})")
    records: list[FullTraceRecord] = []
    meb_at: dict[int, bytes] = {}
    while not st.halted and st.step < max_steps:
        i = st.step
        word = st.program[st.pc // 4] if 0 <= st.pc // 4 < len(st.program) else 0
        if opcode_of(word) in HASH_OPS:
            meb_at[i] = bytes(st.meb)
        records.append(step(st))
    if strict_icm and st.icm_violations:
        raise CpuError("ICM access discipline violated: " + "; ".join(st.icm_violations[:3]))
    return RunResult(records, step_hash_chain([r.trace for r in records]), st, st.ab, meb_at)


def referee_step(pre: CpuState) -> FullTraceRecord:
    """Re-execute one step from a copy of ``pre``; stands in for on-chain instruction checks."""
    return step(pre.copy())


def replay_to(upi: bytes, spi: bytes, ab: int, i: int, program: Program | None = None) -> CpuState:
    """State right before step i of an honest run."""
    st = new_state(upi, spi, ab, program)
    while st.step < i and not st.halted:
        step(st)
    return st
