"""SHA-256 with an exposed compression function.

Midstates are first-class values here because the dispute and fraud code
reason about partial hash computations (continuing a state with a block,
finalizing with a claimed bit count).  One-shot hashing goes through
:mod:`hashlib`; the compressor below is the in-repo implementation and the
test-suite checks the two against each other.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

__all__ = [
    "IV",
    "Midstate",
    "owcf_compress",
    "compress_chain",
    "padding",
    "padding_blocks",
    "midstate_finalize",
    "embedded_bitcount",
    "sha256",
    "sha256d",
    "tagged_hash",
    "ripemd160",
    "hash160",
]

_K = (
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1, 0x923F82A4, 0xAB1C5ED5,
    0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3, 0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174,
    0xE49B69C1, 0xEFBE4786, 0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147, 0x06CA6351, 0x14292967,
    0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13, 0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85,
    0xA2BFE8A1, 0xA81A664B, 0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A, 0x5B9CCA4F, 0x682E6FF3,
    0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208, 0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
)

_IV_WORDS = (
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
    0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
)

_M32 = 0xFFFFFFFF


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & _M32


@dataclass(frozen=True)
class Midstate:
    """Compressor state: eight 32-bit words plus the number of bytes fed in."""

    words: tuple[int, ...] = _IV_WORDS
    bytes_compressed: int = 0

    def __post_init__(self) -> None:
        if len(self.words) != 8:
            raise ValueError("midstate needs exactly 8 words")
        if self.bytes_compressed % 64:
            raise ValueError("bytes_compressed must be a multiple of 64")

    def digest(self) -> bytes:
        """Big-endian serialization of the state words (32 bytes)."""
        return struct.pack(">8I", *self.words)

    @classmethod
    def from_digest(cls, state: bytes, bytes_compressed: int = 0) -> "Midstate":
        if len(state) != 32:
            raise ValueError("midstate bytes must be 32 long")
        return cls(struct.unpack(">8I", state), bytes_compressed)

    def to_hex(self) -> str:
        return self.digest().hex() + struct.pack(">Q", self.bytes_compressed).hex()

    @classmethod
    def from_hex(cls, text: str) -> "Midstate":
        raw = bytes.fromhex(text)
        if len(raw) != 40:
            raise ValueError("midstate hex must encode 40 bytes")
        return cls.from_digest(raw[:32], struct.unpack(">Q", raw[32:])[0])


IV = Midstate()


def owcf_compress(state: Midstate, block: bytes) -> Midstate:
    """Apply the SHA-256 compression function to one 64-byte block."""
    if len(block) != 64:
        raise ValueError(f"block must be 64 bytes, got {len(block)}")
    w = list(struct.unpack(">16I", block))
    for i in range(16, 64):
        s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
        s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
        w.append((w[i - 16] + s0 + w[i - 7] + s1) & _M32)
    a, b, c, d, e, f, g, h = state.words
    for i in range(64):
        s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
        ch = (e & f) ^ (~e & g)
        t1 = (h + s1 + ch + _K[i] + w[i]) & _M32
        s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
        maj = (a & b) ^ (a & c) ^ (b & c)
        t2 = (s0 + maj) & _M32
        h, g, f, e, d, c, b, a = g, f, e, (d + t1) & _M32, c, b, a, (t1 + t2) & _M32
    words = tuple((x + y) & _M32 for x, y in zip(state.words, (a, b, c, d, e, f, g, h)))
    return Midstate(words, state.bytes_compressed + 64)


def compress_chain(data: bytes, state: Midstate = IV) -> Midstate:
    """Compress every full block of ``data`` (length must be a multiple of 64)."""
    if len(data) % 64:
        raise ValueError("data length must be a multiple of 64")
    for off in range(0, len(data), 64):
        state = owcf_compress(state, data[off:off + 64])
    return state


def padding(msg_len: int) -> bytes:
    """The byte string SHA-256 appends to a message of ``msg_len`` bytes."""
    zeros = (55 - msg_len) % 64
    return b"\x80" + b"\x00" * zeros + struct.pack(">Q", (msg_len * 8) & 0xFFFFFFFFFFFFFFFF)


def padding_blocks(msg_len: int, tail: bytes | None = None) -> list[bytes]:
    """Final block(s) of a SHA-256 computation over a ``msg_len``-byte message.

    ``tail`` is the trailing ``msg_len % 64`` message bytes that share the
    first padding block; zeros are used when it is omitted.
    """
    rem = msg_len % 64
    if tail is None:
        tail = b"\x00" * rem
    elif len(tail) != rem:
        raise ValueError(f"tail must be {rem} bytes for a {msg_len}-byte message")
    raw = tail + padding(msg_len)
    return [raw[i:i + 64] for i in range(0, len(raw), 64)]


def midstate_finalize(state: Midstate, claimed_total_bits: int, tail: bytes = b"") -> bytes:
    """Finish a hash from ``state`` as if the whole message were ``claimed_total_bits`` long.

    The padding encodes the *claimed* length, not ``state.bytes_compressed``;
    this is a free-start continuation used to exhibit the bit count carried
    by a digest's final block.
    """
    if claimed_total_bits % 8:
        raise ValueError("bit count must be a whole number of bytes")
    raw = tail + b"\x80" + b"\x00" * ((55 - len(tail)) % 64) + struct.pack(">Q", claimed_total_bits)
    if len(tail) >= 64 or len(raw) % 64:
        raise ValueError("tail must be shorter than one block")
    return compress_chain(raw, state).digest()


def embedded_bitcount(final_block: bytes) -> int:
    """Bit count stored in the last 8 bytes of a padding block."""
    if len(final_block) != 64:
        raise ValueError("final block must be 64 bytes")
    return struct.unpack(">Q", final_block[56:])[0]


def sha256(msg: bytes) -> bytes:
    return hashlib.sha256(msg).digest()


def sha256d(msg: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(msg).digest()).digest()


def tagged_hash(tag: str, data: bytes) -> bytes:
    th = hashlib.sha256(tag.encode()).digest()
    return hashlib.sha256(th + th + data).digest()


# RIPEMD-160 (needed for P2SH script hashes; not exposed by this OpenSSL build)

_RL = (
    0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
    7, 4, 13, 1, 10, 6, 15, 3, 12, 0, 9, 5, 2, 14, 11, 8,
    3, 10, 14, 4, 9, 15, 8, 1, 2, 7, 0, 6, 13, 11, 5, 12,
    1, 9, 11, 10, 0, 8, 12, 4, 13, 3, 7, 15, 14, 5, 6, 2,
    4, 0, 5, 9, 7, 12, 2, 10, 14, 1, 3, 8, 11, 6, 15, 13,
)
_RR = (
    5, 14, 7, 0, 9, 2, 11, 4, 13, 6, 15, 8, 1, 10, 3, 12,
    6, 11, 3, 7, 0, 13, 5, 10, 14, 15, 8, 12, 4, 9, 1, 2,
    15, 5, 1, 3, 7, 14, 6, 9, 11, 8, 12, 2, 10, 0, 4, 13,
    8, 6, 4, 1, 3, 11, 15, 0, 5, 12, 2, 13, 9, 7, 10, 14,
    12, 15, 10, 4, 1, 5, 8, 7, 6, 2, 13, 14, 0, 3, 9, 11,
)
_SL = (
    11, 14, 15, 12, 5, 8, 7, 9, 11, 13, 14, 15, 6, 7, 9, 8,
    7, 6, 8, 13, 11, 9, 7, 15, 7, 12, 15, 9, 11, 7, 13, 12,
    11, 13, 6, 7, 14, 9, 13, 15, 14, 8, 13, 6, 5, 12, 7, 5,
    11, 12, 14, 15, 14, 15, 9, 8, 9, 14, 5, 6, 8, 6, 5, 12,
    9, 15, 5, 11, 6, 8, 13, 12, 5, 12, 13, 14, 11, 8, 5, 6,
)
_SR = (
    8, 9, 9, 11, 13, 15, 15, 5, 7, 7, 8, 11, 14, 14, 12, 6,
    9, 13, 15, 7, 12, 8, 9, 11, 7, 7, 12, 7, 6, 15, 13, 11,
    9, 7, 15, 11, 8, 6, 6, 14, 12, 13, 5, 14, 13, 13, 7, 5,
    15, 5, 8, 11, 14, 14, 6, 14, 6, 9, 12, 9, 12, 5, 15, 8,
    8, 5, 12, 9, 12, 5, 14, 6, 8, 13, 6, 5, 15, 13, 11, 11,
)
_KL = (0x00000000, 0x5A827999, 0x6ED9EBA1, 0x8F1BBCDC, 0xA953FD4E)
_KR = (0x50A28BE6, 0x5C4DD124, 0x6D703EF3, 0x7A6D76E9, 0x00000000)


def _rol(x: int, n: int) -> int:
    return ((x << n) | (x >> (32 - n))) & _M32


def _rf(j: int, x: int, y: int, z: int) -> int:
    if j == 0:
        return x ^ y ^ z
    if j == 1:
        return (x & y) | (~x & z)
    if j == 2:
        return (x | ~y) ^ z
    if j == 3:
        return (x & z) | (y & ~z)
    return x ^ (y | ~z)


def ripemd160(msg: bytes) -> bytes:
    h = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0]
    data = msg + b"\x80" + b"\x00" * ((55 - len(msg)) % 64) + struct.pack("<Q", len(msg) * 8)
    for off in range(0, len(data), 64):
        x = struct.unpack("<16I", data[off:off + 64])
        al, bl, cl, dl, el = h
        ar, br, cr, dr, er = h
        for j in range(80):
            rnd = j // 16
            t = _rol((al + (_rf(rnd, bl, cl, dl) & _M32) + x[_RL[j]] + _KL[rnd]) & _M32, _SL[j])
            t = (t + el) & _M32
            al, el, dl, cl, bl = el, dl, _rol(cl, 10), bl, t
            t = _rol((ar + (_rf(4 - rnd, br, cr, dr) & _M32) + x[_RR[j]] + _KR[rnd]) & _M32, _SR[j])
            t = (t + er) & _M32
            ar, er, dr, cr, br = er, dr, _rol(cr, 10), br, t
        t = (h[1] + cl + dr) & _M32
        h[1] = (h[2] + dl + er) & _M32
        h[2] = (h[3] + el + ar) & _M32
        h[3] = (h[4] + al + br) & _M32
        h[4] = (h[0] + bl + cr) & _M32
        h[0] = t
    return struct.pack("<5I", *h)


def hash160(msg: bytes) -> bytes:
    return ripemd160(hashlib.sha256(msg).digest())
