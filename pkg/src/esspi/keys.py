"""Raw secp256k1 signatures (no message pre-hashing) backed by libsecp256k1."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Literal

from coincurve import PrivateKey, PublicKey, PublicKeyXOnly

from .hashcore import tagged_hash

__all__ = [
    "CURVE_ORDER",
    "NUMS_KEY",
    "KeyPair",
    "schnorr_sign_raw",
    "schnorr_verify_raw",
    "ecdsa_sign_raw",
    "ecdsa_verify_raw",
    "sig_sign_raw",
    "sig_verify_raw",
    "taproot_tweak_pubkey",
    "taproot_tweak_seckey",
]

CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

# x-only point with no known discrete log (lift_x of sha256(G uncompressed)).
NUMS_KEY = bytes.fromhex("50929b74c1a04954b78b4b6035e97a5e078a5a0f28ec96d547bfee9ace803ac0")

Scheme = Literal["schnorr", "ecdsa"]


def _check_digest(digest: bytes) -> None:
    if len(digest) != 32:
        raise ValueError(f"digest must be exactly 32 bytes, got {len(digest)}")


def _check_seckey(seckey: bytes) -> None:
    if len(seckey) != 32:
        raise ValueError("secret key must be 32 bytes")
    k = int.from_bytes(seckey, "big")
    if not 0 < k < CURVE_ORDER:
        raise ValueError("secret key out of range")


def schnorr_sign_raw(seckey: bytes, digest: bytes, aux: bytes = b"\x00" * 32) -> bytes:
    _check_digest(digest)
    _check_seckey(seckey)
    return PrivateKey(seckey).sign_schnorr(digest, aux)


def schnorr_verify_raw(xonly: bytes, digest: bytes, sig: bytes) -> bool:
    """BIP-340 verification.  Unparseable keys verify as false."""
    _check_digest(digest)
    if len(xonly) != 32:
        raise ValueError("x-only key must be 32 bytes")
    if len(sig) != 64:
        raise ValueError("schnorr signature must be 64 bytes")
    try:
        pk = PublicKeyXOnly(xonly)
    except ValueError:
        return False
    return pk.verify(sig, digest)


def ecdsa_sign_raw(seckey: bytes, digest: bytes) -> bytes:
    """DER-encoded low-S ECDSA signature of a 32-byte value, without hashing it."""
    _check_digest(digest)
    _check_seckey(seckey)
    return PrivateKey(seckey).sign(digest, hasher=None)


def ecdsa_verify_raw(pubkey: bytes, digest: bytes, der_sig: bytes) -> bool:
    _check_digest(digest)
    if len(pubkey) not in (33, 65):
        raise ValueError("ECDSA public key must be 33 or 65 bytes")
    try:
        return PublicKey(pubkey).verify(der_sig, digest, hasher=None)
    except (ValueError, TypeError):
        return False


def sig_sign_raw(scheme: Scheme, seckey: bytes, digest: bytes) -> bytes:
    if scheme == "schnorr":
        return schnorr_sign_raw(seckey, digest)
    if scheme == "ecdsa":
        return ecdsa_sign_raw(seckey, digest)
    raise ValueError(f"unknown scheme {scheme!r}")


def sig_verify_raw(scheme: Scheme, pubkey: bytes, digest: bytes, sig: bytes) -> bool:
    if scheme == "schnorr":
        return schnorr_verify_raw(pubkey, digest, sig)
    if scheme == "ecdsa":
        return ecdsa_verify_raw(pubkey, digest, sig)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class KeyPair:
    seckey: bytes

    def __post_init__(self) -> None:
        _check_seckey(self.seckey)

    @classmethod
    def from_seed(cls, seed: bytes | str) -> "KeyPair":
        if isinstance(seed, str):
            seed = seed.encode()
        k = hashlib.sha256(b"esspi/key" + seed).digest()
        while not 0 < int.from_bytes(k, "big") < CURVE_ORDER:
            k = hashlib.sha256(k).digest()
        return cls(k)

    @property
    def xonly(self) -> bytes:
        return PrivateKey(self.seckey).public_key.format(compressed=True)[1:]

    @property
    def pubkey(self) -> bytes:
        """Compressed SEC1 public key."""
        return PrivateKey(self.seckey).public_key.format(compressed=True)

    def sign_schnorr(self, digest: bytes) -> bytes:
        return schnorr_sign_raw(self.seckey, digest)

    def sign_ecdsa(self, digest: bytes) -> bytes:
        return ecdsa_sign_raw(self.seckey, digest)


def taproot_tweak_pubkey(internal_key: bytes, merkle_root: bytes) -> tuple[bytes, int]:
    """Output key and its y-parity for ``internal_key`` committed to ``merkle_root``."""
    tweak = tagged_hash("TapTweak", internal_key + merkle_root)
    if int.from_bytes(tweak, "big") >= CURVE_ORDER:
        raise ValueError("tweak out of range")
    pk = PublicKeyXOnly(internal_key)
    pk.tweak_add(tweak)
    return pk.format(), int(pk.parity)


def taproot_tweak_seckey(seckey: bytes, merkle_root: bytes) -> bytes:
    """Secret key for key-path spending of the tweaked output key."""
    priv = PrivateKey(seckey)
    k = int.from_bytes(seckey, "big")
    if priv.public_key.format(compressed=True)[0] == 3:
        k = CURVE_ORDER - k
    xonly = priv.public_key.format(compressed=True)[1:]
    tweak = int.from_bytes(tagged_hash("TapTweak", xonly + merkle_root), "big")
    return ((k + tweak) % CURVE_ORDER).to_bytes(32, "big")
