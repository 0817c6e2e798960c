"""Taproot script trees: leaf hashes, canonical trees, output keys, control blocks."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .hashcore import tagged_hash
from .keys import NUMS_KEY, taproot_tweak_pubkey
from .script import Script
from .tx import compact_size

TAPSCRIPT_LEAF_VERSION = 0xC0


def tapleaf_hash(script: Script | bytes, leaf_version: int = TAPSCRIPT_LEAF_VERSION) -> bytes:
    raw = script.raw if isinstance(script, Script) else script
    return tagged_hash("TapLeaf", tapleaf_preimage(raw, leaf_version))


def tapleaf_preimage(raw: bytes, leaf_version: int = TAPSCRIPT_LEAF_VERSION) -> bytes:
    """leaf_version ‖ compact_size(script) ‖ script, the data behind the TapLeaf tag."""
    return bytes([leaf_version]) + compact_size(len(raw)) + raw


def tapbranch_hash(a: bytes, b: bytes) -> bytes:
    if b < a:
        a, b = b, a
    return tagged_hash("TapBranch", a + b)


@dataclass(frozen=True)
class TapLeaf:
    script: Script
    leaf_version: int = TAPSCRIPT_LEAF_VERSION

    @cached_property
    def hash(self) -> bytes:
        return tapleaf_hash(self.script, self.leaf_version)


class TapTree:
    """Balanced binary tree over the leaves, taken in ascending leaf-hash order.

    Sorting first makes the root independent of the order the caller lists
    the scripts in, which is what lets a verifier rebuild it from a set.
    """

    def __init__(self, leaves: Iterable[TapLeaf | Script]):
        items = [lf if isinstance(lf, TapLeaf) else TapLeaf(lf) for lf in leaves]
        if not items:
            raise ValueError("a script tree needs at least one leaf")
        self.leaves: tuple[TapLeaf, ...] = tuple(sorted(items, key=lambda lf: lf.hash))
        self._paths: dict[bytes, list[bytes]] = {lf.hash: [] for lf in self.leaves}
        self.root = self._build([(lf.hash, [lf.hash]) for lf in self.leaves])

    def _build(self, level: list[tuple[bytes, list[bytes]]]) -> bytes:
        while len(level) > 1:
            nxt = []
            for i in range(0, len(level) - 1, 2):
                (ha, la), (hb, lb) = level[i], level[i + 1]
                for h in la:
                    self._paths[h].append(hb)
                for h in lb:
                    self._paths[h].append(ha)
                nxt.append((tapbranch_hash(ha, hb), la + lb))
            if len(level) % 2:
                nxt.append(level[-1])
            level = nxt
        return level[0][0]

    def leaf_for(self, script: Script) -> TapLeaf:
        for lf in self.leaves:
            if lf.script == script:
                return lf
        raise KeyError("script is not a leaf of this tree")

    def merkle_path(self, leaf: TapLeaf | Script) -> list[bytes]:
        lf = leaf if isinstance(leaf, TapLeaf) else self.leaf_for(leaf)
        return list(self._paths[lf.hash])


def root_from_path(leaf_hash: bytes, path: Sequence[bytes]) -> bytes:
    h = leaf_hash
    for sib in path:
        h = tapbranch_hash(h, sib)
    return h


@dataclass(frozen=True)
class TaprootAddress:
    internal_key: bytes
    tree: TapTree | None
    output_key: bytes
    parity: int

    @classmethod
    def from_scripts(cls, scripts: Sequence[Script], internal_key: bytes = NUMS_KEY) -> "TaprootAddress":
        tree = TapTree(scripts)
        out, parity = taproot_tweak_pubkey(internal_key, tree.root)
        return cls(internal_key, tree, out, parity)

    @classmethod
    def key_only(cls, internal_key: bytes) -> "TaprootAddress":
        out, parity = taproot_tweak_pubkey(internal_key, b"")
        return cls(internal_key, None, out, parity)

    @property
    def merkle_root(self) -> bytes:
        return self.tree.root if self.tree else b""

    @property
    def script_pubkey(self) -> Script:
        return Script.p2tr(self.output_key)

    def control_block(self, script: Script) -> bytes:
        if self.tree is None:
            raise ValueError("address has no script tree")
        lf = self.tree.leaf_for(script)
        return bytes([lf.leaf_version | self.parity]) + self.internal_key + b"".join(self.tree.merkle_path(lf))


def taptree_address(scripts: Sequence[Script], internal_key: bytes = NUMS_KEY) -> TaprootAddress:
    return TaprootAddress.from_scripts(scripts, internal_key)


def merkle_path(tree: TapTree, leaf: TapLeaf | Script) -> list[bytes]:
    return tree.merkle_path(leaf)


def verify_control_block(output_key: bytes, script: Script, control: bytes) -> bool:
    """Script-path commitment check: does ``control`` open ``output_key`` to ``script``?"""
    if len(control) < 33 or (len(control) - 33) % 32 or len(control) > 33 + 128 * 32:
        return False
    leaf_version = control[0] & 0xFE
    parity = control[0] & 1
    internal = control[1:33]
    path = [control[i:i + 32] for i in range(33, len(control), 32)]
    root = root_from_path(tapleaf_hash(script, leaf_version), path)
    try:
        out, p = taproot_tweak_pubkey(internal, root)
    except ValueError:
        return False
    return out == output_key and p == parity
