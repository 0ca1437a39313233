"""Keyed, counter-based random streams shared by encoder and decoder.

Every random draw in the codec comes from a Philox generator whose 128-bit
key is derived from ``(base_seed, purpose tag, integer fields)``. There is no
global RNG state: two processes that derive the same key produce bit-identical
streams, and streams with different keys are independent.

Philox fills arrays from a flat sequential stream, so the first ``n`` values
of a keyed stream do not depend on how many values are requested. The decoder
exploits this to regenerate exactly the candidate the encoder selected.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np


def derive_key(base_seed: int, tag: str, *fields: int) -> int:
    """128-bit Philox key from a seed, a purpose tag, and integer fields."""
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", base_seed & 0xFFFFFFFFFFFFFFFF))
    h.update(tag.encode("ascii"))
    h.update(b"\x00")
    for f in fields:
        h.update(struct.pack("<q", f))
    return int.from_bytes(h.digest(), "little")


def keyed_generator(base_seed: int, tag: str, *fields: int) -> np.random.Generator:
    """Fresh Generator for the stream identified by (seed, tag, fields)."""
    return np.random.Generator(np.random.Philox(key=derive_key(base_seed, tag, *fields)))


def keyed_normal(shape, base_seed: int, tag: str, *fields: int) -> np.ndarray:
    """Standard normal array from a keyed stream."""
    return keyed_generator(base_seed, tag, *fields).standard_normal(shape)


def _philox_state(key128: int) -> dict:
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array([key128 & 0xFFFFFFFFFFFFFFFF, key128 >> 64],
                            dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


class RekeyableStream:
    """A reusable Philox generator re-keyed in place.

    Produces streams bit-identical to ``keyed_generator`` while skipping the
    per-key construction cost in hot loops. Instances are cheap mutable state:
    create one per worker, never share across threads.
    """

    def __init__(self):
        self._bitgen = np.random.Philox(counter=0, key=0)
        self.generator = np.random.Generator(self._bitgen)

    def rekey(self, base_seed: int, tag: str, *fields: int) -> np.random.Generator:
        self._bitgen.state = _philox_state(derive_key(base_seed, tag, *fields))
        return self.generator
