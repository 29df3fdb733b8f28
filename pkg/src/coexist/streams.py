"""Counter-based random streams and deterministic block scheduling.

Every replica block draws from its own Philox generator whose key is a
64-bit hash of ``(master_seed, command_tag, index...)``.  Blocks have a
fixed size, so results do not depend on how many workers process them.
"""
from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

STREAM_RULE = (
    "stream(seed, tag, i0, i1, ...) = numpy Philox(key=blake2b-64(seed, tag, i0, i1, ...)); "
    "replicas are processed in fixed-size blocks, block b uses stream(seed, tag, b)"
)


def hash64(seed: int, tag: str, *indices: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    h.update(tag.encode("utf-8"))
    for i in indices:
        h.update(struct.pack("<q", int(i)))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class Stream:
    """Identity of a random stream; cheap to copy and hash."""

    seed: int
    tag: str = "default"
    path: tuple[int, ...] = ()

    def child(self, *indices: int) -> "Stream":
        return Stream(self.seed, self.tag, self.path + tuple(int(i) for i in indices))

    def with_tag(self, tag: str) -> "Stream":
        return Stream(self.seed, tag, self.path)

    @property
    def key(self) -> int:
        return hash64(self.seed, self.tag, *self.path)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key))


def as_stream(stream: "Stream | int", tag: str) -> Stream:
    if isinstance(stream, Stream):
        return stream
    return Stream(int(stream), tag)


def block_sizes(total: int, block: int) -> list[int]:
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn: Callable[[int], T], n_blocks: int, workers: int = 1) -> list[T]:
    """Evaluate ``fn(b)`` for every block index, returning results in block order."""
    if workers <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


def ordered_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros_like(parts[0])
    for part in parts:
        out = out + part
    return out
