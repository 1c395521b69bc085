"""Named random substreams derived from one 64-bit run seed.

Each component draws from ``substream(seed, name)``, built from
``SeedSequence([seed, crc32(name)])``. Adding a new stream name therefore
never shifts the numbers another component sees.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("mobility", "rl", "xapp", "fl", "scenario-gen", "channel")


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str) -> np.random.Generator:
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream_key(name)]))


def streams(seed: int, names=STREAMS) -> dict[str, np.random.Generator]:
    return {name: substream(seed, name) for name in names}
