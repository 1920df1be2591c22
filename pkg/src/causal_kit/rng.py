"""Counter-based random streams.

Every draw is addressed by ``(seed, labels..., index)``: labels are hashed into
a 64-bit stream key and the index picks the output of a SplitMix64 sequence
started at that key. Draws for row ``i`` therefore never depend on how many
other rows, nodes or noise terms were sampled, and row ranges can be produced
independently.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import kernels

ALGORITHM_ID = "splitmix64-ctr/blake2b-v1"
DEFAULT_SEED = 20240101
SEED_ENV_VAR = "CAUSAL_KIT_SEED"

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSpec:
    seed: int = DEFAULT_SEED
    algorithm: str = ALGORITHM_ID

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _U64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.algorithm != ALGORITHM_ID:
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}; this release provides {ALGORITHM_ID!r}")

    def derive(self, *labels) -> "RngSpec":
        """Independent child spec, e.g. one per trial replication."""
        return RngSpec(stream_key(self.seed, "derive", *labels))


def default_seed() -> int:
    value = os.environ.get(SEED_ENV_VAR)
    return int(value) if value else DEFAULT_SEED


def as_spec(rng) -> RngSpec:
    if rng is None:
        return RngSpec(default_seed())
    if isinstance(rng, RngSpec):
        return rng
    return RngSpec(int(rng))


def stream_key(seed: int, *labels) -> int:
    text = "\x1f".join([str(int(seed))] + [str(label) for label in labels])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def raw64(key: int, start: int, stop: int) -> np.ndarray:
    return kernels.splitmix_block(key, start, stop)


def uniforms(key: int, start: int, stop: int) -> np.ndarray:
    """Doubles strictly inside (0, 1), one per index in ``[start, stop)``."""
    bits = raw64(key, start, stop) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * (2.0 ** -53)


def stream(seed: int, *labels, start: int = 0, stop: int) -> np.ndarray:
    return uniforms(stream_key(seed, *labels), start, stop)
