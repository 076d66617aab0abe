"""Deterministic seed fan-out.

Every random consumer gets a seed derived from the global seed plus a stable
key (a stage name, a vertex id, a repeat index), so adding a consumer never
shifts another one's stream and results do not depend on scheduling.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(seed, *parts):
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(p) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def derive_rng(seed, *parts):
    return np.random.default_rng(derive_seed(seed, *parts))
