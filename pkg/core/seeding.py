"""Random substreams keyed by master seed, replicate index and stream tag."""

import zlib

import numpy as np

SeedLike = int | np.random.Generator | np.random.SeedSequence


def stream_seed(master_seed: int, replicate: int, tag: str) -> np.random.SeedSequence:
    """Seed sequence for one named stream of one replicate."""
    return np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=(int(replicate), zlib.crc32(tag.encode("utf-8"))),
    )


def stream_rng(master_seed: int, replicate: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master_seed, replicate, tag))


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
