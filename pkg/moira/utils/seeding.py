"""
Named random number streams. All randomness of a run flows from one integer seed;
each component draws from its own stream so that it can be varied independently.
"""
import zlib

import numpy as np

STREAMS = {
    "split": 0,
    "init": 1,
    "dropout": 2,
    "pretrain": 3,
    "synth": 4,
    "attribution": 5,
}


def rngFor(seed, stream, key=None):
    """Returns a generator for `stream`, optionally specialised by a string `key`
    (typically a modality name, so that draws for one modality do not depend on
    which other modalities exist).

    :param seed: Base seed of the run
    :type seed: int
    :param stream: Stream name, one of `STREAMS`
    :type stream: str
    :param key: Optional sub-stream key, defaults to None
    :type key: str, optional
    :rtype: numpy.random.Generator
    """
    assert stream in STREAMS, f"Unknown random stream `{stream}`, use one of {list(STREAMS)}."
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[stream]]
    if key is not None:
        entropy.append(zlib.crc32(str(key).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))
