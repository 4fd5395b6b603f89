"""Named random substreams derived from one integer seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int | None, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, name, *keys)``.

    Components draw from their own named stream so that, e.g., changing the
    strategy does not perturb the sampled graphs.
    """
    tag = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=0 if seed is None else int(seed), spawn_key=(tag, *map(int, keys)))
    return np.random.default_rng(ss)
