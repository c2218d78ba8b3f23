"""Counter-based random streams.

Every stochastic draw in the package comes from a Philox4x32-10 generator
whose key is derived from a tuple of non-negative integers via numpy's
``SeedSequence``. Noise for (seed, spec index, frame index) therefore never
depends on which frames were processed before it, which keeps results
identical across thread counts and evaluation orders.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError


def stream(*keys: int) -> np.random.Generator:
    """Independent generator for the given key tuple."""
    clean = []
    for k in keys:
        k = int(k)
        if k < 0:
            raise ParameterError(f"seeds and stream keys must be non-negative, got {k}")
        clean.append(k)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(clean)))


def frame_stream(seed: int, spec_index: int, frame_index: int) -> np.random.Generator:
    return stream(seed, spec_index, frame_index)
