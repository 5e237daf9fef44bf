"""Reproducible random-number streams.

All sampling code receives an explicit ``numpy.random.Generator``.  Streams
are derived from a master seed plus an integer path (e.g. the sample index),
so that every sample draws from its own independent substream and results do
not depend on execution order or worker count.
"""

from __future__ import annotations

import numpy as np


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for ``(master_seed, *path)``.

    Uses the counter-based Philox bit generator keyed through a
    ``SeedSequence`` so that distinct paths give statistically independent
    streams and the same path always reproduces the same stream.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), *map(int, path)])))
