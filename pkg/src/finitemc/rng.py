"""Seeded random streams.

Every stochastic routine draws from a Philox counter-based generator keyed
by ``(seed, *stream)``, so replicate ``r`` of a batch can be regenerated on
its own and results are identical on every platform for a given seed.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed, *stream):
    """Return a ``numpy.random.Generator`` for the stream ``(seed, *stream)``."""
    entropy = [int(seed) & SEED_MASK] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def inverse_cdf_table(P):
    """Row-wise cumulative sums suitable for inverse-CDF sampling.

    Entries from the last positive column onwards are pinned to exactly 1.0,
    so a uniform in [0, 1) can never select a zero-probability state.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    cum = np.cumsum(P, axis=1)
    for i, row in enumerate(P):
        last = np.flatnonzero(row > 0)[-1]
        cum[i, last:] = 1.0
    return cum
