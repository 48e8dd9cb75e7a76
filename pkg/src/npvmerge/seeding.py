"""Deterministic RNG streams.

Every run consumes exactly one integer seed. Derived streams are obtained by
``numpy.random.SeedSequence.spawn``, never by reusing or offsetting raw seeds,
so any number of colonies (or merge iterations) get statistically independent
PCG64 streams that do not depend on thread scheduling or worker count.
"""

from __future__ import annotations

import numpy as np


def master_sequence(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed)


def generator_from(sequence: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(sequence))


def split_sequences(
    sequence: np.random.SeedSequence, count: int
) -> list[np.random.SeedSequence]:
    """Spawn ``count`` child sequences; call order is part of the contract."""
    return sequence.spawn(count)
