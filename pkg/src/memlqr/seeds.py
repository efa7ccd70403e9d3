"""Deterministic seed derivation.

Every stochastic operation in the package draws from a generator built
out of a ``numpy.random.SeedSequence`` over a tuple of non-negative
integers.  Derived streams are independent of execution order, so
per-sample or per-client work can run serially or in parallel with
identical results.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(*parts: int) -> np.random.SeedSequence:
    """SeedSequence keyed by a tuple of non-negative integers."""
    return np.random.SeedSequence([int(p) for p in parts])


def make_rng(*parts: int) -> np.random.Generator:
    """Generator for the stream identified by ``parts``."""
    return np.random.default_rng(seed_sequence(*parts))


def derive_seed(*parts: int) -> int:
    """Collapse a stream identity into a single reusable integer seed."""
    return int(seed_sequence(*parts).generate_state(1, np.uint64)[0])
