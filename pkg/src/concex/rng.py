"""Deterministic random-stream management.

Every stochastic routine in this package draws from a counter-based Philox
generator.  Sub-streams are derived from a master seed through a fixed
``(master, *path)`` key scheme, so replications, restarts and bootstrap draws
can run in any order (or in parallel) and still reproduce bit-identically.
"""
from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "child_rng", "spawn_seed"]


def make_rng(seed) -> np.random.Generator:
    """Return a Philox generator for ``seed``.

    ``seed`` may be an int, a ``SeedSequence``, or an existing ``Generator``
    (returned unchanged so callers can thread a stream through).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_seed(master: int, *path: int) -> np.random.SeedSequence:
    """Seed for the sub-stream identified by ``path`` under ``master``.

    The path is a tuple of small integers, e.g. ``(study_id, replication)``;
    identical paths always yield identical streams.
    """
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(p) for p in path))


def child_rng(master: int, *path: int) -> np.random.Generator:
    """Philox generator for the sub-stream at ``path`` under ``master``."""
    return np.random.Generator(np.random.Philox(spawn_seed(master, *path)))
