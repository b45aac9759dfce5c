"""Seeded random streams.

Every random draw in riskbench comes from a Philox-4x64 counter-based generator keyed
by an explicit integer seed and a stream name, so a stage can be re-run on its own and
produce the same numbers on every platform.
"""

import zlib

import numpy as np

from utils.validators import validate_seed

# Stream names used across the pipeline
SYNTH = "synth"
SPLIT = "split"
FIT = "fit"
CV = "cv"
BOOTSTRAP = "bootstrap"
BACKGROUND = "background"
EXPLAIN = "explain"


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Create the generator for a named sub-stream of a seed.

    Args:
        seed: Explicit non-negative integer seed
        stream: Sub-stream name

    Returns:
        numpy Generator over a Philox bit generator
    """
    seed = validate_seed(seed)
    entropy = [seed, zlib.crc32(stream.encode("utf-8"))]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child_seed(rng: np.random.Generator) -> int:
    """Draw an integer seed for a nested component (e.g. one tree of a forest)."""
    return int(rng.integers(0, 2**63 - 1))
