"""Seed derivation: one master seed fans out to every stochastic stage.

Every random decision in the pipeline flows through a
``numpy.random.Generator`` built here.  Stages derive child seeds from the
master seed plus a fixed integer tag, so runs are reproducible bit-for-bit
on one platform and stages can be re-run independently.
"""

import numpy as np

# Stage tags; values are arbitrary but frozen (changing one changes results).
STAGE_SPLIT = 1
STAGE_SMOTE = 2
STAGE_TRAIN = 3
STAGE_TUNE = 4
STAGE_PERM_IMPORTANCE = 5
STAGE_SYNTH = 6


def derive_rng(master_seed: int, *tags: int) -> np.random.Generator:
    """Child generator for (master seed, stage tag, optional sub-tags)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, tags)]))


def derive_seed(master_seed: int, *tags: int) -> int:
    """Scalar child seed, for stages that take a seed rather than a Generator."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, tags)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
