"""Keyed random-number substreams.

All stochastic code in the package draws from counter-based Philox
generators keyed by (seed, *key).  Two calls with the same key yield
identical streams, and streams with different keys are statistically
independent, so results do not depend on scheduling or on how work is
split across tasks.
"""

import numpy as np

# Fixed stage tags so CLI stages never share a substream with each other
# or with library-internal keys.
STAGE_GENERATE = 101
STAGE_SYNTH = 102
STAGE_INFER = 103
STAGE_VERIFY = 104
STAGE_BASELINE = 105


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for substream (seed, *key)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), *map(int, key)))))
