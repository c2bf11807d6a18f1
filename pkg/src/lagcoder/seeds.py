"""Counter-based RNG derivation.

Every source of randomness derives its generator from
(master_seed, stream, *counters) so results never depend on scheduling or
on how many draws other components consumed.
"""

import numpy as np

# stream namespaces; never reuse a value
STREAM_FOLDS = 1
STREAM_LAYER_PERM = 2
STREAM_BOOTSTRAP = 3
STREAM_PHASE = 4
STREAM_SELECT = 5
STREAM_PSEUDO = 6
STREAM_SYNTH = 7
STREAM_CONTROL = 8
STREAM_NULL_CEILING = 9


def rng_for(master_seed: int, *ids: int) -> np.random.Generator:
    """Generator for a (master_seed, stream, counter...) coordinate."""
    entropy = [int(master_seed) & 0xFFFFFFFF] + [int(i) & 0xFFFFFFFF for i in ids]
    return np.random.default_rng(np.random.SeedSequence(entropy))
