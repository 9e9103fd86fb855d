"""Named random streams derived from one experiment seed.

Every consumer gets its own ``numpy.random.Generator`` (PCG64) built from
``SeedSequence(seed, spawn_key=(kind, index))``, so a bot's spontaneous-firing
stream depends only on the seed and the bot id, never on how many draws
other bots or the food spawner made. That is what keeps runs bit-identical
across backends and worker counts.
"""
from __future__ import annotations

import numpy as np

RNG_NAME = "pcg64-seedseq-v1"

BOT = 1
FOOD = 2
EVOLUTION = 3
POSE = 4


def stream(seed: int, kind: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(kind, index))))


def bot_stream(seed: int, bot_id: int) -> np.random.Generator:
    return stream(seed, BOT, bot_id)
