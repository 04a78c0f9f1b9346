"""Counter-based per-round random streams.

Round ``i`` of a session keyed by ``seed`` always sees the same block of
64-bit words, independent of how rounds are chunked or scheduled. Backed by
numpy's Philox4x64, whose 256-bit counter advances by one per 4 words.
"""

from __future__ import annotations

import numpy as np

_WORDS_PER_COUNTER = 4
_U52 = 2.0**-52


def block_width(n_words: int) -> int:
    """Round a per-round word budget up to a whole number of Philox blocks."""
    return -(-max(n_words, 1) // _WORDS_PER_COUNTER) * _WORDS_PER_COUNTER


def round_words(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Raw uint64 words for rounds ``start..stop-1``, shape ``(stop-start, width)``.

    ``width`` must be a multiple of 4 (see :func:`block_width`).
    """
    if width % _WORDS_PER_COUNTER:
        raise ValueError(f"width must be a multiple of {_WORDS_PER_COUNTER}, got {width}")
    if not 0 <= start <= stop:
        raise ValueError(f"bad round range [{start}, {stop})")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    counter = start * (width // _WORDS_PER_COUNTER)
    bitgen = np.random.Philox(key=seed, counter=[counter & (2**64 - 1), counter >> 64, 0, 0])
    raw = bitgen.random_raw((stop - start) * width)
    return np.asarray(raw, dtype=np.uint64).reshape(stop - start, width)


def to_unit(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to floats strictly inside (0, 1).

    52-bit mantissas keep the half-step offset exact, so 1.0 is never produced.
    """
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * _U52


def generator(seed: int) -> np.random.Generator:
    """A seeded Generator on the same bit generator family, for one-off draws."""
    return np.random.Generator(np.random.Philox(key=seed))
