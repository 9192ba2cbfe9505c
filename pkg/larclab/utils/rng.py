"""Seeded random streams. There is no module-level generator."""

from typing import Optional, Union

import numpy as np

from larclab.core.errors import ParameterError

RandomSource = Union[int, np.random.Generator]


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for (seed, *stream); distinct streams are independent."""
    if seed < 0 or any(s < 0 for s in stream):
        raise ValueError("seeds and stream indices must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def as_rng(source: RandomSource) -> np.random.Generator:
    if isinstance(source, np.random.Generator):
        return source
    return make_rng(int(source))


def random_bits(rng: np.random.Generator, n: int) -> int:
    """Uniform n-bit integer (any n)."""
    if n == 0:
        return 0
    raw = int.from_bytes(rng.bytes((n + 7) // 8), 'little')
    return raw & ((1 << n) - 1)


def require_seed(seed: Optional[int], what: str) -> int:
    if seed is None:
        raise ParameterError(f"{what} is randomized and needs an explicit --seed")
    return seed
