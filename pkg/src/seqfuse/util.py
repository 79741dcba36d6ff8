"""Small shared helpers: seeded RNG construction and exact float text I/O."""

from __future__ import annotations

import math

import numpy as np

_UINT64_MASK = (1 << 64) - 1


def seeded_rng(*entropy: int) -> np.random.Generator:
    """Deterministic generator from one or more integer seed words.

    Negative seeds are allowed; each word is reduced modulo 2**64 so the
    combined entropy is well defined and reproducible across platforms.
    """
    words = [int(e) & _UINT64_MASK for e in entropy]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def fmt_float(value: float) -> str:
    """Shortest decimal text that parses back to exactly the same float64."""
    return repr(float(value))


def parse_float(text: str) -> float:
    """Parse a finite float; raise ValueError on NaN/Inf or garbage."""
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value
