"""Halton low-discrepancy points."""
from __future__ import annotations

from typing import List

import numpy as np

from ..errors import ContractError


def first_primes(count: int) -> List[int]:
    primes: List[int] = []
    n = 2
    while len(primes) < count:
        if all(n % p for p in primes if p * p <= n):
            primes.append(n)
        n += 1
    return primes


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``: its digits mirrored about the point.

    Built as one exact integer ratio, so the float is the correctly rounded
    value of the rational radical inverse.
    """
    if index < 0 or base < 2:
        raise ContractError(f"need index >= 0 and base >= 2, got {index}, {base}")
    num, den = 0, 1
    while index:
        index, digit = divmod(index, base)
        num = num * base + digit
        den *= base
    return num / den


def halton_point(index: int, dims: int) -> np.ndarray:
    """Point ``index`` of the ``dims``-dimensional sequence (bases = first primes)."""
    return np.array([halton(index, b) for b in first_primes(dims)])


def halton_sequence(start: int, count: int, dims: int) -> np.ndarray:
    """Rows ``start .. start + count - 1`` as a ``(count, dims)`` array."""
    bases = first_primes(dims)
    return np.array([[halton(i, b) for b in bases] for i in range(start, start + count)]).reshape(count, dims)
