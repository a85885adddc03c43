"""Design-membership samplers and distinct-vector drawing.

A sampler draws vectors from the first half of some design (unit 0 treated).
Draws may repeat; :func:`draw_distinct` applies the duplicate-rejection rule.
Samplers hold no random state: the caller passes a ``numpy`` Generator, so a
sampler can be reused across independent streams.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .assign import Design, canonicalize, random_balanced
from .errors import DesignTooSmall, InvalidArgument

#: Attempts allowed per requested distinct vector before giving up.
DUPLICATE_CAP_FACTOR = 100


class Sampler(Protocol):
    n: int
    name: str

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Return a (size, n) boolean matrix of canonical vectors."""


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for sub-stream ``stream`` of ``seed``; stable across runs."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


class CompleteSampler:
    """Uniform draws from all balanced vectors (complete randomization)."""

    name = "complete"

    def __init__(self, n: int):
        self.n = n

    def draw(self, rng, size):
        return canonicalize(random_balanced(rng, size, self.n))

    def provenance(self) -> dict:
        return {"sampler": self.name, "n": self.n}


class DesignSampler:
    """Uniform draws from the half of an explicit design."""

    name = "design"

    def __init__(self, design: Design):
        self.n = design.n
        self._half = design.half_matrix()

    @property
    def half_size(self) -> int:
        return len(self._half)

    def draw(self, rng, size):
        return self._half[rng.integers(len(self._half), size=size)]

    def provenance(self) -> dict:
        return {"sampler": self.name, "n": self.n, "H": 2 * len(self._half)}


def draw_distinct(
    sampler: Sampler,
    k: int,
    rng: np.random.Generator,
    *,
    max_attempts: int | None = None,
    chunk: int | None = None,
) -> tuple[np.ndarray, int]:
    """Draw ``k`` distinct canonical vectors; return them and the attempts used.

    Duplicates are discarded and redrawn.  Raises :class:`DesignTooSmall` once
    ``max_attempts`` (default ``DUPLICATE_CAP_FACTOR * k``) draws are spent.
    """
    if k < 1:
        raise InvalidArgument("k must be positive")
    cap = DUPLICATE_CAP_FACTOR * k if max_attempts is None else max_attempts
    chunk = chunk or max(16, k)
    seen: set[bytes] = set()
    rows: list[np.ndarray] = []
    attempts = 0
    while len(rows) < k:
        if attempts >= cap:
            raise DesignTooSmall(
                f"only {len(rows)} distinct vectors after {attempts} draws (wanted {k})",
                attempts=attempts,
                obtained=len(rows),
            )
        size = min(chunk, cap - attempts, k - len(rows))
        batch = np.asarray(sampler.draw(rng, size), dtype=bool)
        for row in batch:
            attempts += 1
            key = np.packbits(row).tobytes()
            if key in seen:
                continue
            seen.add(key)
            rows.append(row)
            if len(rows) == k:
                break
    return np.array(rows, dtype=bool), attempts
