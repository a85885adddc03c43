"""Potential outcomes, the difference-in-means estimator and design MSEs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assign import (
    AssignmentVector,
    Design,
    iter_half_chunks,
    random_balanced,
    to_matrix,
)
from .errors import InvalidArgument


@dataclass(frozen=True)
class PotentialOutcomes:
    """Control (``y0``) and treated (``y1``) potential outcomes for N units."""

    y0: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float).copy()
        y1 = np.asarray(self.y1, dtype=float).copy()
        if y0.ndim != 1 or y0.shape != y1.shape:
            raise InvalidArgument("y0 and y1 must be 1-d vectors of equal length")
        n = y0.size
        if n < 4 or n % 2:
            raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
        if not (np.isfinite(y0).all() and np.isfinite(y1).all()):
            raise InvalidArgument("potential outcomes must be finite")
        y0.flags.writeable = False
        y1.flags.writeable = False
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)

    @property
    def n(self) -> int:
        return self.y0.size

    @classmethod
    def from_effects(cls, y0, effects) -> "PotentialOutcomes":
        y0 = np.asarray(y0, dtype=float)
        return cls(y0, y0 + np.asarray(effects, dtype=float))

    def scaled(self, s: float) -> "PotentialOutcomes":
        return PotentialOutcomes(self.y0 * s, self.y1 * s)


def sate(po: PotentialOutcomes) -> float:
    """Sample average treatment effect."""
    return math.fsum(np.concatenate([po.y1, -po.y0])) / po.n


def _as_matrix(po: PotentialOutcomes, w) -> tuple[np.ndarray, bool]:
    if isinstance(w, AssignmentVector):
        m = w.to_array().astype(bool)[None, :]
        single = True
    else:
        m = np.asarray(w, dtype=bool)
        single = m.ndim == 1
        m = np.atleast_2d(m)
    if m.shape[1] != po.n:
        raise InvalidArgument(f"assignment has {m.shape[1]} units, outcomes have {po.n}")
    return m, single


def diff_in_means(po: PotentialOutcomes, w):
    """Difference-in-means estimate for one vector, or one per row of a matrix."""
    m, single = _as_matrix(po, w)
    est = (m @ po.y1 - (~m) @ po.y0) * (2.0 / po.n)
    return float(est[0]) if single else est


def squared_errors(po: PotentialOutcomes, w) -> np.ndarray:
    m, _ = _as_matrix(po, w)
    return (diff_in_means(po, m) - sate(po)) ** 2


def design_mse(po: PotentialOutcomes, d: Design) -> float:
    """Average squared error of the estimator over the vectors of ``d``."""
    if d.n != po.n:
        raise InvalidArgument(f"design has N={d.n}, outcomes have N={po.n}")
    return math.fsum(squared_errors(po, d.matrix())) / d.H


@dataclass(frozen=True)
class MSEEstimate:
    value: float
    standard_error: float
    draws: int
    seed: int | None


def complete_randomization_mse(
    po: PotentialOutcomes,
    mode: str = "exact",
    *,
    draws: int = 10_000,
    seed: int | None = None,
    limit: int | None = None,
):
    """MSE under complete randomization.

    ``mode="exact"`` streams over the first half of the ordering (mirrors have
    identical squared errors) and returns a float.  ``mode="monte_carlo"``
    averages ``draws`` uniform vectors and returns an :class:`MSEEstimate`.
    """
    if mode == "exact":
        tau = sate(po)
        parts = []
        count = 0
        for chunk in iter_half_chunks(po.n, limit=limit):
            err = (diff_in_means(po, chunk) - tau) ** 2
            parts.append(math.fsum(err))
            count += len(chunk)
        return math.fsum(parts) / count
    if mode == "monte_carlo":
        if draws < 2:
            raise InvalidArgument("monte_carlo mode needs at least 2 draws")
        rng = np.random.default_rng(seed)
        err = squared_errors(po, random_balanced(rng, draws, po.n))
        return MSEEstimate(
            value=math.fsum(err) / draws,
            standard_error=float(err.std(ddof=1) / math.sqrt(draws)),
            draws=draws,
            seed=seed,
        )
    raise InvalidArgument(f"unknown mode {mode!r}")


def design_estimates(po: PotentialOutcomes, d: Design) -> np.ndarray:
    return diff_in_means(po, to_matrix(list(d.vectors)))
