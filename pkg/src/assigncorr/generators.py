"""Restricted design generators: covariates, Mahalanobis rerandomization,
pair-switching, block randomization and adaptive choice of p_A."""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assign import AssignmentVector, Design, canonicalize, random_balanced, signs
from .correlation import phi_monte_carlo
from .errors import DesignTooSmall, InvalidArgument, SingularCovariance, TooLarge
from .sampling import stream_rng

DEFAULT_REFERENCE_DRAWS = 100_000
BLOCK_ENUMERATION_LIMIT = 1_000_000


# ---------------------------------------------------------------------------
# covariates


@dataclass(frozen=True)
class CovariateMatrix:
    x: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] < 1:
            raise InvalidArgument("covariates must be an N x p matrix with p >= 1")
        n = x.shape[0]
        if n < 4 or n % 2:
            raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
        if not np.isfinite(x).all():
            raise InvalidArgument("covariates must be finite")
        names = tuple(self.names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise InvalidArgument("one name per column required")
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def sample_covariates(
    n: int, p: int, dist: str = "standard_normal", seed: int = 0, stream: tuple[int, ...] = ()
) -> CovariateMatrix:
    """I.i.d. standard normal or log-normal (exp of standard normal) covariates."""
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    z = stream_rng(seed, *stream).standard_normal((n, p))
    if dist in ("standard_normal", "normal"):
        return CovariateMatrix(z)
    if dist == "lognormal":
        return CovariateMatrix(np.exp(z))
    raise InvalidArgument(f"unknown distribution {dist!r}")


# ---------------------------------------------------------------------------
# Mahalanobis balance


class MahalanobisBalance:
    """Balance statistic M(w) = scale * d' S^-1 d.

    ``d`` is the difference in covariate means (treated minus control) and
    ``S`` the sample covariance of all N rows (denominator N - 1).  ``scale``
    defaults to N/4; any positive scale yields the same acceptance sets.
    """

    def __init__(self, x: CovariateMatrix | np.ndarray, scale: float | None = None):
        cov = x if isinstance(x, CovariateMatrix) else CovariateMatrix(np.asarray(x))
        self.n = cov.n
        self.scale = self.n / 4 if scale is None else float(scale)
        if self.scale <= 0:
            raise InvalidArgument("scale must be positive")
        s = np.atleast_2d(np.cov(cov.x, rowvar=False))
        try:
            chol = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise SingularCovariance("covariate covariance matrix is singular") from None
        if np.min(np.diag(chol)) <= 1e-12 * max(1.0, float(np.max(np.diag(chol)))):
            raise SingularCovariance("covariate covariance matrix is singular")
        centred = cov.x - cov.x.mean(axis=0)
        # rows whitened so that M = scale * (2/N)^2 * ||Z' s||^2
        self.z = np.linalg.solve(chol, centred.T).T
        self._factor = self.scale * 4 / self.n**2

    def projections(self, w: np.ndarray) -> np.ndarray:
        return signs(w) @ self.z

    def batch(self, w: np.ndarray) -> np.ndarray:
        v = self.projections(np.atleast_2d(w))
        return self._factor * np.einsum("ij,ij->i", v, v)

    def __call__(self, w) -> float:
        if isinstance(w, AssignmentVector):
            w = w.to_array()
        w = np.asarray(w, dtype=bool)
        if w.shape[-1] != self.n:
            raise InvalidArgument(f"assignment has {w.shape[-1]} units, covariates have {self.n}")
        return float(self.batch(w)[0])


def mahalanobis(x: CovariateMatrix | np.ndarray, w) -> float:
    return MahalanobisBalance(x)(w)


# ---------------------------------------------------------------------------
# rerandomization


@dataclass(frozen=True)
class RerandSpec:
    p_a: float
    reference_draws: int = DEFAULT_REFERENCE_DRAWS
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.p_a <= 1):
            raise InvalidArgument(f"p_A must lie in (0, 1], got {self.p_a}")
        if self.reference_draws < 1:
            raise InvalidArgument("reference_draws must be positive")


def reference_distribution(balance: MahalanobisBalance, draws: int, rng, chunk: int = 50_000) -> np.ndarray:
    """Sorted M over ``draws`` unrestricted vectors."""
    parts = []
    left = draws
    while left > 0:
        size = min(chunk, left)
        parts.append(balance.batch(random_balanced(rng, size, balance.n)))
        left -= size
    return np.sort(np.concatenate(parts))


def threshold_from_reference(sorted_m: np.ndarray, p_a: float) -> float:
    """Empirical p_A-quantile: the smallest a with at least p_A of draws <= a."""
    if not (0 < p_a <= 1):
        raise InvalidArgument(f"p_A must lie in (0, 1], got {p_a}")
    if p_a == 1:
        return math.inf
    idx = max(0, math.ceil(p_a * len(sorted_m)) - 1)
    return float(sorted_m[idx])


class RerandomizationSampler:
    """Rejection sampler for {w : M(w) <= a}."""

    name = "rerandomization"

    def __init__(self, balance: MahalanobisBalance, p_a: float, threshold: float, *, max_attempts: int | None = None):
        self.balance = balance
        self.n = balance.n
        self.p_a = p_a
        self.threshold = threshold
        self.max_attempts = max_attempts
        self.attempts = 0
        self.accepted = 0

    def draw(self, rng, size):
        out = []
        got = 0
        while got < size:
            if self.max_attempts is not None and self.attempts >= self.max_attempts:
                raise DesignTooSmall(
                    f"rerandomization starved: {self.accepted} accepted in {self.attempts} draws",
                    attempts=self.attempts,
                    obtained=self.accepted,
                )
            want = size - got
            chunk = int(min(max(64, 1.2 * want / self.p_a + 16), 200_000))
            if self.max_attempts is not None:
                chunk = min(chunk, self.max_attempts - self.attempts)
            cand = random_balanced(rng, chunk, self.n)
            idx = np.flatnonzero(self.balance.batch(cand) <= self.threshold)[:want]
            # candidates after the last one kept are discarded unexamined
            self.attempts += int(idx[-1]) + 1 if len(idx) == want else chunk
            take = cand[idx]
            self.accepted += len(take)
            out.append(take)
            got += len(take)
        return canonicalize(np.concatenate(out))

    def provenance(self) -> dict:
        return {
            "sampler": self.name,
            "n": self.n,
            "p_a": self.p_a,
            "threshold": self.threshold,
            "candidate_draws": self.attempts,
            "accepted": self.accepted,
        }


def rerandomization_sampler(x, spec: RerandSpec, *, max_attempts: int | None = None) -> RerandomizationSampler:
    """Calibrate the threshold on fresh reference draws and return the sampler."""
    balance = x if isinstance(x, MahalanobisBalance) else MahalanobisBalance(x)
    if spec.p_a == 1:
        a = math.inf
    else:
        ref = reference_distribution(balance, spec.reference_draws, stream_rng(spec.seed, 0))
        a = threshold_from_reference(ref, spec.p_a)
    return RerandomizationSampler(balance, spec.p_a, a, max_attempts=max_attempts)


# ---------------------------------------------------------------------------
# pair switching


def pair_switch_batch(balance: MahalanobisBalance, w0: np.ndarray, *, max_iter: int | None = None):
    """Best-improvement pair switching applied to every row of ``w0``.

    Each step exchanges the (treated, control) pair giving the lowest M; ties
    go to the lexicographically smallest (treated index, control index).  A
    row stops when no exchange strictly lowers M.  Returns the final matrix,
    its M values and the number of swaps per row.
    """
    w = np.array(np.atleast_2d(w0), dtype=bool)
    n = balance.n
    h = n // 2
    z = balance.z
    zz = np.einsum("ij,ij->i", z, z)
    v = signs(w) @ z
    q = np.einsum("ij,ij->i", v, v)
    swaps = np.zeros(len(w), dtype=np.int64)
    active = np.arange(len(w))
    max_iter = n * n if max_iter is None else max_iter
    for _ in range(max_iter):
        if active.size == 0:
            break
        wa = w[active]
        order = np.argsort(~wa, axis=1, kind="stable")
        t_idx, c_idx = order[:, :h], order[:, h:]
        a = v[active][:, None, :] - 2 * z[t_idx]
        cand = (
            np.einsum("btp,btp->bt", a, a)[:, :, None]
            + 4 * np.einsum("btp,bcp->btc", a, z[c_idx])
            + 4 * zz[c_idx][:, None, :]
        )
        flat = cand.reshape(len(active), -1)
        best = np.argmin(flat, axis=1)
        best_q = flat[np.arange(len(active)), best]
        improve = best_q < q[active] * (1 - 1e-12)
        rows = active[improve]
        bi = best[improve]
        ti = t_idx[improve, bi // h]
        ci = c_idx[improve, bi % h]
        w[rows, ti] = False
        w[rows, ci] = True
        v[rows] += 2 * (z[ci] - z[ti])
        q[rows] = np.einsum("ij,ij->i", v[rows], v[rows])
        swaps[rows] += 1
        active = rows
    return w, balance._factor * q, swaps


def pair_switch(x, w0, *, return_trace: bool = False):
    """Greedy pair switching from ``w0``; the result is canonicalized.

    With ``return_trace`` also returns the M value after every accepted swap,
    starting with M(w0).
    """
    balance = x if isinstance(x, MahalanobisBalance) else MahalanobisBalance(x)
    if isinstance(w0, AssignmentVector):
        start = w0.to_array().astype(bool)
    else:
        start = AssignmentVector.from_array(w0).to_array().astype(bool)
    trace = [balance(start)]
    w = start[None, :]
    while True:
        w_next, m, swaps = pair_switch_batch(balance, w, max_iter=1)
        if swaps[0] == 0:
            break
        w = w_next
        trace.append(float(m[0]))
    out = AssignmentVector.from_array(canonicalize(w)[0].astype(int))
    return (out, trace) if return_trace else out


class PairSwitchSampler:
    """Pair-switching outputs from uniformly random starting vectors."""

    name = "pair_switch"

    def __init__(self, balance: MahalanobisBalance):
        self.balance = balance
        self.n = balance.n
        self.starts = 0
        self.m_values: list[float] = []

    def draw(self, rng, size):
        w, m, _ = pair_switch_batch(self.balance, random_balanced(rng, size, self.n))
        self.starts += size
        self.m_values.extend(m.tolist())
        return canonicalize(w)

    def provenance(self) -> dict:
        return {"sampler": self.name, "n": self.n, "starts": self.starts}


def ps_design_sampler(x) -> PairSwitchSampler:
    balance = x if isinstance(x, MahalanobisBalance) else MahalanobisBalance(x)
    return PairSwitchSampler(balance)


# ---------------------------------------------------------------------------
# block randomization


@dataclass(frozen=True)
class BlockSpec:
    """Unit-to-block map; half of every block is treated."""

    block_of: tuple

    def __post_init__(self):
        block_of = tuple(self.block_of)
        object.__setattr__(self, "block_of", block_of)
        if len(block_of) < 4 or len(block_of) % 2:
            raise InvalidArgument(f"N must be an even integer >= 4, got {len(block_of)}")
        for b, members in self.members().items():
            if len(members) % 2:
                raise InvalidArgument(f"block {b!r} has odd size {len(members)}")

    @classmethod
    def equal(cls, n: int, size: int) -> "BlockSpec":
        if size < 2 or size % 2 or n % size:
            raise InvalidArgument(f"block size {size} must be even and divide N={n}")
        return cls(tuple(i // size for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.block_of)

    def members(self) -> dict:
        out: dict = {}
        for i, b in enumerate(self.block_of):
            out.setdefault(b, []).append(i)
        return out

    def sizes(self) -> list[int]:
        return [len(m) for m in self.members().values()]

    def design_size(self) -> int:
        return math.prod(math.comb(s, s // 2) for s in self.sizes())


class BlockSampler:
    name = "block"

    def __init__(self, spec: BlockSpec):
        self.spec = spec
        self.n = spec.n
        self._groups = [np.asarray(m) for m in spec.members().values()]

    def draw(self, rng, size):
        out = np.zeros((size, self.n), dtype=bool)
        for members in self._groups:
            half = len(members) // 2
            pick = np.argpartition(rng.random((size, len(members))), half, axis=1)[:, :half]
            rows = np.repeat(np.arange(size), half)
            out[rows, members[pick].ravel()] = True
        return canonicalize(out)

    def provenance(self) -> dict:
        return {"sampler": self.name, "n": self.n, "blocks": len(self._groups)}


def block_sampler(spec: BlockSpec) -> BlockSampler:
    return BlockSampler(spec)


def block_enumerate(spec: BlockSpec, limit: int = BLOCK_ENUMERATION_LIMIT) -> Design:
    """Every vector treating exactly half of each block."""
    h = spec.design_size()
    if h > limit:
        raise TooLarge(f"block design has {h} vectors; limit is {limit}")
    choices = [[c for c in itertools.combinations(m, len(m) // 2)] for m in spec.members().values()]
    vectors = []
    for combo in itertools.product(*choices):
        vectors.append(AssignmentVector.from_treated(itertools.chain.from_iterable(combo), spec.n))
    return Design(vectors)


# ---------------------------------------------------------------------------
# adaptive p_A


@dataclass
class AdaptiveResult:
    chosen_p_a: float
    threshold: float
    reason: str  # threshold | budget | schedule_end
    trace: list[dict] = field(default_factory=list)
    draws_used: int = 0
    seed: int | None = None

    def to_json(self) -> dict:
        return {
            "chosen_p_a": self.chosen_p_a,
            "threshold_a": None if math.isinf(self.threshold) else self.threshold,
            "termination_reason": self.reason,
            "draws_used": self.draws_used,
            "seed": self.seed,
            "trace": self.trace,
        }


def adaptive_pa(
    x,
    phi_threshold: float,
    schedule: Sequence[float],
    *,
    seed: int,
    k: int = 2000,
    reference_draws: int = DEFAULT_REFERENCE_DRAWS,
    max_draws: int | None = None,
    max_seconds: float | None = None,
) -> AdaptiveResult:
    """Walk a decreasing p_A schedule until phi exceeds ``phi_threshold``.

    Returns the last p_A whose estimated phi stayed at or below the threshold.
    ``max_draws`` caps the candidate vectors drawn over the whole walk and
    ``max_seconds`` the wall-clock time; a draw cap keeps the result
    reproducible, a time cap does not.
    """
    sched = [float(p) for p in schedule]
    if not sched:
        raise InvalidArgument("empty schedule")
    if sched[0] > 1 or any(p <= 0 for p in sched):
        raise InvalidArgument("schedule values must lie in (0, 1]")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise InvalidArgument("schedule must be strictly decreasing")
    balance = x if isinstance(x, MahalanobisBalance) else MahalanobisBalance(x)
    ref = reference_distribution(balance, reference_draws, stream_rng(seed, 0))
    start = time.monotonic()
    used = 0
    chosen, chosen_a = None, math.inf
    reason = "schedule_end"
    trace: list[dict] = []
    for step, p in enumerate(sched):
        if max_seconds is not None and time.monotonic() - start > max_seconds:
            reason = "budget"
            break
        remaining = None if max_draws is None else max_draws - used
        if remaining is not None and remaining <= 0:
            reason = "budget"
            break
        a = threshold_from_reference(ref, p)
        sampler = RerandomizationSampler(balance, p, a, max_attempts=remaining)
        entry = {"p_a": p, "a": None if math.isinf(a) else a}
        try:
            est = phi_monte_carlo(sampler, k, seed, stream=(1, step))
        except DesignTooSmall:
            used += sampler.attempts
            entry.update(phi=None, phi_se=None, draws=sampler.attempts)
            trace.append(entry)
            if remaining is not None and sampler.attempts >= remaining:
                reason = "budget"
            else:
                # duplicate cap: the admissible set is tiny, i.e. extremely restricted
                entry["note"] = "design-too-small"
                reason = "threshold"
            break
        used += sampler.attempts
        entry.update(phi=est.value, phi_se=est.standard_error, draws=sampler.attempts)
        trace.append(entry)
        if est.value > phi_threshold:
            reason = "threshold"
            break
        chosen, chosen_a = p, a
    if chosen is None:
        warnings.warn("no schedule point met the threshold; falling back to p_A = 1", UserWarning, stacklevel=2)
        chosen, chosen_a = 1.0, math.inf
    return AdaptiveResult(chosen, chosen_a, reason, trace, used, seed)
