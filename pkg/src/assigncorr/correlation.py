"""Assignment correlation, its benchmark, the data functional psi and the
variance-of-MSE formulas built from them.

The per-pair quantity is ``(4/N)^2 (u - N/4)^2``, which equals ``rho^2`` with
``rho = (s_a . s_b) / N`` the correlation of the +/-1 encodings.  It is the
same for ``u`` and ``N/2 - u``, so averages over the pairs of a design's half
equal averages over all of its non-self, non-mirror pairs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .assign import Design, signs
from .errors import InvalidArgument, NoNonMirrorPairs
from .estimators import PotentialOutcomes
from .sampling import Sampler, draw_distinct, stream_rng

DEFAULT_BATCHES = 20


class InconsistentInputWarning(UserWarning):
    pass


class ClampedVarianceWarning(UserWarning):
    pass


def phi_upper_bound(n: int) -> float:
    return (4 / n) ** 2 * (n / 4 - 1) ** 2


@dataclass(frozen=True)
class PhiEstimate:
    value: float
    standard_error: float | None
    pairs_used: int
    method: str  # "exact" | "monte_carlo"
    n: int
    vectors: int  # half-vectors scanned
    provenance: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# exact and Monte Carlo phi


def _blocked_square_sums(half: np.ndarray, bounds: list[int]) -> np.ndarray:
    """Matrix P[b, c] = sum over i in batch b, j in batch c of (s_i . s_j)^2.

    Entries are integers held exactly in float64.
    """
    s = signs(half)
    nb = len(bounds) - 1
    out = np.zeros((nb, nb))
    starts = np.asarray(bounds[:-1])
    for b in range(nb):
        lo, hi = bounds[b], bounds[b + 1]
        g2 = np.square(s[lo:hi] @ s.T)
        cols = np.add.reduceat(g2, starts, axis=1)
        out[b] = cols.sum(axis=0)
    return out


def _phi_from_pair_sum(total: float, n: int, pairs: int) -> float:
    return float(Fraction(int(round(total)), n * n * pairs))


def phi_exact(d: Design) -> PhiEstimate:
    """Assignment correlation of a design by a full pair scan, O(H^2)."""
    if d.H < 4:
        raise NoNonMirrorPairs(
            f"a design with H={d.H} has no non-mirror pairs; the assignment correlation "
            "needs at least two mirror pairs (H >= 4)"
        )
    half = d.half_matrix()
    return _phi_exact_half(half, design_h=d.H)


def _phi_exact_half(half: np.ndarray, design_h: int | None = None) -> PhiEstimate:
    h, n = half.shape
    if h < 2:
        raise NoNonMirrorPairs("need at least two half-vectors")
    step = max(1, min(h, 2048))
    bounds = list(range(0, h, step)) + [h]
    p = _blocked_square_sums(half, bounds)
    total = (p.sum() - h * n * n) / 2
    H = design_h or 2 * h
    value = _phi_from_pair_sum(total, n, h * (h - 1) // 2)
    return PhiEstimate(value, None, H * (H - 2) // 2, "exact", n, h)


def phi_of_half_matrix(half: np.ndarray, batches: int = DEFAULT_BATCHES) -> tuple[float, float, int]:
    """phi over all pairs of the given distinct half-vectors, with a grouped
    jackknife standard error over ``batches`` contiguous batches.

    Returns ``(value, standard_error, pairs)``.
    """
    k, n = half.shape
    if k < 2:
        raise NoNonMirrorPairs("need at least two distinct vectors")
    nb = max(2, min(batches, k // 2))
    bounds = [round(i * k / nb) for i in range(nb + 1)]
    p = _blocked_square_sums(half, bounds)
    sizes = np.diff(bounds)
    diag = np.diag(p) - sizes * n * n  # ordered within-batch pairs
    total = (p.sum() - k * n * n) / 2
    pairs = k * (k - 1) // 2
    value = total / (n * n * pairs)
    if k < 4:
        return float(value), math.nan, pairs
    # delete-one-batch estimates
    removed = p.sum(axis=1) - np.diag(p) + diag / 2
    rest = k - sizes
    loo = (total - removed) / (n * n * rest * (rest - 1) / 2)
    se = math.sqrt((nb - 1) / nb * float(np.sum((loo - loo.mean()) ** 2)))
    return float(value), se, pairs


def phi_monte_carlo(
    sampler: Sampler,
    k: int,
    seed: int,
    *,
    stream: tuple[int, ...] = (),
    batches: int = DEFAULT_BATCHES,
    max_attempts: int | None = None,
) -> PhiEstimate:
    """Estimate phi from ``k`` distinct half-vectors drawn by ``sampler``.

    All C(k, 2) pairs are scanned; the standard error is a grouped jackknife
    over ``batches`` batches of vectors in draw order.
    """
    if k < 2:
        raise InvalidArgument("k must be at least 2")
    rng = stream_rng(seed, *stream)
    half, attempts = draw_distinct(sampler, k, rng, max_attempts=max_attempts)
    value, se, pairs = phi_of_half_matrix(half, batches)
    prov = {"seed": seed, "stream": list(stream), "attempts": attempts, "k": k}
    if hasattr(sampler, "provenance"):
        prov.update(sampler.provenance())
    return PhiEstimate(value, se, pairs, "monte_carlo", sampler.n, k, prov)


# ---------------------------------------------------------------------------
# benchmark


def phi_complete_fraction(n: int) -> Fraction:
    """Exact assignment correlation of complete randomization."""
    if n < 4 or n % 2:
        raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
    half = n // 2
    num = sum(math.comb(half, u) ** 2 * (n - 4 * u) ** 2 for u in range(1, half))
    return Fraction(num, n * n * (math.comb(n, half) - 2))


def phi_complete(n: int, mode: str = "exact_sum") -> float:
    """Benchmark assignment correlation; ``approx`` returns 1/(N-1)."""
    if mode == "exact_sum":
        return float(phi_complete_fraction(n))
    if mode == "approx":
        if n < 4 or n % 2:
            raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
        return 1 / (n - 1)
    raise InvalidArgument(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# psi


def _perm(n: int, r: int) -> int:
    return math.perm(n, r)


def psi_sums(c) -> tuple:
    """The sums S1, S2, S3 over unit pairs, triples and quadruples.

    ``c`` holds Y_i(0) + Y_i(1).  Summing the four potential-outcome factors
    over every treatment pattern of a unit set collapses to products of ``c``:

        S1 = sum_{i<j} c_i^2 c_j^2
        S2 = sum_{i<j<k} c_i c_j c_k (c_i + c_j + c_k)
        S3 = 3 sum_{i<j<k<l} c_i c_j c_k c_l

    Evaluated through power sums; works for floats or Fractions.
    """
    p1 = sum(c)
    p2 = sum(x * x for x in c)
    p3 = sum(x * x * x for x in c)
    p4 = sum(x * x * x * x for x in c)
    s1 = (p2 * p2 - p4) / 2
    s2 = (p2 * p1 * p1 - p2 * p2 - 2 * p1 * p3 + 2 * p4) / 2
    e4 = (p1**4 - 6 * p1 * p1 * p2 + 3 * p2 * p2 + 8 * p1 * p3 - 6 * p4) / 24
    return s1, s2, 3 * e4


def psi(po: PotentialOutcomes, exact: bool = False):
    """Data functional multiplying the variance of the MSE.

    psi = S1/P(N,2) - 2 S2/P(N,3) + 4 S3/P(N,4).  It is unchanged by adding a
    constant to every c_i, so c is centred first to avoid cancellation.
    ``exact=True`` evaluates in rational arithmetic on the stored doubles.
    """
    n = po.n
    if exact:
        c = [Fraction(a) + Fraction(b) for a, b in zip(po.y0.tolist(), po.y1.tolist())]
        mean = sum(c) / n
        c = [x - mean for x in c]
        s1, s2, s3 = psi_sums(c)
        return Fraction(s1, 1) / _perm(n, 2) - 2 * Fraction(s2, 1) / _perm(n, 3) + 4 * Fraction(s3, 1) / _perm(n, 4)
    c = po.y0 + po.y1
    c = c - math.fsum(c) / n
    s1, s2, s3 = psi_sums(c)
    return float(s1 / _perm(n, 2) - 2 * s2 / _perm(n, 3) + 4 * s3 / _perm(n, 4))


# ---------------------------------------------------------------------------
# variance of the MSE


def _clamp(value, what: str):
    if value < 0:
        warnings.warn(f"{what} evaluated to {float(value):.3g}; clamped to 0", ClampedVarianceWarning, stacklevel=3)
        return type(value)(0) if isinstance(value, Rational) else 0.0
    return value


def _check_phi(name: str, value) -> None:
    if not (0 <= value <= 1):
        raise InvalidArgument(f"{name} must lie in [0, 1], got {value}")


def var_mse_theorem4(n: int, H: int, phi_design, phi_K, psi_value):
    """Variance of the MSE over a set of designs of size ``H`` whose average
    assignment correlation is ``phi_design``.

    Exact (Fraction) when every real input is rational.
    """
    if n < 4 or n % 2:
        raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
    n_a = math.comb(n, n // 2)
    if H % 2 or H < 2:
        raise InvalidArgument(f"H must be an even integer >= 2, got {H}")
    if H > n_a:
        raise InvalidArgument(f"H={H} exceeds N_A={n_a}")
    _check_phi("phi_design", phi_design)
    _check_phi("phi_K", phi_K)
    if all(isinstance(v, Rational) for v in (phi_design, phi_K, psi_value)):
        one = Fraction(1)
    else:
        one = 1.0
    bracket = one * 2 / H - one * 2 / n_a + one * (H - 2) / H * phi_design - (one - one * 2 / n_a) * phi_K
    return _clamp(one * 4 / (n * n) * psi_value * bracket, "variance of the MSE")


def var_mse_large_h(n: int, phi_design: float, psi_value: float) -> float:
    """Large-H limit of :func:`var_mse_theorem4` with the benchmark at 1/(N-1)."""
    if n < 4 or n % 2:
        raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
    return _clamp(4 / n**2 * psi_value * (phi_design - 1 / (n - 1)), "variance of the MSE")


def _excess(n: int, phi_design: float, tol: float | None, benchmark: float | None = None) -> float:
    if n < 4 or n % 2:
        raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
    tol = 0.01 / (n - 1) if tol is None else tol
    benchmark = 1 / (n - 1) if benchmark is None else benchmark
    excess = phi_design - benchmark
    if excess < 0:
        if excess < -tol:
            warnings.warn(
                f"phi={phi_design:.6g} is below the complete-randomization benchmark "
                f"{benchmark:.6g}",
                InconsistentInputWarning,
                stacklevel=3,
            )
        return 0.0
    return excess


def relative_sd_increase(
    n: int, phi_design: float, *, tol: float | None = None, benchmark: float | None = None
) -> float:
    """Percent MSE increase from a one-SD rise of the MSE above its mean,
    assuming psi = 8 and MSE under complete randomization 4/N.

    The excess is measured against ``benchmark`` (default 1/(N-1)).
    """
    return 100 * math.sqrt(2 * _excess(n, phi_design, tol, benchmark))


def relative_sd_increase_general(
    n: int, phi_design: float, psi_value: float, sigma2_cr: float, *, tol: float | None = None
) -> float:
    """As :func:`relative_sd_increase` with explicit psi and MSE under complete randomization."""
    if sigma2_cr <= 0:
        raise InvalidArgument("sigma2_cr must be positive")
    var = 4 / n**2 * psi_value * _excess(n, phi_design, tol)
    return 100 * math.sqrt(max(var, 0.0)) / sigma2_cr


# ---------------------------------------------------------------------------
# block designs


def block_uniqueness_counts(block_sizes) -> list[int]:
    """For a fixed vector of a block design, the number of design vectors at
    each uniqueness u = 0..N/2.

    Within a block of size b, C(b/2, i)^2 vectors sit at uniqueness i; blocks
    combine by convolution.
    """
    counts = [1]
    for b in block_sizes:
        if b < 2 or b % 2:
            raise InvalidArgument(f"block sizes must be even and >= 2, got {b}")
        half = b // 2
        kernel = [math.comb(half, i) ** 2 for i in range(half + 1)]
        new = [0] * (len(counts) + half)
        for u, cu in enumerate(counts):
            for i, ki in enumerate(kernel):
                new[u + i] += cu * ki
        counts = new
    return counts


def block_phi_fraction(block_sizes) -> Fraction:
    """Exact assignment correlation of the block design with these block sizes."""
    sizes = list(block_sizes)
    n = sum(sizes)
    counts = block_uniqueness_counts(sizes)
    H = sum(counts)
    if H < 4:
        raise NoNonMirrorPairs(f"block design has H={H}")
    num = sum(c * (n - 4 * u) ** 2 for u, c in enumerate(counts) if 0 < u < n // 2)
    return Fraction(num, n * n * (H - 2))


def _two_blocks_fraction(n: int) -> Fraction:
    q = n // 4
    num = 0
    for u in range(1, n // 2):
        inner = 0
        for i in range(0, u + 1):
            if i > q or u - i > q:
                continue
            inner += math.comb(q, q - i) ** 2 * math.comb(q, q - (u - i)) ** 2
        num += inner * (n - 4 * u) ** 2
    return Fraction(num, n * n * (math.comb(n // 2, q) ** 2 - 2))


def _pair_blocks_fraction(n: int) -> Fraction:
    half = n // 2
    num = sum(math.comb(half, u) * (n - 4 * u) ** 2 for u in range(1, half))
    return Fraction(num, n * n * (2**half - 2))


def block_phi_analytic(n: int, layout: str, b: int | None = None) -> float:
    """Assignment correlation of equal-block designs.

    ``layout``: ``"two_blocks"`` (two blocks of N/2), ``"pair_blocks"`` (N/2
    blocks of two), ``"equal_blocks"`` (blocks of size ``b``, exact) or
    ``"limit"`` (large-N value 1/(N - N/b) for blocks of size ``b``).
    """
    if n < 4 or n % 2:
        raise InvalidArgument(f"N must be an even integer >= 4, got {n}")
    if layout == "two_blocks":
        if n % 4:
            raise InvalidArgument("two equal blocks need N divisible by 4")
        return float(_two_blocks_fraction(n))
    if layout == "pair_blocks":
        return float(_pair_blocks_fraction(n))
    if layout in ("equal_blocks", "limit"):
        if b is None or b < 2 or b % 2 or n % b:
            raise InvalidArgument(f"block size b must be even and divide N={n}, got {b}")
        if layout == "limit":
            return 1 / (n - n / b)
        return float(block_phi_fraction([b] * (n // b)))
    raise InvalidArgument(f"unknown layout {layout!r}")


# ---------------------------------------------------------------------------
# risk report


@dataclass(frozen=True)
class RiskReport:
    phi: PhiEstimate
    phi_complete: float
    var_mse: float | None
    rel_sd_increase_pct: float
    H: int | str
    N: int
    seed: int | None = None

    def to_json(self) -> dict:
        return {
            "n": self.N,
            "h": self.H,
            "phi": self.phi.value,
            "phi_se": self.phi.standard_error,
            "phi_complete_exact": self.phi_complete,
            "phi_complete_approx": 1 / (self.N - 1),
            "var_mse": self.var_mse,
            "rel_sd_increase_pct": self.rel_sd_increase_pct,
            "method": self.phi.method,
            "pairs_used": self.phi.pairs_used,
            "seed": self.seed,
        }


def risk_report(phi: PhiEstimate, H: int | str = "large", psi_value: float | None = 8.0, seed=None) -> RiskReport:
    """Summarise a phi estimate: benchmark, Var(MSE) and relative SD increase.

    With a finite ``H`` the finite-H formula is used with the exact benchmark;
    otherwise the large-H form.
    """
    n = phi.n
    phi_k = phi_complete(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampedVarianceWarning)
        if psi_value is None:
            var = None
        elif isinstance(H, int):
            var = float(var_mse_theorem4(n, H, min(max(phi.value, 0.0), 1.0), phi_k, psi_value))
        else:
            var = var_mse_large_h(n, phi.value, psi_value)
    rel = relative_sd_increase(n, phi.value, benchmark=phi_k)
    return RiskReport(phi, phi_k, var, rel, H, n, seed)
