"""Repeated-sample study of phi under complete randomization, rerandomization
and pair switching, summarised the way the results table is laid out.

Stream layout for sample r of a run with seed s:
    (s, r, 0)       covariates
    (s, r, 1)       reference draws for the rerandomization threshold
    (s, r, 2, j)    phi estimate of strategy j (position in the strategy list)
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .correlation import ClampedVarianceWarning, InconsistentInputWarning, phi_monte_carlo, relative_sd_increase
from .errors import AssignCorrError, InvalidArgument
from .generators import (
    DEFAULT_REFERENCE_DRAWS,
    MahalanobisBalance,
    PairSwitchSampler,
    RerandomizationSampler,
    reference_distribution,
    sample_covariates,
    threshold_from_reference,
)
from .sampling import CompleteSampler, stream_rng

SUMMARY_QUANTILES = (0.5, 0.75, 0.975, 0.999)
DEFAULT_STRATEGIES = ("complete", "rerand:0.1", "rerand:0.01", "rerand:0.001", "ps")


def parse_strategy(s: str) -> tuple[str, float | None]:
    """'complete', 'ps' or 'rerand:<p_A>'."""
    s = s.strip()
    if s in ("complete", "ps"):
        return s, None
    if s.startswith("rerand:"):
        try:
            p = float(s.split(":", 1)[1])
        except ValueError:
            raise InvalidArgument(f"bad p_A in strategy {s!r}") from None
        if not (0 < p <= 1):
            raise InvalidArgument(f"p_A must lie in (0, 1], got {p}")
        return "rerand", p
    raise InvalidArgument(f"unknown strategy {s!r}; use complete, ps or rerand:<p_A>")


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 50
    p: int = 5
    dist: str = "standard_normal"
    strategies: tuple[str, ...] = DEFAULT_STRATEGIES
    samples: int = 200
    k: int = 2000
    seed: int = 0
    reference_draws: int = DEFAULT_REFERENCE_DRAWS

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise InvalidArgument(f"N must be an even integer >= 4, got {self.n}")
        if self.samples < 1:
            raise InvalidArgument("samples must be positive")
        if self.k < 100:
            raise InvalidArgument("K must be at least 100 for a Monte Carlo phi")
        if self.dist not in ("standard_normal", "normal", "lognormal"):
            raise InvalidArgument(f"unknown distribution {self.dist!r}")
        if not self.strategies:
            raise InvalidArgument("no strategies given")
        for s in self.strategies:
            parse_strategy(s)


@dataclass(frozen=True)
class SampleRow:
    sample: int
    strategy: str
    phi: float | None
    phi_se: float | None
    rel_sd_increase_pct: float | None
    candidate_draws: int | None
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "sample": self.sample,
            "strategy": self.strategy,
            "phi": self.phi,
            "phi_se": self.phi_se,
            "rel_sd_increase_pct": self.rel_sd_increase_pct,
            "candidate_draws": self.candidate_draws,
            "error": self.error,
        }


def _sampler_for(kind, p_a, balance, ref):
    if kind == "complete":
        return CompleteSampler(balance.n)
    if kind == "ps":
        return PairSwitchSampler(balance)
    return RerandomizationSampler(balance, p_a, threshold_from_reference(ref, p_a))


def run_sample(cfg: SimulationConfig, r: int) -> list[SampleRow]:
    """All strategies on covariate sample ``r``; failures become error rows."""
    x = sample_covariates(cfg.n, cfg.p, cfg.dist, cfg.seed, stream=(r, 0))
    rows = []
    try:
        balance = MahalanobisBalance(x)
    except AssignCorrError as exc:
        return [SampleRow(r, s, None, None, None, None, str(exc)) for s in cfg.strategies]
    ref = None
    for j, s in enumerate(cfg.strategies):
        kind, p_a = parse_strategy(s)
        try:
            if kind == "rerand" and p_a < 1 and ref is None:
                ref = reference_distribution(balance, cfg.reference_draws, stream_rng(cfg.seed, r, 1))
            sampler = _sampler_for(kind, p_a, balance, ref)
            est = phi_monte_carlo(sampler, cfg.k, cfg.seed, stream=(r, 2, j))
        except AssignCorrError as exc:
            rows.append(SampleRow(r, s, None, None, None, None, str(exc)))
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InconsistentInputWarning)
            warnings.simplefilter("ignore", ClampedVarianceWarning)
            rel = relative_sd_increase(cfg.n, est.value)
        draws = getattr(sampler, "attempts", None) if kind == "rerand" else est.provenance["attempts"]
        rows.append(SampleRow(r, s, est.value, est.standard_error, rel, draws))
    return rows


def _run_chunk(args):
    cfg, rs = args
    return [row for r in rs for row in run_sample(cfg, r)]


@dataclass
class SimulationResult:
    config: SimulationConfig
    rows: list[SampleRow] = field(default_factory=list)

    def values(self, strategy: str, column: str = "phi") -> np.ndarray:
        return np.array([getattr(r, column) for r in self.rows if r.strategy == strategy and r.error is None])

    def errors(self) -> list[SampleRow]:
        return [r for r in self.rows if r.error is not None]

    def summary(self) -> list[dict]:
        """Per strategy: mean, min, max and quantiles of phi and of the
        relative SD increase.  Quantiles use the 'lower' rule (the largest
        order statistic at or below the requested level), so every reported
        quantile is an observed value."""
        out = []
        for s in self.config.strategies:
            entry = {"strategy": s, "samples": 0, "failed": sum(1 for r in self.errors() if r.strategy == s)}
            for col, key in (("phi", "phi"), ("rel_sd_increase_pct", "rel")):
                v = self.values(s, col)
                entry["samples"] = int(v.size)
                if v.size == 0:
                    continue
                entry[f"{key}_mean"] = float(np.mean(v))
                entry[f"{key}_min"] = float(v.min())
                entry[f"{key}_max"] = float(v.max())
                for q, val in zip(SUMMARY_QUANTILES, np.quantile(v, SUMMARY_QUANTILES, method="lower")):
                    entry[f"{key}_q{q:g}"] = float(val)
            out.append(entry)
        return out


def run_simulation(cfg: SimulationConfig, threads: int = 1) -> SimulationResult:
    """Run every sample; ``threads > 1`` spreads samples over worker processes.

    Each sample owns its streams, so results do not depend on ``threads``.
    """
    rs = list(range(cfg.samples))
    if threads <= 1 or cfg.samples == 1:
        rows = _run_chunk((cfg, rs))
    else:
        size = math.ceil(len(rs) / (4 * threads))
        chunks = [(cfg, rs[i : i + size]) for i in range(0, len(rs), size)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = [row for part in pool.map(_run_chunk, chunks) for row in part]
    return SimulationResult(cfg, rows)
