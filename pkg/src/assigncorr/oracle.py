"""Brute-force ground truth over every design of a given size.

A design of size H is a choice of H/2 first-half vectors plus their mirrors,
so the family K_H has C(N_A/2, H/2) members.  Mirrors share the squared error
of the estimator, so a design's MSE is the mean of H/2 entries of the table
r_j = (tau_hat_j - tau)^2 over the first half.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .assign import Design, from_matrix, half_matrix, half_size
from .correlation import ClampedVarianceWarning, phi_complete_fraction, psi, var_mse_theorem4
from .errors import InvalidArgument, TooLarge
from .estimators import PotentialOutcomes

#: Largest family K_H that will be enumerated.
DESIGN_GUARD = 10**7
REL_TOL = 1e-9


def family_size(n: int, H: int) -> int:
    if H < 2 or H % 2:
        raise InvalidArgument(f"H must be an even integer >= 2, got {H}")
    m = half_size(n)
    if H // 2 > m:
        raise InvalidArgument(f"H={H} exceeds N_A={2 * m}")
    return math.comb(m, H // 2)


def _check_guard(n: int, H: int, guard: int) -> int:
    size = family_size(n, H)
    if size > guard:
        raise TooLarge(f"K_H for N={n}, H={H} has {size} designs (guard {guard})")
    return size


@dataclass(frozen=True)
class DesignFamily:
    """All mirror-closed designs of size H at sample size N."""

    n: int
    H: int
    guard: int = DESIGN_GUARD

    def __post_init__(self):
        _check_guard(self.n, self.H, self.guard)

    def __len__(self) -> int:
        return family_size(self.n, self.H)

    def index_sets(self) -> Iterator[tuple[int, ...]]:
        """Half-vector index tuples, one per design, in lexicographic order."""
        return itertools.combinations(range(half_size(self.n)), self.H // 2)

    def index_matrix(self) -> np.ndarray:
        k = self.H // 2
        flat = np.fromiter(itertools.chain.from_iterable(self.index_sets()), dtype=np.int64)
        return flat.reshape(-1, k)

    def __iter__(self) -> Iterator[Design]:
        half = half_matrix(self.n)
        for idx in self.index_sets():
            yield Design.from_half(from_matrix(half[list(idx)]))


def enumerate_designs(n: int, H: int, guard: int = DESIGN_GUARD) -> Iterator[Design]:
    return iter(DesignFamily(n, H, guard))


# ---------------------------------------------------------------------------
# moments of the MSE over K_H


def _auto_exact(po: PotentialOutcomes) -> bool:
    vals = np.concatenate([po.y0, po.y1]).tolist()
    return all(Fraction(v).denominator <= 2**20 for v in vals)


def error_table(po: PotentialOutcomes, exact: bool = False) -> list:
    """r_j for every first-half vector, as Fractions or floats."""
    half = half_matrix(po.n)
    if not exact:
        tau_hat = (half @ po.y1 - (~half) @ po.y0) * (2.0 / po.n)
        tau = math.fsum(np.concatenate([po.y1, -po.y0])) / po.n
        return ((tau_hat - tau) ** 2).tolist()
    y0 = [Fraction(v) for v in po.y0.tolist()]
    y1 = [Fraction(v) for v in po.y1.tolist()]
    tau = (sum(y1) - sum(y0)) / po.n
    out = []
    for row in half.tolist():
        est = sum(y1[i] if t else -y0[i] for i, t in enumerate(row)) * Fraction(2, po.n)
        out.append((est - tau) ** 2)
    return out


def design_mses(po: PotentialOutcomes, H: int, *, exact: bool | None = None, guard: int = DESIGN_GUARD) -> list:
    """MSE of every design in K_H, in enumeration order."""
    if exact is None:
        exact = _auto_exact(po)
    _check_guard(po.n, H, guard)
    r = error_table(po, exact)
    k = H // 2
    if exact:
        return [sum(r[i] for i in idx) / k for idx in itertools.combinations(range(len(r)), k)]
    return np.asarray(r)[DesignFamily(po.n, H, guard).index_matrix()].mean(axis=1).tolist()


@dataclass(frozen=True)
class MSEMoments:
    n: int
    H: int
    mean_mse: float | Fraction
    var_mse: float | Fraction
    max_mse: float | Fraction
    min_mse: float | Fraction
    designs: int

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "h": self.H,
            "designs": self.designs,
            "mean_mse": float(self.mean_mse),
            "var_mse": float(self.var_mse),
            "max_mse": float(self.max_mse),
            "min_mse": float(self.min_mse),
        }


def _moments_from_table(n: int, H: int, r: list, exact: bool, guard: int) -> MSEMoments:
    size = _check_guard(n, H, guard)
    k = H // 2
    sigma2 = sum(r) / len(r) if exact else math.fsum(r) / len(r)
    if exact:
        mses = [sum(r[i] for i in idx) / k for idx in itertools.combinations(range(len(r)), k)]
        var = sum((m - sigma2) ** 2 for m in mses) / size
        mean = sum(mses) / size
    else:
        idx = DesignFamily(n, H, guard).index_matrix()
        mses = np.asarray(r)[idx].mean(axis=1)
        var = math.fsum((mses - sigma2) ** 2) / size
        mean = math.fsum(mses) / size
    return MSEMoments(n, H, mean, var, max(mses), min(mses), size)


def brute_variance_mse(
    po: PotentialOutcomes,
    n: int | None = None,
    H: int = 2,
    *,
    exact: bool | None = None,
    guard: int = DESIGN_GUARD,
) -> MSEMoments:
    """Exact mean, variance (about sigma^2_CR), max and min MSE over K_H.

    ``exact=None`` switches to rational arithmetic when every outcome is a
    dyadic rational with a small denominator (integers, halves, ...).
    """
    if n is not None and n != po.n:
        raise InvalidArgument(f"N={n} does not match outcomes of length {po.n}")
    if exact is None:
        exact = _auto_exact(po)
    _check_guard(po.n, H, guard)
    return _moments_from_table(po.n, H, error_table(po, exact), exact, guard)


# ---------------------------------------------------------------------------
# identity checks


def closed_form_variance(n: int, H: int, r: list):
    """Closed form 2(N_A - H)/(H N_A) (p_bar - q_bar) from the r_j table.

    p_bar averages r_j^2 over all N_A vectors; q_bar averages r_j r_j' over
    ordered pairs that are neither equal nor mirrors.  With mirrors sharing
    r_j, both reduce to sums over the half table.
    """
    m = len(r)
    n_a = 2 * m
    s1 = sum(r)
    s2 = sum(x * x for x in r)
    p_bar = s2 / m
    # full-table sum over j' != j, -j is 4 (s1^2 - s2)
    q_bar = 4 * (s1 * s1 - s2) / (n_a * (n_a - 2)) if n_a > 2 else 0 * s1
    return 2 * (n_a - H) * (p_bar - q_bar) / (H * n_a)


def _close(a, b, exact: bool, tol: float = REL_TOL, scale: float = 0.0) -> bool:
    """Equality in rational mode; otherwise relative error at most ``tol``
    against the larger of |a|, |b| and ``scale`` (the data's natural size,
    which keeps values that should be zero from failing on round-off)."""
    if exact:
        return a == b
    a, b = float(a), float(b)
    return abs(a - b) <= tol * max(abs(a), abs(b), scale)


@dataclass(frozen=True)
class CheckFailure:
    check: str
    H: int | None
    lhs: float
    rhs: float

    def as_dict(self) -> dict:
        return {"check": self.check, "h": self.H, "lhs": self.lhs, "rhs": self.rhs}


@dataclass
class TheoremReport:
    n: int
    exact: bool
    sigma2_cr: float | Fraction
    psi: float | Fraction
    phi_complete: Fraction
    moments: list[MSEMoments] = field(default_factory=list)
    failures: list[CheckFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "exact": self.exact,
            "passed": self.passed,
            "sigma2_cr": float(self.sigma2_cr),
            "psi": float(self.psi),
            "phi_complete": float(self.phi_complete),
            "moments": [m.as_dict() for m in self.moments],
            "failures": [f.as_dict() for f in self.failures],
        }


def feasible_h(n: int, guard: int = DESIGN_GUARD, max_h: int | None = None) -> list[int]:
    """Even H whose family fits under ``guard`` (and ``max_h`` if given)."""
    m = half_size(n)
    out = []
    for k in range(1, m + 1):
        if max_h is not None and 2 * k > max_h:
            break
        if math.comb(m, k) <= guard:
            out.append(2 * k)
    return out


def verify_theorems(
    po: PotentialOutcomes,
    n: int | None = None,
    *,
    hs: list[int] | None = None,
    exact: bool | None = None,
    guard: int = DESIGN_GUARD,
    tol: float = REL_TOL,
) -> TheoremReport:
    """Check the four MSE identities over K_H for every H in ``hs``.

    (i) mean MSE equals sigma^2_CR; (ii) max MSE weakly decreasing and min
    weakly increasing in H; (iii) the variance matches the r_j closed form;
    (iv) the variance matches the psi/phi formula with phi(K_H) = phi(K).
    Default ``hs``: every feasible H for N <= 6, H <= 6 for larger N.
    """
    if n is not None and n != po.n:
        raise InvalidArgument(f"N={n} does not match outcomes of length {po.n}")
    n = po.n
    if exact is None:
        exact = _auto_exact(po)
    if hs is None:
        hs = feasible_h(n, guard, None if n <= 6 else 6)
        if not hs:
            raise TooLarge(f"no H is enumerable at N={n} under guard {guard}")
    for H in hs:
        _check_guard(n, H, guard)
    r = error_table(po, exact)
    sigma2 = sum(r) / len(r) if exact else math.fsum(r) / len(r)
    psi_v = psi(po, exact=exact)
    phi_k = phi_complete_fraction(n)
    report = TheoremReport(n, exact, sigma2, psi_v, phi_k)
    r_scale = 0.0 if exact else max(abs(float(x)) for x in r)
    slack = 0 if exact else tol * r_scale
    for H in sorted(hs):
        mom = _moments_from_table(n, H, r, exact, guard)
        report.moments.append(mom)
        if not _close(mom.mean_mse, sigma2, exact, tol, r_scale):
            report.failures.append(CheckFailure("mean_equals_sigma2_cr", H, float(mom.mean_mse), float(sigma2)))
        t3 = closed_form_variance(n, H, r)
        if not _close(mom.var_mse, t3, exact, tol, r_scale**2):
            report.failures.append(CheckFailure("variance_closed_form", H, float(mom.var_mse), float(t3)))
        phi_arg = phi_k if exact else float(phi_k)
        with warnings.catch_warnings():
            # round-off can push an exactly-zero variance slightly negative
            warnings.simplefilter("ignore", ClampedVarianceWarning)
            t4 = var_mse_theorem4(n, H, phi_arg, phi_arg, psi_v)
        if not _close(mom.var_mse, t4, exact, tol, r_scale**2):
            report.failures.append(CheckFailure("variance_psi_phi", H, float(mom.var_mse), float(t4)))
    for a, b in zip(report.moments, report.moments[1:]):
        if b.max_mse > a.max_mse + slack:
            report.failures.append(CheckFailure("max_nonincreasing", b.H, float(b.max_mse), float(a.max_mse)))
        if b.min_mse < a.min_mse - slack:
            report.failures.append(CheckFailure("min_nondecreasing", b.H, float(b.min_mse), float(a.min_mse)))
        if b.var_mse > a.var_mse + slack * slack:
            report.failures.append(CheckFailure("var_nonincreasing", b.H, float(b.var_mse), float(a.var_mse)))
    return report


# ---------------------------------------------------------------------------
# conditions on K_H


def condition_counts(n: int, H: int, guard: int = DESIGN_GUARD) -> tuple[np.ndarray, np.ndarray]:
    """Per-vector appearance counts and pairwise co-occurrence counts in K_H."""
    fam = DesignFamily(n, H, guard)
    m = half_size(n)
    appear = np.zeros(m, dtype=np.int64)
    co = np.zeros((m, m), dtype=np.int64)
    for idx in fam.index_sets():
        appear[list(idx)] += 1
        for a, b in itertools.combinations(idx, 2):
            co[a, b] += 1
            co[b, a] += 1
    return appear, co
