"""Balanced assignment vectors, mirror-closed designs and pairwise uniqueness.

Units are numbered from 0 internally.  A vector is stored as an integer whose
most significant of ``n`` bits is unit 0, so the treated-first lexicographic
order (``1100 < 1010 < 1001 < 0110 ...``) is descending integer order.  The
"half" of a design is the set of its vectors that treat unit 0; every
mirror-closed design is exactly its half plus the complements.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidDesign, NoNonMirrorPairs, TooLarge

#: Largest N accepted by the exhaustive enumerators (C(N, N/2) grows fast).
ENUMERATION_LIMIT = 30


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise InvalidArgument(f"N must be an integer, got {n!r}")
    if n < 4 or n % 2:
        raise InvalidArgument(f"N must be an even integer >= 4, got {n}")


def _parse_bits(value) -> tuple[int, int]:
    """Return ``(bits, n)`` for a 0/1 string or sequence, without balance checks."""
    if isinstance(value, AssignmentVector):
        return value.bits, value.n
    if isinstance(value, str):
        s = value.strip()
        if not s or set(s) - {"0", "1"}:
            raise InvalidArgument(f"not a 0/1 string: {value!r}")
        return int(s, 2), len(s)
    arr = np.asarray(value)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgument("assignment must be a non-empty 1-d sequence")
    if not np.isin(arr, (0, 1)).all():
        raise InvalidArgument("assignment entries must be 0 or 1")
    bits = 0
    for b in arr.astype(int).tolist():
        bits = (bits << 1) | b
    return bits, int(arr.size)


@dataclass(frozen=True)
class AssignmentVector:
    """A forced-balanced treatment indicator over ``n`` units (1 = treated)."""

    bits: int
    n: int

    def __post_init__(self):
        _check_n(self.n)
        if self.bits < 0 or self.bits >> self.n:
            raise InvalidArgument(f"bits do not fit in {self.n} units")
        if self.bits.bit_count() != self.n // 2:
            raise InvalidArgument(
                f"vector treats {self.bits.bit_count()} of {self.n} units; "
                f"exactly {self.n // 2} required"
            )

    @classmethod
    def from_string(cls, s: str) -> "AssignmentVector":
        bits, n = _parse_bits(s)
        return cls(bits, n)

    @classmethod
    def from_array(cls, a: Sequence[int] | np.ndarray) -> "AssignmentVector":
        bits, n = _parse_bits(a)
        return cls(bits, n)

    @classmethod
    def from_treated(cls, treated: Iterable[int], n: int) -> "AssignmentVector":
        bits = 0
        for i in treated:
            bits |= 1 << (n - 1 - int(i))
        return cls(bits, n)

    def to_string(self) -> str:
        return format(self.bits, f"0{self.n}b")

    def to_array(self) -> np.ndarray:
        return np.array([int(c) for c in self.to_string()], dtype=np.int8)

    def treated(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.to_string()) if c == "1")

    @property
    def mask(self) -> int:
        return (1 << self.n) - 1

    def mirror(self) -> "AssignmentVector":
        return AssignmentVector(self.bits ^ self.mask, self.n)

    def is_canonical(self) -> bool:
        """True when unit 0 is treated, i.e. the vector is in the first half."""
        return bool(self.bits >> (self.n - 1))

    def canonical(self) -> "AssignmentVector":
        return self if self.is_canonical() else self.mirror()

    def __str__(self) -> str:
        return self.to_string()


def mirror(w: AssignmentVector) -> AssignmentVector:
    """Bitwise complement of ``w``."""
    return w.mirror()


def uniqueness(a: AssignmentVector, b: AssignmentVector) -> int:
    """Number of units treated in ``a`` but not in ``b``."""
    if a.n != b.n:
        raise InvalidArgument(f"length mismatch: {a.n} vs {b.n}")
    return (a.bits & ~b.bits).bit_count()


# ---------------------------------------------------------------------------
# bulk helpers on boolean matrices (rows = vectors)


def to_matrix(vectors: Sequence[AssignmentVector]) -> np.ndarray:
    if not vectors:
        raise InvalidArgument("no vectors")
    n = vectors[0].n
    out = np.zeros((len(vectors), n), dtype=bool)
    for r, v in enumerate(vectors):
        out[r] = v.to_array().astype(bool)
    return out


def from_matrix(w: np.ndarray) -> list[AssignmentVector]:
    w = np.asarray(w, dtype=bool)
    n = w.shape[1]
    weights = [1 << (n - 1 - i) for i in range(n)]
    out = []
    for row in w:
        bits = sum(weights[i] for i in np.flatnonzero(row))
        out.append(AssignmentVector(int(bits), n))
    return out


def canonicalize(w: np.ndarray) -> np.ndarray:
    """Complement every row whose unit 0 is untreated."""
    w = np.asarray(w, dtype=bool)
    return np.where(w[:, :1], w, ~w)


def signs(w: np.ndarray) -> np.ndarray:
    """Map a boolean assignment matrix to +1 (treated) / -1 (control) floats."""
    return np.where(np.asarray(w, dtype=bool), 1.0, -1.0)


def inner_products(w: np.ndarray) -> np.ndarray:
    """Gram matrix ``s_a . s_b`` of the +/-1 encodings; entries equal N - 4u.

    Computed in float64, which is exact for the integer entries involved.
    """
    s = signs(w)
    return s @ s.T


def uniqueness_matrix(w: np.ndarray) -> np.ndarray:
    n = np.asarray(w).shape[1]
    g = inner_products(w)
    return np.rint((n - g) / 4).astype(np.int64)


# ---------------------------------------------------------------------------
# enumeration


def random_balanced(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    """Uniform draws (with replacement) from all C(n, n/2) balanced vectors."""
    _check_n(n)
    treated = np.argpartition(rng.random((size, n)), n // 2, axis=1)[:, : n // 2]
    out = np.zeros((size, n), dtype=bool)
    np.put_along_axis(out, treated, True, axis=1)
    return out


def half_size(n: int) -> int:
    _check_n(n)
    return math.comb(n - 1, n // 2 - 1)


def _check_enumerable(n: int, limit: int | None) -> None:
    _check_n(n)
    limit = ENUMERATION_LIMIT if limit is None else limit
    if n > limit:
        raise TooLarge(f"N={n} exceeds enumeration limit {limit}")


def iter_half_chunks(n: int, chunk: int = 65536, limit: int | None = None) -> Iterator[np.ndarray]:
    """Stream the first half of the ordering as boolean matrices of <= chunk rows."""
    _check_enumerable(n, limit)
    combos = itertools.combinations(range(1, n), n // 2 - 1)
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            return
        idx = np.array(block, dtype=np.int64).reshape(len(block), n // 2 - 1)
        out = np.zeros((len(block), n), dtype=bool)
        out[:, 0] = True
        rows = np.repeat(np.arange(len(block)), idx.shape[1])
        out[rows, idx.ravel()] = True
        yield out


def half_matrix(n: int, limit: int | None = None) -> np.ndarray:
    """All vectors treating unit 0, in treated-first lexicographic order."""
    return np.concatenate(list(iter_half_chunks(n, limit=limit)))


def enumerate_half(n: int, limit: int | None = None) -> list[AssignmentVector]:
    """The first half of the lexicographic ordering: C(N-1, N/2-1) vectors."""
    _check_enumerable(n, limit)
    out = []
    for rest in itertools.combinations(range(1, n), n // 2 - 1):
        out.append(AssignmentVector.from_treated((0, *rest), n))
    return out


def enumerate_all(n: int, limit: int | None = None) -> list[AssignmentVector]:
    half = enumerate_half(n, limit)
    return half + [w.mirror() for w in reversed(half)]


# ---------------------------------------------------------------------------
# designs


@dataclass(frozen=True)
class Violation:
    kind: str  # imbalance | missing-mirror | duplicate | mixed-n | empty | malformed
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


def validate_design(vectors) -> list[Violation]:
    """Report every violated design invariant; an empty list means valid.

    Accepts a :class:`Design`, or any iterable of vectors, 0/1 strings or 0/1
    sequences.
    """
    if isinstance(vectors, Design):
        vectors = vectors.vectors
    parsed = []
    out: list[Violation] = []
    for k, v in enumerate(vectors):
        try:
            parsed.append((k, *_parse_bits(v)))
        except InvalidArgument as exc:
            out.append(Violation("malformed", f"entry {k}: {exc}"))
    if not parsed and not out:
        return [Violation("empty", "design has no vectors")]
    lengths = {n for _, _, n in parsed}
    if len(lengths) > 1:
        out.append(Violation("mixed-n", f"vector lengths {sorted(lengths)}"))
    seen: dict[tuple[int, int], int] = {}
    for k, bits, n in parsed:
        label = format(bits, f"0{n}b")
        if bits.bit_count() * 2 != n:
            out.append(Violation("imbalance", f"entry {k} ({label}) treats {bits.bit_count()} of {n}"))
        if (bits, n) in seen:
            out.append(Violation("duplicate", f"entry {k} ({label}) repeats entry {seen[(bits, n)]}"))
        else:
            seen[(bits, n)] = k
    for (bits, n), k in seen.items():
        comp = bits ^ ((1 << n) - 1)
        if (comp, n) not in seen:
            out.append(
                Violation("missing-mirror", f"entry {k} ({format(bits, f'0{n}b')}) lacks {format(comp, f'0{n}b')}")
            )
    return out


class Design:
    """A mirror-closed, duplicate-free set of assignment vectors.

    Insertion order is kept for reports; equality and hashing are set based.
    """

    def __init__(self, vectors: Iterable[AssignmentVector | str]):
        vecs = tuple(v if isinstance(v, AssignmentVector) else AssignmentVector.from_string(v) for v in vectors)
        problems = validate_design(vecs)
        if problems:
            raise InvalidDesign(problems)
        self.vectors = vecs
        self.n = vecs[0].n
        self._set = frozenset(v.bits for v in vecs)

    @classmethod
    def from_half(cls, half: Iterable[AssignmentVector | str]) -> "Design":
        """Build a design from one representative per mirror pair."""
        reps = [v if isinstance(v, AssignmentVector) else AssignmentVector.from_string(v) for v in half]
        return cls(reps + [v.mirror() for v in reversed(reps)])

    @classmethod
    def from_matrix(cls, w: np.ndarray) -> "Design":
        return cls.from_half(from_matrix(canonicalize(w)))

    @classmethod
    def complete(cls, n: int, limit: int | None = None) -> "Design":
        return cls(enumerate_all(n, limit))

    @property
    def H(self) -> int:
        return len(self.vectors)

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def __contains__(self, w: AssignmentVector) -> bool:
        return w.n == self.n and w.bits in self._set

    def __eq__(self, other) -> bool:
        if not isinstance(other, Design):
            return NotImplemented
        return self.n == other.n and self._set == other._set

    def __hash__(self) -> int:
        return hash((self.n, self._set))

    def __repr__(self) -> str:
        return f"Design(n={self.n}, H={self.H})"

    def half(self) -> list[AssignmentVector]:
        return [v for v in self.vectors if v.is_canonical()]

    def half_matrix(self) -> np.ndarray:
        return to_matrix(self.half())

    def matrix(self) -> np.ndarray:
        return to_matrix(list(self.vectors))


# ---------------------------------------------------------------------------
# uniqueness histogram


@dataclass(frozen=True)
class UniquenessHistogram:
    """Counts of pairwise uniqueness over unordered pairs of a design."""

    n: int
    counts: tuple[int, ...]  # index u = 0..N/2
    total_pairs: int
    excludes_mirrors: bool = True

    def proportions(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.total_pairs

    def is_symmetric(self) -> bool:
        return self.counts == self.counts[::-1]

    def as_dict(self) -> dict[int, int]:
        return {u: c for u, c in enumerate(self.counts) if c}


def half_pair_uniqueness_counts(half: np.ndarray) -> np.ndarray:
    """Histogram of u over unordered pairs of distinct rows of ``half``."""
    half = np.asarray(half, dtype=bool)
    n = half.shape[1]
    u = uniqueness_matrix(half)
    iu = np.triu_indices(len(half), k=1)
    return np.bincount(u[iu], minlength=n // 2 + 1)


def uniqueness_histogram(d: Design) -> UniquenessHistogram:
    """Uniqueness counts over all unordered non-self, non-mirror pairs.

    Each pair of half-vectors {a, b} with uniqueness u stands for four design
    pairs: {a, b} and their mirrors at u, and the two cross pairs at N/2 - u.
    """
    if d.H < 4:
        raise NoNonMirrorPairs(f"a design with H={d.H} has only self- and mirror-pairs; need H >= 4")
    base = half_pair_uniqueness_counts(d.half_matrix())
    counts = 2 * (base + base[::-1])
    return UniquenessHistogram(
        n=d.n,
        counts=tuple(int(c) for c in counts),
        total_pairs=d.H * (d.H - 2) // 2,
    )
