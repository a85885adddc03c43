"""Readers and writers for vector, outcome, covariate and block files."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .assign import AssignmentVector, Design, validate_design
from .errors import InvalidArgument, InvalidDesign, ParseError
from .estimators import PotentialOutcomes
from .generators import BlockSpec, CovariateMatrix


def _open_text(source) -> tuple[list[str], str | None]:
    if isinstance(source, io.TextIOBase):
        return source.read().splitlines(), getattr(source, "name", None)
    path = Path(source)
    try:
        return path.read_text().splitlines(), str(path)
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from exc


# ---------------------------------------------------------------------------
# assignment vectors


def parse_vectors(lines, path: str | None = None) -> list[AssignmentVector]:
    """One vector per line as 0/1 characters; '#' lines and blank lines skipped."""
    out = []
    n = None
    for lineno, raw in enumerate(lines, 1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        if set(s) - {"0", "1"}:
            raise ParseError(f"expected only 0/1 characters, got {s!r}", path, lineno)
        if n is not None and len(s) != n:
            raise ParseError(f"vector has {len(s)} units, earlier vectors have {n}", path, lineno)
        n = len(s)
        try:
            out.append(AssignmentVector.from_string(s))
        except (InvalidArgument, ValueError) as exc:
            raise ParseError(str(exc), path, lineno) from exc
    if not out:
        raise ParseError("no assignment vectors found", path)
    return out


def read_vectors(source) -> list[AssignmentVector]:
    lines, path = _open_text(source)
    return parse_vectors(lines, path)


def read_design(source) -> Design:
    """Load and validate a design file."""
    lines, path = _open_text(source)
    vectors = parse_vectors(lines, path)
    problems = validate_design(vectors)
    if problems:
        raise InvalidDesign(problems)
    return Design(vectors)


def format_vectors(vectors, header: str | None = None) -> str:
    rows = [] if header is None else [f"# {line}" for line in header.splitlines()]
    rows += [v.to_string() for v in vectors]
    return "\n".join(rows) + "\n"


def write_design(path, d: Design, header: str | None = None) -> None:
    Path(path).write_text(format_vectors(sorted(d, key=lambda v: -v.bits), header))


# ---------------------------------------------------------------------------
# CSV tables


def _read_csv(source) -> tuple[list[str], list[tuple[int, list[str]]], str | None]:
    lines, path = _open_text(source)
    body = [(i, line) for i, line in enumerate(lines, 1) if line.strip() and not line.lstrip().startswith("#")]
    if not body:
        raise ParseError("empty file", path)
    rows = list(csv.reader([line for _, line in body]))
    header = [h.strip() for h in rows[0]]
    data = [(lineno, [f.strip() for f in row]) for (lineno, _), row in zip(body[1:], rows[1:])]
    return header, data, path


def _numeric_rows(header, data, path) -> np.ndarray:
    out = []
    for lineno, row in data:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        try:
            vals = [float(f) for f in row]
        except ValueError as exc:
            raise ParseError(f"non-numeric field: {exc}", path, lineno) from exc
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", path, lineno)
        out.append(vals)
    if not out:
        raise ParseError("no data rows", path)
    return np.array(out, dtype=float)


def read_outcomes(source) -> PotentialOutcomes:
    """Potential-outcomes CSV with header ``y0,y1``."""
    header, data, path = _read_csv(source)
    if header != ["y0", "y1"]:
        raise ParseError(f"header must be 'y0,y1', got {','.join(header)!r}", path, 1)
    y = _numeric_rows(header, data, path)
    try:
        return PotentialOutcomes(y[:, 0], y[:, 1])
    except InvalidArgument as exc:
        raise ParseError(str(exc), path) from exc


def format_outcomes(po: PotentialOutcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y0", "y1"])
    for a, b in zip(po.y0.tolist(), po.y1.tolist()):
        w.writerow([repr(a), repr(b)])
    return buf.getvalue()


def write_outcomes(path, po: PotentialOutcomes) -> None:
    Path(path).write_text(format_outcomes(po))


def read_covariates(source) -> CovariateMatrix:
    """Covariate CSV: a header of column names, then N rows of p numbers."""
    header, data, path = _read_csv(source)
    if any(not h for h in header):
        raise ParseError("empty column name in header", path, 1)
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise ParseError("first row must be column names", path, 1)
    x = _numeric_rows(header, data, path)
    try:
        return CovariateMatrix(x, tuple(header))
    except InvalidArgument as exc:
        raise ParseError(str(exc), path) from exc


def format_covariates(x: CovariateMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(x.names)
    for row in x.x.tolist():
        w.writerow([repr(v) for v in row])
    return buf.getvalue()


def write_covariates(path, x: CovariateMatrix) -> None:
    Path(path).write_text(format_covariates(x))


def read_blocks(source) -> BlockSpec:
    """Block CSV with header ``unit_id,block_id``; unit ids must be 0..N-1."""
    header, data, path = _read_csv(source)
    if header != ["unit_id", "block_id"]:
        raise ParseError(f"header must be 'unit_id,block_id', got {','.join(header)!r}", path, 1)
    block_of: dict[int, str] = {}
    for lineno, row in data:
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", path, lineno)
        try:
            unit = int(row[0])
        except ValueError as exc:
            raise ParseError(f"unit_id must be an integer, got {row[0]!r}", path, lineno) from exc
        if unit in block_of:
            raise ParseError(f"unit {unit} listed twice", path, lineno)
        block_of[unit] = row[1]
    if sorted(block_of) != list(range(len(block_of))):
        raise ParseError("unit ids must be exactly 0..N-1", path)
    try:
        return BlockSpec(tuple(block_of[i] for i in range(len(block_of))))
    except InvalidArgument as exc:
        raise ParseError(str(exc), path) from exc


def write_blocks(path, spec: BlockSpec) -> None:
    lines = ["unit_id,block_id"] + [f"{i},{b}" for i, b in enumerate(spec.block_of)]
    Path(path).write_text("\n".join(lines) + "\n")
