"""Command-line front end: diagnose, simulate, verify, choose-pa, gen."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .assign import Design
from .correlation import (
    ClampedVarianceWarning,
    InconsistentInputWarning,
    _phi_exact_half,
    phi_exact,
    phi_monte_carlo,
    psi,
    risk_report,
)
from .errors import AssignCorrError, DesignTooSmall, NoNonMirrorPairs, TooLarge
from .estimators import PotentialOutcomes
from .fileio import (
    format_vectors,
    read_blocks,
    read_covariates,
    read_design,
    read_outcomes,
    format_covariates,
    format_outcomes,
)
from .generators import (
    DEFAULT_REFERENCE_DRAWS,
    BlockSpec,
    MahalanobisBalance,
    PairSwitchSampler,
    RerandomizationSampler,
    adaptive_pa,
    block_enumerate,
    block_sampler,
    reference_distribution,
    sample_covariates,
    threshold_from_reference,
)
from .oracle import DESIGN_GUARD, design_mses, family_size, verify_theorems
from .sampling import CompleteSampler, DesignSampler, draw_distinct, stream_rng
from .simulation import DEFAULT_STRATEGIES, SimulationConfig, run_simulation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
DEFAULT_SCHEDULE = (1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)
RNG_ID = "numpy.PCG64/SeedSequence"


class ConfigError(Exception):
    pass


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    buf = io.StringIO()
    if columns is None:
        columns = list(rows[0]) if rows else []
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def _require_seed(args, what: str) -> int:
    if args.seed is None:
        raise ConfigError(f"{what} is stochastic; pass --seed")
    return args.seed


def _covariates(args, stream=(0,)):
    if args.covariates:
        return read_covariates(args.covariates)
    if args.n is None:
        raise ConfigError("give --covariates FILE or --n (with --p, --dist) to generate covariates")
    return sample_covariates(args.n, args.p, args.dist, _require_seed(args, "covariate generation"), stream=stream)


# ---------------------------------------------------------------------------
# diagnose


def _generator_sampler(args, seed):
    if args.generator == "complete":
        if args.n is None:
            raise ConfigError("--generator complete needs --n")
        return CompleteSampler(args.n), {}
    if args.generator == "block":
        if args.blocks:
            spec = read_blocks(args.blocks)
        elif args.n is not None and args.block_size:
            spec = BlockSpec.equal(args.n, args.block_size)
        else:
            raise ConfigError("--generator block needs --blocks FILE or --n with --block-size")
        return block_sampler(spec), {"H": spec.design_size()}
    x = _covariates(args, stream=(0,))
    balance = MahalanobisBalance(x)
    if args.generator == "ps":
        return PairSwitchSampler(balance), {}
    p_a = args.p_a
    if p_a == 1:
        a = math.inf
    else:
        ref = reference_distribution(balance, args.reference_draws, stream_rng(seed, 2))
        a = threshold_from_reference(ref, p_a)
    return RerandomizationSampler(balance, p_a, a), {}


def cmd_diagnose(args) -> int:
    psi_value = args.psi
    if args.outcomes:
        psi_value = psi(read_outcomes(args.outcomes))
    if args.design:
        d = read_design(args.design)
        try:
            if d.H // 2 <= args.exact_limit:
                est = phi_exact(d)
            else:
                seed = _require_seed(args, "Monte Carlo phi for a large design")
                est = phi_monte_carlo(DesignSampler(d), args.k, seed, stream=(1,))
        except NoNonMirrorPairs as exc:
            raise ConfigError(
                f"{exc}. Remediation: add at least one more vector and its mirror to the design file"
            ) from None
        H = d.H
    else:
        if not args.generator:
            raise ConfigError("give --design FILE or --generator {complete,rerand,ps,block}")
        seed = _require_seed(args, "diagnosing a generator")
        sampler, extra = _generator_sampler(args, seed)
        H = extra.get("H", "large")
        if isinstance(H, int) and H // 2 <= args.exact_limit:
            est = _phi_exact_half(block_enumerate(sampler.spec).half_matrix(), design_h=H)
        else:
            est = phi_monte_carlo(sampler, args.k, seed, stream=(1,))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InconsistentInputWarning)
        warnings.simplefilter("always", ClampedVarianceWarning)
        report = risk_report(est, H, psi_value, seed=args.seed)
    out = report.to_json()
    out["psi"] = None if psi_value is None else float(psi_value)
    out["warnings"] = [str(w.message) for w in caught]
    out["provenance"] = {"rng": RNG_ID, **est.provenance} if est.provenance else {}
    if est.provenance:
        out["provenance"]["stream_layout"] = "(seed, 0) covariates; (seed, 1) phi draws; (seed, 2) reference draws"
    if args.format == "csv":
        flat = {k: v for k, v in out.items() if not isinstance(v, (dict, list))}
        _emit(args, _csv_text([flat]))
    else:
        _emit(args, _dump_json(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    seed = _require_seed(args, "simulate")
    cfg = SimulationConfig(
        n=args.n or 50,
        p=args.p,
        dist=args.dist,
        strategies=tuple(args.strategies),
        samples=args.samples,
        k=args.k,
        seed=seed,
        reference_draws=args.reference_draws,
    )
    result = run_simulation(cfg, threads=args.threads)
    rows = [r.as_dict() for r in result.rows]
    summary = result.summary()
    if args.format == "json":
        doc = {
            "config": {
                "n": cfg.n,
                "p": cfg.p,
                "dist": cfg.dist,
                "strategies": list(cfg.strategies),
                "samples": cfg.samples,
                "k": cfg.k,
                "seed": cfg.seed,
                "reference_draws": cfg.reference_draws,
                "rng": RNG_ID,
                "stream_layout": "(seed, r, 0) covariates; (seed, r, 1) reference; (seed, r, 2, j) strategy j",
                "quantile_rule": "lower",
            },
            "summary": summary,
            "rows": rows,
        }
        _emit(args, _dump_json(doc))
    else:
        _emit(args, _csv_text(rows, list(rows[0])))
        cols = sorted({k for s in summary for k in s}, key=lambda k: (k != "strategy", k))
        text = _csv_text(summary, cols)
        if args.summary_out:
            Path(args.summary_out).write_text(text)
        else:
            sys.stderr.write(text)
    for r in result.errors():
        sys.stderr.write(f"sample {r.sample} {r.strategy}: {r.error}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _fmt_exact(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))


def cmd_verify(args) -> int:
    sources = []
    if args.data:
        po = read_outcomes(args.data)
        if args.n and any(n != po.n for n in args.n):
            raise ConfigError(f"data file has N={po.n}, --n asks for {args.n}")
        sources.append((po.n, [po]))
    else:
        seed = _require_seed(args, "verify with random outcomes")
        for n in args.n or [4, 6]:
            if n < 4 or n % 2:
                raise ConfigError(f"N must be an even integer >= 4, got {n}")
            rng = stream_rng(seed, n)
            sources.append((n, [PotentialOutcomes(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(args.draws)]))
    reports, guard_errors = [], []
    tables = {}
    for n, pos in sources:
        try:
            for po in pos:
                reports.append(verify_theorems(po, hs=args.h, guard=args.guard))
        except TooLarge as exc:
            guard_errors.append({"n": n, "error": str(exc)})
            continue
        if args.data:
            po = pos[0]
            for H in [m.H for m in reports[-1].moments]:
                if family_size(n, H) <= 64:
                    tables[str(H)] = [_fmt_exact(v) for v in design_mses(po, H)]
    failures = [dict(f.as_dict(), n=r.n) for r in reports for f in r.failures]
    doc = {
        "passed": not failures and not guard_errors,
        "checked": len(reports),
        "failures": failures,
        "guard_errors": guard_errors,
        "reports": [r.as_dict() for r in reports] if args.data else [],
    }
    if tables:
        doc["mse_table"] = tables
        doc["sigma2_cr"] = _fmt_exact(reports[-1].sigma2_cr)
    if args.format == "csv":
        rows = [dict(m.as_dict(), passed=r.passed) for r in reports for m in r.moments]
        _emit(args, _csv_text(rows) if rows else "")
    else:
        _emit(args, _dump_json(doc))
    if tables:
        # printed over a common denominator so the table reads like a hand calculation
        den = None
        if reports[-1].exact:
            den = math.lcm(*(Fraction(v).denominator for vals in tables.values() for v in vals))
        for H, vals in tables.items():
            shown = [f"{Fraction(v) * den}/{den}" for v in vals] if den else vals
            sys.stderr.write(f"H={H}: {', '.join(shown)}\n")
    for g in guard_errors:
        sys.stderr.write(f"guard: N={g['n']}: {g['error']}\n")
    if failures:
        return EXIT_FAIL
    return EXIT_CONFIG if guard_errors else EXIT_OK


# ---------------------------------------------------------------------------
# choose-pa


def cmd_choose_pa(args) -> int:
    seed = _require_seed(args, "choose-pa")
    x = _covariates(args, stream=(0,))
    res = adaptive_pa(
        x,
        args.threshold,
        args.schedule,
        seed=seed,
        k=args.k,
        reference_draws=args.reference_draws,
        max_draws=args.max_draws,
        max_seconds=args.max_seconds,
    )
    out = res.to_json()
    out["rng"] = RNG_ID
    _emit(args, _dump_json(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "covariates":
        if args.n is None:
            raise ConfigError("gen covariates needs --n")
        x = sample_covariates(args.n, args.p, args.dist, _require_seed(args, "gen covariates"), stream=(0,))
        _emit(args, format_covariates(x))
        return EXIT_OK
    if kind == "outcomes":
        if args.n is None:
            raise ConfigError("gen outcomes needs --n")
        rng = stream_rng(_require_seed(args, "gen outcomes"), 0)
        y0 = rng.standard_normal(args.n)
        _emit(args, format_outcomes(PotentialOutcomes.from_effects(y0, np.full(args.n, args.effect))))
        return EXIT_OK
    if kind == "complete":
        if args.n is None:
            raise ConfigError("gen complete needs --n")
        d = Design.complete(args.n)
        _emit(args, format_vectors(sorted(d, key=lambda v: -v.bits), f"complete randomization, N={args.n}"))
        return EXIT_OK
    if kind == "block":
        if args.blocks:
            spec = read_blocks(args.blocks)
        elif args.n is not None and args.block_size:
            spec = BlockSpec.equal(args.n, args.block_size)
        else:
            raise ConfigError("gen block needs --blocks FILE or --n with --block-size")
        d = block_enumerate(spec)
        _emit(args, format_vectors(sorted(d, key=lambda v: -v.bits), f"block design, sizes {spec.sizes()}"))
        return EXIT_OK
    seed = _require_seed(args, f"gen {kind}")
    balance = MahalanobisBalance(_covariates(args, stream=(0,)))
    if kind == "ps":
        sampler = PairSwitchSampler(balance)
    else:
        ref = reference_distribution(balance, args.reference_draws, stream_rng(seed, 2))
        sampler = RerandomizationSampler(balance, args.p_a, threshold_from_reference(ref, args.p_a))
    half, _ = draw_distinct(sampler, args.k, stream_rng(seed, 1))
    d = Design.from_matrix(half)
    header = f"{kind} design, N={balance.n}, {args.k} vectors plus mirrors, seed {seed}"
    _emit(args, format_vectors(d, header))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _prob(s: str) -> float:
    v = float(s)
    if not (0 < v <= 1):
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (required for stochastic commands)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--threads", type=int, default=1, help="worker processes")

    cov = argparse.ArgumentParser(add_help=False)
    cov.add_argument("--covariates", help="covariate CSV")
    cov.add_argument("--n", type=int, help="units (when generating)")
    cov.add_argument("--p", type=int, default=5, help="covariates (when generating)")
    cov.add_argument("--dist", choices=("standard_normal", "lognormal"), default="standard_normal")
    cov.add_argument("--k", type=int, default=2000, help="distinct vectors for Monte Carlo phi")
    cov.add_argument("--reference-draws", type=int, default=DEFAULT_REFERENCE_DRAWS)

    parser = argparse.ArgumentParser(prog="assigncorr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", parents=[common, cov], help="assignment correlation and risk of a design")
    p.add_argument("--design", help="design file (one 0/1 vector per line)")
    p.add_argument("--generator", choices=("complete", "rerand", "ps", "block"))
    p.add_argument("--p-a", type=_prob, default=0.1, help="acceptance probability for rerand")
    p.add_argument("--blocks", help="block CSV (unit_id,block_id)")
    p.add_argument("--block-size", type=int)
    p.add_argument("--psi", type=float, default=8.0, help="assumed psi (default 8)")
    p.add_argument("--outcomes", help="potential-outcomes CSV to compute psi from")
    p.add_argument("--exact-limit", type=int, default=4096, help="largest H/2 scanned exactly")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", parents=[common, cov], help="repeated-sample phi study")
    p.add_argument("--strategies", nargs="+", default=list(DEFAULT_STRATEGIES), help="complete, ps, rerand:<p_A>")
    p.add_argument("--samples", "-R", type=int, default=200)
    p.add_argument("--summary-out", help="summary CSV path (csv format; default stderr)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="brute-force check of the MSE identities")
    p.add_argument("--n", type=int, nargs="+", help="sample sizes (random mode)")
    p.add_argument("--data", help="potential-outcomes CSV (y0,y1)")
    p.add_argument("--draws", type=int, default=50, help="random outcome draws per N")
    p.add_argument("--h", type=int, nargs="+", help="design sizes (default: all feasible)")
    p.add_argument("--guard", type=int, default=DESIGN_GUARD, help="largest family enumerated")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("choose-pa", parents=[common, cov], help="lower p_A until phi crosses a threshold")
    p.add_argument("--threshold", type=float, required=True, help="largest acceptable phi")
    p.add_argument("--schedule", type=_prob, nargs="+", default=list(DEFAULT_SCHEDULE))
    p.add_argument("--max-draws", type=int, help="candidate-draw budget")
    p.add_argument("--max-seconds", type=float, help="wall-clock budget (not reproducible)")
    p.set_defaults(func=cmd_choose_pa)

    p = sub.add_parser("gen", parents=[common, cov], help="write design, covariate or outcome files")
    p.add_argument("kind", choices=("complete", "block", "rerand", "ps", "covariates", "outcomes"))
    p.add_argument("--p-a", type=_prob, default=0.1)
    p.add_argument("--blocks", help="block CSV (unit_id,block_id)")
    p.add_argument("--block-size", type=int)
    p.add_argument("--effect", type=float, default=1.0, help="constant effect for gen outcomes")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command == "simulate" else "json"
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except DesignTooSmall as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL
    except AssignCorrError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
