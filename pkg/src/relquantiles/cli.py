"""Command-line interface: ``relquantiles build|query|cdf|merge|inspect|selftest``.

Exit codes: 0 success, 1 data or decode error, 2 usage error, 3 selftest
failure. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import verify
from .codec import deserialize, serialize
from .errors import ParameterError, SketchError
from .params import Mode
from .sketch import Sketch

EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_SELFTEST = 3


class _DataError(Exception):
    pass


def read_items(stream):
    """Parse one float per line; blank lines are skipped."""
    out = []
    for lineno, line in enumerate(stream, 1):
        text = line.strip()
        if not text:
            continue
        try:
            x = float(text)
        except ValueError:
            raise _DataError(f"line {lineno}: not a number: {text!r}") from None
        if not math.isfinite(x):
            raise _DataError(f"line {lineno}: not a finite number: {text!r}")
        out.append(x)
    return np.asarray(out, dtype=np.float64)


def _load(path):
    try:
        with open(path, "rb") as fh:
            return deserialize(fh.read())
    except OSError as exc:
        raise _DataError(f"{path}: {exc.strerror}") from None


def _save(sketch, path):
    try:
        with open(path, "wb") as fh:
            fh.write(serialize(sketch))
    except OSError as exc:
        raise _DataError(f"{path}: {exc.strerror}") from None


def _fmt(x):
    return repr(float(x))


def cmd_build(args, parser, out):
    mode = Mode.parse(args.mode)
    if mode is not Mode.MERGEABLE and args.n is None:
        parser.error(f"--mode {args.mode} requires --n")
    data = read_items(sys.stdin)
    n = args.n
    if mode is Mode.MERGEABLE and not args.all_quantiles:
        n = None
    elif n is None:
        n = max(1, len(data))
    sketch = Sketch(args.eps, args.delta, mode=mode, n=n, seed=args.seed, all_quantiles=args.all_quantiles)
    sketch.update_many(data)
    _save(sketch, args.output)
    return 0


def cmd_query(args, parser, out):
    sketch = _load(args.file)
    if args.rank_of is not None:
        for r in sketch.ranks(args.rank_of):
            print(int(r), file=out)
    else:
        for r in args.quantile:
            print(_fmt(sketch.quantile(r)), file=out)
    return 0


def evenly_spaced_points(sketch, count):
    values = sketch.stored_values()
    if len(values) == 0:
        return values
    idx = np.unique(np.round(np.linspace(0, len(values) - 1, count)).astype(np.int64))
    return values[idx]


def cmd_cdf(args, parser, out):
    if args.points < 1:
        parser.error("--points must be positive")
    sketch = _load(args.file)
    if sketch.n == 0:
        raise SketchError("cdf of an empty sketch")
    for y, frac in sketch.cdf(evenly_spaced_points(sketch, args.points)):
        print(f"{_fmt(y)}\t{_fmt(frac)}", file=out)
    return 0


def cmd_merge(args, parser, out):
    a = _load(args.file1)
    b = _load(args.file2)
    _save(a.merge(b), args.output)
    return 0


def describe(sketch):
    p = sketch.params
    return {
        "params": {
            "mode": p.mode.name.lower(), "eps": p.eps, "delta": p.delta, "k_hat": p.k_hat,
            "N": p.N, "k": p.k, "B": p.B,
        },
        "seed": sketch.seed,
        "n": sketch.n,
        "H": sketch.H,
        "coins_used": sketch.coins_used,
        "level_counts": sketch.level_sizes(),
        "sigmas": sketch.sigmas(),
        "stored_items": sketch.stored_items(),
    }


def cmd_inspect(args, parser, out):
    print(json.dumps(describe(_load(args.file))), file=out)
    return 0


def selftest(eps, delta, n, trials, seed=0, mode="streaming", distribution="uniform"):
    """Run the statistical checks; returns ``(records, passed)``."""
    cfg = verify.TrialConfig(eps, delta, n, trials, distribution, mode=mode, seed=seed)
    report = verify.failure_rate(cfg)
    records = []
    passed = True
    for s in report.ranks:
        rec = s.record()
        rec["within_band"] = s.within_band
        rec["unbiased"] = s.unbiased
        passed &= s.within_band and s.unbiased
        records.append(rec)
    summary = {
        "summary": True, "mode": report.params.mode.name.lower(), "trials": trials,
        "low_ranks_exact": report.prefix_exact == trials,
    }
    passed &= summary["low_ranks_exact"]
    if report.params.mode is not Mode.MERGEABLE:
        summary["weight_conserved"] = report.weight_exact == trials
        passed &= summary["weight_conserved"]
    summary["passed"] = bool(passed)
    records.append(summary)
    return records, bool(passed)


def cmd_selftest(args, parser, out):
    if args.trials < 100:
        parser.error("--trials must be at least 100")
    records, passed = selftest(
        args.eps, args.delta, args.n, args.trials, args.seed, args.mode, args.distribution
    )
    for rec in records:
        print(json.dumps(rec), file=out)
    return 0 if passed else EXIT_SELFTEST


def build_parser():
    parser = argparse.ArgumentParser(prog="relquantiles", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a sketch from one number per line on stdin")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--mode", choices=["mergeable", "streaming", "highconf"], default="mergeable")
    p.add_argument("--n", type=int, help="stream length bound (required unless mergeable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--all-quantiles", action="store_true",
                   help="guarantee every quantile at once (uses --n, or the input length)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="estimate ranks or quantiles")
    p.add_argument("file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rank-of", type=float, nargs="+", metavar="Y")
    g.add_argument("--quantile", type=int, nargs="+", metavar="R", help="1-based ranks")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("cdf", help="print evenly spaced stored items with their rank fractions")
    p.add_argument("file")
    p.add_argument("--points", type=int, required=True)
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("merge", help="merge two mergeable sketches")
    p.add_argument("file1")
    p.add_argument("file2")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("inspect", help="print sketch parameters and level layout as JSON")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("selftest", help="run the seeded statistical checks")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["streaming", "mergeable", "highconf"], default="streaming")
    p.add_argument("--distribution", choices=verify.DISTRIBUTIONS, default="uniform")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser, out)
    except ParameterError as exc:
        print(f"relquantiles {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SketchError, _DataError) as exc:
        print(f"relquantiles {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
