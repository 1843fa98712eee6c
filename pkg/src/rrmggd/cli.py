"""Command line entry point.

    rrmggd extract REF.ppm -o ref.rrf [--selection 1,1 1,3 2,1 2,3 3,1 3,3]
    rrmggd score ref.rrf DISTORTED.ppm
    rrmggd evaluate manifest.csv -o outdir [--metric rr|psnr] [--fit-scope group|global] [--strict]
    rrmggd tid2008-manifest TID2008_ROOT -o manifest.csv [--convert-dir DIR]

Exit codes: 0 ok, 1 usage, 2 input/output error, 3 pipeline error,
4 dimension or selection mismatch, 5 insufficient groups under --strict.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmark, metric
from .errors import (
    CorruptFile,
    DimensionMismatch,
    ParseError,
    RRError,
    SelectionMismatch,
    UnsupportedFormat,
)
from .imageio import load_image
from .pyramid import DEFAULT_SELECTION, SubbandKey, validate_selection

EXIT_IO = 2
EXIT_PIPELINE = 3
EXIT_MISMATCH = 4
EXIT_STRICT = 5

log = logging.getLogger("rrmggd")


def _parse_key(text):
    try:
        s, o = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected scale,orientation, got {text!r}") from None
    return SubbandKey(s, o)


def _selection(keys):
    if keys is None:
        return DEFAULT_SELECTION
    return validate_selection(keys)


def _kv(key, value):
    print(f"{key}={value}")


def cmd_extract(args):
    img = load_image(args.image)
    feats = metric.extract_features(img, _selection(args.selection))
    metric.write_features(feats, args.out)
    _kv("size", f"{feats.image_width}x{feats.image_height}")
    _kv("scalars", feats.scalars.size)
    _kv("subbands", " ".join(f"({s},{o})" for s, o in feats.selection))
    return 0


def cmd_score(args):
    feats = metric.read_features(args.features)
    score = metric.score_image(feats, load_image(args.image))
    for i, d in enumerate(score.distances, start=1):
        _kv(f"D{i}", f"{d:.9f}")
    _kv("D", f"{score.D:.9f}")
    _kv("Q", f"{score.Q:.9f}")
    return 0


def cmd_evaluate(args):
    rows = benchmark.read_manifest(args.manifest)
    report = benchmark.evaluate_dataset(
        rows,
        cache_dir=args.cache_dir,
        metric=args.metric,
        fit_scope=args.fit_scope,
        selection=_selection(args.selection),
        workers=args.workers,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metric.write_atomic(out / "report.csv", report.report_csv())
    metric.write_atomic(out / "scatter.csv", report.scatter_csv())
    for path, message in report.errors:
        print(f"warning: skipped {path}: {message}", file=sys.stderr)
    for name in report.insufficient:
        print(f"warning: group {name!r} has too few valid rows", file=sys.stderr)
    _kv("rows", len(report.scatter))
    _kv("skipped", len(report.errors))
    _kv("srcc", benchmark._fmt(report.overall.srcc))
    _kv("plcc", benchmark._fmt(report.overall.plcc))
    if args.strict and report.insufficient:
        return EXIT_STRICT
    return 0


def cmd_tid2008(args):
    rows = benchmark.tid2008_manifest(args.root, args.convert_dir)
    benchmark.write_manifest(rows, args.out)
    _kv("rows", len(rows))
    return 0


# --- diagnostics (hidden) ----------------------------------------------------------


def cmd_diag_tiling(args):
    from .pyramid import build_filter_bank

    bank = build_filter_bank(args.width, args.height)
    _kv("tiling_error", repr(bank.tiling_error()))
    return 0


def cmd_diag_mc_kld(args):
    from .divergence import kld_bivariate_ggd, mggd_pair_monte_carlo
    from .mggd import MggdParams

    rng = np.random.default_rng(args.seed)
    a, b = rng.standard_normal((2, 2, 2))
    p1 = MggdParams(a @ a.T + 0.5 * np.eye(2), args.beta1)
    p2 = MggdParams(b @ b.T + 0.5 * np.eye(2), args.beta2)
    mc = mggd_pair_monte_carlo(p1, p2, args.n, args.seed)
    _kv("closed_form", repr(kld_bivariate_ggd(p1, p2)))
    _kv("monte_carlo", repr(mc.estimate))
    _kv("stderr", repr(mc.stderr))
    return 0


def cmd_diag_sampler(args):
    from scipy import stats

    from .mggd import MggdParams, mahalanobis, sample_mggd

    p = MggdParams(np.eye(args.dim), args.beta)
    x = sample_mggd(p, args.n, args.seed)
    g = mahalanobis(x, p.sigma) ** args.beta
    law = stats.gamma(args.dim / (2 * args.beta), scale=2.0)
    edges = law.ppf(np.linspace(0, 1, args.bins + 1))
    counts = np.histogram(g, edges)[0]
    chi2, pvalue = stats.chisquare(counts)
    print("bin,count")
    for i, c in enumerate(counts):
        print(f"{i},{c}")
    _kv("chi2", repr(float(chi2)))
    _kv("pvalue", repr(float(pvalue)))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="rrmggd", description="Reduced-reference colour image quality.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("extract", help="compute reference features")
    p.add_argument("image")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--selection", nargs=6, type=_parse_key, metavar="S,O")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("score", help="score a distorted image against reference features")
    p.add_argument("features")
    p.add_argument("image")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="correlate scores with MOS over a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--metric", choices=("rr", "psnr"), default="rr")
    p.add_argument("--fit-scope", choices=("group", "global"), default="group")
    p.add_argument("--selection", nargs=6, type=_parse_key, metavar="S,O")
    p.add_argument("--cache-dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tid2008-manifest", help="write a manifest for a local TID2008 copy")
    p.add_argument("root")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--convert-dir", help="convert BMP images to PPM here")
    p.set_defaults(func=cmd_tid2008)

    diag = sub.add_parser("diag", help=argparse.SUPPRESS)
    dsub = diag.add_subparsers(dest="diag_command", required=True)
    d = dsub.add_parser("tiling")
    d.add_argument("width", type=int)
    d.add_argument("height", type=int)
    d.set_defaults(func=cmd_diag_tiling)
    d = dsub.add_parser("mc-kld")
    d.add_argument("--beta1", type=float, default=0.8)
    d.add_argument("--beta2", type=float, default=1.2)
    d.add_argument("--n", type=int, default=10**6)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_diag_mc_kld)
    d = dsub.add_parser("sampler")
    d.add_argument("--beta", type=float, default=1.0)
    d.add_argument("--dim", type=int, default=3)
    d.add_argument("--n", type=int, default=10**5)
    d.add_argument("--bins", type=int, default=50)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_diag_sampler)

    # hide the diag entry from the command list
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "diag"]
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DimensionMismatch, SelectionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, CorruptFile, UnsupportedFormat, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RRError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
