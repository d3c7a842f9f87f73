"""Command line front end: run experiments, fit rate laws, design codebooks,
and push raw sample streams through the wire codec."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import load_config, load_family
from .errors import UqidError
from .harness import (
    check_invariants,
    emit_outputs,
    fit_rate_exponent,
    load_records,
    run_experiment,
)
from .sources import SourceModel, validate_family
from .two_stage import TwoStageCode, decode_stream, encode_stream, read_stream, write_stream
from .utils import fmt_float
from .vq import DistortionSpec, LloydBudget, lloyd_design, write_codebook


def _build_code(config, n: int) -> TwoStageCode:
    spec = DistortionSpec.for_support(config.family.support, config.p)
    return TwoStageCode.build(
        config.family,
        n,
        config.rate,
        spec,
        seed=config.seed,
        pair_cap=config.estimator.pair_cap,
        subsample_seed=config.estimator.subsample_seed,
        min_axis_step=config.estimator.min_axis_step,
        bank_kind=config.bank_kind,
    )


def _cmd_run(args) -> int:
    config = load_config(args.config)
    records = run_experiment(config)
    fits = {}
    for metric in ("dv", "red"):
        try:
            fits[metric] = fit_rate_exponent(records, metric, seed=config.seed)
        except UqidError:
            pass  # not enough data for a fit; the CSV still goes out
    emit_outputs(records, fits, config.output)
    problems = check_invariants(records, config)
    print(f"wrote {config.output.csv_path()} ({len(records)} trials)")
    print(f"wrote {config.output.plotdata_path()}")
    print(f"wrote {config.output.summary_path()}")
    for p in problems:
        print(f"INVARIANT VIOLATION: {p}", file=sys.stderr)
    return 1 if problems else 0


def _cmd_fit(args) -> int:
    records = load_records(args.csv)
    fit = fit_rate_exponent(records, args.metric, resamples=args.resamples, seed=args.seed)
    print(
        f"metric={args.metric} slope={fit.slope:.6f} "
        f"ci90=({fit.ci_low:.6f}, {fit.ci_high:.6f}) intercept={fit.intercept:.6f} "
        f"r_squared={fit.r_squared:.6f} n_points={fit.n_points}"
    )
    return 0


def _cmd_design(args) -> int:
    family = load_family(args.family)
    validate_family(family)
    theta = [float(t) for t in args.theta.split(",")]
    model = SourceModel(family, theta)
    spec = DistortionSpec.for_support(family.support, args.p)
    budget = LloydBudget(training_blocks=args.training_blocks) if args.training_blocks else None
    cb = lloyd_design(model, args.n, args.rate, spec, seed=args.seed, budget=budget)
    write_codebook(args.out, cb, spec)
    print(
        f"wrote {args.out}: n={cb.n} codewords={cb.codeword_count} "
        f"rate_bits={cb.rate_bits} iterations={cb.provenance.iterations}"
    )
    return 0


def _cmd_codec(args) -> int:
    config = load_config(args.config)
    n = args.n or config.n_values[0]
    code = _build_code(config, n)
    if args.codec_op == "encode":
        samples = np.fromfile(args.input, dtype="<f8")
        if samples.size == 0 or samples.size % n:
            raise UqidError(
                f"input holds {samples.size} float64 samples, not a positive multiple of n={n}"
            )
        blocks = samples.reshape(-1, n)
        encoded = encode_stream(code, blocks)
        write_stream(args.output, code, encoded)
        print(f"wrote {args.output}: {len(encoded)} blocks, n={n}, "
              f"rate={fmt_float((code.bank.rate_bits + code.grid.header_bits) / n)} bits/letter")
        return 0
    encoded = read_stream(args.input, code)
    decoded = decode_stream(code, encoded)
    np.stack([d.reproduction for d in decoded]).astype("<f8").tofile(args.output)
    if args.theta_out:
        with open(args.theta_out, "w") as fh:
            fh.write("block,theta_hat\n")
            for t, d in enumerate(decoded, start=1):
                fh.write(f"{t},{'|'.join(fmt_float(x) for x in d.theta_hat)}\n")
        print(f"wrote {args.theta_out}")
    print(f"wrote {args.output}: {len(decoded)} blocks")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqid",
        description="universal lossy coding with joint source identification",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-cell progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a seeded experiment config")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_fit = sub.add_parser("fit", help="fit the rate exponent from a trial CSV")
    p_fit.add_argument("csv")
    p_fit.add_argument("--metric", choices=["dv", "red"], required=True)
    p_fit.add_argument("--resamples", type=int, default=200)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.set_defaults(func=_cmd_fit)

    p_design = sub.add_parser("design", help="Lloyd-design a codebook and write a UQVQ file")
    p_design.add_argument("--family", required=True, help="config file with a [family] table")
    p_design.add_argument("--theta", required=True, help="comma-separated parameter vector")
    p_design.add_argument("--n", type=int, required=True)
    p_design.add_argument("--rate", type=float, required=True)
    p_design.add_argument("--p", type=float, default=2.0)
    p_design.add_argument("--seed", type=int, default=0)
    p_design.add_argument("--training-blocks", type=int, default=None)
    p_design.add_argument("--out", required=True)
    p_design.set_defaults(func=_cmd_design)

    p_codec = sub.add_parser("codec", help="encode/decode raw float64 streams (UQ2S)")
    p_codec.add_argument("codec_op", choices=["encode", "decode"])
    p_codec.add_argument("--config", required=True)
    p_codec.add_argument("--input", required=True)
    p_codec.add_argument("--output", required=True)
    p_codec.add_argument("--n", type=int, default=None, help="block length (default: first n in config)")
    p_codec.add_argument("--theta-out", default=None, help="decode only: CSV of per-block estimates")
    p_codec.set_defaults(func=_cmd_codec)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        return args.func(args)
    except UqidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
