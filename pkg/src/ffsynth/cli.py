"""Command-line interface: ``synth run``, ``synth verify`` and ``synth spectrum``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline, sphere
from .errors import ArgumentError, ConfigError, SynthError


def _cmd_run(args):
    try:
        run = pipeline.load_config(args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    print("effective configuration:")
    for key, val in run.effective.items():
        print(f"  {key} = {val}")
    try:
        art = pipeline.synthesize(run)
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    out = Path(args.out) if args.out else Path(args.config).with_name(Path(args.config).stem + "_run")
    pipeline.write_artifacts(art, run, out, plots=args.plots)
    print(art.report.to_text(), end="")
    print(f"artifacts written to {out}")
    return pipeline.EXIT_OK if art.report.passed else pipeline.EXIT_RESIDUAL


def _cmd_verify(args):
    try:
        res = pipeline.verify_potential(args.q_file, args.f_file, args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: cannot read {exc.filename}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    print(f"far-field residual {res.residual:.6e} (epsilon {res.epsilon:.6e})")
    print(f"solver: {res.iterations} iterations, relative residual {res.solver_residual:.3e}")
    print("PASS" if res.passed else "FAIL")
    return pipeline.EXIT_OK if res.passed else pipeline.EXIT_RESIDUAL


def _cmd_spectrum(args):
    try:
        quad, samples = sphere.parse_samples(Path(args.samples).read_text())
        spec = sphere.analyze(samples, quad, args.L)
    except OSError as exc:
        print(f"error: cannot read {exc.filename}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    text = sphere.format_spectrum(spec)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return pipeline.EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="synth",
        description="Synthesise a potential whose scattering amplitude approximates a target pattern.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="synthesise q from a config file and verify it")
    p.add_argument("config", help="flat 'key = value' configuration file")
    p.add_argument("--out", help="output directory (default: <config stem>_run next to the config)")
    p.add_argument("--plots", action="store_true", help="also write residual-vs-L and |q| profile tables")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="forward-solve a stored q and compare its far field to f")
    p.add_argument("q_file")
    p.add_argument("f_file", help="spectrum (l,m,re,im) or samples (theta,phi,re,im) file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("spectrum", help="harmonic coefficients of sampled data")
    p.add_argument("samples", help="samples file (theta,phi,re,im)")
    p.add_argument("-L", type=int, required=True, help="maximum degree")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    p.set_defaults(func=_cmd_spectrum)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
