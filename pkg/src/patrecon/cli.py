"""Command-line entry point: ``patrecon {phantom,simulate,reconstruct,sweep,validate}``.

Exit codes: 0 success, 1 validation failure, 2 configuration error, 3 I/O error.
"""
import argparse
import contextlib
import logging
import os
import sys

import scipy.fft
from threadpoolctl import threadpool_limits

from . import experiments, suites
from .exceptions import ConfigError, FormatError, PatReconError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("patrecon")


def _common(parser):
    parser.add_argument("--config", help="YAML experiment config (takes precedence over --preset)")
    parser.add_argument("--preset", default="desk-scale", choices=experiments.PRESETS,
                        help="shipped parameter preset (default: desk-scale)")
    parser.add_argument("--out", default=None, help="output directory (default: config 'output' or ./out)")
    parser.add_argument("--seed", type=int, default=None, help="override the noise seed list with one seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for BLAS and FFT")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="patrecon",
        description="Photoacoustic filtered backprojection from finite-time wave traces.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="rasterize the configured phantom and write a preview")
    _common(p)
    p = sub.add_parser("simulate", help="simulate Dirichlet, Neumann and mixed traces")
    _common(p)
    p = sub.add_parser("reconstruct", help="run the reconstruction battery on stored traces")
    _common(p)
    p.add_argument("--columns", nargs="+", default=None, choices=list(experiments.COLUMNS),
                   help="subset of reconstructions to run")
    p = sub.add_parser("sweep", help="L2 errors over the end-time list")
    _common(p)
    p.add_argument("--columns", nargs="+", default=None, choices=list(experiments.COLUMNS))
    p = sub.add_parser("validate", help="run the self-check suites and write a JSON report")
    _common(p)
    p.add_argument("--suites", nargs="+", default=None, choices=list(suites.SUITES))
    return parser


@contextlib.contextmanager
def _thread_limit(n):
    if n is None:
        yield
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    with threadpool_limits(limits=n), scipy.fft.set_workers(n):
        yield


def _run(args):
    if args.command == "validate":
        out = args.out or "."
        os.makedirs(out, exist_ok=True)
        report = suites.run_suites(args.suites)
        path = os.path.join(out, "validation_report.json")
        suites.write_report(report, path)
        for r in report["suites"]:
            status = "PASS" if r["passed"] else "FAIL"
            print(f"{status} {r['suite']}: measured {r['measured']:.3e} (tol {r['tolerance']:.1e}) {r['detail']}")
        print(f"report written to {path}")
        return EXIT_OK if report["passed"] else EXIT_VALIDATION

    cfg = experiments.load_config(args.config, args.preset)
    out = args.out or cfg.output or "out"
    if args.command == "phantom":
        for path in experiments.cmd_phantom(cfg, out):
            print(path)
    elif args.command == "simulate":
        paths = experiments.cmd_simulate(cfg, out, args.seed)
        print(f"wrote {len(paths)} trace files to {out}")
    elif args.command == "reconstruct":
        rows = experiments.cmd_reconstruct(cfg, out, args.columns, args.seed)
        print(f"wrote {len(rows)} error rows to {os.path.join(out, 'errors.csv')}")
    elif args.command == "sweep":
        rows = experiments.cmd_sweep(cfg, out, args.columns, args.seed)
        print(f"wrote {len(rows)} rows to {os.path.join(out, 'sweep.csv')}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.threads):
            return _run(args)
    except (ConfigError, FormatError) as exc:
        code = EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PatReconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
