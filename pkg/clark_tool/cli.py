# -*- coding: utf-8 -*-
"""
Command-line entry point.

Subcommands:

    construct   build stages from the base and write the state file
    extend      add stages to an existing state file
    verify      recompute every certificate of a state file from its atoms
    operator    disk-operator report and CSV tables for one stage
    gaps        certified limit gap ||f_j - f_k|| < epsilon
    audit       structural, completeness and basis-constant checks

Exit codes: 0 when everything passes, 1 when a certificate or check fails,
2 on usage, configuration, schema or file errors.
"""
import argparse
import logging
import sys

from .certreal import CertReal
from .config import build_config
from .controller import Controller
from .diskop import METHODS
from .errors import (
    CertificateFailure,
    ClarkToolError,
    ConfigError,
    DomainError,
    IterationCap,
    NeedMoreStages,
    PrecisionExhausted,
    SchemaError,
)
from .report import ConsoleView

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

logger = logging.getLogger(__name__)


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer.") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}.")
    return value


def _positive_real(text):
    try:
        value = CertReal(text)
    except (DomainError, TypeError):
        raise argparse.ArgumentTypeError(f"'{text}' is not a real number.") from None
    if not value.is_positive():
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}.")
    return value


def _add_precision_flags(parser):
    parser.add_argument("--bits", type=_positive_int, help="Starting working precision in bits.")
    parser.add_argument("--max-bits", type=_positive_int, help="Precision ceiling in bits.")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clark-tool",
        description="Certified construction of Clark-model rank-one perturbations of unitaries.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Print every certificate.")
    parser.add_argument(
        "--force-overwrite",
        action="store_true",
        help="Overwrite existing output files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="Build stages and write a state file.")
    p.add_argument("--stages", type=_positive_int, help="Number of stages (>= 1).")
    p.add_argument("--t1", help="Base pole t1 (decimal, fraction or 2^-k).")
    p.add_argument("--mu1", help="Base mass mu1.")
    p.add_argument("--c1", help="Base coupling c1.")
    p.add_argument("--schedule", help="'triangular' or 'custom:1,1,2,...'.")
    p.add_argument("--iteration-cap", type=_positive_int, help="Maximum shrinks per loop.")
    p.add_argument("--config", help="JSON config file.")
    p.add_argument("--tables", action="store_true", help="Also write atoms.csv and zeros.csv.")
    p.add_argument("-o", "--output", help="State file to write.")
    _add_precision_flags(p)

    p = sub.add_parser("extend", help="Add stages to a state file.")
    p.add_argument("state")
    p.add_argument("--stages", type=_positive_int, required=True, help="Total number of stages.")
    p.add_argument("--iteration-cap", type=_positive_int, default=10_000)
    p.add_argument("-o", "--output", help="Write to this file instead of updating the input.")

    p = sub.add_parser("verify", help="Recompute all certificates of a state file.")
    p.add_argument("state")

    p = sub.add_parser("operator", help="Disk-operator report for one stage.")
    p.add_argument("state")
    p.add_argument("--stage", type=_positive_int, required=True)
    p.add_argument("--bits", type=_positive_int, default=512)
    p.add_argument("--method", choices=METHODS, default="closed_form")
    p.add_argument("--out-dir", help="Folder for the report and CSV tables.")

    p = sub.add_parser("gaps", help="Certified limit gap for f_j.")
    p.add_argument("state")
    p.add_argument("--j", type=_positive_int, required=True)
    p.add_argument("--epsilon", type=_positive_real, required=True, help="e.g. 2^-4 or 0.0625.")

    p = sub.add_parser("audit", help="Structural, completeness and A_N checks.")
    p.add_argument("state")
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="Also write the audit as JSON.")
    return parser


def _config_from_args(args):
    # None values leave the config file or the defaults in place.
    overrides = {
        "stages": args.stages,
        "schedule": args.schedule,
        "iteration_cap": args.iteration_cap,
        "output": args.output,
        "precision": {"bits": args.bits, "max_bits": args.max_bits},
        "base": {"t1": args.t1, "mu1": args.mu1, "c1": args.c1},
    }
    return build_config(args.config, overrides)


def _audit_passed(result):
    checks = [result["structural"]["passed"]]
    checks += [c["passed"] for c in result["completeness"]]
    checks += [b["passed"] for b in result["basis_constant"]]
    # Item (iii) is informational only.
    checklist = result.get("checklist")
    if checklist is not None:
        checks += [checklist["i"]["passed"], checklist["ii"]["passed"]]
    return all(checks)


def run_command(args, controller):
    """Dispatches a parsed command; returns the exit code."""
    if args.command == "construct":
        state = controller.construct(_config_from_args(args), tables=args.tables)
        return EXIT_OK if state.all_passed() else EXIT_FAILURE
    if args.command == "extend":
        state = controller.extend(args.state, args.stages, args.iteration_cap, args.output)
        return EXIT_OK if state.all_passed() else EXIT_FAILURE
    if args.command == "verify":
        return EXIT_OK if controller.verify(args.state).passed else EXIT_FAILURE
    if args.command == "operator":
        _, report, _ = controller.operator(
            args.state, args.stage, bits=args.bits, method=args.method, folder=args.out_dir
        )
        return EXIT_OK if report.passed else EXIT_FAILURE
    if args.command == "gaps":
        return EXIT_OK if controller.gaps(args.state, args.j, args.epsilon).passed else EXIT_FAILURE
    if args.command == "audit":
        result = controller.audit(args.state, args.samples, args.seed, args.output)
        return EXIT_OK if _audit_passed(result) else EXIT_FAILURE
    raise ConfigError(f"Unknown command '{args.command}'.")


def main(argv=None, view=None):
    """
    Parses `argv`, runs the command and maps errors to exit codes.

    Returns:
        int: 0, 1 or 2.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    # Tests inject their own view to capture the output.
    view = view or ConsoleView(verbose=args.verbose)
    controller = Controller(view=view, force_overwrite=args.force_overwrite)
    try:
        return run_command(args, controller)
    # A certificate that could not be established is a failed run, not a usage error.
    except (CertificateFailure, IterationCap, NeedMoreStages, PrecisionExhausted) as e:
        view.show_error(str(e))
        return EXIT_FAILURE
    except (ConfigError, SchemaError, DomainError) as e:
        view.show_error(str(e))
        return EXIT_USAGE
    # Missing or existing files, and stage numbers the state does not hold.
    except (OSError, IndexError) as e:
        view.show_error(str(e))
        return EXIT_USAGE
    except ClarkToolError as e:
        view.show_error(str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
