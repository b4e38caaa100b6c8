"""Entry point for the V1Model RMT backend.

Exit codes: 0 accepted, 2 mapping rejected, 1 input or usage error.
"""
import argparse
import sys
from pathlib import Path

from config import DEFAULT_HSL_PATH, REPORT_FORMAT, REPORT_INCLUDE_TIMINGS
from core.compiler import CompileOptions, compile
from core.errors import InputError
from core.report import REPORT_FORMATS, render_report
from core.tdg_mapper import STATEFUL_POLICIES, ActionMode, LatencyCosts, parse_table_action_modes
from utils.logger import setup_logger

logger = setup_logger()

EXIT_ACCEPTED = 0
EXIT_INPUT_ERROR = 1
EXIT_REJECTED = 2


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _action_mode(text: str) -> ActionMode:
    try:
        return ActionMode.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _latency_costs(text: str) -> LatencyCosts:
    try:
        return LatencyCosts.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _table_action_mode(text: str) -> dict[str, ActionMode]:
    try:
        modes = parse_table_action_modes(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e
    if not modes:
        raise argparse.ArgumentTypeError("expected TABLE=MODE")
    return modes


def build_arg_parser() -> argparse.ArgumentParser:
    defaults = CompileOptions()
    parser = _ArgumentParser(
        prog="rmt-backend",
        description="Map a P4-16 program (frontend JSON IR) onto a V1Model RMT switch.",
    )
    parser.add_argument("--ir", required=True, type=Path, help="frontend JSON IR of the program")
    parser.add_argument("--hw", type=Path, default=DEFAULT_HSL_PATH,
                        help="hardware specification (default: bundled benchmark profile)")
    parser.add_argument("--packing-factor", type=_positive_int, default=None,
                        help="SRAM word-packing factor p_f (default: the hardware spec's value)")
    parser.add_argument("--action-mode", type=_action_mode, default=defaults.action_mode,
                        help="'per-entry' or 'fixed:k' action entries per table")
    parser.add_argument("--table-action-mode", type=_table_action_mode, action="append", default=[],
                        metavar="TABLE=MODE", help="override the action mode of one table (repeatable)")
    parser.add_argument("--latency-costs", type=_latency_costs, default=defaults.latency_costs,
                        help="stage boundary costs as match,action,other,base cycles")
    parser.add_argument("--stateful-policy", choices=STATEFUL_POLICIES, default=defaults.stateful_policy)
    parser.add_argument("--no-repack", dest="repack", action="store_false", default=defaults.phv_repack,
                        help="keep the greedy PHV container choice without the waste-reduction pass")
    parser.add_argument("--format", choices=REPORT_FORMATS, default=REPORT_FORMAT)
    parser.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
    parser.add_argument("--timings", action="store_true", default=REPORT_INCLUDE_TIMINGS,
                        help="include per-phase elapsed milliseconds in the report")
    return parser


def main(argv=None) -> int:
    """Compile one program and emit its report."""
    try:
        args = build_arg_parser().parse_args(argv)
    except UsageError as e:
        print(f"rmt-backend: error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    defaults = CompileOptions()
    table_modes = dict(defaults.table_action_modes)
    for override in args.table_action_mode:
        table_modes.update(override)
    options = CompileOptions(
        packing_factor=args.packing_factor or defaults.packing_factor,
        action_mode=args.action_mode,
        latency_costs=args.latency_costs,
        stateful_policy=args.stateful_policy,
        table_action_modes=table_modes,
        phv_repack=args.repack,
    )
    try:
        report = compile(args.ir, args.hw, options)
    except InputError as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT_ERROR

    text = render_report(report, args.format, include_timings=args.timings)
    if args.out is None:
        sys.stdout.write(text)
    else:
        try:
            args.out.write_text(text, encoding="utf-8")
        except OSError as e:
            logger.error(f"Cannot write report to '{args.out}': {e}")
            return EXIT_INPUT_ERROR
        logger.info(f"Report written to {args.out}")
    return EXIT_ACCEPTED if report.accepted else EXIT_REJECTED


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        sys.exit(EXIT_INPUT_ERROR)
    except Exception as e:
        logger.error(f"Critical error: {e}", exc_info=True)
        sys.exit(EXIT_INPUT_ERROR)
