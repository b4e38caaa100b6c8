"""Compile every bundled program against the benchmark profile and print the three result tables."""
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from config import DEFAULT_HSL_PATH, PROGRAMS_DIR
from core.compiler import compile
from core.errors import InputError
from core.report import render_table
from utils.logger import setup_logger

logger = setup_logger()


def run_program(path: Path) -> bool:
    """Compile one fixture; True when it is accepted and its report is consistent."""
    logger.info(f"Compiling {path.name}...")
    try:
        report = compile(path, DEFAULT_HSL_PATH)
    except InputError as e:
        logger.error(f"Input error in {path.name}: {e}")
        return False

    print(render_table(report, include_timings=True))
    errors = report.consistency_errors()
    for error in errors:
        logger.error(f"{path.name}: {error}")
    if not report.accepted:
        logger.warning(f"{path.name} rejected: {report.verdict.resource} at '{report.verdict.element}'")
    return report.accepted and not errors


def main():
    """Run all bundled programs."""
    logger.info("=" * 50)
    logger.info(f"Benchmark profile: {DEFAULT_HSL_PATH}")
    logger.info("=" * 50)

    programs = sorted(PROGRAMS_DIR.glob("*.json"))
    if not programs:
        logger.error(f"No programs found in {PROGRAMS_DIR}")
        return False
    results = {path.stem: run_program(path) for path in programs}

    logger.info("=" * 50)
    logger.info("Results:")
    for name, result in results.items():
        status = "PASS" if result else "FAIL"
        logger.info(f"  {name}: {status}")

    all_passed = all(results.values())
    logger.info("=" * 50)
    if all_passed:
        logger.info("All programs mapped!")
    else:
        logger.warning("Some programs failed to map!")
    return all_passed


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
