#!/usr/bin/env python3
"""
Desk Study
==========
Runs the complete desk-scale study (synthetic textures, toy embedder,
full MOP vs. global-window baseline, invariance sweep) and writes its
reports.

Usage:
    python scripts/desk_study.py [out_dir] [seed]
"""

import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

import logging

from dotenv import load_dotenv

from src.utils import MopError, setup_logging

load_dotenv()
setup_logging()
logger = logging.getLogger(__name__)

try:
    from modules.study import DeskStudyConfig, run_desk_study
except ImportError as e:
    logger.error(f"Failed to import modules: {e}")
    sys.exit(1)

DEFAULT_OUT_DIR = PROJECT_ROOT / "reports" / "desk_study"


def main(out_dir: Path = DEFAULT_OUT_DIR, seed: int = 0) -> bool:
    """Main entry point."""
    logger.info("=" * 50)
    logger.info(f"Starting desk study (seed {seed})")
    logger.info("=" * 50)

    try:
        results = run_desk_study(DeskStudyConfig(seed=seed), out_dir=str(out_dir))
    except MopError as e:
        logger.error(f"Desk study failed: {e}")
        return False

    for row in results["accuracy"].itertuples(index=False):
        logger.info(f"  {row.levels:<22} dim {row.dim:>4}  accuracy {row.accuracy:.4f}")
    logger.info(f"Reports written to {out_dir}")
    return True


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_OUT_DIR
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    success = main(out, seed)

    sys.exit(0 if success else 1)
