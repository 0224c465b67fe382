"""
Report Generator Module
=======================
Writes the result tables of a run (CSV), machine-readable summaries
(JSON) and a plain-text study report into the output directory.

Nothing time-dependent is written, so reruns with the same seed produce
byte-identical files.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from src.data.formats import write_json

logger = logging.getLogger(__name__)

RULE = "=" * 70
THIN_RULE = "-" * 70


class ReportGenerator:
    """
    Writes reports of one run into a single directory.
    """

    def __init__(self, reports_dir: Union[str, Path] = "out"):
        """
        Initialize the report generator.

        Args:
            reports_dir: Directory to save reports (created if missing)
        """
        self.reports_dir = Path(reports_dir)
        os.makedirs(self.reports_dir, exist_ok=True)

    def path(self, filename: str) -> Path:
        return self.reports_dir / filename

    def write_table(self, filename: str, table: pd.DataFrame) -> Path:
        """
        Save a result table as CSV (no index, '\\n' line endings).

        Returns:
            Path to the CSV file
        """
        path = self.path(filename)
        table.to_csv(path, index=False, lineterminator="\n")
        logger.info(f"Wrote {len(table)} rows to {path}")
        return path

    def write_summary(self, filename: str, payload: Dict[str, Any]) -> Path:
        """Save a JSON summary with stable key order."""
        path = self.path(filename)
        write_json(path, payload)
        return path

    @staticmethod
    def render_text(title: str, sections: Sequence[Tuple[str, pd.DataFrame]],
                    notes: Optional[List[str]] = None) -> str:
        """
        Plain-text report: a title block, then one ruled section per table.

        Args:
            title: Report title
            sections: (heading, table) pairs
            notes: Extra lines appended before the footer
        """
        lines = [RULE, title, RULE, ""]
        for heading, table in sections:
            lines.append(heading.upper())
            lines.append(THIN_RULE)
            lines.append(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
            lines.append("")
        for note in notes or []:
            lines.append(note)
        if notes:
            lines.append("")
        lines.extend([RULE, "END OF REPORT", RULE])
        return "\n".join(lines) + "\n"

    def write_text_report(self, filename: str, title: str,
                          sections: Sequence[Tuple[str, pd.DataFrame]],
                          notes: Optional[List[str]] = None) -> Path:
        path = self.path(filename)
        path.write_text(self.render_text(title, sections, notes), encoding="utf-8")
        return path
