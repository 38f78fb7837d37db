import json
import logging
import os
import tempfile
from typing import Dict, Optional

import pandas as pd

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"


class ArtifactStore:
    """Output directory for one analysis run.

    Every file is written to a temporary sibling first and renamed into
    place, so a reader never sees a half-written report.
    """

    def __init__(self, path: str):
        self.path = path

    def _ensure_dir(self):
        try:
            os.makedirs(self.path, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create output directory {self.path}: {e}") from e

    def _atomic_write(self, name: str, text: str) -> str:
        self._ensure_dir()
        target = os.path.join(self.path, name)
        handle, temp_path = tempfile.mkstemp(dir=self.path, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(temp_path, target)
        except BaseException:
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise
        logger.debug("wrote %s", target)
        return target

    def save_report(self, report: Dict, name: str = REPORT_NAME) -> str:
        """Save the report as sorted, indented JSON."""
        text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
        return self._atomic_write(name, text)

    def write_table(self, name: str, frame: pd.DataFrame, columns: Optional[list] = None) -> str:
        """Tab-separated table with a header row, columns in the given order."""
        if columns is not None:
            frame = frame[columns]
        text = frame.to_csv(sep="\t", index=False, float_format="%.10g", na_rep="nan", lineterminator="\n")
        return self._atomic_write(name, text)
