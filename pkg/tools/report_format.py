"""
Centralized output formats for experiment tables.

Every experiment writes header-rowed comma-separated text. Floats are rendered
with 17 significant digits so tables round-trip losslessly; nothing time- or
host-dependent is ever written.
"""

import csv
import io
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union


class TableFormats:
    """
    Registry of column lists and one-line captions per experiment table.
    """

    COLUMNS = {
        "score-eval": ["density", "rule", "x", "score", "propriety_guaranteed"],
        "divergence-table": ["p", "q", "kernel", "route", "value", "error"],
        "sure-experiment": [
            "estimator", "d", "theta", "n", "seed",
            "sure_mean", "sure_stderr", "risk_mean", "risk_stderr",
            "mean_difference", "difference_stderr",
            "d_hs", "d_hs_error", "d_hs_engine", "approximate", "passed",
        ],
        "bandwidth": ["bandwidth", "cv_risk", "reference_risk", "reference_error", "selected"],
        "replication": [
            "rule", "n", "bandwidth", "replications",
            "cv_mean", "cv_stderr", "reference_mean", "reference_stderr",
            "mean_difference", "difference_stderr", "quadrature_error", "passed",
        ],
        "phi-path": ["kernel", "path", "t", "phi", "phi_error", "second_difference", "tolerance"],
        "check-suite": ["check", "passed", "worst", "tolerance", "detail"],
    }

    CAPTIONS = {
        "score-eval": "Scores S(p, x) at the requested points",
        "divergence-table": "Divergences d_S(p, q) by route, integrated against q",
        "sure-experiment": "Paired Monte Carlo check of E SURE = quadratic risk",
        "bandwidth": "Leave-one-out cross-validated risk per bandwidth",
        "replication": "Replication mean of the cross-validated risk vs. the leave-one-out reference",
        "phi-path": "Phi along the mixture path with divided second differences",
        "check-suite": "Identity and property checks",
    }

    @classmethod
    def get_columns(cls, table: str) -> List[str]:
        if table not in cls.COLUMNS:
            raise KeyError(f"unknown table '{table}'; known tables: {sorted(cls.COLUMNS)}")
        return list(cls.COLUMNS[table])

    @classmethod
    def get_caption(cls, table: str) -> str:
        return cls.CAPTIONS.get(table, "")

    @staticmethod
    def format_value(value) -> str:
        """Cell rendering: floats with 17 significant digits, bools as true/false."""
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            if math.isnan(value):
                return "nan"
            return f"{value:.17g}"
        if hasattr(value, "dtype"):
            return TableFormats.format_value(value.item())
        if isinstance(value, (list, tuple)):
            return " ".join(TableFormats.format_value(v) for v in value)
        return str(value)

    @classmethod
    def to_csv(cls, rows: Iterable[Mapping], table: str) -> str:
        columns = cls.get_columns(table)
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([cls.format_value(row.get(column)) for column in columns])
        return buffer.getvalue()

    @classmethod
    def write_csv(cls, rows: Iterable[Mapping], table: str, path: Union[str, Path]) -> Path:
        path = Path(path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(cls.to_csv(rows, table), encoding="utf-8")
        return path

    @classmethod
    def to_markdown(cls, rows: Sequence[Mapping], table: str, limit: Optional[int] = 20) -> str:
        """Short markdown table with the caption, for the terminal."""
        columns = cls.get_columns(table)
        lines = [f"**{cls.get_caption(table)}**", ""] if cls.get_caption(table) else []
        lines.append("| " + " | ".join(columns) + " |")
        lines.append("| " + " | ".join("---" for _ in columns) + " |")
        shown = rows if limit is None else rows[:limit]
        for row in shown:
            cells = []
            for column in columns:
                value = row.get(column)
                cells.append(f"{value:.6g}" if isinstance(value, float) else cls.format_value(value))
            lines.append("| " + " | ".join(cells) + " |")
        if limit is not None and len(rows) > limit:
            lines.append(f"... {len(rows) - limit} more rows")
        return "\n".join(lines)

    @classmethod
    def summary_line(cls, table: str, result: Dict) -> str:
        status = "passed" if result.get("passed", True) else "FAILED"
        return f"{table}: {len(result.get('rows', []))} rows, {status}"
