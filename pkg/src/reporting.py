"""
Reporting Module
Writes and reads experiment rows as CSV or JSON, and aggregates them per setting
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import ReportIOError
from src.harness import REPORT_FIELDS, ReportRow

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")
GROUP_KEYS = ["protocol", "dataset", "estimator", "n_unlabeled", "scope"]

_INT_FIELDS = ("repeat", "fold", "n_labeled", "n_unlabeled")
_FLOAT_FIELDS = ("loss", "error", "ratio", "wall_time_ms")


def rows_to_frame(rows: list[ReportRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=list(REPORT_FIELDS))


def emit_report(rows: list[ReportRow], fmt: str, path: str | Path) -> Path:
    """Write rows to `path`; floats keep 17 significant digits so they round-trip."""
    if not rows:
        raise ValueError("refusing to write an empty report")
    if fmt not in FORMATS:
        raise ValueError(f"Unknown report format '{fmt}'. Choose from: {', '.join(FORMATS)}")

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            rows_to_frame(rows).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        else:
            with open(path, "w", encoding="utf-8") as f:
                json.dump([asdict(row) for row in rows], f, indent=2)
                f.write("\n")
    except OSError as e:
        raise ReportIOError(f"Could not write report to {path}: {e}") from e

    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def read_report(path: str | Path, fmt: str | None = None) -> list[ReportRow]:
    """Parse a report written by emit_report; the format defaults to the file suffix."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in FORMATS:
        raise ValueError(f"Cannot infer report format from '{path.name}'")

    try:
        if fmt == "csv":
            records = pd.read_csv(
                path, dtype={"converged": bool}, keep_default_na=False, float_precision="round_trip"
            ).to_dict(orient="records")
        else:
            with open(path, encoding="utf-8") as f:
                records = json.load(f)
    except OSError as e:
        raise ReportIOError(f"Could not read report {path}: {e}") from e

    return [_to_row(record) for record in records]


def _to_row(record: dict) -> ReportRow:
    values = {name: record[name] for name in REPORT_FIELDS}
    for name in _INT_FIELDS:
        values[name] = int(values[name])
    for name in _FLOAT_FIELDS:
        values[name] = float(values[name])
    values["converged"] = bool(values["converged"])
    for name in ("protocol", "dataset", "estimator", "scope"):
        values[name] = str(values[name])
    return ReportRow(**values)


def aggregate(rows: list[ReportRow]) -> pd.DataFrame:
    """Mean and standard error of loss, error and ratio per setting.

    Standard errors use the sample standard deviation (ddof=1) and are NaN for a
    single repeat.
    """
    df = rows_to_frame(rows)
    grouped = df.groupby(GROUP_KEYS, sort=True)
    summary = grouped.agg(
        n=("loss", "size"),
        loss_mean=("loss", "mean"),
        loss_se=("loss", "sem"),
        error_mean=("error", "mean"),
        error_se=("error", "sem"),
        ratio_mean=("ratio", "mean"),
        ratio_se=("ratio", "sem"),
        ratio_max=("ratio", "max"),
        frac_worse=("ratio", lambda r: float(np.mean(r > 1.0))),
    ).reset_index()
    return summary
