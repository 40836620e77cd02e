"""
Evaluation reports
==================

`MddReport` gathers one model's numbers on one split; `write_report` emits a list
of them as tab-delimited text (for tables) and JSON records (for tooling).
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from ..semconv import ReportColumns, ordered_columns


@dataclass
class MddReport:
    """
    One report row. Delay fields are None when no reference model was given.

    Invariants: f1 = 2PR/(P+R) (0 when P+R = 0); delay_ms = delay_frames x 30.
    """
    precision: float
    recall: float
    f1: float
    per: float
    cper: Optional[float]
    iper: Optional[float]
    mean_delay_frames: Optional[float] = None
    mean_delay_ms: Optional[float] = None
    frames: float = 0.0
    peaks: float = 0.0
    delay_excluded: int = 0
    onset_error_frames: Optional[float] = None
    onset_error_ms: Optional[float] = None
    model: str = ""
    loss: str = ""
    split: str = ""
    utterances: int = 0
    flags: Tuple[str, ...] = field(default_factory=tuple)

    def to_row(self) -> Dict[str, Any]:
        return {
            ReportColumns.MODEL: self.model,
            ReportColumns.LOSS: self.loss,
            ReportColumns.SPLIT: self.split,
            ReportColumns.UTTERANCES: self.utterances,
            ReportColumns.FRAMES: self.frames,
            ReportColumns.PEAKS: self.peaks,
            ReportColumns.DELAY_FRAMES: self.mean_delay_frames,
            ReportColumns.DELAY_MS: self.mean_delay_ms,
            ReportColumns.DELAY_EXCLUDED: self.delay_excluded,
            ReportColumns.ONSET_ERROR_FRAMES: self.onset_error_frames,
            ReportColumns.ONSET_ERROR_MS: self.onset_error_ms,
            ReportColumns.PER: self.per,
            ReportColumns.CPER: self.cper,
            ReportColumns.IPER: self.iper,
            ReportColumns.PRECISION: self.precision,
            ReportColumns.RECALL: self.recall,
            ReportColumns.F1: self.f1,
            ReportColumns.FLAGS: ",".join(self.flags),
        }

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["flags"] = list(self.flags)
        return data


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def report_frame(reports: Sequence[Union[MddReport, Dict[str, Any]]]) -> pd.DataFrame:
    """Rows in table-column order, extra columns after."""
    rows = [r.to_row() if isinstance(r, MddReport) else dict(r) for r in reports]
    extra = []
    for row in rows:
        extra.extend(k for k in row if k not in extra)
    return pd.DataFrame(rows, columns=ordered_columns(extra))


def write_report(reports: Sequence[Union[MddReport, Dict[str, Any]]], path: Union[str, Path],
                 float_format: str = "%.2f") -> List[Path]:
    """
    Write `path` as tab-delimited text and `path` with a .json suffix as records.

    Returns:
        list[Path]: The two files written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = report_frame(reports)
    frame.to_csv(path, sep="\t", index=False, float_format=float_format, na_rep="")
    records = [{k: _json_safe(v) for k, v in row.items()} for row in frame.astype(object).to_dict("records")]
    json_path = path.with_suffix(".json")
    json_path.write_text(json.dumps(records, indent=2, default=float), encoding="utf-8")
    logging.info(f"Phonalign: wrote {len(records)} report rows to {path}")
    return [path, json_path]
