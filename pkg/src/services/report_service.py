"""
Report service for rendering cost tables, training reports and per-class
evaluation tables as aligned text or delimited text.
"""

import logging
from pathlib import Path
from typing import Sequence, Union

import pandas as pd

from errors import UsageError
from services.cost_service import CostReport
from services.training_service import EvalResult, TrainReport
from utils.format_utils import format_millions, format_percentage

logger = logging.getLogger(__name__)


class ReportService:
    """Service for generating table reports."""

    def __init__(self, delimiter: str = ","):
        """Initialize report service."""
        self.delimiter = delimiter

    def cost_frame(self, reports: Sequence[CostReport], exact: bool = True) -> pd.DataFrame:
        if not reports:
            raise UsageError("Cannot render an empty cost table")

        rows = []
        for report in reports:
            row = {"Table": report.table or "-", "Layer": report.name}
            if exact:
                row["Params"] = report.params
                row["FLOPs"] = report.flops
            row["Parm. (M)"] = format_millions(report.params)
            row["FLOPs (M)"] = format_millions(report.flops)
            rows.append(row)
        return pd.DataFrame(rows)

    def render_table(self, reports: Sequence[CostReport], exact: bool = True) -> str:
        """Aligned text table, one row per report in the given order."""
        frame = self.cost_frame(reports, exact)
        return frame.to_string(index=False, justify="left") + "\n"

    def render_delimited(self, reports: Sequence[CostReport], exact: bool = True) -> str:
        return self.cost_frame(reports, exact).to_csv(index=False, sep=self.delimiter, lineterminator="\n")

    def render_train_report(self, report: TrainReport) -> str:
        frame = report.to_frame()
        text = frame.to_string(index=False, float_format=lambda v: f"{v:.6g}") + "\n"
        if report.final is not None:
            text += (f"final eval accuracy {format_percentage(report.final.overall_accuracy)}%, "
                     f"class mean {format_percentage(report.final.class_mean_accuracy)}%, seed {report.seed}\n")
        return text

    def render_eval_report(self, result: EvalResult, class_names: Sequence[str]) -> str:
        """One row per category, then the class-mean average and the sample-mean overall accuracy."""
        frame = result.per_class_frame(class_names)
        rows = [
            {"Category": row.category, "Samples": row.samples, "Acc. (%)": format_percentage(row.accuracy)}
            for row in frame.itertuples(index=False)
        ]
        rows.append({"Category": "Avg. Acc. (%)", "Samples": sum(result.class_counts),
                     "Acc. (%)": format_percentage(result.class_mean_accuracy)})
        rows.append({"Category": "Overall Acc. (%)", "Samples": sum(result.class_counts),
                     "Acc. (%)": format_percentage(result.overall_accuracy)})
        return pd.DataFrame(rows).to_string(index=False, justify="left") + "\n"

    def save_report(self, text: str, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"Report written to {path}")
        return path
