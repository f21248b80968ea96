"""Segmentation metrics reporting models and utilities."""

from datetime import UTC, datetime
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, Field

METRIC_COLUMNS = ["dsc", "asd_mm", "sen", "ppv"]


class CaseMetrics(BaseModel):
    """Metrics of one evaluated case; metric fields are None when evaluation failed."""

    case_id: str
    dsc: float | None = Field(default=None, ge=0.0, le=1.0)
    asd_mm: float | None = Field(default=None, ge=0.0)
    sen: float | None = Field(default=None, ge=0.0, le=1.0)
    ppv: float | None = Field(default=None, ge=0.0, le=1.0)
    error: str | None = Field(default=None, description="Failure message if evaluation failed")


class MetricSummary(BaseModel):
    """Mean and population standard deviation over evaluated cases."""

    mean: float
    std: float
    count: int


class RunMetadata(BaseModel):
    """Where a report came from."""

    topology: str | None = Field(default=None, description="Method name")
    seed: int | None = None
    checkpoint_hash: str | None = Field(default=None, description="SHA-256 of the checkpoint file")
    created_at: datetime = Field(default_factory=lambda: datetime.now(UTC))


class MetricsReport(BaseModel):
    """Per-case rows and aggregates of DSC, ASD, SEN and PPV."""

    rows: list[CaseMetrics] = Field(default_factory=list)
    aggregates: dict[str, MetricSummary] = Field(default_factory=dict)
    metadata: RunMetadata = Field(default_factory=RunMetadata)

    @property
    def failed_cases(self) -> list[str]:
        """Ids of cases whose evaluation failed."""
        return [row.case_id for row in self.rows if row.error is not None]

    def to_frame(self) -> pd.DataFrame:
        """Rows as a DataFrame with columns case_id, metrics and error."""
        return pd.DataFrame(
            [row.model_dump() for row in self.rows],
            columns=["case_id", *METRIC_COLUMNS, "error"],
        )


def summarize_rows(rows: list[CaseMetrics]) -> dict[str, MetricSummary]:
    """Aggregate every metric over the rows that carry a value.

    Args:
        rows: Per-case metrics

    Returns:
        Summary per metric; metrics without any value are omitted
    """
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=["case_id", *METRIC_COLUMNS])
    summaries = {}
    for column in METRIC_COLUMNS:
        values = frame[column].dropna().astype(float)
        if values.empty:
            continue
        summaries[column] = MetricSummary(
            mean=float(values.mean()), std=float(values.std(ddof=0)), count=int(values.size)
        )
    return summaries


def generate_metrics_report(
    rows: list[CaseMetrics], metadata: RunMetadata | None = None
) -> MetricsReport:
    """Build a report with aggregates recomputed from the rows.

    Args:
        rows: Per-case metrics
        metadata: Run metadata

    Returns:
        Complete metrics report
    """
    return MetricsReport(
        rows=rows, aggregates=summarize_rows(rows), metadata=metadata or RunMetadata()
    )


def write_report_csv(report: MetricsReport, path: str | Path) -> Path:
    """Write the per-case rows as CSV.

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(target, index=False)
    return target


def _fmt(summary: MetricSummary | None, digits: int = 3) -> str:
    if summary is None:
        return "N/A"
    return f"{summary.mean:.{digits}f} ± {summary.std:.{digits}f}"


def format_report_as_markdown(report: MetricsReport, title: str = "Segmentation Report") -> str:
    """Format a metrics report as Markdown.

    Args:
        report: Metrics report
        title: Heading

    Returns:
        Markdown formatted report
    """
    meta = report.metadata
    agg = report.aggregates
    md = f"""# {title}

## Run
- **Topology**: {meta.topology or "N/A"}
- **Seed**: {meta.seed if meta.seed is not None else "N/A"}
- **Checkpoint**: {meta.checkpoint_hash[:12] if meta.checkpoint_hash else "N/A"}
- **Created**: {meta.created_at.isoformat()}

## Summary
- **DSC**: {_fmt(agg.get("dsc"))}
- **ASD (mm)**: {_fmt(agg.get("asd_mm"))}
- **SEN**: {_fmt(agg.get("sen"))}
- **PPV**: {_fmt(agg.get("ppv"))}
- **Cases**: {len(report.rows)} ({len(report.failed_cases)} failed)

## Cases
| case | DSC | ASD (mm) | SEN | PPV |
|------|-----|----------|-----|-----|
"""

    def cell(value: float | None) -> str:
        return "N/A" if value is None else f"{value:.4f}"

    for row in report.rows:
        md += f"| {row.case_id} | {cell(row.dsc)} | {cell(row.asd_mm)} | {cell(row.sen)} | {cell(row.ppv)} |\n"

    failed = [row for row in report.rows if row.error]
    if failed:
        md += "\n## Errors\n"
        for row in failed:
            md += f"- **{row.case_id}**: {row.error}\n"

    return md
