"""SVG box plots of per-case metrics."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from hfunet.logging_config import get_logger  # noqa: E402

logger = get_logger(__name__)

# Stable element ids so identical data gives identical files
plt.rcParams["svg.hashsalt"] = "hfunet"

METRIC_LABELS = {"dsc": "DSC", "asd_mm": "ASD (mm)", "sen": "SEN", "ppv": "PPV"}


def write_boxplot(frame: pd.DataFrame, metric: str, by: str, path: str | Path) -> Path:
    """Box plot of one metric grouped by a column.

    Args:
        frame: Per-case rows with ``metric`` and ``by`` columns
        metric: Column to plot
        by: Grouping column, sorted on the x axis
        path: SVG file to write

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    data = frame.dropna(subset=[metric])
    groups = sorted(data[by].unique())
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(groups) + 2), 4.0))
    ax.boxplot([data.loc[data[by] == g, metric].to_numpy() for g in groups])
    ax.set_xticks(range(1, len(groups) + 1), [f"{g:g}" if isinstance(g, float) else str(g) for g in groups])
    ax.set_xlabel(by)
    ax.set_ylabel(METRIC_LABELS.get(metric, metric))
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("Wrote box plot", path=str(target), metric=metric, groups=len(groups))
    return target


def write_alpha_boxplots(frame: pd.DataFrame, out_dir: str | Path) -> list[Path]:
    """DSC and ASD box plots over the alpha grid."""
    out = Path(out_dir)
    return [
        write_boxplot(frame, "dsc", "alpha", out / "alpha_sweep_dsc.svg"),
        write_boxplot(frame, "asd_mm", "alpha", out / "alpha_sweep_asd.svg"),
    ]
