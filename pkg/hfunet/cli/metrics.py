"""``metrics``: evaluate segmentations against ground truth."""

import argparse
import sys
from pathlib import Path
from typing import Any

import structlog

from hfunet.cli.command import cli_main
from hfunet.errors import ConfigError, ConfigIssue
from hfunet.models.reports import RunMetadata, format_report_as_markdown, write_report_csv
from hfunet.services.metrics import evaluate_cases
from hfunet.services.volume_io import read_label

VOLUME_SUFFIX = ".hfv"

CasePaths = list[tuple[str, Path, Path]]


def _issue(location: str, message: str) -> ConfigIssue:
    return ConfigIssue(line=None, location=location, message=message)


def _volume_files(directory: Path, location: str) -> dict[str, Path]:
    if not directory.is_dir():
        raise ConfigError([_issue(location, f"{directory} is not a directory")])
    files = {p.stem: p for p in sorted(directory.glob(f"*{VOLUME_SUFFIX}"))}
    if not files:
        raise ConfigError([_issue(location, f"no {VOLUME_SUFFIX} files in {directory}")])
    return files


def pair_directories(gt_dir: Path, pred_dir: Path) -> CasePaths:
    """Pair ground-truth and prediction files by file stem.

    Raises:
        ConfigError: If a directory is missing or empty, or a file has no partner
    """
    gt_files = _volume_files(gt_dir, "--gt-dir")
    pred_files = _volume_files(pred_dir, "--pred-dir")
    issues = [
        _issue("--pred-dir", f"no prediction for ground truth '{gt_files[stem].name}'")
        for stem in gt_files.keys() - pred_files.keys()
    ] + [
        _issue("--gt-dir", f"no ground truth for prediction '{pred_files[stem].name}'")
        for stem in pred_files.keys() - gt_files.keys()
    ]
    if issues:
        raise ConfigError(sorted(issues, key=lambda i: i.message))
    return [(stem, gt_files[stem], pred_files[stem]) for stem in sorted(gt_files)]


def pair_files(gt: list[Path], seg: list[Path], case_ids: list[str] | None) -> CasePaths:
    """Pair explicit file lists in order.

    Raises:
        ConfigError: On differing list lengths
    """
    if len(gt) != len(seg):
        msg = f"expected one segmentation per ground truth, got {len(gt)} and {len(seg)}"
        raise ConfigError([_issue("--seg", msg)])
    ids = case_ids or [p.stem for p in gt]
    if len(ids) != len(gt):
        raise ConfigError([_issue("--case-ids", f"expected {len(gt)} case ids, got {len(ids)}")])
    return list(zip(ids, gt, seg, strict=True))


def _case_paths(args: argparse.Namespace) -> CasePaths:
    uses_dirs = args.gt_dir is not None or args.pred_dir is not None
    uses_files = args.gt is not None or args.seg is not None
    if uses_dirs and uses_files:
        raise ConfigError([_issue("--gt-dir", "use either --gt-dir/--pred-dir or --gt/--seg, not both")])
    if uses_dirs:
        if args.gt_dir is None or args.pred_dir is None:
            raise ConfigError([_issue("--gt-dir", "--gt-dir and --pred-dir are required together")])
        if args.case_ids:
            raise ConfigError([_issue("--case-ids", "case ids come from file names with --gt-dir")])
        return pair_directories(args.gt_dir, args.pred_dir)
    if args.gt is None or args.seg is None:
        raise ConfigError([_issue("--gt-dir", "give --gt-dir and --pred-dir, or --gt and --seg")])
    return pair_files(args.gt, args.seg, args.case_ids)


def evaluate(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Evaluate pairs of label files and write the report."""
    pairs = [(case_id, read_label(gt), read_label(seg)) for case_id, gt, seg in _case_paths(args)]
    spacing = tuple(args.spacing) if args.spacing else None
    report = evaluate_cases(pairs, spacing=spacing, metadata=RunMetadata(topology=args.method))  # type: ignore[arg-type]
    write_report_csv(report, args.out)
    if args.markdown:
        args.markdown.parent.mkdir(parents=True, exist_ok=True)
        args.markdown.write_text(format_report_as_markdown(report), encoding="utf-8")
    log.info("Wrote report", out=str(args.out), failed=report.failed_cases)
    return {
        "out": str(args.out),
        "cases": len(report.rows),
        "failed": report.failed_cases,
        **{name: summary.mean for name, summary in report.aggregates.items()},
    }


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``metrics`` tool."""
    parser = argparse.ArgumentParser(prog="metrics", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="DSC, ASD, SEN and PPV of label pairs")
    p_eval.add_argument("--gt-dir", type=Path, default=None, help="Directory of ground-truth labels")
    p_eval.add_argument(
        "--pred-dir", type=Path, default=None, help="Directory of predictions, paired by file name"
    )
    p_eval.add_argument("--gt", nargs="+", type=Path, default=None, help="Ground-truth label files")
    p_eval.add_argument("--seg", nargs="+", type=Path, default=None, help="Segmentations, same order")
    p_eval.add_argument("--case-ids", nargs="+", default=None, help="Row ids, file stems when unset")
    p_eval.add_argument(
        "--spacing", nargs=3, type=float, default=None, metavar=("SX", "SY", "SZ"),
        help="Override the stored voxel spacing for ASD",
    )
    p_eval.add_argument("--method", default=None, help="Method name recorded in the report")
    p_eval.add_argument("--out", required=True, type=Path, help="CSV report")
    p_eval.add_argument("--markdown", type=Path, default=None, help="Optional Markdown summary")
    p_eval.set_defaults(handler=evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point of the ``metrics`` tool."""
    return cli_main("metrics", build_parser(), argv)


if __name__ == "__main__":
    sys.exit(main())
