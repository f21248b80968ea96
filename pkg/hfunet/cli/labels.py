"""``labels``: build contour-sensitive heatmap targets from label volumes."""

import argparse
import sys
from pathlib import Path
from typing import Any

import structlog

from hfunet.cli.command import cli_main
from hfunet.models.contours import DEFAULT_SIGMA
from hfunet.services.contour_labels import heatmap_stack
from hfunet.services.volume_io import read_label, write_volume


def heatmap(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Write the per-slice contour heatmap stack of a label as an image volume."""
    gt = read_label(args.input)
    stack = heatmap_stack(gt, args.sigma, args.truncation)
    write_volume(args.out, stack.to_volume())
    contour_slices = int((stack.data.reshape(-1, stack.dims[2]).max(axis=0) > 0).sum())
    log.info("Wrote heatmap", out=str(args.out), sigma=stack.sigma, truncation=stack.truncation)
    return {
        "out": str(args.out),
        "dims": stack.dims,
        "contour_slices": contour_slices,
        "max": float(stack.data.max()),
    }


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``labels`` tool."""
    parser = argparse.ArgumentParser(prog="labels", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_heatmap = sub.add_parser("heatmap", help="Contour heatmap stack of a label volume")
    p_heatmap.add_argument("--in", dest="input", required=True, type=Path, help="Label volume")
    p_heatmap.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Gaussian width in pixels")
    p_heatmap.add_argument(
        "--truncation", type=float, default=None, help="Support radius in pixels, sigma when unset"
    )
    p_heatmap.add_argument("--out", required=True, type=Path, help="Heatmap volume to write")
    p_heatmap.set_defaults(handler=heatmap)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point of the ``labels`` tool."""
    return cli_main("labels", build_parser(), argv)


if __name__ == "__main__":
    sys.exit(main())
