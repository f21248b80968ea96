"""``phantom``: generate synthetic phantoms as volume files."""

import argparse
import sys
from pathlib import Path
from typing import Any

import structlog

from hfunet.cli.command import cli_main
from hfunet.models.phantom import PhantomCohortSpec, PhantomSpec
from hfunet.services.config_loader import read_model_file, write_config
from hfunet.services.phantom_data import (
    DEFAULT_BODY_THRESHOLD,
    cohort_specs,
    generate_phantom,
    preprocess_case,
)
from hfunet.services.volume_io import write_volume


def _write_case(
    out: Path, prefix: str, spec: PhantomSpec, args: argparse.Namespace
) -> dict[str, Any]:
    image, label = generate_phantom(spec)
    if args.preprocess:
        case = preprocess_case(image, label, tuple(args.target_spacing), args.body_threshold)
        image, label = case.image, case.label
    write_volume(out / f"{prefix}image.hfv", image)
    write_volume(out / f"{prefix}label.hfv", label)
    return {"dims": image.dims, "organ_voxels": label.voxel_count}


def generate(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Generate one phantom from a spec file."""
    spec = read_model_file(args.spec, PhantomSpec)
    out = Path(args.out)
    summary = _write_case(out, "", spec, args)
    write_config(spec, out / "spec.toml")
    log.info("Wrote phantom", out=str(out), **summary)
    return {"out": str(out), **summary}


def cohort(args: argparse.Namespace, log: structlog.stdlib.BoundLogger) -> dict[str, Any]:
    """Generate a cohort of perturbed phantoms from a cohort spec file."""
    spec = read_model_file(args.spec, PhantomCohortSpec)
    out = Path(args.out)
    for index, case_spec in enumerate(cohort_specs(spec, args.count, args.seed)):
        summary = _write_case(out, f"{index:03d}_", case_spec, args)
        write_config(case_spec, out / f"{index:03d}_spec.toml")
        log.debug("Wrote cohort case", index=index, **summary)
    return {"out": str(out), "cases": args.count}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``phantom`` tool."""
    parser = argparse.ArgumentParser(prog="phantom", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--spec", required=True, type=Path, help="TOML spec file")
        p.add_argument("--out", required=True, type=Path, help="Output directory")
        p.add_argument(
            "--preprocess",
            action="store_true",
            help="Resample, crop to the body and normalize before writing",
        )
        p.add_argument(
            "--target-spacing",
            nargs=3,
            type=float,
            default=[1.0, 1.0, 1.0],
            metavar=("SX", "SY", "SZ"),
        )
        p.add_argument("--body-threshold", type=float, default=DEFAULT_BODY_THRESHOLD)

    p_generate = sub.add_parser("generate", help="Generate one phantom (image.hfv, label.hfv)")
    add_common(p_generate)
    p_generate.set_defaults(handler=generate)

    p_cohort = sub.add_parser("cohort", help="Generate NNN_image.hfv / NNN_label.hfv cases")
    add_common(p_cohort)
    p_cohort.add_argument("--count", type=int, default=8)
    p_cohort.add_argument("--seed", type=int, default=0)
    p_cohort.set_defaults(handler=cohort)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point of the ``phantom`` tool."""
    return cli_main("phantom", build_parser(), argv)


if __name__ == "__main__":
    sys.exit(main())
