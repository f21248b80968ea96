#!/usr/bin/env python3
"""Run the desk-scale phantom benchmark checks (overfit and U-Net vs HF-UNet-6 direction)."""

import argparse
import sys
from pathlib import Path

from hfunet.services.benchmark import (
    TEST_ASD_TARGET_MM,
    TEST_DSC_TARGET,
    TRAIN_DSC_TARGET,
    check_directional,
    check_overfit,
)


def run_overfit(out: Path, cache: Path | None) -> bool:
    """Train HF-UNet-6 on 8 phantoms and print train/held-out metrics."""
    print("Overfit check: HF-UNet-6, alpha 0.2, base width 8, crop 64")
    result = check_overfit(out, cache)
    train_dsc = result.train.aggregates["dsc"].mean
    test = result.test.aggregates
    print(f"  train DSC {train_dsc:.3f} (target >= {TRAIN_DSC_TARGET})")
    print(f"  test DSC  {test['dsc'].mean:.3f} (target >= {TEST_DSC_TARGET})")
    print(f"  test ASD  {test['asd_mm'].mean:.3f} mm (target <= {TEST_ASD_TARGET_MM})")
    print("  PASS" if result.passed else "  FAIL")
    return result.passed


def run_directional(out: Path, cache: Path | None, workers: int | None) -> bool:
    """Compare mean test ASD of U-Net and HF-UNet-6 over three seeds."""
    print("Directional check: U-Net vs HF-UNet-6 over 3 seeds")
    result = check_directional(out, cache, max_workers=workers)
    print(f"  U-Net     ASD {result.unet_asd_mm:.3f} mm")
    print(f"  HF-UNet-6 ASD {result.hf_asd_mm:.3f} mm")
    if result.failed_cells:
        print(f"  failed cells: {', '.join(result.failed_cells)}")
    print("  PASS" if result.passed else "  FAIL")
    return result.passed


def main() -> int:
    """Run the selected checks; exit 1 if any fails."""
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", choices=["overfit", "directional", "all"], default="all")
    parser.add_argument("--out", type=Path, default=Path("runs/benchmark"))
    parser.add_argument("--cache-dir", type=Path, default=None)
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    passed = True
    if args.check in ("overfit", "all"):
        passed &= run_overfit(args.out, args.cache_dir)
    if args.check in ("directional", "all"):
        passed &= run_directional(args.out, args.cache_dir, args.workers)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
