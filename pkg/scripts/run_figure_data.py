#!/usr/bin/env python3
"""Emit every catalogued figure-data CSV into one directory.

Fee-surface figures use the duopoly surface parameterisation (lam 50);
the volume-dependent figures share one activity scan, so the scan is run
once and reused.
"""

import argparse
import time

from ammfees.experiments import catalog_config
from ammfees.runner import run_activity_scan, run_figure_data

SURFACE_FIGURES = ("fees-vs-inventory", "fees-3d", "fees-vs-time", "fees-vs-oracle")
SCAN_FIGURES = ("bid-ask-vs-volume", "slippage-vs-volume", "venue-revenue",
                "revenue-per-player")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/figures")
    parser.add_argument("--paths", type=int, default=None,
                        help="paths per scan point (default: config value)")
    args = parser.parse_args()

    surface_cfg = catalog_config("fee_surfaces")
    for fid in SURFACE_FIGURES:
        t0 = time.time()
        for path in run_figure_data(fid, surface_cfg, args.out_dir):
            print(f"{fid}: wrote {path} ({time.time() - t0:.0f}s)")

    scan_cfg = catalog_config("activity_scan")
    t0 = time.time()
    rows = run_activity_scan(scan_cfg, n_paths=args.paths)
    print(f"activity scan done in {time.time() - t0:.0f}s")
    for fid in SCAN_FIGURES:
        for path in run_figure_data(fid, scan_cfg, args.out_dir, scan_rows=rows):
            print(f"{fid}: wrote {path}")


if __name__ == "__main__":
    main()
