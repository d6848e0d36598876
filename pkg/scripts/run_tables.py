#!/usr/bin/env python3
"""Reproduce all results tables at full scale (100k paths, both intensity headers).

Writes one CSV per table under the output directory.  Expect roughly an
hour of runtime on a laptop; pass --paths to downscale.
"""

import argparse
import time

from ammfees.experiments import catalog_config
from ammfees.runner import run_table

TABLES = ("table1_k2", "table2_k1", "table3_3players_k2", "table4_3players_k1")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/tables")
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--lambdas", type=float, nargs="*", default=None)
    args = parser.parse_args()
    for name in TABLES:
        cfg = catalog_config(name)
        t0 = time.time()
        run_table(cfg, n_paths=args.paths, lambdas=args.lambdas, out_dir=args.out_dir)
        print(f"{name}: done in {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
