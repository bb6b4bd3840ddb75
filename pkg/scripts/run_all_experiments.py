#!/usr/bin/env python3
"""Run every experiment config in this directory and collect the CSVs.

Usage: python scripts/run_all_experiments.py [output_dir]

The full set takes a while at desk scale (the N = 320 steady solve and
the T = 6 initialization study dominate); individual configs can be run
directly with the CLI, e.g.

    stokesproj steady-sweep --config scripts/fig1_linear.cfg --out fig1.csv
"""

import pathlib
import sys
import time

from stokesproj import cli

EXPERIMENTS = [
    ("steady-sweep", "fig1_linear.cfg", "fig1_linear.csv"),
    ("steady-sweep", "fig1_quadratic.cfg", "fig1_quadratic.csv"),
    ("transient-init", "fig2_init.cfg", "fig2_init.csv"),
    ("transient-convergence", "transient_convergence.cfg", "transient_convergence.csv"),
    ("stability-probe", "stability_probe.cfg", "stability_probe.csv"),
]


def main(argv):
    here = pathlib.Path(__file__).parent
    out_dir = pathlib.Path(argv[1]) if len(argv) > 1 else here.parent / "results"
    out_dir.mkdir(parents=True, exist_ok=True)
    for command, config, out_name in EXPERIMENTS:
        out = out_dir / out_name
        print(f"== {command} ({config}) -> {out}")
        t0 = time.time()
        code = cli.main([command, "--config", str(here / config), "--out", str(out)])
        print(f"   exit {code} in {time.time() - t0:.1f}s")
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
