#!/usr/bin/env python3
"""Run one of the built-in figure sweeps and write CSV + plot-data files.

Examples:
    python scripts/run_figure.py fig1
    python scripts/run_figure.py fig2 --replicates 10 --out results/fig2 --jobs 2
    python scripts/run_figure.py fig7 --scale-n 0.075   # n = 150
"""

import sys

from optinterp.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if not args or args[0].startswith("-"):
        print(__doc__)
        sys.exit(2)
    figure, rest = args[0], args[1:]
    sys.exit(main(["run", "--figure", figure, *rest]))
