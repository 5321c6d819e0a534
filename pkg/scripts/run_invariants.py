#!/usr/bin/env python3
"""Run the cross-module invariant suite and exit nonzero on any failure.

Examples:
    python scripts/run_invariants.py
    python scripts/run_invariants.py --seed 3 --modules rmt,risk
"""

import sys

from optinterp.cli import main

if __name__ == "__main__":
    sys.exit(main(["invariants", *sys.argv[1:]]))
