"""Variable-coefficient Helmholtz solve on [-1, 1]^2.

Desk-scale default is n = 1024 (about a minute single-core); --full runs
n = 4096.  Flags after --full override the preset.
"""

import sys

from halr.cli import main

DESK = ["--n", "1024", "--tol", "1e-4", "--maxrank", "50"]
FULL = ["--n", "4096", "--tol", "1e-4", "--maxrank", "50"]

if __name__ == "__main__":
    args = sys.argv[1:]
    preset = FULL if "--full" in args else DESK
    extra = [a for a in args if a != "--full"]
    sys.exit(main(["helmholtz", *preset, *extra]))
