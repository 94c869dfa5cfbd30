"""Phase-separation run of the 2D Allen-Cahn equation from random data.

Desk-scale defaults finish in seconds; --full runs n = 4096 with 500 steps
to t = 50 and is a long single-core job.  Flags after --full override the
preset; --seed changes the initial samples.
"""

import sys

from halr.cli import main

DESK = ["--n", "256", "--coefficient", "5e-5", "--dt", "0.1", "--steps", "50", "--n-min", "64"]
FULL = ["--n", "4096", "--coefficient", "5e-5", "--dt", "0.1", "--steps", "500"]

if __name__ == "__main__":
    args = sys.argv[1:]
    preset = FULL if "--full" in args else DESK
    extra = [a for a in args if a != "--full"]
    sys.exit(main(["allen-cahn", *preset, *extra]))
