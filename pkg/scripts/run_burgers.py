"""Traveling-front run of the 2D viscous Burgers' equation.

Desk-scale defaults finish in seconds.  --full switches to the large grid
(n = 4096, K = 0.001, 2000 steps to t = 1), which runs for hours on one
core; any halr flag given after --full overrides the preset.
"""

import sys

from halr.cli import main

DESK = ["--n", "256", "--coefficient", "0.01", "--dt", "5e-4", "--t-max", "0.1", "--n-min", "64"]
FULL = ["--n", "4096", "--coefficient", "0.001", "--dt", "5e-4", "--t-max", "1.0", "--error-every", "0"]

if __name__ == "__main__":
    args = sys.argv[1:]
    preset = FULL if "--full" in args else DESK
    extra = [a for a in args if a != "--full"]
    sys.exit(main(["burgers", *preset, *extra]))
