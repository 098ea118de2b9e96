#!/usr/bin/env python3
"""Run the exact verification battery and drop artifacts next to the repo.

Any extra arguments are forwarded to the CLI, so e.g.
`scripts/run_battery.py --threads 1` forces a serial run.
"""

import pathlib
import sys

from spinconc.cli import run

ROOT = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    argv = ["battery",
            "--config", str(ROOT / "configs" / "battery_small.json"),
            "--out", str(ROOT / "artifacts")]
    sys.exit(run(argv + sys.argv[1:]))
