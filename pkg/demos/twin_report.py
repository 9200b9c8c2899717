"""Synthetic-truth runs on the 10 x 10 test grid.

Draws a truth from the prior, observes 30% of the cells with 5% noise and
compares prior and analysis errors in observation space.

    python3 demos/twin_report.py [n_seeds]
"""
import sys

import numpy as np

from palaeovar.config import REGION_PRESETS
from palaeovar.domain import OBS_NAMES, GridSpec
from palaeovar.twin import run_twin


def main(n_seeds=10):
    grid = GridSpec.from_bounds(resolution=2.0, **REGION_PRESETS["twin-10x10"])
    print(f"{'seed':>4}  {'status':>10}  " + "  ".join(f"{n:>12}" for n in OBS_NAMES))
    for seed in range(n_seeds):
        r = run_twin(grid, seed)
        ratio = r.obs_rmse_analysis / r.obs_rmse_prior
        status = "converged" if r.converged else "stalled"
        print(f"{seed:>4}  {status:>10}  " + "  ".join(f"{v:12.3f}" for v in ratio))
    print("\nentries are analysis RMSE / prior RMSE; below 1 means the analysis is closer to the truth")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
