"""Pausing the anneal: where it helps and how it saturates.

Runs a small (s_p, l_p) grid with few trajectories per cell, prints the
fidelity map and fits the saturation law to the best cell of each pause
length. Results are written to out/demo_sweep and reused on a second run.
About 16 cells of 100 trajectories, roughly 5 minutes on one core. With so
few trajectories the fitted parameters are rough; criterion 9 of the
acceptance suite runs the same fit at M = 1000.

    python demos/03_pause_sweep.py [trajectories]
"""

import sys

import numpy as np

from qapause import experiment as ex
from qapause.oracle import FitError, fit_saturation

M = int(sys.argv[1]) if len(sys.argv) > 1 else 100
s_grid = (0.33, 0.5, 0.55, 0.6)
l_grid = (100.0, 116.0, 200.0, 400.0)
cfg = ex.ExperimentConfig(trajectories=M, seed=11, sweep_s=s_grid, sweep_l=l_grid)
cells = ex.run_sweep(cfg, "out/demo_sweep", resume=True, log=print)

print("\nl_p \\ s_p " + " ".join(f"{s:6.2f}" for s in s_grid))
for lp in l_grid:
    print(f"{lp:9.0f} " + " ".join(f"{cells[ex.cell_key(s, lp)][0]:6.3f}" for s in s_grid))

ls, s_opt, fid, sig = ex.peak_fidelities(cells)
print("\nbest pause point per length:", dict(zip(ls.tolist(), s_opt.tolist())))
try:
    fit = fit_saturation(ls, fid, l0=100.0)
    print(fit.text())
    print("residuals", np.round(fid - fit(ls), 4))
except FitError as err:
    print("saturation fit failed:", err)
