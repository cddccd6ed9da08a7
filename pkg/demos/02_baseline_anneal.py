"""Closed versus open anneal of the 20-qubit instance without a pause.

The isolated system tunnels through the tiny gap with probability of order
1e-2; coupling to the bath relaxes population back into the ground state
after the crossing. The two-level rate model estimates what is left in the
ground state just before the gap.

    python demos/02_baseline_anneal.py [trajectories]
"""

import sys

import numpy as np

from qapause import experiment as ex
from qapause.mcwf import simulate
from qapause.oracle import gap_equals_temperature, two_level_predict
from qapause.spectral import locate_min_gap

M = int(sys.argv[1]) if len(sys.argv) > 1 else 300

for tau in (100.0, 1000.0):
    closed = ex.ExperimentConfig(eta=0.0, tau=tau, samples=2)
    phi = simulate(closed.simulation(), [0]).rho11[0, -1]
    print(f"tau={tau:6.0f} ns  isolated fidelity {phi:.3e}")

cfg = ex.ExperimentConfig(trajectories=M, samples=201)
res = ex.run_anneal(cfg)
print(f"tau=   100 ns  open fidelity {res.fidelity:.4f} +- {res.sigma:.4f}  (M={M}, {res.wall_clock:.0f} s)")
print(f"mean jumps per trajectory {res.jump_counts.mean():.1f}")

asm = cfg.assembler()
s_delta, delta = locate_min_gap(asm)
s_t = gap_equals_temperature(asm, s_delta, cfg.temperature)
for grouping in ("printed", "rate"):
    m = two_level_predict(delta, cfg.temperature, cfg.eta, cfg.tau, 1.0, s_t, s_delta, grouping=grouping)
    print(f"two-level model ({grouping:7s}) rho11(s_delta-) = {m.prediction:.4f}")

i = np.flatnonzero(res.s < s_delta)[-1]
print(f"simulated rho11 at s={res.s[i]:.3f}: {res.rho11[i]:.4f} +- {res.rho11_err[i]:.4f}")
print("\n  s     rho11")
for s, r in zip(res.s[::20], res.rho11[::20]):
    print(f"{s:.2f}  {r:.4f}")
