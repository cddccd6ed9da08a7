"""Trajectories against the dense density-matrix integrator (n = 4).

Late in the anneal the two agree within a fraction of the Monte Carlo error.
Early on the ground-state loss is carried by thermal excitations so rare that
a 5000-trajectory ensemble usually contains none of them: the sample standard
error then collapses and the z-score explodes even though the estimator is
unbiased. A larger ensemble shows the mean converging onto the oracle.

    python demos/04_oracle_rare_events.py [large_M]
"""

import sys
from pathlib import Path

import numpy as np

from qapause import experiment as ex
from qapause.mcwf import simulate
from qapause.oracle import dense_lindblad_integrate

big = int(sys.argv[1]) if len(sys.argv) > 1 else 200000
cfg = ex.load_config(Path(__file__).resolve().parents[1] / "configs" / "oracle_n4.toml")

rows, _ = ex.oracle_compare(cfg)
print("   s    oracle       M=5000 mean   sigma      z")
for s, m, e, o, d, z in rows:
    print(f"{s:.2f}  {o:.8f}  {m:.8f}  {e:.1e}  {z:7.2f}")

sim = cfg.replace(samples=21).simulation()
batch = simulate(sim, np.arange(big), 25000)
mean, sigma = ex.mc_average(batch.rho11)
ref = dense_lindblad_integrate(sim.assembler, sim.protocol, sim.bath, sim.lamb_table(), batch.t)
print(f"\nwith M={big} (sigma floored at 1e-6, as in oracle_compare):")
print("   s    |diff|     sigma      z")
for s, d, e in zip(batch.s[1:], np.abs(mean - ref.rho11)[1:], sigma[1:]):
    print(f"{s:.2f}  {d:.2e}  {e:.2e}  {d / max(e, 1e-6):6.2f}")
