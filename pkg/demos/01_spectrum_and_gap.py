"""Where the 20-qubit p-spin anneal gets hard.

Prints the two lowest levels around the avoided crossing, the minimal gap,
the point where the gap drops to the bath temperature, and the weak-coupling
validity report for the default bath.
"""

import numpy as np

from qapause import experiment as ex
from qapause.oracle import gap_equals_temperature
from qapause.spectral import adiabatic_h, locate_min_gap

cfg = ex.ExperimentConfig()
asm = cfg.assembler()

s_delta, delta = locate_min_gap(asm)
s_t = gap_equals_temperature(asm, s_delta, cfg.temperature)
print(f"minimal gap {delta:.4f} x 1e9 rad/s at s = {s_delta:.4f}")
print(f"gap equals T = {cfg.temperature} at s_T = {s_t:.4f}")

print("\n   s      E0         E1        gap")
for s in np.linspace(s_delta - 0.06, s_delta + 0.06, 13):
    e0, e1 = asm.levels(s, 2)
    print(f"{s:.3f}  {e0:9.4f}  {e1:9.4f}  {e1 - e0:7.4f}")

h = adiabatic_h(asm, grid=501)
print(f"\nh = max |<a|dH/ds|b>| = {h:.3g}; adiabatic time scale h/gap^2 = {h / delta**2:.3g} ns")
print(ex.validity_report(cfg))
