"""Regenerate src/qapause/data/dw2000q_like.csv.

A(s) and B(s) are shape-preserving cubic interpolants through eleven
hand-placed knots at s = 0, 0.1, ..., 1, sampled on 1001 points. The knots
were adjusted until the 20-qubit p-spin instance had its minimal gap near
s = 0.334 with size about 0.14, and closed-system fidelities close to the
reference values at 100 and 1000 ns. The curves only resemble the device
schedule; they are not vendor data.
"""

from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from qapause.spin_model import AnnealSchedule, schedule_to_csv

A_KNOTS = [35.0, 23.5, 14.3, 8.4, 4.8, 2.6, 1.2, 0.5, 0.18, 0.06, 0.0]
B_KNOTS = [0.2, 1.25, 3.0, 5.4, 9.0, 14.0, 21.0, 29.0, 38.0, 47.0, 56.0]
OUT = Path(__file__).resolve().parents[1] / "src" / "qapause" / "data" / "dw2000q_like.csv"


def build(points=1001):
    knots = np.linspace(0.0, 1.0, len(A_KNOTS))
    s = np.linspace(0.0, 1.0, points)
    a = np.round(PchipInterpolator(knots, A_KNOTS)(s), 10)
    b = np.round(PchipInterpolator(knots, B_KNOTS)(s), 10)
    a[np.abs(a) < 1e-12] = 0.0  # A(1) must be exactly zero
    return AnnealSchedule(s, a, b)


if __name__ == "__main__":
    text = schedule_to_csv(build(), "DW2000Q-like schedule (approximation, not vendor data)\nA, B in 1e9 rad/s")
    OUT.write_text(text)
    print(f"wrote {OUT}")
