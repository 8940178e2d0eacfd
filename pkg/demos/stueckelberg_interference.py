"""Repeated Landau-Zener passages.

Each passage leaks a probability p1 out of the tracked level.  Whether the
leaked amplitudes add up or cancel depends on the phase Theta collected
between passages: near Theta = pi/2 they add and the loss grows like M^2,
near Theta = 0 they cancel.
"""
import numpy as np

from adiabaticity import hamiltonian as hm
from adiabaticity import propagator as pr

P1 = 0.0056
MS = [2, 4, 8]

for label, alpha in (("constructive", 102.36), ("destructive", 100.717)):
    omega = np.sqrt(-2 * alpha * np.log(P1) / np.pi)
    params = hm.CyclingLZParams(alpha, 1.0, omega)
    pred, meas = pr.lz_multipassage(params, MS)
    print(f"{label}: alpha = {alpha}, p1 = {pred.p1:.4g}, Theta mod pi = {pred.Theta % np.pi:.4f}"
          f" (alpha/varpi mod pi = {pred.Theta_approx % np.pi:.4f})")
    print("   M   measured     p1 sin^2(M Theta)/cos^2(Theta)   M^2 p1")
    for m in MS:
        print(f"  {m:2d}   {meas[m]:.4e}   {pred.at(m):.4e}                       {m * m * P1:.4e}")
    print()
