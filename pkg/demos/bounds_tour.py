"""Bounds against the measured deviation on a random four-level model.

Prints, at a few times, the measured distance of the state from the
tracked eigenvector (with the exact dynamical phase) next to the
eigenvector-path bound, and the infidelity next to the gap-based and
short-time bounds.  The gap-based bound grows linearly in time even when
nothing happens, which the last block shows on a slow spin precession.
"""
import numpy as np

from adiabaticity import bounds as bd
from adiabaticity import frame as fr
from adiabaticity import hamiltonian as hm
from adiabaticity import propagator as pr
from adiabaticity import spectral as sp

model = hm.random_smooth(4, seed=7)
curve = sp.eigencurves(model, np.linspace(0, 4, 801), sp.pancharatnam(1))
frame = fr.build_frame(curve, 1)
rep = bd.bound_report(frame)
kb = rep.key_bound if rep.key_bound is not None else rep.key_bound_dense
evo = pr.propagate(model, curve, 1, E_prime_n=rep.E_prime_n)

print("   t     mismatch   key bound  |  1-F        JRS bound  Zeno bound")
for k in range(0, 801, 100):
    print(f"  {curve.grid[k]:3.1f}   {evo.phase_mismatch[k]:.3e}  {kb[k]:.3e}  |  "
          f"{1 - evo.fidelity[k]:.3e}  {rep.jrs_bound[k]:.3e}  {rep.zeno_bound[k]:.3e}")

slow = hm.schwinger(10.0, 0.01, 1.0, (0.0, 4 * np.pi))
c = sp.eigencurves(slow, np.linspace(0, 4 * np.pi, 2001), sp.pancharatnam(1))
rate = np.polyfit(c.grid, bd.jrs_bound(slow, c, 1, part="integral"), 1)[0]
infid = 1 - pr.propagate(slow, c, 1).fidelity
print()
print(f"slow precession: max infidelity {infid.max():.2e}, yet the gap-based bound grows "
      f"by {rate:.3e} per second and passes 1 near t = {1 / rate:.0f} s")
