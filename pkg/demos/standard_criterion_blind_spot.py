"""A spin in a precessing field, once slow and once at resonance.

The textbook ratio |<m|dH/dt|n>| / gap^2 is equally small in both runs, yet
at resonance the state is carried completely to the other level.  The
phase-corrected criterion sees the difference.
"""
import numpy as np

from adiabaticity import frame as fr
from adiabaticity import hamiltonian as hm
from adiabaticity import propagator as pr
from adiabaticity import spectral as sp

OMEGA0, THETA = 10.0, 0.01

for omega in (1.0, 10.0):
    p = hm.SchwingerParams(OMEGA0, THETA, omega)
    # one full Rabi cycle of the adiabatic-frame dynamics
    t_end = 2 * np.pi / p.rabi_frequency
    model = hm.schwinger(OMEGA0, THETA, omega, (0.0, t_end))
    curve = sp.eigencurves(model, np.linspace(0, t_end, 2001), sp.pancharatnam(1))
    frame = fr.build_frame(curve, 1)
    evo = pr.propagate(model, curve, 1)

    print(f"omega = {omega:g} rad/s, t in [0, {t_end:.1f}] s")
    print(f"  standard criterion     {fr.standard_criterion(curve, 1).max():.3e}")
    print(f"  generalized criterion  {fr.generalized_criterion(frame).max():.3e}")
    print(f"  ||delta'^-1|| ||Omega'|| {fr.condition13(frame).max():.3e}")
    print(f"  min fidelity           {evo.fidelity.min():.6f}")
    print()
