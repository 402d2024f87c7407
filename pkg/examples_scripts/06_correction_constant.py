"""Correction constant of the expansion for a circular loop.

The harmonic corrector splits into a double layer w1 on a cut surface and a
Newtonian potential w2 of the source f. Their contribution C turns L' into
the full constant, which for a circle should be ln 8 - 2 and must not
depend on the auxiliary radius delta. A filament (Neumann) computation at a
small radius gives an independent value.
"""

import numpy as np

from thin_inductor.asymptotics import compute_l_prime
from thin_inductor.curve import circle
from thin_inductor.potentials import build_cut_surface, correction_terms, neumann_filament_oracle
from thin_inductor.singular_field import SingularField
from thin_inductor.tube import make_tube

unit = circle(1.0)
for delta in (0.2, 0.4):
    field = SingularField(make_tube(unit, delta=delta))
    res = correction_terms(field, build_cut_surface(field))
    lp = compute_l_prime(field).total
    print(f"delta {delta}: L' {lp:.6f} + C {res.total:.6f} = {lp + res.total:.7f}")
print(f"ln 8 - 2 = {np.log(8) - 2:.7f}")
fil = neumann_filament_oracle(unit, 1e-4) + np.log(1e-4)
print(f"filament constant at eps=1e-4: {fil:.7f}")
