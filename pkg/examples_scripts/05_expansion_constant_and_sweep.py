"""Expansion constant L' and an energy sweep.

The inductance of a wire of radius eps behaves as (l/2 pi) ln(1/eps) + L'
plus corrections. L' is split into four integrals; the direct singular
energy over the shell eps < r < delta is computed independently and fitted
against ln(1/eps). For the planar circle the energy equals the expansion
to roundoff; the knot's torsion leaves a remainder that falls by 4 per
halving of eps, so its slope is fitted on smaller radii.
"""

import numpy as np

from thin_inductor.asymptotics import (build_expansion, compute_l_prime, default_eps_sweep,
                                       energy_sweep, fit_log_slope)
from thin_inductor.curve import circle, torus_knot
from thin_inductor.singular_field import SingularField
from thin_inductor.tube import make_tube

for name, curve, delta in [("circle", circle(1.0), 0.4), ("knot", torus_knot(2, 3, 1.0, 0.3), 0.25)]:
    field = SingularField(make_tube(curve, delta=delta))
    lp = compute_l_prime(field)
    print(f"{name}: " + ", ".join(f"{k} {v:.6f}" for k, v in lp.as_dict().items()
                                   if k.startswith(("term", "L_"))))
    eps = [delta / 2**k for k in range(3, 8)]
    rows = energy_sweep(field, eps)
    fit = fit_log_slope([(r.eps, r.oracle) for r in rows])
    print(f"   fitted slope {fit.slope:.6f} vs l/2pi {curve.length / (2 * np.pi):.6f}; "
          f"energy - expansion: " + " ".join(f"{r.residual:.1e}" for r in rows))
    exp = build_expansion(field)
    print(f"   expansion at eps=1e-3: {exp.total(1e-3):.6f}")
