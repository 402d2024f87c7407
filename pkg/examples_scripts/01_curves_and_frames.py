"""Closed curves and their Frenet data.

Three presets are built: a circle, an ellipse and a (2,3) torus knot. For
each we print the length, the curvature range and the Frenet frame at one
parameter value. Curvature and torsion are parameter-scaled, so
t' = kappa nu with the derivative taken in s, not in arc length.
"""

import numpy as np

from thin_inductor.curve import check_curve, circle, ellipse, evaluate_frame, fourier, torus_knot

curves = {"circle R=1": circle(1.0), "ellipse 1 x 0.5": ellipse(1.0, 0.5),
          "torus knot (2,3)": torus_knot(2, 3, 1.0, 0.3)}

for name, c in curves.items():
    ext = c.extrema
    fr = evaluate_frame(c, 0.2)
    print(f"{name}: length {c.length:.10f}, max kappa/|g'| {ext.max_kappa_over_speed:.5f}, "
          f"planar {c.planar}")
    print(f"   at s=0.2: t={np.round(fr.t, 4)}, nu={np.round(fr.nu, 4)}, tau={float(fr.tau):.4f}")

# the ellipse length has a closed form through the complete elliptic integral E
from scipy.special import ellipe
print("ellipse length, closed form:", 4 * ellipe(0.75))

# a curve that doubles back on a segment has no Frenet frame; the checks say so
print("degenerate curve diagnostics:", check_curve(fourier([[1, 0, 0]], [])))
