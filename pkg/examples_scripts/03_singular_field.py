"""The explicit singular potential v and its source f.

v = theta phi(xi) / (2 pi) winds once around the wire near the curve and
vanishes outside the tube; Delta v = f is a bounded source supported in
xi < 3/4. Here the identity is checked with a 7-point finite-difference
Laplacian at a handful of points.
"""

import numpy as np

from thin_inductor.curve import circle
from thin_inductor.singular_field import SingularField, f_value, v_cartesian
from thin_inductor.tube import make_tube, map_F

field = SingularField(make_tube(circle(1.0), delta=0.4))
E = np.eye(3)
for s, xi, th in [(0.1, 0.2, 1.0), (0.4, 0.6, 2.5), (0.7, 0.7, 4.0)]:
    x = map_F(field.tube, 0.0, s, xi, th)[None, :]
    h = 1e-4
    lap = (sum(v_cartesian(field, x + h * e) + v_cartesian(field, x - h * e) for e in E)
           - 6 * v_cartesian(field, x)) / h**2
    print(f"xi={xi}: FD Laplacian {lap[0]: .6f}   f {float(f_value(field, s, xi, th)): .6f}")
