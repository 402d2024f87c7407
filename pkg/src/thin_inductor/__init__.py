"""Self-inductance of thin closed wires from a logarithmic asymptotic expansion.

Modules: ``curve`` (closed curves and Frenet data), ``tube`` (tubular
coordinates), ``singular_field`` (explicit singular potential and its
source), ``quadrature`` (panel rules and reproducible Monte Carlo),
``asymptotics`` (expansion constant, energy oracles, sweeps),
``potentials`` (optional correction terms and a filament oracle) and
``cli``.
"""

__version__ = "0.1.0"
