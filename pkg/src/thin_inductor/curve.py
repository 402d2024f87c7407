"""Closed C^3 space curves and their parameter-scaled Frenet data.

Curves are parametrised on s in [0, 1] and are *not* arc-length
parametrised. Curvature and torsion follow the convention in which the
Frenet formulae hold with d/ds::

    t' = kappa nu,   nu' = -kappa t + tau b,   b' = -tau nu

so ``kappa = |g'| * kappa_arc`` and ``tau = |g'| * tau_arc``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import CurvatureVanishes, ToleranceNotReached

TWO_PI = 2.0 * np.pi

# |g' x g''| below this fraction of |g'|^3 means the principal normal is undefined
CURVATURE_FLOOR = 1e-12


def _trig_derivs(omega, s):
    """cos(omega s), sin(omega s) and their first three s-derivatives."""
    c = np.cos(omega * s)
    sn = np.sin(omega * s)
    cos_d = (c, -omega * sn, -omega**2 * c, omega**3 * sn)
    sin_d = (sn, omega * c, -omega**2 * sn, -omega**3 * c)
    return cos_d, sin_d


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """A closed parametric curve g: [0, 1] -> R^3 with derivatives up to g'''.

    ``evaluator(s)`` must return a 4-tuple ``(g, g1, g2, g3)`` of arrays of
    shape ``s.shape + (3,)``.
    """

    preset: str
    params: dict
    evaluator: Callable = field(repr=False)
    planar: bool = False
    axisymmetric: bool = False

    def derivatives(self, s):
        s = np.asarray(s, dtype=float)
        return self.evaluator(s)

    def point(self, s):
        return self.derivatives(s)[0]

    @cached_property
    def length(self) -> float:
        return arc_length(self, rel_tol=1e-13)

    @cached_property
    def extrema(self) -> "CurveExtrema":
        return curve_extrema(self, n_grid=2048)

    @cached_property
    def s_edges(self) -> np.ndarray:
        """Parameter panels resolving |g'|, kappa and tau (see frame_panel_edges)."""
        return frame_panel_edges(self)


# ---------------------------------------------------------------------------
# presets


def circle(R=1.0, center=(0.0, 0.0, 0.0)) -> ClosedCurve:
    R = float(R)
    c0 = np.asarray(center, dtype=float)
    if R <= 0:
        raise ValueError("circle radius must be positive")

    def ev(s):
        (c, c1, c2, c3), (sn, s1, s2, s3) = _trig_derivs(TWO_PI, s)
        z = np.zeros_like(s)
        g = np.stack([R * c, R * sn, z], axis=-1) + c0
        g1 = np.stack([R * c1, R * s1, z], axis=-1)
        g2 = np.stack([R * c2, R * s2, z], axis=-1)
        g3 = np.stack([R * c3, R * s3, z], axis=-1)
        return g, g1, g2, g3

    return ClosedCurve("circle", {"R": R, "center": c0.tolist()}, ev,
                       planar=True, axisymmetric=True)


def ellipse(a=1.0, b=0.5) -> ClosedCurve:
    a, b = float(a), float(b)
    if a <= 0 or b <= 0:
        raise ValueError("ellipse semi-axes must be positive")

    def ev(s):
        (c, c1, c2, c3), (sn, s1, s2, s3) = _trig_derivs(TWO_PI, s)
        z = np.zeros_like(s)
        g = np.stack([a * c, b * sn, z], axis=-1)
        g1 = np.stack([a * c1, b * s1, z], axis=-1)
        g2 = np.stack([a * c2, b * s2, z], axis=-1)
        g3 = np.stack([a * c3, b * s3, z], axis=-1)
        return g, g1, g2, g3

    return ClosedCurve("ellipse", {"a": a, "b": b}, ev, planar=True)


def torus_knot(p=2, q=3, R=1.0, r=0.3) -> ClosedCurve:
    """(p, q) torus knot winding p times around the symmetry axis."""
    p, q, R, r = int(p), int(q), float(R), float(r)
    if not 0 < r < R:
        raise ValueError("torus knot needs 0 < r < R")

    def ev(s):
        cp, sp = _trig_derivs(TWO_PI * p, s)
        cq, sq = _trig_derivs(TWO_PI * q, s)
        rho = [R + r * cq[0]] + [r * d for d in cq[1:]]
        binom = ((1,), (1, 1), (1, 2, 1), (1, 3, 3, 1))
        out = []
        for n in range(4):
            x = sum(binom[n][k] * rho[k] * cp[n - k] for k in range(n + 1))
            y = sum(binom[n][k] * rho[k] * sp[n - k] for k in range(n + 1))
            out.append(np.stack([x, y, r * sq[n]], axis=-1))
        return tuple(out)

    return ClosedCurve("torus_knot", {"p": p, "q": q, "R": R, "r": r}, ev)


def fourier(cos, sin, center=(0.0, 0.0, 0.0)) -> ClosedCurve:
    """g(s) = center + sum_k cos[k-1] cos(2 pi k s) + sin[k-1] sin(2 pi k s).

    ``cos`` and ``sin`` are sequences of 3-vectors for harmonics k = 1, 2, ...
    (the shorter one is zero-padded).
    """
    A = np.atleast_2d(np.asarray(cos, dtype=float)) if len(cos) else np.zeros((0, 3))
    B = np.atleast_2d(np.asarray(sin, dtype=float)) if len(sin) else np.zeros((0, 3))
    if A.shape[-1] != 3 or B.shape[-1] != 3:
        raise ValueError("fourier coefficients must be 3-vectors")
    K = max(len(A), len(B))
    if K == 0:
        raise ValueError("fourier curve needs at least one harmonic")
    A = np.vstack([A, np.zeros((K - len(A), 3))])
    B = np.vstack([B, np.zeros((K - len(B), 3))])
    c0 = np.asarray(center, dtype=float)
    planar = bool(np.all(A[:, 2] == 0) and np.all(B[:, 2] == 0))

    def ev(s):
        out = [np.zeros(s.shape + (3,)) for _ in range(4)]
        for k in range(K):
            cd, sd = _trig_derivs(TWO_PI * (k + 1), s)
            for n in range(4):
                out[n] += cd[n][..., None] * A[k] + sd[n][..., None] * B[k]
        out[0] += c0
        return tuple(out)

    params = {"cos": A.tolist(), "sin": B.tolist(), "center": c0.tolist()}
    return ClosedCurve("fourier", params, ev, planar=planar)


PRESETS = {
    "circle": circle,
    "ellipse": ellipse,
    "torus_knot": torus_knot,
    "fourier": fourier,
}


def make_curve(preset: str, **params) -> ClosedCurve:
    try:
        factory = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown curve preset {preset!r}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# Frenet frame


@dataclass(frozen=True)
class FrenetData:
    """Frame and parameter-scaled scalars at one or many parameter values."""

    gprime_norm: np.ndarray
    t: np.ndarray
    nu: np.ndarray
    b: np.ndarray
    kappa: np.ndarray
    tau: np.ndarray


def evaluate_frame(curve: ClosedCurve, s) -> FrenetData:
    """Frenet frame at ``s`` (scalar or array).

    Raises CurvatureVanishes where ``|g' x g''| < 1e-12 |g'|^3``.
    """
    _, g1, g2, g3 = curve.derivatives(s)
    speed = np.linalg.norm(g1, axis=-1)
    cr = np.cross(g1, g2)
    crn = np.linalg.norm(cr, axis=-1)
    if np.any(crn < CURVATURE_FLOOR * speed**3):
        bad = np.atleast_1d(np.asarray(s, dtype=float))
        mask = np.atleast_1d(crn < CURVATURE_FLOOR * speed**3)
        raise CurvatureVanishes(f"curvature vanishes at s={bad[mask][:3]}")
    t = g1 / speed[..., None]
    b = cr / crn[..., None]
    nu = np.cross(b, t)
    kappa = crn / speed**2
    tau = np.einsum("...i,...i->...", cr, g3) / crn**2 * speed
    return FrenetData(speed, t, nu, b, kappa, tau)


def frame_scalar_derivatives(curve: ClosedCurve, s, h=1e-4):
    """Central differences of (kappa, tau, |g'|) in s with periodic wrap.

    Returns ``(dkappa_ds, dtau_ds, dspeed_ds)``.
    """
    if not 0 < h <= 1e-3:
        raise ValueError("finite-difference step must lie in (0, 1e-3]")
    s = np.asarray(s, dtype=float)
    fp = evaluate_frame(curve, np.mod(s + h, 1.0))
    fm = evaluate_frame(curve, np.mod(s - h, 1.0))
    inv = 0.5 / h
    return ((fp.kappa - fm.kappa) * inv,
            (fp.tau - fm.tau) * inv,
            (fp.gprime_norm - fm.gprime_norm) * inv)


# ---------------------------------------------------------------------------
# curve-level scalars


def arc_length(curve: ClosedCurve, rel_tol=1e-12, order=16, max_panels=8192) -> float:
    """Length of the curve by composite Gauss-Legendre with panel doubling.

    The error estimate is the change between successive panel counts.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    x, w = np.polynomial.legendre.leggauss(order)

    def composite(n):
        edges = np.linspace(0.0, 1.0, n + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        s = (mid[:, None] + half[:, None] * x).ravel()
        speed = np.linalg.norm(curve.derivatives(s)[1], axis=-1)
        return float(np.sum(speed.reshape(n, order) * (half[:, None] * w)))

    n = 4
    prev = composite(n)
    while n < max_panels:
        n *= 2
        cur = composite(n)
        if abs(cur - prev) <= rel_tol * abs(cur):
            return cur
        prev = cur
    raise ToleranceNotReached(f"arc length not converged to {rel_tol} with {n} panels")


@dataclass(frozen=True)
class CurveExtrema:
    min_speed: float
    max_speed: float
    max_kappa: float
    max_kappa_over_speed: float

    def __iter__(self):
        return iter((self.min_speed, self.max_speed, self.max_kappa,
                     self.max_kappa_over_speed))


def _polish(fun, s_grid, values, idx, sign):
    """One parabolic Newton step around a grid extremum; keeps the better value."""
    ds = s_grid[1] - s_grid[0]
    f0 = values[idx]
    fm = values[idx - 1]
    fp = values[(idx + 1) % len(values)]
    curv = fp - 2 * f0 + fm
    if curv == 0:
        return f0
    step = -0.5 * (fp - fm) / curv * ds
    if abs(step) > ds:
        return f0
    f1 = float(fun(np.array([np.mod(s_grid[idx] + step, 1.0)]))[0])
    return max(f0, f1) if sign > 0 else min(f0, f1)


def curve_extrema(curve: ClosedCurve, n_grid=2048) -> CurveExtrema:
    """(min|g'|, max|g'|, max kappa, max kappa/|g'|) on a grid, Newton-polished."""
    if n_grid < 256:
        raise ValueError("n_grid must be at least 256")
    s = np.arange(n_grid) / n_grid

    def speed(x):
        return np.linalg.norm(curve.derivatives(x)[1], axis=-1)

    def kappa(x):
        return evaluate_frame(curve, x).kappa

    def ratio(x):
        fr = evaluate_frame(curve, x)
        return fr.kappa / fr.gprime_norm

    sp = speed(s)
    ka = kappa(s)
    ra = ka / sp
    return CurveExtrema(
        min_speed=_polish(speed, s, sp, int(np.argmin(sp)), -1),
        max_speed=_polish(speed, s, sp, int(np.argmax(sp)), +1),
        max_kappa=_polish(kappa, s, ka, int(np.argmax(ka)), +1),
        max_kappa_over_speed=_polish(ratio, s, ra, int(np.argmax(ra)), +1),
    )


def check_curve(curve: ClosedCurve, n_grid=2048) -> list[str]:
    """Diagnostic codes for violated curve invariants (empty when valid)."""
    diags = []
    g0, d0, _, _ = curve.derivatives(np.array([0.0]))
    g1, d1, _, _ = curve.derivatives(np.array([1.0]))
    s = np.arange(n_grid) / n_grid
    _, gp, gpp, _ = curve.derivatives(s)
    speed = np.linalg.norm(gp, axis=-1)
    scale = max(float(speed.max()), 1e-300)
    if np.linalg.norm(g0 - g1) > 1e-10 * max(1.0, float(np.abs(g0).max())) \
            or np.linalg.norm(d0 - d1) > 1e-8 * scale:
        diags.append("closure_violated")
    if speed.min() <= 1e-12 * scale:
        diags.append("regularity_violated")
    crn = np.linalg.norm(np.cross(gp, gpp), axis=-1)
    if np.any(crn < CURVATURE_FLOOR * np.maximum(speed, 1e-300) ** 3) or crn.max() == 0:
        diags.append("curvature_vanishes")
    return diags


def frame_panel_edges(curve: ClosedCurve, order=16, rel_tol=1e-13) -> np.ndarray:
    """Panels in s on which |g'|, kappa, tau and tau^2 are each integrated
    to ``rel_tol`` by ``order``-point Gauss-Legendre.

    Curves close to an inflection have sharply peaked torsion; refining on
    the frame scalars once per curve keeps every s-integral of smooth
    functions of them accurate without per-integrand adaptivity.
    """
    from .quadrature import adaptive_edges

    if curve.axisymmetric:
        return np.array([0.0, 1.0])

    def scalars(s):
        fr = evaluate_frame(curve, s)
        return np.stack([fr.gprime_norm, fr.kappa, fr.tau, fr.tau**2], axis=-1)

    edges = adaptive_edges(scalars, 0.0, 1.0, order, rel_tol, initial=16)
    edges.setflags(write=False)
    return edges
