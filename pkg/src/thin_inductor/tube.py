"""Tubular neighbourhood of a closed curve.

The shell between radii eps and delta is parametrised by
``F_eps(s, xi, theta) = g(s) + r_eps(xi) (cos(theta) nu(s) + sin(theta) b(s))``
with ``r_eps(xi) = (delta - eps) xi + eps``; ``s, xi`` in [0, 1] and
``theta`` in [0, 2 pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import ClosedCurve, curve_extrema, evaluate_frame
from .errors import (AmbiguousProjection, EpsilonOutOfRange,
                     NonPositiveMetric)

TWO_PI = 2.0 * np.pi

# delta * kappa / |g'| must stay below this (5% margin on the strict bound)
MAX_CURVATURE_LOAD = 0.95


@dataclass(frozen=True)
class TubeValidity:
    min_a0: float
    max_a0: float
    safety: float  # delta * max(kappa/|g'|)


@dataclass(frozen=True, eq=False)
class TubeGeometry:
    curve: ClosedCurve
    delta: float
    validity: TubeValidity


@dataclass(frozen=True)
class TubeCoords:
    s: float
    xi: float
    theta: float


OUTSIDE = None


def select_delta(curve: ClosedCurve, eta=0.5, n_grid=2048) -> float:
    """Outer radius ``eta * min_s |g'(s)| / kappa(s)``."""
    if not 0 < eta < 1:
        raise ValueError("safety factor eta must lie in (0, 1)")
    ext = curve_extrema(curve, n_grid)
    return eta / ext.max_kappa_over_speed


def make_tube(curve: ClosedCurve, delta=None, eta=0.5, n_grid=2048) -> TubeGeometry:
    """Build a validated tube; ``delta=None`` selects it with safety ``eta``."""
    ext = curve_extrema(curve, n_grid)
    if delta is None:
        delta = eta / ext.max_kappa_over_speed
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    load = delta * ext.max_kappa_over_speed
    if load >= MAX_CURVATURE_LOAD:
        raise NonPositiveMetric(
            f"delta={delta:g} violates delta*kappa < 0.95 |g'| (load {load:.3f})")
    s = np.arange(n_grid) / n_grid
    fr = evaluate_frame(curve, s)
    lo = fr.gprime_norm - delta * fr.kappa
    hi = fr.gprime_norm + delta * fr.kappa
    return TubeGeometry(curve, delta, TubeValidity(float(lo.min()), float(hi.max()), float(load)))


def _check_eps(tube, eps, allow_zero=True):
    if eps < 0 or eps > 0.5 * tube.delta * (1 + 1e-12) or (eps == 0 and not allow_zero):
        raise EpsilonOutOfRange(f"eps={eps:g} outside (0, delta/2] for delta={tube.delta:g}")


def radius(tube: TubeGeometry, eps, xi):
    return (tube.delta - eps) * np.asarray(xi, dtype=float) + eps


def map_F(tube: TubeGeometry, eps, s, xi, theta, frame=None):
    """Ambient point F_eps(s, xi, theta); broadcasts over array arguments."""
    _check_eps(tube, eps)
    s, xi, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (s, xi, theta)))
    g = tube.curve.point(s)
    fr = evaluate_frame(tube.curve, s) if frame is None else frame
    r = radius(tube, eps, xi)[..., None]
    return g + r * (np.cos(theta)[..., None] * fr.nu + np.sin(theta)[..., None] * fr.b)


def a_factor(tube: TubeGeometry, eps, s, xi, theta, frame=None):
    """Metric factor ``|g'| - r_eps(xi) kappa cos(theta)``."""
    _check_eps(tube, eps)
    fr = evaluate_frame(tube.curve, s) if frame is None else frame
    a = fr.gprime_norm - radius(tube, eps, xi) * fr.kappa * np.cos(theta)
    if np.any(a <= 0):
        raise NonPositiveMetric("a_eps <= 0: tube radius exceeds curvature bound")
    return a


def jacobian_F(tube: TubeGeometry, eps, s, xi, theta, frame=None):
    """``(delta - eps) a_eps r_eps``."""
    a = a_factor(tube, eps, s, xi, theta, frame)
    return (tube.delta - eps) * a * radius(tube, eps, xi)


def map_G(tube: TubeGeometry, eps, s, theta):
    """Boundary point of the conductor, G_eps(s, theta) = F_eps(s, 0, theta)."""
    _check_eps(tube, eps, allow_zero=False)
    return map_F(tube, eps, s, np.zeros_like(np.asarray(theta, dtype=float)), theta)


def surface_measure(tube: TubeGeometry, eps, s, theta):
    """Surface element ``eps (|g'| - eps kappa cos(theta))`` of Gamma_eps."""
    _check_eps(tube, eps, allow_zero=False)
    fr = evaluate_frame(tube.curve, s)
    return eps * (fr.gprime_norm - eps * fr.kappa * np.cos(theta))


def boundary_normal(tube: TubeGeometry, eps, s, theta):
    """Unit normal on Gamma_eps pointing into the conductor."""
    _check_eps(tube, eps, allow_zero=False)
    fr = evaluate_frame(tube.curve, s)
    theta = np.asarray(theta, dtype=float)
    return -(np.cos(theta)[..., None] * fr.nu + np.sin(theta)[..., None] * fr.b)


# ---------------------------------------------------------------------------
# inversion


def _coarse_projection(curve, x, n_coarse, chunk=8192):
    s_grid = np.arange(n_coarse) / n_coarse
    G = curve.point(s_grid)
    G2 = np.sum(G * G, axis=-1)
    best = np.empty(len(x), dtype=int)
    second = np.empty(len(x), dtype=int)
    for lo in range(0, len(x), chunk):
        xc = x[lo:lo + chunk]
        d2 = G2[None, :] - 2.0 * xc @ G.T
        i1 = np.argmin(d2, axis=1)
        best[lo:lo + chunk] = i1
        # best candidate at least 3 cells away, cyclically
        idx = np.arange(n_coarse)
        sep = np.abs(idx[None, :] - i1[:, None])
        sep = np.minimum(sep, n_coarse - sep)
        d2m = np.where(sep > 3, d2, np.inf)
        second[lo:lo + chunk] = np.argmin(d2m, axis=1)
    return s_grid, best, second


def _newton_foot(curve, x, s, iters=30, max_step=None):
    """Newton on d/ds |g(s) - x|^2 / 2 = g'(s).(g(s) - x)."""
    for _ in range(iters):
        g, g1, g2, _ = curve.derivatives(s)
        d = g - x
        phi = np.sum(g1 * d, axis=-1)
        dphi = np.sum(g2 * d, axis=-1) + np.sum(g1 * g1, axis=-1)
        dphi = np.where(dphi > 0, dphi, np.sum(g1 * g1, axis=-1))
        step = phi / dphi
        if max_step is not None:
            step = np.clip(step, -max_step, max_step)
        s = np.mod(s - step, 1.0)
        if np.all(np.abs(step) < 1e-15):
            break
    return s


def invert_points(tube: TubeGeometry, eps, x, n_coarse=256, check_ambiguity=True):
    """Vectorised inverse of F_eps.

    Returns ``(s, xi, theta, inside)``; coordinates of points outside the
    closed shell are still filled in (``xi`` outside [0, 1]).
    """
    _check_eps(tube, eps)
    curve = tube.curve
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s_grid, i1, i2 = _coarse_projection(curve, x, n_coarse)
    h = 1.0 / n_coarse
    s = _newton_foot(curve, x, s_grid[i1], max_step=h)
    g = curve.point(s)
    dist = np.linalg.norm(x - g, axis=-1)
    inside_ball = dist <= tube.delta * (1 + 1e-12)
    if check_ambiguity and np.any(inside_ball):
        cand = np.flatnonzero(inside_ball)
        s2 = _newton_foot(curve, x[cand], s_grid[i2[cand]], max_step=h)
        d2 = np.linalg.norm(x[cand] - curve.point(s2), axis=-1)
        ds = np.abs(s2 - s[cand])
        ds = np.minimum(ds, 1 - ds)
        tie = (np.abs(d2 - dist[cand]) <= 1e-8 * tube.delta) & (ds > 2 * h)
        if np.any(tie):
            raise AmbiguousProjection(
                f"{int(tie.sum())} point(s) equidistant from two curve branches")
        closer = d2 < dist[cand] * (1 - 1e-12)
        if np.any(closer):
            sel = cand[closer]
            s[sel] = s2[closer]
            dist[sel] = d2[closer]
    fr = evaluate_frame(curve, s)
    d = x - curve.point(s)
    theta = np.mod(np.arctan2(np.sum(d * fr.b, -1), np.sum(d * fr.nu, -1)), TWO_PI)
    xi = (dist - eps) / (tube.delta - eps)
    inside = (xi >= -1e-12) & (xi <= 1 + 1e-12)
    return s, xi, theta, inside


def invert_F(tube: TubeGeometry, eps, x):
    """Coordinates of a single point in the closed shell, or ``OUTSIDE``."""
    x = np.asarray(x, dtype=float).reshape(1, 3)
    g_dist = np.min(np.linalg.norm(
        tube.curve.point(np.arange(256) / 256) - x, axis=-1))
    if g_dist > tube.delta + tube.curve.extrema.max_speed / 256:
        return OUTSIDE
    s, xi, theta, inside = invert_points(tube, eps, x)
    if not inside[0]:
        return OUTSIDE
    return TubeCoords(float(s[0]), float(np.clip(xi[0], 0, 1)), float(theta[0]))


def ambient_gradient(tube: TubeGeometry, eps, s, xi, theta, du, frame=None):
    """Cartesian gradient from parametric partials ``du = (du/ds, du/dxi, du/dtheta)``.

    Uses ``dF/ds = a_eps t + tau dF/dtheta``, ``dF/dxi = (delta - eps) e_r``
    and ``dF/dtheta = r_eps e_theta``. Shape ``(..., 3)``.
    """
    _check_eps(tube, eps)
    fr = evaluate_frame(tube.curve, s) if frame is None else frame
    theta = np.asarray(theta, dtype=float)
    r = radius(tube, eps, xi)
    a = fr.gprime_norm - r * fr.kappa * np.cos(theta)
    du_ds, du_dxi, du_dth = (np.asarray(d, dtype=float) for d in du)
    c, sn = np.cos(theta), np.sin(theta)
    h = tube.delta - eps
    ct = (du_ds - fr.tau * du_dth) / a
    cn = c / h * du_dxi - sn / r * du_dth
    cb = sn / h * du_dxi + c / r * du_dth
    return ct[..., None] * fr.t + cn[..., None] * fr.nu + cb[..., None] * fr.b


def injectivity_defect(tube: TubeGeometry, n=4000, seed=0) -> float:
    """Fraction of random shell points whose nearest-point projection lands
    on a different part of the curve than the point was generated from.

    Zero (up to sampling) when F_0 is injective. The curvature bound alone
    does not guarantee this for knotted or nearly touching curves.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    s, xi, th = rng.random(n), rng.random(n), rng.random(n) * TWO_PI
    x = map_F(tube, 0.0, s, xi, th)
    s2, _, _, _ = invert_points(tube, 0.0, x, check_ambiguity=False)
    ds = np.abs(s2 - s)
    ds = np.minimum(ds, 1.0 - ds)
    return float(np.mean(ds > 1e-6))
