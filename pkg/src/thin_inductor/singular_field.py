"""Explicit singular potential of a unit current and its source.

In tube coordinates of the eps = 0 map the potential is
``v(s, xi, theta) = theta * phi(xi) / (2 pi)`` for theta in (0, 2 pi), where
``phi`` is a C^2 cutoff equal to 1 on [0, 1/2] and 0 on [3/4, inf). Its
Laplacian ``f`` is supported inside the tube, and ``v`` jumps by ``phi``
across the theta = 0 leaf.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curve import evaluate_frame, frame_scalar_derivatives
from .errors import AxisSingularity, EpsilonOutOfRange, OnCutSurface
from .quadrature import Geometric, QuadratureSpec, panel_edges, rule_on_edges, tensor_integrate
from .tube import TubeGeometry, invert_points

TWO_PI = 2.0 * np.pi
FD_STEP = 1e-5  # s-step for d/ds of curvature, torsion and |g'|; resolves torsion spikes


# ---------------------------------------------------------------------------
# cutoff profiles


def _smoothstep5(u):
    return (u**3 * (10 - 15 * u + 6 * u**2),
            30 * u**2 * (1 - u) ** 2,
            60 * u * (1 - u) * (1 - 2 * u))


def _smoothstep7(u):
    return (u**4 * (35 - 84 * u + 70 * u**2 - 20 * u**3),
            140 * u**3 * (1 - u) ** 3,
            420 * u**2 * (1 - u) ** 2 * (1 - 2 * u))


@dataclass(frozen=True)
class CutoffProfile:
    """phi(xi) = 1 - S((xi - 1/2) / (1/4)) for a smoothstep S on [0, 1]."""

    name: str
    step: Callable

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        u = np.clip((xi - 0.5) * 4.0, 0.0, 1.0)
        S, dS, d2S = self.step(u)
        ramp = (xi > 0.5) & (xi < 0.75)
        phi = 1.0 - S
        dphi = np.where(ramp, -4.0 * dS, 0.0)
        d2phi = np.where(ramp, -16.0 * d2S, 0.0)
        return phi, dphi, d2phi


QUINTIC = CutoffProfile("quintic", _smoothstep5)
SEPTIC = CutoffProfile("septic", _smoothstep7)
CUTOFFS = {"quintic": QUINTIC, "septic": SEPTIC}


def phi_hat(cutoff: CutoffProfile, xi):
    """(phi, phi', phi'') at ``xi >= 0``."""
    if np.any(np.asarray(xi) < 0):
        raise ValueError("cutoff is defined for xi >= 0")
    return cutoff(xi)


@dataclass(frozen=True, eq=False)
class SingularField:
    tube: TubeGeometry
    cutoff: CutoffProfile = QUINTIC

    @property
    def delta(self):
        return self.tube.delta


# ---------------------------------------------------------------------------
# pointwise fields in tube coordinates


def _check_branch(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any((np.abs(theta) < 1e-12) | (np.abs(theta - TWO_PI) < 1e-12)):
        raise OnCutSurface("theta on the cut; choose theta slightly above 0 or below 2 pi")
    return theta


def _check_axis(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 1e-12):
        raise AxisSingularity("field is singular on the tube axis (xi = 0)")
    return xi


def v_value(field: SingularField, s, xi, theta):
    """theta phi(xi) / (2 pi) on the single-valued branch theta in (0, 2 pi)."""
    theta = _check_branch(theta)
    phi, _, _ = field.cutoff(xi)
    return np.broadcast_to(theta * phi / TWO_PI,
                           np.broadcast_shapes(np.shape(s), np.shape(xi), np.shape(theta)))


def grad_v(field: SingularField, s, xi, theta, frame=None):
    """Ambient gradient of v, shape ``(..., 3)``."""
    xi = _check_axis(xi)
    theta = np.asarray(theta, dtype=float)
    delta = field.delta
    fr = evaluate_frame(field.tube.curve, s) if frame is None else frame
    a0 = fr.gprime_norm - delta * xi * fr.kappa * np.cos(theta)
    phi, dphi, _ = field.cutoff(xi)
    dv_ds = 0.0
    dv_dxi = theta * dphi / TWO_PI
    dv_dth = phi / TWO_PI
    c, sn = np.cos(theta), np.sin(theta)
    ct = (dv_ds - fr.tau * dv_dth) / a0
    cn = c / delta * dv_dxi - sn / (delta * xi) * dv_dth
    cb = sn / delta * dv_dxi + c / (delta * xi) * dv_dth
    return ct[..., None] * fr.t + cn[..., None] * fr.nu + cb[..., None] * fr.b


def f_value(field: SingularField, s, xi, theta, frame=None, dframe=None):
    """Source f = Laplacian of v in tube coordinates (zero for xi >= 3/4)."""
    xi = _check_axis(xi)
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    delta = field.delta
    curve = field.tube.curve
    fr = evaluate_frame(curve, s) if frame is None else frame
    dkappa, dtau, dspeed = frame_scalar_derivatives(curve, s, FD_STEP) if dframe is None else dframe
    c, sn = np.cos(theta), np.sin(theta)
    speed, kappa, tau = fr.gprime_norm, fr.kappa, fr.tau
    a0 = speed - delta * xi * kappa * c
    da0 = dspeed - delta * xi * dkappa * c
    d_tau_over_a0 = dtau / a0 - tau * da0 / a0**2
    phi, dphi, d2phi = field.cutoff(xi)
    first = (kappa * sn / (delta * xi)
             - tau**2 * delta * xi * kappa * sn / a0**2
             - d_tau_over_a0) * phi / (TWO_PI * a0)
    second = theta / (TWO_PI * a0 * delta**2 * xi) * (2 * a0 - speed) * dphi
    third = theta / (TWO_PI * delta**2) * d2phi
    return first + second + third


def f_times_jacobian(field: SingularField, s, xi, theta, frame=None, dframe=None):
    """f * delta^2 a0 xi, bounded up to the axis (used by volume quadrature)."""
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    delta = field.delta
    curve = field.tube.curve
    fr = evaluate_frame(curve, s) if frame is None else frame
    dkappa, dtau, dspeed = frame_scalar_derivatives(curve, s, FD_STEP) if dframe is None else dframe
    c, sn = np.cos(theta), np.sin(theta)
    speed, kappa, tau = fr.gprime_norm, fr.kappa, fr.tau
    a0 = speed - delta * xi * kappa * c
    da0 = dspeed - delta * xi * dkappa * c
    d_tau_over_a0 = dtau / a0 - tau * da0 / a0**2
    phi, dphi, d2phi = field.cutoff(xi)
    first = (kappa * sn / delta
             - tau**2 * delta * xi**2 * kappa * sn / a0**2
             - xi * d_tau_over_a0) * phi / TWO_PI
    second = theta / TWO_PI * (2 * a0 - speed) * dphi
    third = theta * a0 * xi / TWO_PI * d2phi
    return (first * delta**2) + second + third


def v_cartesian(field: SingularField, x):
    """v at ambient points ``x`` (shape ``(n, 3)``); zero outside the tube."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s, xi, theta, inside = invert_points(field.tube, 0.0, x)
    out = np.zeros(len(x))
    if np.any(inside):
        out[inside] = v_value(field, s[inside], np.clip(xi[inside], 0, 1), theta[inside])
    return out


def f_cartesian(field: SingularField, x):
    """f at ambient points; zero outside the tube."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s, xi, theta, inside = invert_points(field.tube, 0.0, x)
    out = np.zeros(len(x))
    if np.any(inside):
        out[inside] = f_value(field, s[inside], np.clip(xi[inside], 0, 1), theta[inside])
    return out


# ---------------------------------------------------------------------------
# boundary identities


def dv_dn_on_gamma(field: SingularField, eps, s, theta):
    """Normal derivative of v on the conductor surface of radius eps.

    With n_eps = -(cos(theta) nu + sin(theta) b) this is
    ``-(1/delta) dv/dxi(s, eps/delta, theta)``, which vanishes because the
    cutoff is flat on [0, 1/2].
    """
    if not 0 < eps <= 0.5 * field.delta * (1 + 1e-12):
        raise EpsilonOutOfRange(f"eps={eps:g} outside (0, delta/2]")
    theta = np.asarray(theta, dtype=float)
    _, dphi, _ = field.cutoff(np.full(np.shape(theta), eps / field.delta))
    return np.broadcast_to(-theta * dphi / (TWO_PI * field.delta),
                           np.broadcast_shapes(np.shape(s), np.shape(theta)))


def sigma0_normal(field: SingularField, s, xi, frame=None):
    """Unit normal of the theta = 0 leaf, pointing toward +b."""
    fr = evaluate_frame(field.tube.curve, s) if frame is None else frame
    dx = field.delta * np.asarray(xi, dtype=float)
    a = fr.gprime_norm - dx * fr.kappa
    n = a[..., None] * fr.b - (dx * fr.tau)[..., None] * fr.t
    return n / np.linalg.norm(n, axis=-1)[..., None]


def dv_dn_on_sigma0(field: SingularField, xi, s):
    """Normal derivative of v across the theta = 0 leaf (same from both sides)."""
    xi = _check_axis(xi)
    if np.any(xi >= 1):
        raise ValueError("xi must lie in (0, 1)")
    fr = evaluate_frame(field.tube.curve, s)
    dx = field.delta * xi
    a = fr.gprime_norm - dx * fr.kappa
    phi, _, _ = field.cutoff(xi)
    norm = np.sqrt(a**2 + dx**2 * fr.tau**2)
    return phi / (TWO_PI * norm) * (a / dx + dx * fr.tau**2 / a)


# ---------------------------------------------------------------------------
# L^p norm of the source


def lp_norm_f_truncated(field: SingularField, p, xi_min, quad: QuadratureSpec | None = None,
                        s_panels=None, workers=None):
    """(integral over xi > xi_min of |f|^p)^(1/p), by parametric quadrature.

    Uses geometric grading toward the axis and panel breaks at the cutoff
    ramp and at theta = pi (a zero of sin theta).
    """
    if not 1 <= p <= 2.5:
        raise ValueError("p must lie in [1, 2.5]")
    if not 0 < xi_min <= 0.1:
        raise ValueError("xi_min must lie in (0, 0.1]")
    quad = quad or QuadratureSpec(order=12)
    curve = field.tube.curve
    delta = field.delta
    s_edges = curve.s_edges if s_panels is None else np.linspace(0, 1, s_panels + 1)
    s_rule = rule_on_edges(s_edges, quad.order)
    xi_edges = panel_edges(xi_min, 1.0, 1, Geometric(2.0, 0.0), breakpoints=(0.5, 0.75))
    th_edges = np.linspace(0, TWO_PI, 9)
    xi_rule = rule_on_edges(xi_edges, quad.order)
    th_rule = rule_on_edges(th_edges, quad.order)

    def integrand(s, xi, th):
        fr = evaluate_frame(curve, s)
        a0 = fr.gprime_norm - delta * xi * fr.kappa * np.cos(th)
        return np.abs(f_value(field, s, xi, th, frame=fr)) ** p * delta**2 * a0 * xi

    val = tensor_integrate(integrand, [s_rule, xi_rule, th_rule], workers)
    return val ** (1.0 / p)
