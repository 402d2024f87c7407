"""Asymptotic inductance expansion ``L(eps) = -(l/2pi) ln eps + L' + ...``.

Normalisation: mu_0 = 1 and unit circulation, so the inductance equals the
field energy of the potential with unit jump. Multiply by mu_0 for SI units.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .curve import arc_length, evaluate_frame
from .errors import DegenerateFit, EpsilonOutOfRange, ToleranceNotReached
from .quadrature import (BoxSampler, Geometric, McSpec, QuadratureSpec,
                         mc_integrate_region, outer_rule, panel_edges,
                         rule_on_edges, tensor_integrate)
from .singular_field import SingularField, grad_v
from .tube import invert_points

TWO_PI = 2.0 * np.pi
FOUR_PI2 = 4.0 * np.pi**2
SWEEP_COLUMNS = ("eps", "asymptotic", "oracle", "residual", "oracle_stderr")


@dataclass(frozen=True)
class LPrimeBreakdown:
    term_log: float
    term_phi: float
    term_tau: float
    term_tail: float
    length: float
    error: float = 0.0

    @property
    def total(self) -> float:
        return ((self.term_log + self.term_phi) + self.term_tau) + self.term_tail

    def as_dict(self):
        return {"term_log": self.term_log, "term_phi": self.term_phi,
                "term_tau": self.term_tau, "term_tail": self.term_tail,
                "L_prime": self.total, "length": self.length,
                "quadrature_error": self.error}


def _tensor(fn, curve, inner_axes, order, s_panels, workers):
    s_rule = outer_rule(fn, inner_axes, order, panels=s_panels, edges=curve.s_edges)
    return tensor_integrate(fn, [s_rule, *inner_axes], workers)


def _l_prime_terms(field: SingularField, order, s_panels, workers):
    curve = field.tube.curve
    delta = field.delta
    cut = field.cutoff
    th_rule = rule_on_edges(np.linspace(0.0, TWO_PI, 5), order)

    def phi_integrand(s, xi, th):
        fr = evaluate_frame(curve, s)
        a0 = fr.gprime_norm - delta * xi * fr.kappa * np.cos(th)
        _, dphi, _ = cut(xi)
        return a0 * xi * th**2 * dphi**2 / FOUR_PI2

    def tau_integrand(s, xi, th):
        fr = evaluate_frame(curve, s)
        a0 = fr.gprime_norm - delta * xi * fr.kappa * np.cos(th)
        phi, _, _ = cut(xi)
        return delta**2 * xi * fr.tau**2 * phi**2 / (FOUR_PI2 * a0)

    ramp = rule_on_edges(np.linspace(0.5, 0.75, 3), order)
    core = rule_on_edges(np.array([0.0, 0.25, 0.5, 0.625, 0.75]), order)
    term_phi = _tensor(phi_integrand, curve, [ramp, th_rule], order, s_panels, workers)
    if curve.planar:
        term_tau = 0.0
    else:
        term_tau = _tensor(tau_integrand, curve, [core, th_rule], order, s_panels, workers)
    xr, wr = ramp
    tail = float(np.dot(cut(xr)[0] ** 2 / xr, wr))
    return term_phi, term_tau, tail


def compute_l_prime(field: SingularField, quad: QuadratureSpec | None = None,
                    s_panels=None, rel_tol=1e-8, workers=None) -> LPrimeBreakdown:
    """Constant term L' and its four contributions.

    Error estimate: change of the quadrature sum when the order rises by 2;
    ToleranceNotReached if it exceeds ``rel_tol`` relative to the sum of
    magnitudes of the terms.
    """
    quad = quad or QuadratureSpec(order=16)
    length = arc_length(field.tube.curve, rel_tol=1e-13)
    lo = _l_prime_terms(field, quad.order, s_panels, workers)
    hi = _l_prime_terms(field, quad.order + 2, s_panels, workers)
    err = sum(abs(a - b) for a, b in zip(lo, hi))
    c = length / TWO_PI
    out = LPrimeBreakdown(term_log=c * np.log(field.delta / 2.0), term_phi=float(lo[0]),
                          term_tau=float(lo[1]), term_tail=c * lo[2], length=length,
                          error=float(err))
    scale = abs(out.term_log) + abs(out.term_phi) + abs(out.term_tau) + abs(out.term_tail)
    if err > rel_tol * scale:
        raise ToleranceNotReached(f"L' quadrature error {err:.2e} above {rel_tol:g} relative")
    return out


# ---------------------------------------------------------------------------
# assembled expansion


@dataclass(frozen=True)
class FitRecord:
    slope: float
    intercept: float
    max_residual: float
    residuals: tuple = ()


@dataclass(frozen=True)
class InductanceExpansion:
    log_coeff: float
    l_prime: LPrimeBreakdown
    delta: float
    correction: float | None = None
    correction_method: str | None = None
    table: tuple = ()
    fit: FitRecord | None = None

    @property
    def constant(self) -> float:
        return self.l_prime.total + (self.correction or 0.0)

    def total(self, eps) -> float:
        return asymptotic_total(self, eps)


def build_expansion(field: SingularField, quad=None, correction=None,
                    correction_method=None) -> InductanceExpansion:
    lp = compute_l_prime(field, quad)
    return InductanceExpansion(lp.length / TWO_PI, lp, field.delta, correction,
                               correction_method)


def asymptotic_total(expansion: InductanceExpansion, eps) -> float:
    """``-(l/2pi) ln eps + L'`` plus the correction when one is attached."""
    if not 0 < eps <= 0.5 * expansion.delta * (1 + 1e-12):
        raise EpsilonOutOfRange(f"eps={eps:g} outside (0, delta/2]")
    total = -expansion.log_coeff * np.log(eps) + expansion.l_prime.total
    if expansion.correction is not None:
        total += expansion.correction
    return float(total)


# ---------------------------------------------------------------------------
# direct energy of the singular field over the shell


@dataclass(frozen=True)
class EnergyEstimate:
    value: float
    error: float
    method: str


def _grad_sq_weighted(field, s, xi, th):
    fr = evaluate_frame(field.tube.curve, s)
    gv = grad_v(field, s, xi, th, frame=fr)
    a0 = fr.gprime_norm - field.delta * xi * fr.kappa * np.cos(th)
    return np.sum(gv * gv, axis=-1) * field.delta**2 * a0 * xi


def energy_parametric(field: SingularField, eps, order=16, s_panels=None,
                      xi_range=None, workers=None):
    """Energy of grad v over the shell by graded tensor quadrature."""
    delta = field.delta
    lo, hi = xi_range if xi_range is not None else (eps / delta, 1.0)
    xi_edges = panel_edges(lo, hi, 1, Geometric(2.0, 0.0), breakpoints=(0.5, 0.75))
    inner = [rule_on_edges(xi_edges, order),
             rule_on_edges(np.linspace(0.0, TWO_PI, 5), order)]
    return _tensor(lambda s, x, t: _grad_sq_weighted(field, s, x, t), field.tube.curve,
                   inner, order, s_panels, workers)


def tube_bounding_box(tube, pad=1.02):
    s = np.arange(1024) / 1024
    g = tube.curve.point(s)
    margin = tube.delta * pad + tube.curve.extrema.max_speed / 1024
    return g.min(axis=0) - margin, g.max(axis=0) + margin


def energy_cartesian_mc(field: SingularField, eps, spec: McSpec = McSpec(), workers=None):
    """Monte-Carlo energy: uniform box samples, rejection via the inverse map."""
    tube = field.tube
    lo, hi = tube_bounding_box(tube)

    def fn(x):
        s, xi, th, inside = invert_points(tube, 0.0, x, check_ambiguity=False)
        keep = inside & (xi * tube.delta >= eps)
        out = np.zeros(len(x))
        if np.any(keep):
            gv = grad_v(field, s[keep], xi[keep], th[keep])
            out[keep] = np.sum(gv * gv, axis=-1)
        return out

    return mc_integrate_region(fn, BoxSampler(lo, hi), spec, workers)


def direct_singular_energy(field: SingularField, eps, method="parametric",
                           spec=None, workers=None) -> EnergyEstimate:
    """Energy of grad v over the shell eps < r < delta.

    ``method="parametric"`` uses graded tensor quadrature (error = change
    with order + 2); ``"cartesian_mc"`` samples ambient space and reports the
    Monte-Carlo standard error.
    """
    if not 0 < eps <= 0.5 * field.delta * (1 + 1e-12):
        raise EpsilonOutOfRange(f"eps={eps:g} outside (0, delta/2]")
    if method == "parametric":
        spec = spec or QuadratureSpec(order=16)
        v1 = energy_parametric(field, eps, spec.order, workers=workers)
        v2 = energy_parametric(field, eps, spec.order + 2, workers=workers)
        err = abs(v2 - v1)
        if spec.rel_tol is not None and err > spec.rel_tol * abs(v1):
            raise ToleranceNotReached(f"energy quadrature error {err:.2e}")
        return EnergyEstimate(float(v1), float(err), method)
    if method == "cartesian_mc":
        res = energy_cartesian_mc(field, eps, spec or McSpec(), workers)
        return EnergyEstimate(res.value, res.std_error, method)
    raise ValueError(f"unknown energy method {method!r}")


# ---------------------------------------------------------------------------
# sweeps and fits


def default_eps_sweep(delta, count=5):
    """eps_k = delta / 2^(k+1), k = 0 .. count-1."""
    return [delta / 2.0 ** (k + 1) for k in range(count)]


def fit_log_slope(points: Sequence[tuple[float, float]], sigma=None) -> FitRecord:
    """Least squares of L against ln(1/eps); optional 1/sigma weights."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("need at least three (eps, L) points")
    eps, L = pts[:, 0], pts[:, 1]
    if np.unique(eps).size < 2:
        raise DegenerateFit("all eps values are equal")
    if np.unique(eps).size < 3:
        raise ValueError("need at least three distinct eps values")
    x = np.log(1.0 / eps)
    A = np.column_stack([x, np.ones_like(x)])
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    coef, *_ = np.linalg.lstsq(A * w[:, None], L * w, rcond=None)
    res = L - A @ coef
    return FitRecord(float(coef[0]), float(coef[1]), float(np.max(np.abs(res))),
                     tuple(float(r) for r in res))


@dataclass(frozen=True)
class SweepRow:
    eps: float
    asymptotic: float
    oracle: float
    residual: float
    oracle_stderr: float


def energy_sweep(field: SingularField, eps_list, expansion: InductanceExpansion | None = None,
                 method="parametric", spec=None, workers=None):
    """Oracle energies against the asymptotic total, one row per eps (in order)."""
    expansion = expansion or build_expansion(field)
    rows = []
    for eps in eps_list:
        est = direct_singular_energy(field, eps, method, spec, workers)
        asym = expansion.total(eps) if expansion.correction is None else \
            asymptotic_total(replace(expansion, correction=None), eps)
        rows.append(SweepRow(float(eps), asym, est.value, est.value - asym, est.error))
    return rows


def format_number(x: float) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([format_number(getattr(r, c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(sweep_csv(rows))
