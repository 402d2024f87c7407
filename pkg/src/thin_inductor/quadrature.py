"""Tensor-product Gauss-Legendre quadrature and Monte-Carlo integration.

Both integrators are deterministic: panel partial sums (and MC batches) are
reduced in a fixed index order whatever the number of workers, so results
are bitwise reproducible. Monte-Carlo streams come from numpy's Philox
counter-based generator, one independent stream per batch.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ToleranceNotReached


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Nodes and weights of the n-point rule on [-1, 1] (read-only arrays)."""
    if n < 1:
        raise ValueError("rule order must be positive")
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class Geometric:
    """Panels shrinking geometrically toward ``singular_at``.

    Panel edges sit at ``singular_at + (far - singular_at) * ratio**-k``.
    ``min_fraction`` bounds the smallest panel when the singular point is
    inside the closed interval.
    """

    ratio: float = 2.0
    singular_at: float = 0.0
    min_fraction: float = 1e-6

    def __post_init__(self):
        if not 1 < self.ratio <= 4:
            raise ValueError("geometric ratio must lie in (1, 4]")


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 16
    panels: int = 1
    grading: Geometric | None = None
    rel_tol: float | None = None

    def __post_init__(self):
        if not 2 <= self.order <= 64:
            raise ValueError("quadrature order must lie in [2, 64]")
        if self.panels < 1:
            raise ValueError("panel count must be positive")


def panel_edges(a, b, panels=1, grading: Geometric | None = None, breakpoints=()):
    """Panel edges on [a, b]: uniform, or geometric toward a singular point.

    ``breakpoints`` inside (a, b) are always kept as edges; each resulting
    sub-interval is split into ``panels`` uniform pieces unless graded.
    """
    a, b = float(a), float(b)
    if grading is None:
        cuts = sorted({a, b, *(float(p) for p in breakpoints if a < p < b)})
        edges = [cuts[0]]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            edges.extend(np.linspace(lo, hi, panels + 1)[1:].tolist())
        return np.array(edges)
    c = grading.singular_at
    pts = {a, b, *(float(p) for p in breakpoints if a < p < b)}
    floor = grading.min_fraction * (b - a)
    for far in (a, b):
        span = far - c
        if span == 0:
            continue
        k = 0
        while True:
            e = c + span * grading.ratio ** (-k)
            if abs(e - c) < floor:
                break
            if a < e < b:
                pts.add(e)
            if (span > 0 and e <= a) or (span < 0 and e >= b):
                break
            k += 1
    if a < c < b:
        pts.add(c)
    edges = np.array(sorted(pts))
    if panels > 1:
        fine = [edges[0]]
        for lo, hi in zip(edges[:-1], edges[1:]):
            fine.extend(np.linspace(lo, hi, panels + 1)[1:].tolist())
        edges = np.array(fine)
    return edges


def rule_on_edges(edges, order):
    """Flattened composite Gauss-Legendre nodes/weights over the given panels."""
    x, w = gauss_legendre(order)
    edges = np.asarray(edges, dtype=float)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get("THIN_INDUCTOR_WORKERS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def ordered_sum(fn: Callable[[int], float], n_chunks: int, workers=None) -> float:
    """Evaluate ``fn(i)`` for each chunk and sum in index order."""
    w = _workers(workers)
    if w == 1 or n_chunks == 1:
        parts = [fn(i) for i in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=w) as pool:
            parts = list(pool.map(fn, range(n_chunks)))
    total = 0.0
    for p in parts:
        total = total + p
    return total


def tensor_integrate(fn, axes: Sequence[tuple[np.ndarray, np.ndarray]], workers=None,
                     chunk_axis0=8):
    """Integrate ``fn(*coords)`` against per-axis (nodes, weights) rules.

    ``fn`` receives flattened coordinate arrays and returns values of the
    same length (or ``(N, k)`` for vector-valued integrands). Work is chunked
    along the first axis, ``chunk_axis0`` nodes at a time.
    """
    n0 = len(axes[0][0])
    n_chunks = -(-n0 // chunk_axis0)
    rest = [a[0] for a in axes[1:]]
    rest_w = [a[1] for a in axes[1:]]
    if rest:
        grids = np.meshgrid(*rest, indexing="ij")
        rest_flat = [g.ravel() for g in grids]
        rest_wt = np.ones(1)
        for wi in rest_w:
            rest_wt = np.multiply.outer(rest_wt, wi)
        rest_wt = rest_wt.ravel()
    else:
        rest_flat, rest_wt = [], np.ones(1)

    def chunk(i):
        x0 = axes[0][0][i * chunk_axis0:(i + 1) * chunk_axis0]
        w0 = axes[0][1][i * chunk_axis0:(i + 1) * chunk_axis0]
        m = len(rest_wt)
        coords = [np.repeat(x0, m)] + [np.tile(r, len(x0)) for r in rest_flat]
        wt = np.multiply.outer(w0, rest_wt).ravel()
        vals = np.asarray(fn(*coords))
        if vals.ndim == 1:
            return float(np.dot(vals, wt))
        return wt @ vals

    return ordered_sum(chunk, n_chunks, workers)


def inner_marginal(fn, s, inner_axes):
    """Integral of ``fn(s, *inner)`` over the inner tensor rule, for each ``s``."""
    s = np.asarray(s, dtype=float)
    grids = np.meshgrid(*[a[0] for a in inner_axes], indexing="ij")
    flat = [g.ravel() for g in grids]
    wt = np.ones(1)
    for a in inner_axes:
        wt = np.multiply.outer(wt, a[1])
    wt = wt.ravel()
    m = len(wt)
    vals = np.asarray(fn(np.repeat(s, m), *[np.tile(f, len(s)) for f in flat]))
    return vals.reshape(len(s), m) @ wt


def adaptive_edges(fn, a, b, order=16, rel_tol=1e-12, initial=8, max_panels=4096):
    """Panel edges on [a, b] refined by bisection until each panel's
    ``|Q(order) - Q(order + 2)|`` is below ``rel_tol`` times the total.

    ``fn`` maps a 1-D array of nodes to values of shape ``(n,)`` or
    ``(n, k)``; with several components every one must meet the tolerance
    relative to its own total. The result depends only on the arguments,
    so downstream sums are reproducible.
    """
    edges = np.linspace(a, b, initial + 1)
    while True:
        n_pan = len(edges) - 1
        half = 0.5 * np.diff(edges)
        est = []
        for q in (order, order + 2):
            vals = np.asarray(fn(rule_on_edges(edges, q)[0]), dtype=float)
            vals = vals.reshape(n_pan, q, -1)
            est.append(np.einsum("pqk,q->pk", vals, gauss_legendre(q)[1]) * half[:, None])
        lo, hi = est
        scale = np.maximum(np.sum(np.abs(hi), axis=0), 1e-300)
        bad = np.flatnonzero(np.any(np.abs(hi - lo) > rel_tol * scale, axis=1))
        if bad.size == 0:
            return edges
        if n_pan + bad.size > max_panels:
            raise ToleranceNotReached(f"adaptive refinement exceeded {max_panels} panels")
        mids = 0.5 * (edges[bad] + edges[bad + 1])
        edges = np.sort(np.concatenate([edges, mids]))


def outer_rule(fn, inner_axes, order, a=0.0, b=1.0, panels=None, edges=None,
               rel_tol=1e-12):
    """Rule for the outer variable of ``fn(s, *inner)``.

    Precedence: explicit ``panels`` (uniform), then explicit ``edges``,
    otherwise panels refined adaptively on the inner marginal.
    """
    if panels is not None:
        return rule_on_edges(np.linspace(a, b, panels + 1), order)
    if edges is not None:
        return rule_on_edges(edges, order)
    edges = adaptive_edges(lambda s: inner_marginal(fn, s, inner_axes), a, b, order, rel_tol)
    return rule_on_edges(edges, order)


def integrate_box(fn, box, spec: QuadratureSpec = QuadratureSpec(), breakpoints=None,
                  gradings=None, workers=None):
    """Panel-summed Gauss-Legendre over an axis-aligned box.

    Parameters
    ----------
    fn : callable
        Integrand taking one flattened coordinate array per axis.
    box : sequence of (lo, hi)
    spec : QuadratureSpec
        ``spec.grading`` applies to every axis unless ``gradings`` overrides
        it per axis (``None`` entries mean uniform).
    breakpoints : per-axis sequences of interior panel edges.

    Returns
    -------
    (value, error_estimate) with the estimate ``|Q(order) - Q(order + 2)|``.
    """
    dim = len(box)
    breakpoints = breakpoints or [()] * dim
    gradings = gradings if gradings is not None else [spec.grading] * dim
    edges = [panel_edges(lo, hi, spec.panels, g, bp)
             for (lo, hi), g, bp in zip(box, gradings, breakpoints)]
    value = tensor_integrate(fn, [rule_on_edges(e, spec.order) for e in edges], workers)
    check = tensor_integrate(fn, [rule_on_edges(e, spec.order + 2) for e in edges], workers)
    err = float(np.max(np.abs(np.asarray(check) - np.asarray(value))))
    if spec.rel_tol is not None and err > spec.rel_tol * max(float(np.max(np.abs(value))), 1e-300):
        raise ToleranceNotReached(
            f"box quadrature error {err:.3e} exceeds rel_tol {spec.rel_tol:g}")
    return value, err


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McSpec:
    samples: int = 100_000
    seed: int = 12345
    report_variance: bool = True
    batch_size: int = 65_536

    def __post_init__(self):
        if self.samples < 1000:
            raise ValueError("Monte-Carlo needs at least 1000 samples")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class BoxSampler:
    """Uniform samples in an axis-aligned box (density 1/volume)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def sample(self, rng, n):
        x = self.lo + (self.hi - self.lo) * rng.random((n, len(self.lo)))
        return x, np.full(n, 1.0 / self.volume)


@dataclass(frozen=True)
class BallSampler:
    """Uniform samples in a ball (density 1/volume)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def volume(self):
        d = len(self.center)
        from math import gamma, pi
        return pi ** (d / 2) / gamma(d / 2 + 1) * self.radius**d

    def sample(self, rng, n):
        d = len(self.center)
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1)[:, None]
        r = self.radius * rng.random(n) ** (1.0 / d)
        return self.center + g * r[:, None], np.full(n, 1.0 / self.volume)


@dataclass(frozen=True)
class McResult:
    value: float
    std_error: float
    samples: int

    def __iter__(self):
        return iter((self.value, self.std_error))


def batch_generators(seed: int, n_batches: int):
    """Independent Philox streams, one per batch, fixed by ``seed`` alone."""
    children = np.random.SeedSequence(seed).spawn(n_batches)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def mc_integrate_region(fn, sampler, spec: McSpec = McSpec(), workers=None) -> McResult:
    """Importance-sampled estimate of the integral of ``fn`` over the sampler support.

    ``fn`` maps an ``(n, d)`` array to ``n`` values and must return 0 for
    points outside the region of interest (rejection).
    """
    n_batches = -(-spec.samples // spec.batch_size)
    sizes = [min(spec.batch_size, spec.samples - i * spec.batch_size) for i in range(n_batches)]
    gens = batch_generators(spec.seed, n_batches)

    def batch(i):
        x, dens = sampler.sample(gens[i], sizes[i])
        y = np.asarray(fn(x), dtype=float) / dens
        return np.array([y.sum(), (y * y).sum()])

    s = ordered_sum(batch, n_batches, workers)
    n = spec.samples
    mean = s[0] / n
    var = max(s[1] / n - mean * mean, 0.0) * n / (n - 1)
    return McResult(float(mean), float(np.sqrt(var / n)) if spec.report_variance else float("nan"), n)
