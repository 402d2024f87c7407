"""Cut surface, double-layer potential w1, Newtonian potential w2 and the
correction terms of the inductance expansion; plus a filament oracle.

Orientation. The cut surface Sigma is the theta = 0 leaf Sigma0 of the
tube (xi in (0, 1)) completed by a spanning surface Sigma' of its inner
edge ``g + delta nu``. Its unit normal ``n`` points along ``+b``. The
singular potential v = theta phi / (2 pi) increases by ``phi`` when Sigma is
crossed against ``n``; w1 is built with the same orientation, so that
``u = v + w1 + w2`` jumps by exactly 1 across all of Sigma and coincides
with the solid-angle potential of the filament ``gamma``.

Axisymmetric tubes (circle preset) use closed-form ring kernels in the
meridian half-plane; every other curve goes through generic parametric
quadrature.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ellipe, ellipkm1

from .curve import ClosedCurve, FrenetData, evaluate_frame, frame_scalar_derivatives
from .errors import (InductorError, MeshBoundaryMismatch, MeshFormatError,
                     OffsetSelfIntersects, OffsetUnstable, TooCloseToSurface)
from .quadrature import Geometric, gauss_legendre, panel_edges, rule_on_edges
from .singular_field import (FD_STEP, SingularField, dv_dn_on_sigma0, f_times_jacobian,
                             f_value)
from .tube import invert_points

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi
BOUNDARY_TOL = 1e-6     # x delta, Sigma' boundary vs offset curve
TOO_CLOSE = 0.02        # x delta, w1 accuracy guard
NEAR_FIELD = 0.05       # x delta, w2 near/far switch
RAMP = (0.5, 0.625, 0.75)


# ---------------------------------------------------------------------------
# triangle meshes and the Sigma' file format

_HEADER = re.compile(r"sigma_prime v=(\d+) f=(\d+)")
_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_VERTEX = re.compile(rf"\s*({_FLOAT})\s+({_FLOAT})\s+({_FLOAT})\s*")
_FACE = re.compile(r"\s*(\d+)\s+(\d+)\s+(\d+)\s*")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        fc = np.asarray(self.faces)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 3:
            raise MeshFormatError("vertices must be an (nv >= 3, 3) array")
        if fc.ndim != 2 or fc.shape[1] != 3 or len(fc) < 1:
            raise MeshFormatError("faces must be an (nf >= 1, 3) array")
        if not np.issubdtype(fc.dtype, np.integer):
            raise MeshFormatError("face indices must be integers")
        if fc.min() < 0 or fc.max() >= len(v):
            raise MeshFormatError("face index out of range")
        if np.any((fc[:, 0] == fc[:, 1]) | (fc[:, 1] == fc[:, 2]) | (fc[:, 0] == fc[:, 2])):
            raise MeshFormatError("face with repeated vertex")
        if not np.all(np.isfinite(v)):
            raise MeshFormatError("non-finite vertex coordinate")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", fc.astype(np.int64))

    @cached_property
    def _cross(self):
        p = self.vertices[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @property
    def areas(self):
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @property
    def normals(self):
        return self._cross / np.linalg.norm(self._cross, axis=1)[:, None]

    @property
    def centroids(self):
        return self.vertices[self.faces].mean(axis=1)

    def boundary_edges(self):
        """Directed edges used by exactly one face (in face orientation)."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        key = np.sort(e, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshFormatError("non-manifold edge shared by more than two faces")
        inv = inv.ravel()
        interior = counts[inv] == 2
        # consistent orientation: an interior edge must appear once per direction
        fwd = e[interior]
        pairs = {}
        for a, b in fwd:
            pairs[(int(a), int(b))] = pairs.get((int(a), int(b)), 0) + 1
        if any(v > 1 for v in pairs.values()):
            raise MeshFormatError("faces are not consistently oriented")
        return e[~interior]


def parse_mesh(text: str) -> TriangleMesh:
    """Strict parser for the ``sigma_prime v=<nv> f=<nf>`` format."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise MeshFormatError("empty mesh file")
    m = _HEADER.fullmatch(lines[0])
    if m is None:
        raise MeshFormatError(f"bad header line: {lines[0]!r}")
    nv, nf = int(m.group(1)), int(m.group(2))
    if len(lines) != 1 + nv + nf:
        raise MeshFormatError(f"expected {1 + nv + nf} lines, found {len(lines)}")
    verts = np.empty((nv, 3))
    for i in range(nv):
        mv = _VERTEX.fullmatch(lines[1 + i])
        if mv is None:
            raise MeshFormatError(f"bad vertex line {2 + i}: {lines[1 + i]!r}")
        verts[i] = [float(g) for g in mv.groups()]
    faces = np.empty((nf, 3), dtype=np.int64)
    for j in range(nf):
        mf = _FACE.fullmatch(lines[1 + nv + j])
        if mf is None:
            raise MeshFormatError(f"bad face line {2 + nv + j}: {lines[1 + nv + j]!r}")
        faces[j] = [int(g) for g in mf.groups()]
    return TriangleMesh(verts, faces)


def format_mesh(mesh: TriangleMesh) -> str:
    out = [f"sigma_prime v={len(mesh.vertices)} f={len(mesh.faces)}"]
    out += [" ".join(format(c, ".17g") for c in p) for p in mesh.vertices]
    out += [" ".join(str(int(i)) for i in fc) for fc in mesh.faces]
    return "\n".join(out) + "\n"


def read_mesh(path) -> TriangleMesh:
    with open(path, encoding="ascii") as fh:
        return parse_mesh(fh.read())


def write_mesh(mesh: TriangleMesh, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_mesh(mesh))


# ---------------------------------------------------------------------------
# cut surface


@dataclass(frozen=True, eq=False)
class CutSurface:
    field: SingularField
    mesh: TriangleMesh
    axisymmetric: bool
    boundary_deviation: float

    @property
    def tube(self):
        return self.field.tube

    @property
    def delta(self):
        return self.field.delta

    def sigma0_area(self, xi_min=0.5, order=16):
        """Area of the Sigma0 patch restricted to xi in (xi_min, 1)."""
        curve = self.tube.curve
        s, ws = rule_on_edges(curve.s_edges, order)
        xi, wx = rule_on_edges(np.array([xi_min, 1.0]), order)
        S, X = np.meshgrid(s, xi, indexing="ij")
        fr = evaluate_frame(curve, S)
        a = fr.gprime_norm - self.delta * X * fr.kappa
        dA = self.delta * np.sqrt(a**2 + (self.delta * X * fr.tau) ** 2)
        return float(ws @ dA @ wx)

    def area(self, xi_min=0.5):
        return self.sigma0_area(xi_min) + float(self.mesh.areas.sum())


def _offset_points(curve, delta, s):
    fr = evaluate_frame(curve, s)
    return curve.point(s) + delta * fr.nu


def _offset_samples(curve, delta, tol):
    """Parameters on the offset curve with chord sagitta below ``tol``."""
    s = np.arange(8192) / 8192
    fr = evaluate_frame(curve, s)
    speed = fr.gprime_norm - delta * fr.kappa            # |d/ds (g + delta nu)| for tau = 0
    k_arc = fr.kappa / np.maximum(speed, 1e-300)         # curvature of the offset curve
    density = np.sqrt(np.maximum(k_arc, 1e-12) / (8.0 * tol)) * speed
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) / 8192)])
    total = cum[-1] + 0.5 * (density[-1] + density[0]) / 8192
    n = max(64, int(np.ceil(total)))
    cum = np.append(cum, total)
    grid = np.append(s, 1.0)
    return np.interp(np.arange(n) / n * total, cum, grid)


def _plane_basis(normal):
    normal = normal / np.linalg.norm(normal)
    helper = np.array([1.0, 0, 0]) if abs(normal[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(normal, e1), normal


def _triangulate_planar(curve, delta, tol):
    import shapely

    s = _offset_samples(curve, delta, 0.5 * tol * delta)
    pts = _offset_points(curve, delta, s)
    e1, e2, _ = _plane_basis(np.mean(evaluate_frame(curve, s).b, axis=0))
    origin = pts.mean(axis=0)
    uv = np.column_stack([(pts - origin) @ e1, (pts - origin) @ e2])
    ring = shapely.LinearRing(uv)
    if not ring.is_simple:
        raise OffsetSelfIntersects("inner offset curve g + delta nu self-intersects")
    poly = shapely.Polygon(uv)
    if not poly.is_valid:
        raise OffsetSelfIntersects("inner offset curve does not bound a simple region")
    tris = shapely.get_parts(shapely.constrained_delaunay_triangles(poly))
    index = {(float(a), float(b)): i for i, (a, b) in enumerate(uv)}
    faces = []
    for t in tris:
        c = np.asarray(t.exterior.coords)[:3]
        try:
            faces.append([index[(float(a), float(b))] for a, b in c])
        except KeyError as exc:  # pragma: no cover - CDT adds no Steiner points
            raise MeshBoundaryMismatch("triangulation introduced new vertices") from exc
    faces = np.asarray(faces, dtype=np.int64)
    p = uv[faces]
    orient = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = orient < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    # CDT adds no Steiner points, so every vertex is an exact offset-curve sample
    return TriangleMesh(pts, faces)


def _nearest_offset_param(curve, delta, x, n=4096):
    s = np.arange(n) / n
    P = _offset_points(curve, delta, s)
    d2 = np.sum(P * P, 1)[None, :] - 2 * x @ P.T
    s0 = s[np.argmin(d2, axis=1)]
    # golden-section-free refinement: a few Newton-like secant steps on |P(s) - x|^2
    h = 1e-6
    for _ in range(20):
        fp = np.sum((_offset_points(curve, delta, s0 + h) - x) ** 2, 1)
        fm = np.sum((_offset_points(curve, delta, s0 - h) - x) ** 2, 1)
        f0 = np.sum((_offset_points(curve, delta, s0) - x) ** 2, 1)
        d1 = (fp - fm) / (2 * h)
        d2c = (fp - 2 * f0 + fm) / h**2
        step = np.where(d2c > 0, d1 / np.where(d2c > 0, d2c, 1.0), 0.0)
        step = np.clip(step, -1.0 / n, 1.0 / n)
        s0 = np.mod(s0 - step, 1.0)
        if np.max(np.abs(step)) < 1e-13:
            break
    dist = np.linalg.norm(_offset_points(curve, delta, s0) - x, axis=1)
    return s0, dist


def _check_mesh(field: SingularField, mesh: TriangleMesh, tol):
    curve, delta = field.tube.curve, field.delta
    be = mesh.boundary_edges()
    if len(be) == 0:
        raise MeshBoundaryMismatch("mesh has no boundary")
    # one closed boundary loop
    nxt = {int(a): int(b) for a, b in be}
    if len(nxt) != len(be):
        raise MeshBoundaryMismatch("boundary is not a simple loop")
    start = int(be[0, 0])
    cur, steps = nxt[start], 1
    while cur != start and steps <= len(be):
        cur = nxt.get(cur, -1)
        steps += 1
        if cur == -1:
            raise MeshBoundaryMismatch("open boundary chain")
    if steps != len(be):
        raise MeshBoundaryMismatch("boundary has more than one loop")
    V = mesh.vertices
    probe = np.concatenate([V[be[:, 0]], 0.5 * (V[be[:, 0]] + V[be[:, 1]])])
    s_b, dist = _nearest_offset_param(curve, delta, probe)
    dev = float(dist.max())
    if dev > tol * delta:
        raise MeshBoundaryMismatch(
            f"Sigma' boundary deviates {dev:.3e} from g + delta nu (limit {tol * delta:.3e})")
    gaps = np.diff(np.sort(s_b[: len(be)]))
    if len(gaps) and max(gaps.max(), 1 - np.ptp(s_b[: len(be)])) > 0.05:
        raise MeshBoundaryMismatch("Sigma' boundary does not cover the whole offset curve")
    # orientation at the junction: face normals agree with the Sigma0 normal there
    face_of_edge = {}
    for k, fc in enumerate(mesh.faces):
        for a, b in ((fc[0], fc[1]), (fc[1], fc[2]), (fc[2], fc[0])):
            face_of_edge[(int(a), int(b))] = k
    fidx = np.array([face_of_edge[(int(a), int(b))] for a, b in be])
    from .singular_field import sigma0_normal
    n0 = sigma0_normal(field, s_b[: len(be)], np.ones(len(be)))
    dots = np.sum(mesh.normals[fidx] * n0, axis=1)
    if np.any(dots <= 0):
        raise MeshBoundaryMismatch("Sigma' normals disagree with the Sigma0 orientation")
    return dev


def build_cut_surface(field: SingularField, mesh: TriangleMesh | None = None,
                      tol=BOUNDARY_TOL) -> CutSurface:
    """Cut surface: Sigma0 (parametric) plus a triangulated Sigma'.

    Without ``mesh`` the curve must be planar; Sigma' is then the flat region
    inside the offset curve ``g + delta nu``.
    """
    curve = field.tube.curve
    if mesh is None:
        if not curve.planar:
            raise ValueError("non-planar curves need a user-supplied Sigma' mesh")
        mesh = _triangulate_planar(curve, field.delta, tol)
        auto = True
    else:
        auto = False
    dev = _check_mesh(field, mesh, tol)
    return CutSurface(field, mesh, bool(auto and curve.axisymmetric), dev)


# ---------------------------------------------------------------------------
# ring kernels (meridian half-plane of an axisymmetric tube)


def _ring_G(rp, zp, rho, z):
    """(1/4pi) * integral over the ring of 1/|x - y| (unit line density per radian)."""
    dz = z - zp
    A = (rho + rp) ** 2 + dz**2
    B = (rho - rp) ** 2 + dz**2
    return ellipkm1(B / A) / (np.pi * np.sqrt(A))


def _ring_dG(rp, zp, rho, z):
    """Gradient (d/drho, d/dz) of ``_ring_G`` with respect to the target."""
    dz = z - zp
    A = (rho + rp) ** 2 + dz**2
    B = (rho - rp) ** 2 + dz**2
    K, E = ellipkm1(B / A), ellipe(1.0 - B / A)
    sA = np.sqrt(A)
    dGz = -dz * E / (np.pi * B * sA)
    small = rho < 1e-7 * np.maximum(rp, 1e-300)
    safe = np.where(small, 1.0, rho)
    dGr = -(K - (rp**2 - safe**2 + dz**2) / B * E) / (2 * np.pi * safe * sA)
    q = rp**2 + dz**2
    axis_lim = -0.5 * rho * (2 * dz**2 - rp**2) / (2 * q**2.5)
    return np.where(small, axis_lim, dGr), dGz


def _ring_dipole(rp, rho, z):
    """(1/4pi) * integral over a ring at z' = 0 of z / |x - y|^3."""
    A = (rho + rp) ** 2 + z**2
    B = (rho - rp) ** 2 + z**2
    return z * ellipe(1.0 - B / A) / (np.pi * B * np.sqrt(A))


def _loop_field(a, rho, z):
    """Field (H_rho, H_z) of a unit current loop of radius a in z = 0,
    circulating along +phi (right-handed about +z)."""
    A = (a + rho) ** 2 + z**2
    B = (a - rho) ** 2 + z**2
    K, E = ellipkm1(B / A), ellipe(1.0 - B / A)
    sA = np.sqrt(A)
    Hz = (K + (a * a - rho * rho - z * z) / B * E) / (TWO_PI * sA)
    small = rho < 1e-7 * a
    safe = np.where(small, 1.0, rho)
    Hr = z / (TWO_PI * safe * sA) * (-K + (a * a + safe * safe + z * z) / B * E)
    Hr = np.where(small, 0.75 * a * a * z * rho / (a * a + z * z) ** 2.5, Hr)
    return Hr, Hz


@dataclass(frozen=True)
class _Axis:
    center: np.ndarray
    R: float


def _axis_of(curve: ClosedCurve) -> _Axis:
    return _Axis(np.asarray(curve.params.get("center", (0, 0, 0)), dtype=float),
                 float(curve.params["R"]))


def _to_meridian(ax: _Axis, x):
    d = np.atleast_2d(x) - ax.center
    rho = np.hypot(d[:, 0], d[:, 1])
    return rho, d[:, 2], d


def _from_meridian(d, rho, g_rho, g_z):
    """Cylindrical gradient components back to Cartesian."""
    safe = np.where(rho > 0, rho, 1.0)
    er = np.where(rho[:, None] > 0, np.column_stack([d[:, 0] / safe, d[:, 1] / safe,
                                                     np.zeros_like(rho)]), 0.0)
    out = er * g_rho[:, None]
    out[:, 2] += g_z
    return out


# ---------------------------------------------------------------------------
# graded rules centred on a target


def _graded(a, b, centers, breakpoints=(), min_fraction=1e-6, ratio=2.0, panels=1):
    """Panel edges on [a, b] refined geometrically toward each centre."""
    pts = {float(a), float(b), *(float(p) for p in breakpoints if a < p < b)}
    for c in centers:
        c = float(np.clip(c, a, b))
        pts.update(panel_edges(a, b, 1, Geometric(ratio, c, min_fraction)).tolist())
    edges = np.array(sorted(pts))
    edges = edges[np.concatenate([[True], np.diff(edges) > 1e-15 * (b - a)])]
    if panels > 1:
        fine = [edges[0]]
        for lo, hi in zip(edges[:-1], edges[1:]):
            fine.extend(np.linspace(lo, hi, panels + 1)[1:].tolist())
        edges = np.array(fine)
    return edges


def _min_frac(dist, span, floor=1e-7):
    return float(np.clip(0.25 * dist / span, floor, 0.5))


# ---------------------------------------------------------------------------
# w1: double layer with density 1 - phi over Sigma


def _density(field, xi):
    return 1.0 - field.cutoff(xi)[0]


def distance_to_sigma(surface: CutSurface, x):
    """Distance from points to the part of Sigma carrying density (xi >= 1/2 and Sigma')."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    delta = surface.delta
    if surface.axisymmetric:
        ax = _axis_of(surface.tube.curve)
        rho, z, _ = _to_meridian(ax, x)
        edge = ax.R - 0.5 * delta
        return np.where(rho <= edge, np.abs(z), np.hypot(rho - edge, z))
    d_mesh = _point_triangle_distance(x, surface.mesh)
    d_s0 = _distance_to_sigma0(surface, x)
    return np.minimum(d_mesh, d_s0)


def _distance_to_sigma0(surface, x, order=8):
    curve, delta = surface.tube.curve, surface.delta
    s = np.arange(512) / 512
    xi = np.linspace(0.5, 1.0, 33)
    S, X = np.meshgrid(s, xi, indexing="ij")
    fr = evaluate_frame(curve, S)
    P = (curve.point(S) + delta * X[..., None] * fr.nu).reshape(-1, 3)
    d2 = np.sum(P * P, 1)[None, :] - 2 * x @ P.T + np.sum(x * x, 1)[:, None]
    coarse = np.sqrt(np.maximum(d2.min(axis=1), 0))
    # refine with the tube inverse where the point projects onto the leaf
    sx, xx, th, _ = invert_points(surface.tube, 0.0, x, check_ambiguity=False)
    fr0 = evaluate_frame(curve, sx)
    d = x - curve.point(sx)
    along_nu = np.sum(d * fr0.nu, 1)
    along_b = np.sum(d * fr0.b, 1)
    inside_leaf = (along_nu >= 0.5 * delta) & (along_nu <= delta)
    return np.where(inside_leaf, np.minimum(np.abs(along_b), coarse), coarse)


def _point_triangle_distance(x, mesh: TriangleMesh, chunk=256):
    """Exact Euclidean distance from each point to the triangle set."""
    P = mesh.vertices[mesh.faces]
    A, B, C = P[:, 0], P[:, 1], P[:, 2]
    out = np.empty(len(x))
    for lo in range(0, len(x), chunk):
        q = x[lo:lo + chunk, None, :]
        out[lo:lo + chunk] = np.sqrt(np.min(_tri_dist2(q, A, B, C), axis=1))
    return out


def _seg_dist2(q, a, b):
    ab = b - a
    t = np.clip(np.sum((q - a) * ab, -1) / np.maximum(np.sum(ab * ab, -1), 1e-300), 0, 1)
    return np.sum((q - a - t[..., None] * ab) ** 2, -1)


def _tri_dist2(q, A, B, C):
    n = np.cross(B - A, C - A)
    nn = np.sum(n * n, -1)
    w = q - A
    dist_plane = np.sum(w * n, -1) / np.sqrt(nn)
    proj = q - (np.sum(w * n, -1) / nn)[..., None] * n
    # barycentric inside test
    def side(p, u, v):
        return np.sum(np.cross(v - u, p - u) * n, -1)
    inside = (side(proj, A, B) >= 0) & (side(proj, B, C) >= 0) & (side(proj, C, A) >= 0)
    edge = np.minimum(np.minimum(_seg_dist2(q, A, B), _seg_dist2(q, B, C)), _seg_dist2(q, C, A))
    return np.where(inside, dist_plane**2, edge)


def _solid_angle_triangles(x, mesh: TriangleMesh):
    """Signed solid angle of each triangle seen from x (Van Oosterom-Strackee),
    summed; positive when x lies on the side opposite to the face normal."""
    P = mesh.vertices[mesh.faces]
    out = np.empty(len(x))
    for i, q in enumerate(x):
        r1, r2, r3 = P[:, 0] - q, P[:, 1] - q, P[:, 2] - q
        l1, l2, l3 = (np.linalg.norm(r, axis=1) for r in (r1, r2, r3))
        num = np.sum(r1 * np.cross(r2, r3), axis=1)
        den = l1 * l2 * l3 + np.sum(r1 * r2, 1) * l3 + np.sum(r1 * r3, 1) * l2 \
            + np.sum(r2 * r3, 1) * l1
        out[i] = np.sum(2.0 * np.arctan2(num, den))
    return out


def _sigma0_rule(surface, x0, xi_lo, xi_hi, breakpoints, order):
    """Graded (s, xi) rule for the leaf, refined toward the projection of x0."""
    curve, delta, tube = surface.tube.curve, surface.delta, surface.tube
    s0, xi_t, th, _ = invert_points(tube, 0.0, x0[None, :], check_ambiguity=False)
    s0 = float(s0[0])
    fr = evaluate_frame(curve, s0)
    d = x0 - curve.point(s0)
    xi_c = float(np.sum(d * fr.nu)) / delta
    xi_c = float(np.clip(xi_c, xi_lo, xi_hi))
    dist = float(np.linalg.norm(d - xi_c * delta * fr.nu))  # distance to the leaf
    speed = float(fr.gprime_norm)
    sb = [(e - s0 + 0.5) % 1.0 for e in curve.s_edges[1:-1]]
    s_edges = _graded(0.0, 1.0, [0.5], sb, _min_frac(dist / speed, 1.0)) + s0 - 0.5
    x_edges = _graded(xi_lo, xi_hi, [xi_c], breakpoints, _min_frac(dist / delta, xi_hi - xi_lo))
    s, ws = rule_on_edges(s_edges, order)
    xi, wx = rule_on_edges(x_edges, order)
    S, X = np.meshgrid(s, xi, indexing="ij")
    W = np.outer(ws, wx)
    return S.ravel(), X.ravel(), W.ravel()


def _sigma0_geometry(surface, S, X):
    curve, delta = surface.tube.curve, surface.delta
    fr = evaluate_frame(curve, S)
    P = curve.point(S) + delta * X[:, None] * fr.nu
    a = fr.gprime_norm - delta * X * fr.kappa
    Ps = a[:, None] * fr.t + (delta * X * fr.tau)[:, None] * fr.b
    N = delta * (a[:, None] * fr.b - (delta * X * fr.tau)[:, None] * fr.t)  # P_s x P_xi
    return P, Ps, N


def _w1_generic(surface, x, order, density_one=False):
    out = np.empty(len(x))
    xi_lo = 0.0 if density_one else 0.5
    for i, q in enumerate(x):
        S, X, W = _sigma0_rule(surface, q, xi_lo, 1.0, RAMP, order)
        P, _, N = _sigma0_geometry(surface, S, X)
        r = q - P
        mu = 1.0 if density_one else _density(surface.field, X)
        out[i] = -np.sum(W * mu * np.sum(N * r, 1) / np.linalg.norm(r, axis=1) ** 3) / FOUR_PI
    return out + _solid_angle_triangles(x, surface.mesh) / FOUR_PI


def _w1_axisym(surface, x, order, density_one=False):
    ax = _axis_of(surface.tube.curve)
    delta = surface.delta
    rho, z, _ = _to_meridian(ax, x)
    hi = ax.R if density_one else ax.R - 0.5 * delta
    bps = [ax.R - delta * t for t in (1.0, 0.75, 0.625, 0.5)]
    out = np.empty(len(rho))
    for i, (r, zz) in enumerate(zip(rho, z)):
        e = _graded(0.0, hi, [r], bps, _min_frac(abs(zz), hi))
        rp, w = rule_on_edges(e, order)
        mu = 1.0 if density_one else _density(surface.field, np.clip((ax.R - rp) / delta, 0, None))
        out[i] = -np.sum(w * mu * rp * _ring_dipole(rp, r, zz))
    return out


def w1_value(surface: CutSurface, x, order=12, check_distance=True):
    """Double-layer potential of density 1 - phi over Sigma, oriented like v."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if check_distance:
        d = distance_to_sigma(surface, x)
        if np.any(d < TOO_CLOSE * surface.delta):
            raise TooCloseToSurface(
                f"target within {d.min():.3e} of Sigma (limit {TOO_CLOSE} delta)")
    if surface.axisymmetric:
        return _w1_axisym(surface, x, order)
    return _w1_generic(surface, x, order)


def filament_potential(surface: CutSurface, x, order=12):
    """Solid-angle potential of gamma (density-1 double layer over Sigma):
    the limit ``v + w1 + w2`` that jumps by 1 across Sigma."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if surface.axisymmetric:
        return _w1_axisym(surface, x, order, density_one=True)
    return _w1_generic(surface, x, order, density_one=True)


def _grad_w1_generic(surface, x, order):
    out = np.empty((len(x), 3))
    cut = surface.field.cutoff
    for i, q in enumerate(x):
        S, X, W = _sigma0_rule(surface, q, 0.5, 0.75, (0.625,), order)
        P, Ps, _ = _sigma0_geometry(surface, S, X)
        r = q - P
        cur = -cut(X)[1]
        k = np.cross(Ps, r) / np.linalg.norm(r, axis=1)[:, None] ** 3
        out[i] = (W * cur) @ k / FOUR_PI
    return out


def _grad_w1_axisym(surface, x, order, density_one=False):
    ax = _axis_of(surface.tube.curve)
    delta = surface.delta
    rho, z, d = _to_meridian(ax, x)
    gr, gz = np.empty(len(rho)), np.empty(len(rho))
    for i, (r, zz) in enumerate(zip(rho, z)):
        if density_one:
            Hr, Hz = _loop_field(ax.R, np.array([r]), np.array([zz]))
            gr[i], gz[i] = Hr[0], Hz[0]
            continue
        xi_c = (ax.R - r) / delta
        e = _graded(0.5, 0.75, [xi_c], (0.625,), _min_frac(abs(zz) / delta, 0.25))
        xi, w = rule_on_edges(e, order)
        cur = -surface.field.cutoff(xi)[1]
        Hr, Hz = _loop_field(ax.R - delta * xi, r, zz)
        gr[i], gz[i] = np.sum(w * cur * Hr), np.sum(w * cur * Hz)
    return _from_meridian(d, rho, gr, gz)


def grad_w1(surface: CutSurface, x, order=12):
    """Gradient of w1 off Sigma, as the field of the equivalent surface current
    ``-phi'(xi) dF/ds`` on the leaf strip 1/2 < xi < 3/4 (where 1 - phi varies)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if surface.axisymmetric:
        return _grad_w1_axisym(surface, x, order)
    return _grad_w1_generic(surface, x, order)


def filament_field(curve: ClosedCurve, x, order=16, panels=None):
    """Biot-Savart field of a unit current along gamma (gradient of the
    filament potential off the curve)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    edges = curve.s_edges if panels is None else np.linspace(0, 1, panels + 1)
    s, w = rule_on_edges(edges, order)
    g, g1, _, _ = curve.derivatives(s)
    out = np.empty((len(x), 3))
    for i, q in enumerate(x):
        r = q - g
        out[i] = w @ (np.cross(g1, r) / np.linalg.norm(r, axis=1)[:, None] ** 3) / FOUR_PI
    return out


# ---------------------------------------------------------------------------
# w2: Newtonian potential of f


def _tube_target(tube, x0):
    s, xi, th, _ = invert_points(tube, 0.0, x0[None, :], check_ambiguity=False)
    return float(s[0]), float(xi[0]), float(th[0])


def _theta_centres(theta0):
    """theta0 plus its periodic image across the cut when it lies close to it."""
    c = [theta0]
    if theta0 < 0.5 * np.pi:
        c.append(TWO_PI)
    elif theta0 > 1.5 * np.pi:
        c.append(0.0)
    return c


def _volume_rule_meridian(xi0, th0, dist, delta, order, floor=1e-4, ratio=3.0):
    xi_c = min(xi0, 0.75)
    graded = dist < 0.5 * delta
    x_edges = _graded(0.0, 0.75, [xi_c] if graded else [], (0.25, 0.5, 0.625),
                      _min_frac(dist / delta, 0.75, floor), ratio=ratio)
    ang = dist / (delta * max(xi_c, 1e-3))
    t_edges = _graded(0.0, TWO_PI, _theta_centres(th0) if graded else [],
                      np.linspace(0, TWO_PI, 9)[1:-1], _min_frac(ang, TWO_PI, floor), ratio=ratio)
    xi, wx = rule_on_edges(x_edges, order)
    th, wt = rule_on_edges(t_edges, order)
    X, T = np.meshgrid(xi, th, indexing="ij")
    return X.ravel(), T.ravel(), np.outer(wx, wt).ravel()


class _AxisymSource:
    """f on the meridian section of a circle tube, with cached frame data."""

    def __init__(self, field: SingularField):
        self.field = field
        self.ax = _axis_of(field.tube.curve)
        self.frame = evaluate_frame(field.tube.curve, np.zeros(()))
        self.zero = (0.0, 0.0, 0.0)

    def position(self, X, T):
        d = self.field.delta
        return self.ax.R - d * X * np.cos(T), d * X * np.sin(T)

    def f_area(self, X, T):
        """f * rho' * delta^2 xi (per unit azimuth)."""
        fj = f_times_jacobian(self.field, np.zeros_like(X), X, T, frame=self.frame,
                              dframe=self.zero)
        return fj / TWO_PI     # f_times_jacobian carries a0 = 2 pi rho'


def _w2_axisym(field, x, order, grad=False):
    src = _AxisymSource(field)
    ax, delta = src.ax, field.delta
    rho, z, d = _to_meridian(ax, x)
    val = np.empty(len(rho))
    gr = np.empty(len(rho))
    gz = np.empty(len(rho))
    for i, (r, zz) in enumerate(zip(rho, z)):
        dr = ax.R - r
        xi0 = np.hypot(dr, zz) / delta
        th0 = float(np.mod(np.arctan2(zz, dr), TWO_PI))
        dist = max(0.0, (xi0 - 0.75) * delta)
        X, T, W = _volume_rule_meridian(xi0, th0, dist, delta, order)
        rp, zp = src.position(X, T)
        dens = W * src.f_area(X, T)
        if grad:
            a, b = _ring_dG(rp, zp, r, zz)
            gr[i], gz[i] = dens @ a, dens @ b
        else:
            val[i] = dens @ _ring_G(rp, zp, r, zz)
    if grad:
        return _from_meridian(d, rho, gr, gz)
    return val


S_PANELS = 16
W2_CHUNK = 20000


def _w2_generic(field, x, order, grad=False):
    tube, curve, delta = field.tube, field.tube.curve, field.delta
    out = np.empty((len(x), 3)) if grad else np.empty(len(x))
    for i, q in enumerate(x):
        s0, xi0, th0 = _tube_target(tube, q)
        dist = max(0.0, (xi0 - 0.75) * delta)
        near = dist < NEAR_FIELD * delta
        speed = float(evaluate_frame(curve, s0).gprime_norm)
        # curve breaks plus a uniform floor of S_PANELS panels, graded toward s0
        sb = [(e - s0 + 0.5) % 1.0 for e in curve.s_edges[1:-1]]
        sb += np.linspace(0.0, 1.0, S_PANELS + 1)[1:-1].tolist()
        s_edges = _graded(0.0, 1.0, [0.5], sb,
                          _min_frac(dist / speed, 1.0, 1e-5 if near else 1e-3)) + s0 - 0.5
        X, T, Wxt = _volume_rule_meridian(xi0, th0, dist, delta, order)
        s, ws = rule_on_edges(s_edges, order)
        acc = np.zeros(3) if grad else 0.0
        step = max(1, W2_CHUNK // X.size)
        for k in range(0, len(s), step):
            sk, wk = s[k:k + step], ws[k:k + step]
            S = np.repeat(sk, X.size)
            Xs, Ts = np.tile(X, len(sk)), np.tile(T, len(sk))
            # frame data depend on s only; evaluate once per s node and broadcast
            fr1 = evaluate_frame(curve, sk)
            fr = FrenetData(*(np.repeat(a, X.size, axis=0) for a in
                              (fr1.gprime_norm, fr1.t, fr1.nu, fr1.b, fr1.kappa, fr1.tau)))
            dfr = tuple(np.repeat(a, X.size) for a in
                        frame_scalar_derivatives(curve, sk, FD_STEP))
            y = np.repeat(curve.point(sk), X.size, axis=0) + delta * Xs[:, None] * (np.cos(Ts)[:, None] * fr.nu
                                                        + np.sin(Ts)[:, None] * fr.b)
            dens = np.repeat(wk, X.size) * np.tile(Wxt, len(sk)) * f_times_jacobian(
                field, S, Xs, Ts, frame=fr, dframe=dfr)
            r = q - y
            rn = np.linalg.norm(r, axis=1)
            acc = acc + (-(dens @ (r / rn[:, None] ** 3)) if grad else np.sum(dens / rn))
        out[i] = acc / FOUR_PI
    return out


def w2_value(field: SingularField, x, order=8):
    """Newtonian potential (1/4 pi) * integral of f(y) / |x - y| dy."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if field.tube.curve.axisymmetric:
        return _w2_axisym(field, x, order)
    return _w2_generic(field, x, order)


def grad_w2(field: SingularField, x, order=8):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if field.tube.curve.axisymmetric:
        return _w2_axisym(field, x, order, grad=True)
    return _w2_generic(field, x, order, grad=True)


def total_source(field: SingularField, order=16):
    """Integral of f over space (the far-field monopole of w2 times 4 pi)."""
    from .quadrature import tensor_integrate
    curve = field.tube.curve
    axes = [rule_on_edges(curve.s_edges, order),
            rule_on_edges(np.array([0.0, 0.25, 0.5, 0.625, 0.75]), order),
            rule_on_edges(np.linspace(0, TWO_PI, 9), order)]
    return tensor_integrate(lambda s, x, t: f_times_jacobian(field, s, x, t), axes)


# ---------------------------------------------------------------------------
# correction terms


@dataclass(frozen=True)
class CorrectionResult:
    volume_term: float
    surface_term: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.volume_term + self.surface_term


def _surface_rule(ax, delta, order, sigma_prime_panels=8, strip_panels=8):
    """Radial rule on Sigma (z = 0, rho < R - delta/2) with per-node panel width.

    The current strip (xi in (1/2, 3/4)) and the leaf between it and Sigma'
    are split into ``strip_panels`` pieces per break interval; Sigma' panels
    are graded geometrically toward the leaf down to the same width.
    """
    cuts = ax.R - delta * np.array([1.0, 0.75, 0.625, 0.5])
    # Sigma' panels shrink toward the leaf so that offsets stay small near the strip
    fine = delta / (4 * strip_panels)
    graded = panel_edges(0.0, ax.R - delta, 1,
                         Geometric(2.0, ax.R - delta, min(0.5, fine / (ax.R - delta))))
    inner = np.union1d(graded, np.linspace(0.0, ax.R - delta, sigma_prime_panels + 1))
    leaf = np.concatenate([np.linspace(lo, hi, strip_panels + 1)[1:]
                           for lo, hi in zip(cuts[:-1], cuts[1:])])
    edges = np.concatenate([inner, leaf])
    r, w = rule_on_edges(edges, order)
    width = np.repeat(np.diff(edges), order)
    return r, w, width


def correction_terms(field: SingularField, surface: CutSurface, order=10,
                     offsets=(0.05, 0.025), w2_order=6, rel_gap=0.1,
                     strip_panels=8) -> CorrectionResult:
    """Volume term ``-int f (w1 + w2)`` and surface term
    ``int_Sigma (1 - phi)(dw1/dn + dw2/dn + 2 dv/dn)``.

    dw1/dn on Sigma is the average of the one-sided values at ``x +- h n``
    for ``h = offsets * local panel width``, combined by Richardson
    extrapolation (first order on the current strip, second order
    elsewhere). OffsetUnstable if the surface integrals for the two offsets
    differ by more than ``rel_gap``.

    Only axisymmetric tubes are supported; other curves raise
    NotImplementedError.
    """
    if not (surface.axisymmetric and field.tube.curve.axisymmetric):
        raise NotImplementedError("correction terms are implemented for axisymmetric tubes")
    if surface.field is not field:
        surface = CutSurface(field, surface.mesh, surface.axisymmetric, surface.boundary_deviation)
    delta = field.delta
    ax = _axis_of(field.tube.curve)
    cut = field.cutoff
    src = _AxisymSource(field)

    # volume nodes in the f support
    xv, wxv = rule_on_edges(np.array([0.0, 0.25, 0.5, 0.625, 0.75]), order)
    tv, wtv = rule_on_edges(np.linspace(0.0, TWO_PI, 17), order)
    X, T = np.meshgrid(xv, tv, indexing="ij")
    X, T = X.ravel(), T.ravel()
    Wv = np.outer(wxv, wtv).ravel()
    rho_v, z_v = src.position(X, T)
    fvol = TWO_PI * Wv * src.f_area(X, T)          # f dV
    pts_v = np.column_stack([rho_v, np.zeros_like(rho_v), z_v]) + ax.center
    w1v = _w1_axisym(surface, pts_v, order + 4)
    w2v = _w2_axisym(field, pts_v, w2_order)
    int_f_w1 = float(fvol @ w1v)
    int_f_w2 = float(fvol @ w2v)

    # surface nodes on Sigma
    r, wr, width = _surface_rule(ax, delta, order, strip_panels=strip_panels)
    xi_s = (ax.R - r) / delta
    mu = np.where(xi_s >= 1.0, 1.0, _density(field, np.clip(xi_s, 0, None)))
    dA = TWO_PI * r * wr * mu
    pts_s = np.column_stack([r, np.zeros_like(r), np.zeros_like(r)]) + ax.center

    def dw1_dn(h):
        up = _grad_w1_axisym(surface, pts_s + np.outer(h, [0, 0, 1.0]), order + 4)[:, 2]
        dn = _grad_w1_axisym(surface, pts_s - np.outer(h, [0, 0, 1.0]), order + 4)[:, 2]
        return 0.5 * (up + dn)

    h1, h2 = offsets[0] * width, offsets[1] * width
    b1, b2 = dw1_dn(h1), dw1_dn(h2)
    s1_h1, s1_h2 = float(dA @ b1), float(dA @ b2)
    if abs(s1_h1 - s1_h2) > rel_gap * max(abs(s1_h2), 1e-300):
        raise OffsetUnstable(f"offset estimates {s1_h1:.6g} and {s1_h2:.6g} differ by > {rel_gap:.0%}")
    # On the current strip d(dw1/dn)/dz jumps, so the two-sided average has an
    # O(h) error; elsewhere it is even in h and the error is O(h^2).
    q = offsets[0] / offsets[1]
    strip = (xi_s > 0.5) & (xi_s < 0.75)
    p = np.where(strip, q, q * q)
    s_w1 = float(dA @ ((p * b2 - b1) / (p - 1.0)))
    s_w2 = float(dA @ _w2_axisym(field, pts_s, w2_order, grad=True)[:, 2])
    inside = (xi_s > 0) & (xi_s < 1)
    dvdn = np.zeros_like(r)
    dvdn[inside] = dv_dn_on_sigma0(field, xi_s[inside], np.zeros(inside.sum()))
    s_v = float(dA @ dvdn)

    volume = -(int_f_w1 + int_f_w2)
    surface_term = s_w1 + s_w2 + 2.0 * s_v
    diag = {
        "int_f_w1": int_f_w1, "int_f_w2": int_f_w2,
        "surface_dw1dn": s_w1, "surface_dw1dn_h": [s1_h1, s1_h2],
        "surface_dw2dn": s_w2, "surface_dvdn": s_v,
        "offsets": list(offsets), "offset_basis": "local radial panel width",
        "green_identity_residual": s_w2 + int_f_w1,
        "energy_w1": w1_energy_axisym(field),
        "filament_constant_check": _filament_correction_axisym(surface, order),
        "volume_nodes": int(len(X)), "surface_nodes": int(len(r)),
    }
    return CorrectionResult(volume, surface_term, diag)


def w1_energy_axisym(field: SingularField, order=16):
    """Energy of grad w1 as the mutual energy of its current strip,
    sum over ring pairs of -phi'(xi) -phi'(xi') M(xi, xi')."""
    ax = _axis_of(field.tube.curve)
    delta = field.delta
    cut = field.cutoff
    xo, wo = rule_on_edges(np.array([0.5, 0.5625, 0.625, 0.6875, 0.75]), order)
    total = 0.0
    for x0, w0 in zip(xo, wo):
        e = _graded(0.5, 0.75, [x0], (0.625,), 1e-9)
        xi, w = rule_on_edges(e, order)
        a, b = ax.R - delta * x0, ax.R - delta * xi
        total += w0 * cut(x0)[1] * np.sum(w * cut(xi)[1] * _loop_mutual_coaxial(a, b))
    return float(total)


def _loop_mutual_coaxial(a, b, dz=0.0):
    """Mutual inductance (mu0 = 1) of coaxial circles of radii a, b."""
    A = (a + b) ** 2 + dz**2
    B = (a - b) ** 2 + dz**2
    k = np.sqrt(4 * a * b / A)
    return np.sqrt(a * b) * ((2.0 / k - k) * ellipkm1(B / A) - 2.0 / k * ellipe(1.0 - B / A))


def _filament_correction_axisym(surface, order):
    """Correction constant through the identity w1 + w2 = U - v (U the
    filament potential): ``-int f (U - v) + int_Sigma (1-phi)(dU/dn + dv/dn)``."""
    field = surface.field
    ax = _axis_of(field.tube.curve)
    delta = field.delta
    src = _AxisymSource(field)
    xv, wxv = rule_on_edges(np.array([0.0, 0.25, 0.5, 0.625, 0.75]), order)
    tv, wtv = rule_on_edges(np.linspace(0.0, TWO_PI, 17), order)
    X, T = np.meshgrid(xv, tv, indexing="ij")
    X, T = X.ravel(), T.ravel()
    W = np.outer(wxv, wtv).ravel()
    rho_v, z_v = src.position(X, T)
    pts = np.column_stack([rho_v, np.zeros_like(rho_v), z_v]) + ax.center
    U = _w1_axisym(surface, pts, order + 4, density_one=True)
    v = T * field.cutoff(X)[0] / TWO_PI
    vol = -float((TWO_PI * W * src.f_area(X, T)) @ (U - v))
    r, wr, _ = _surface_rule(ax, delta, order)
    xi_s = (ax.R - r) / delta
    mu = np.where(xi_s >= 1.0, 1.0, _density(field, np.clip(xi_s, 0, None)))
    Hz = _loop_field(ax.R, r, np.zeros_like(r))[1]
    inside = (xi_s > 0) & (xi_s < 1)
    dvdn = np.zeros_like(r)
    dvdn[inside] = dv_dn_on_sigma0(field, xi_s[inside], np.zeros(inside.sum()))
    surf = float((TWO_PI * r * wr * mu) @ (Hz + dvdn))
    return vol + surf


# ---------------------------------------------------------------------------
# filament oracle


def neumann_filament_oracle(curve: ClosedCurve, eps, n_points=1024, inner_order=16):
    """Mutual inductance (mu0 = 1) of gamma and its inward offset g + eps nu.

    ``(1/4 pi) oint oint dl . dl' / |g(s) - g_eps(s')|`` with the offset line
    element ``(|g'| - eps kappa) t ds'``. The outer integral is the periodic
    trapezoid rule on ``n_points`` nodes; the inner one is Gauss-Legendre on
    panels graded geometrically toward s' = s, because the kernel is peaked
    on the scale eps.
    """
    if not curve.planar:
        raise ValueError("the filament oracle needs a planar curve")
    if n_points < 512:
        raise ValueError("n_points must be at least 512")
    ext = curve.extrema
    if eps <= 0 or eps * ext.max_kappa_over_speed >= 1.0:
        raise OffsetSelfIntersects(f"offset at eps={eps:g} is not a regular curve")
    s_out = np.arange(n_points) / n_points
    g_o, g1_o, _, _ = curve.derivatives(s_out)
    scale = eps / ext.max_speed
    edges = _graded(-0.5, 0.5, [0.0], (), _min_frac(scale, 1.0, 1e-12))
    u, wu = rule_on_edges(edges, inner_order)
    total = 0.0
    for j in range(n_points):
        sp = s_out[j] + u
        fr = evaluate_frame(curve, sp)
        y = curve.point(sp) + eps * fr.nu
        dl = (fr.gprime_norm - eps * fr.kappa)[:, None] * fr.t
        r = np.linalg.norm(g_o[j] - y, axis=1)
        total += np.sum(wu * (dl @ g1_o[j]) / r)
    return total / (n_points * FOUR_PI)


def coaxial_ring_inductance(R, eps):
    """Closed-form mutual inductance of coplanar coaxial circles R and R - eps."""
    return float(_loop_mutual_coaxial(R, R - eps))
