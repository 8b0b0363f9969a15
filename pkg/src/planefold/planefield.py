"""Smooth 2-plane fields, annihilating coframes and graph-map calculus.

A plane field is an evaluator returning an orthonormal 2-frame at each point
of a box domain; its annihilating coframe is a set of k = n-2 one-forms whose
common kernel is the plane.  Integrability is measured by the top-degree
coefficient of d(omega_i) ^ omega_1 ^ ... ^ omega_k, which vanishes exactly
when the field is tangent to a foliation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .errors import BoundaryError, InvalidInputError, NotAGraphError
from .expr import Expr, parse_expr

__all__ = [
    "PlaneField",
    "NormalCoframe",
    "GraphMap",
    "GraphConditionReport",
    "FieldHomotopy",
    "plane_distance",
    "constant_field",
    "linear_tilt_field",
    "coframe_field",
    "integrable_wave_field",
    "frame_to_coframe",
    "coframe_to_field",
    "integrability_residual",
    "graph_map",
    "check_graph_condition",
    "graph_line_homotopy",
    "kernel_field_of_projection",
]

ORTHONORMALITY_TOL = 1e-12
PLANE_MATCH_TOL = 1e-10


def _orthonormalize_pair(vecs):
    """Gram-Schmidt on (..., n, 2) spans; deterministic and continuous."""
    v1 = vecs[..., 0]
    v2 = vecs[..., 1]
    q1 = v1 / np.linalg.norm(v1, axis=-1, keepdims=True)
    v2p = v2 - np.sum(q1 * v2, axis=-1, keepdims=True) * q1
    q2 = v2p / np.linalg.norm(v2p, axis=-1, keepdims=True)
    return np.stack([q1, q2], axis=-1)


def _orthonormalize_columns(mat):
    """Gram-Schmidt over the last axis for (..., n, m) column stacks."""
    cols = []
    for j in range(mat.shape[-1]):
        v = mat[..., j]
        for q in cols:
            v = v - np.sum(q * v, axis=-1, keepdims=True) * q
        cols.append(v / np.linalg.norm(v, axis=-1, keepdims=True))
    return np.stack(cols, axis=-1)


def plane_distance(frame_a, frame_b):
    """Frobenius distance of orthogonal projectors; basis independent."""
    pa = frame_a @ np.swapaxes(frame_a, -1, -2)
    pb = frame_b @ np.swapaxes(frame_b, -1, -2)
    return np.linalg.norm(pa - pb, axis=(-2, -1))


class PlaneField:
    """2-plane field on a box, evaluated as an orthonormal frame.

    ``span_fn`` maps a batch of points (N, n) to spanning pairs (N, n, 2);
    frames are orthonormalized on evaluation so constructors may supply any
    continuous spanning pair.
    """

    def __init__(self, span_fn, domain: Box, name="field"):
        self._span = span_fn
        self.domain = domain
        self.name = name

    @property
    def ambient_dim(self):
        return self.domain.dim

    def frame(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        batch = pts[None] if single else pts
        frames = _orthonormalize_pair(np.asarray(self._span(batch), dtype=float))
        return frames[0] if single else frames

    def projector(self, points):
        f = self.frame(points)
        return f @ np.swapaxes(f, -1, -2)

    def rotated(self, rotation, center=None):
        """Push the field forward through the rigid motion x -> R(x-c)+c."""
        rot = np.asarray(rotation, dtype=float)
        c = np.zeros(self.ambient_dim) if center is None else np.asarray(center, float)

        def span(pts):
            back = (pts - c) @ rot + c  # R^T (x - c) + c
            return np.einsum("ab,nbj->naj", rot, self._span(back))

        return PlaneField(span, self.domain, name=f"rotated({self.name})")

    def verify_continuity(self, resolution=5, step=1e-3):
        """Max projector distance between neighboring grid samples."""
        pts = self.domain.grid(resolution)
        worst = 0.0
        for axis in range(self.ambient_dim):
            shifted = pts.copy()
            shifted[:, axis] += step
            inside = self.domain.contains(shifted)
            if not np.any(inside):
                continue
            d = plane_distance(self.frame(pts[inside]), self.frame(shifted[inside]))
            worst = max(worst, float(np.max(d)))
        return worst


class NormalCoframe:
    """k = n-2 one-forms annihilating a plane field.

    ``rows_fn``: (N, n) points -> (N, k, n) coefficient rows.  When built from
    expressions an analytic partial-derivative evaluator is attached;
    otherwise derivatives fall back to central differences of step ``h``.
    """

    def __init__(self, rows_fn, domain: Box, h: float = 1e-4, partials_fn=None,
                 name="coframe"):
        self._rows = rows_fn
        self.domain = domain
        self.h = float(h)
        self._partials = partials_fn
        self.name = name

    @property
    def ambient_dim(self):
        return self.domain.dim

    @property
    def k(self):
        probe = self.rows(self.domain.center[None])
        return probe.shape[1]

    @property
    def has_analytic_derivatives(self):
        return self._partials is not None

    def rows(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        batch = pts[None] if single else pts
        rows = np.asarray(self._rows(batch), dtype=float)
        return rows[0] if single else rows

    def partials(self, points, h=None):
        """(N, n, k, n) array: entry [m, a, i, b] = d_a omega_i,b at point m."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        batch = pts[None] if single else pts
        if self._partials is not None:
            out = np.asarray(self._partials(batch), dtype=float)
        else:
            step = self.h if h is None else float(h)
            n = batch.shape[1]
            if np.any(~self.domain.contains(batch, margin=step)):
                raise BoundaryError("finite-difference stencil leaves the domain")
            outs = []
            for a in range(n):
                e = np.zeros(n)
                e[a] = step
                outs.append((self.rows(batch + e) - self.rows(batch - e)) / (2 * step))
            out = np.stack(outs, axis=1)
        return out[0] if single else out

    @classmethod
    def from_expressions(cls, rows, domain: Box, name="coframe"):
        """rows: list of k rows, each a list of n expression strings/Exprs in x1..xn."""
        n = domain.dim
        parsed = [[e if isinstance(e, Expr) else parse_expr(e) for e in row] for row in rows]
        var_names = [f"x{i+1}" for i in range(n)]
        derivs = [[[c.diff(v) for v in var_names] for c in row] for row in parsed]

        def env_of(pts):
            return {v: pts[:, i] for i, v in enumerate(var_names)}

        def rows_fn(pts):
            env = env_of(pts)
            out = np.empty((len(pts), len(parsed), n))
            for i, row in enumerate(parsed):
                for b, comp in enumerate(row):
                    out[:, i, b] = comp.eval(env)
            return out

        def partials_fn(pts):
            env = env_of(pts)
            out = np.empty((len(pts), n, len(parsed), n))
            for i, row in enumerate(derivs):
                for b, comps in enumerate(row):
                    for a, dcomp in enumerate(comps):
                        out[:, a, i, b] = dcomp.eval(env)
            return out

        return cls(rows_fn, domain, partials_fn=partials_fn, name=name)


# ---------------------------------------------------------------------------
# constructors / catalog


def constant_field(n=4, span=None, domain=None, name="constant"):
    dom = domain or Box.cube(n, -2.0, 2.0)
    if span is None:
        span = np.eye(n)[:, :2]
    basis = np.asarray(span, dtype=float)

    def fn(pts):
        return np.broadcast_to(basis, (len(pts), n, 2))

    return PlaneField(fn, dom, name=name)


def linear_tilt_field(slope=0.3, n=4, domain=None):
    """span(e1, e2 + slope*x1*e3): the benchmark non-constant, non-integrable field."""
    dom = domain or Box.cube(n, -2.0, 2.0)

    def fn(pts):
        out = np.zeros((len(pts), n, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        out[:, 2, 1] = slope * pts[:, 0]
        return out

    return PlaneField(fn, dom, name=f"linear_tilt({slope:g})")


def linear_tilt_coframe(slope=0.3, n=4, domain=None):
    dom = domain or Box.cube(n, -2.0, 2.0)
    rows = [["0", f"0 - {slope} * x1", "1", "0"], ["0", "0", "0", "1"]]
    if n != 4:
        raise InvalidInputError("tilt coframe catalog entry is 4-dimensional")
    return NormalCoframe.from_expressions(rows, dom, name=f"linear_tilt({slope:g})")


def coframe_field(rows, domain: Box, name="coframe_field"):
    cof = NormalCoframe.from_expressions(rows, domain, name=name)
    return coframe_to_field(cof), cof


def integrable_wave_field(amplitude=0.5, domain=None):
    """Coframe {d(x3 - a sin x1 sin 2x2), dx4}: integrable with curvy leaves."""
    dom = domain or Box.cube(4, -2.0, 2.0)
    a = float(amplitude)
    rows = [
        [f"0 - {a} * cos(x1) * sin(2 * x2)", f"0 - 2 * {a} * sin(x1) * cos(2 * x2)", "1", "0"],
        ["0", "0", "0", "1"],
    ]
    return NormalCoframe.from_expressions(rows, dom, name="integrable_wave")


# ---------------------------------------------------------------------------
# conversions


def frame_to_coframe(fld: PlaneField, h: float = 1e-4) -> NormalCoframe:
    """Orthonormal basis of the orthocomplement, selected continuously by
    projecting a fixed reference complement."""
    n = fld.ambient_dim
    center_frame = fld.frame(fld.domain.center)
    u, _, _ = np.linalg.svd(center_frame)
    reference = u[:, 2:]  # (n, k)

    def rows_fn(pts):
        frames = fld.frame(pts)
        proj = frames @ np.swapaxes(frames, -1, -2)
        perp = np.eye(n)[None] - proj
        cand = np.einsum("nab,bk->nak", perp, reference)
        basis = _orthonormalize_columns(cand)  # (N, n, k)
        return np.swapaxes(basis, -1, -2)

    return NormalCoframe(rows_fn, fld.domain, h=h, name=f"coframe({fld.name})")


def coframe_to_field(cof: NormalCoframe) -> PlaneField:
    n = cof.ambient_dim
    probe = cof.rows(cof.domain.center)
    q = np.linalg.qr(probe.T)[0]
    perp0 = np.eye(n) - q @ q.T
    u, _, _ = np.linalg.svd(perp0)
    reference = u[:, :2]

    def span(pts):
        rows = cof.rows(pts)
        q = np.linalg.qr(np.swapaxes(rows, -1, -2))[0]  # (N, n, k) orthonormal row span
        proj = q @ np.swapaxes(q, -1, -2)
        perp = np.eye(n)[None] - proj
        return np.einsum("nab,bj->naj", perp, reference)

    return PlaneField(span, cof.domain, name=f"kernel({cof.name})")


# ---------------------------------------------------------------------------
# integrability


def _wedge_top_coefficient(two_form, rows):
    """Coefficient of dx_1^...^dx_n in (two_form) ^ rows_1 ^ ... ^ rows_k.

    two_form: (..., n, n) antisymmetric; rows: (..., k, n); n = k + 2.
    """
    n = two_form.shape[-1]
    k = rows.shape[-2]
    total = 0.0
    for a, b in itertools.combinations(range(n), 2):
        rest = [i for i in range(n) if i not in (a, b)]
        perm = [a, b] + rest
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        sign = -1.0 if inversions % 2 else 1.0
        minor = np.linalg.det(rows[..., :, rest]) if k else 1.0
        total = total + sign * two_form[..., a, b] * minor
    return total


def integrability_residual(cof: NormalCoframe, points, h=None):
    """Max over i of |coefficient of d(omega_i) ^ omega_1 ^...^ omega_k|.

    Zero exactly on integrable coframes; computed with analytic partials when
    available, otherwise central differences of step h.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    batch = pts[None] if single else pts
    rows = cof.rows(batch)          # (N, k, n)
    partials = cof.partials(batch, h=h)  # (N, a, k, b)
    duals = np.transpose(partials, (0, 2, 3, 1)) - np.transpose(partials, (0, 2, 1, 3))
    # duals[m, i, a, b] = d_a omega_i,b - d_b omega_i,a
    vals = []
    for i in range(rows.shape[1]):
        vals.append(np.abs(_wedge_top_coefficient(duals[:, i], rows)))
    out = np.max(np.stack(vals, axis=0), axis=0)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# graph maps


@dataclass
class GraphMap:
    """Linear map L: tau(x) -> tau(x)^perp whose graph is tau(y)."""

    base_point: np.ndarray
    target_point: np.ndarray
    base_frame: np.ndarray        # (n, 2)
    complement_basis: np.ndarray  # (n, k)
    matrix: np.ndarray            # (k, 2) in the above coordinates
    norm: float

    def plane_frame(self):
        graph = self.base_frame + self.complement_basis @ self.matrix
        return _orthonormalize_pair(graph)


def _complement_basis(frame):
    u, _, _ = np.linalg.svd(frame)
    return u[:, 2:]


def graph_map(fld: PlaneField, x, y, singular_tol=1e-12) -> GraphMap:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = fld.frame(x)
    fy = fld.frame(y)
    bx = _complement_basis(fx)
    a = fx.T @ fy  # (2, 2)
    if np.linalg.svd(a, compute_uv=False)[-1] < singular_tol:
        raise NotAGraphError(
            "planes meet at principal angle pi/2; no graph presentation")
    l = (bx.T @ fy) @ np.linalg.inv(a)
    norm = float(np.linalg.svd(l, compute_uv=False)[0]) if l.size else 0.0
    return GraphMap(x, y, fx, bx, l, norm)


@dataclass
class GraphConditionReport:
    max_norm: float
    passed: bool
    resolution: int
    witness: tuple = None      # (x, y) attaining the max / violating
    not_a_graph: bool = False
    bound: float = 1.0 - 1e-9


def check_graph_condition(fld: PlaneField, simplex, resolution: int = 3,
                          bound: float = 1.0 - 1e-9) -> GraphConditionReport:
    """Max graph norm over sampled point pairs of the simplex; the condition
    requires every tau(y) to be a graph over tau(x) of norm < 1."""
    pts = simplex.sample_grid(resolution)
    frames = fld.frame(pts)  # (S, n, 2)
    comps = np.stack([_complement_basis(f) for f in frames])  # (S, n, k)
    a = np.einsum("xai,yaj->xyij", frames, frames)  # (S, S, 2, 2)
    svals = np.linalg.svd(a, compute_uv=False)
    singular = svals[..., -1] < 1e-12
    if np.any(singular):
        xi, yi = np.unravel_index(int(np.argmax(singular)), singular.shape)
        return GraphConditionReport(max_norm=float("inf"), passed=False,
                                    resolution=resolution,
                                    witness=(pts[xi], pts[yi]), not_a_graph=True,
                                    bound=bound)
    b = np.einsum("xak,yaj->xykj", comps, frames)  # (S, S, k, 2)
    l = b @ np.linalg.inv(a)
    norms = np.linalg.svd(l, compute_uv=False)[..., 0]
    xi, yi = np.unravel_index(int(np.argmax(norms)), norms.shape)
    max_norm = float(norms[xi, yi])
    return GraphConditionReport(max_norm=max_norm, passed=max_norm < bound,
                                resolution=resolution, witness=(pts[xi], pts[yi]),
                                bound=bound)


@dataclass
class FieldHomotopy:
    """One-parameter family of plane fields, s in [0, 1]."""

    start: PlaneField
    end: PlaneField
    evaluator: callable      # s -> PlaneField
    support: Box = None      # region where the family is allowed to move

    def at(self, s) -> PlaneField:
        if s == 0.0:
            return self.start
        if s == 1.0:
            return self.end
        return self.evaluator(float(s))


def graph_line_homotopy(fld: PlaneField, target: PlaneField, region: Box,
                        presample: int = 4) -> FieldHomotopy:
    """Straight-line homotopy in graph coordinates over ``target``: the plane
    at (z, s) is the graph of (1-s) * (graph map of fld(z) over target(z)),
    constant outside the region."""
    n = fld.ambient_dim
    check = region.grid(presample)
    for p in check:
        graph_map_over(target, fld, p)  # raises NotAGraphError on failure

    def field_at(s):
        def span(pts):
            frames = fld.frame(pts)
            inside = region.contains(pts)
            if not np.any(inside):
                return frames
            sel = pts[inside]
            tgt = target.frame(sel)
            cur = fld.frame(sel)
            out = frames.copy()
            moved = np.empty_like(tgt)
            for idx in range(len(sel)):
                gm = _graph_between(tgt[idx], cur[idx])
                graph = tgt[idx] + gm[1] @ ((1.0 - s) * gm[0])
                moved[idx] = graph
            out[inside] = moved
            return out

        return PlaneField(span, fld.domain, name=f"{fld.name}@s={s:g}")

    def end_span(pts):
        frames = fld.frame(pts)
        inside = region.contains(pts)
        if np.any(inside):
            frames[inside] = target.frame(pts[inside])
        return frames

    end = PlaneField(end_span, fld.domain, name=f"{fld.name}->target")
    return FieldHomotopy(start=fld, end=end, evaluator=field_at, support=region)


def _graph_between(base_frame, plane_frame, singular_tol=1e-12):
    """(matrix, complement_basis) of the graph of plane over base."""
    bx = _complement_basis(base_frame)
    a = base_frame.T @ plane_frame
    if np.linalg.svd(a, compute_uv=False)[-1] < singular_tol:
        raise NotAGraphError("plane is not a graph over the base plane")
    return (bx.T @ plane_frame) @ np.linalg.inv(a), bx


def graph_map_over(base: PlaneField, fld: PlaneField, point) -> GraphMap:
    """Graph map of fld(point) over base(point)."""
    p = np.asarray(point, dtype=float)
    fx = base.frame(p)
    fy = fld.frame(p)
    bx = _complement_basis(fx)
    a = fx.T @ fy
    if np.linalg.svd(a, compute_uv=False)[-1] < 1e-12:
        raise NotAGraphError(f"no graph presentation at {p}")
    l = (bx.T @ fy) @ np.linalg.inv(a)
    return GraphMap(p, p, fx, bx, l, float(np.linalg.svd(l, compute_uv=False)[0]))


def kernel_field_of_projection(k: int, domain: Box = None) -> PlaneField:
    """Constant field on D^2 x R^k tangent to the disk factor; its coframe is
    the k fiber coordinate differentials."""
    n = 2 + k
    dom = domain or Box.cube(n, -2.0, 2.0)

    def span(pts):
        out = np.zeros((len(pts), n, 2))
        z = pts[:, :2]
        rho = np.linalg.norm(z, axis=1)
        safe = rho > 1e-12
        # polar frame (radial, angular) where defined, (e1, e2) at the center
        out[:, 0, 0] = np.where(safe, z[:, 0] / np.where(safe, rho, 1.0), 1.0)
        out[:, 1, 0] = np.where(safe, z[:, 1] / np.where(safe, rho, 1.0), 0.0)
        out[:, 0, 1] = np.where(safe, -z[:, 1] / np.where(safe, rho, 1.0), 0.0)
        out[:, 1, 1] = np.where(safe, z[:, 0] / np.where(safe, rho, 1.0), 1.0)
        return out

    fld = PlaneField(span, dom, name=f"disk_tangent(k={k})")

    def rows_fn(pts):
        rows = np.zeros((len(pts), k, n))
        for i in range(k):
            rows[:, i, 2 + i] = 1.0
        return rows

    def partials_fn(pts):
        return np.zeros((len(pts), n, k, n))

    fld.coframe = NormalCoframe(rows_fn, dom, partials_fn=partials_fn,
                                name=f"fiber_coframe(k={k})")
    return fld
