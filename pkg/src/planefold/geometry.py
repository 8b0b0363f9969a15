"""Lattice triangulations, vertex jiggling and general-position certificates.

The triangulation of a box is the permutation (Freudenthal/Kuhn) subdivision
of each lattice cube: the cube with corner c contributes, for every
permutation pi of the axes, the simplex <v_0, ..., v_n> with v_0 = c and
v_i = v_{i-1} + e_{pi(i)}.  Jiggling displaces vertices by less than epsilon
while keeping the vertex indexing (and hence the combinatorics) fixed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .errors import GeneralPositionError, InvalidInputError, JiggleError

__all__ = [
    "AffineSimplex",
    "LatticeTriangulation",
    "GeneralPositionReport",
    "ComplexPositionReport",
    "ShadowDecomposition",
    "standard_triangulation",
    "barycentric_grid",
    "is_general_position",
    "certify_general_position",
    "jiggle",
    "shadow_decomposition",
]

DEGENERACY_THRESHOLD = 1e-12


def barycentric_grid(p: int, m: int) -> np.ndarray:
    """All barycentric weights with denominator m on a p-simplex, shape (S, p+1)."""
    if m < 1:
        raise InvalidInputError("grid resolution must be >= 1")
    combos = itertools.combinations(range(m + p), p)
    weights = []
    for cut in combos:
        prev = -1
        parts = []
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(m + p - 1 - prev)
        weights.append(parts)
    return np.asarray(weights, dtype=float) / m


@dataclass(frozen=True)
class AffineSimplex:
    """A nondegenerate affine p-simplex in R^n given by its ordered vertices."""

    vertices: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        if v.ndim != 2:
            raise InvalidInputError("vertices must be a (p+1, n) array")
        edges = v[1:] - v[0]
        if np.linalg.matrix_rank(edges, tol=1e-12) != len(edges):
            raise InvalidInputError("degenerate simplex: edge vectors are dependent")

    @property
    def dim(self):
        return self.vertices.shape[0] - 1

    @property
    def ambient_dim(self):
        return self.vertices.shape[1]

    def edge_vectors(self):
        return self.vertices[1:] - self.vertices[0]

    def points(self, weights):
        return np.asarray(weights) @ self.vertices

    def sample_grid(self, m):
        return self.points(barycentric_grid(self.dim, m))

    def face(self, indices):
        return AffineSimplex(self.vertices[list(indices)],
                             label=f"{self.label}|{tuple(indices)}" if self.label else str(tuple(indices)))

    def faces(self, q):
        """Vertex-index tuples of all q-dimensional faces."""
        return list(itertools.combinations(range(self.dim + 1), q + 1))

    def min_edge_length(self):
        v = self.vertices
        d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        return float(np.min(d[np.triu_indices(len(v), 1)]))

    def bounding_box(self):
        return Box(tuple(self.vertices.min(axis=0)), tuple(self.vertices.max(axis=0)))

    def barycenter(self):
        return self.vertices.mean(axis=0)


class LatticeTriangulation:
    """Permutation triangulation of an integer box at lattice scale 1/l,
    with per-vertex displacement offsets."""

    def __init__(self, scale, box, offsets=None, epsilon=0.0):
        if scale < 1:
            raise InvalidInputError("lattice scale must be a positive integer")
        self.scale = int(scale)
        self.box = [(int(lo), int(hi)) for lo, hi in box]
        self.n = len(self.box)
        if any(hi <= lo for lo, hi in self.box):
            raise InvalidInputError("empty box: every axis needs hi > lo")
        self._cells = tuple((hi - lo) * self.scale for lo, hi in self.box)
        self._vshape = tuple(c + 1 for c in self._cells)
        nverts = int(np.prod(self._vshape))
        if offsets is None:
            offsets = np.zeros((nverts, self.n))
        offsets = np.asarray(offsets, dtype=float)
        if offsets.shape != (nverts, self.n):
            raise InvalidInputError(f"offsets must have shape ({nverts}, {self.n})")
        self.offsets = offsets
        self.epsilon = float(epsilon)
        self._perms = list(itertools.permutations(range(self.n)))

    # vertex indexing: lexicographic over the integer grid
    @property
    def vertex_count(self):
        return int(np.prod(self._vshape))

    def vertex_coordinates(self):
        """(V, n) integer grid coordinates in lattice units."""
        grids = np.meshgrid(*[np.arange(m) for m in self._vshape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def vertex_positions(self):
        lo = np.asarray([b[0] for b in self.box], dtype=float)
        return lo + self.vertex_coordinates() / self.scale + self.offsets

    def _vertex_index(self, grid_coords):
        return np.ravel_multi_index(tuple(np.asarray(grid_coords).T), self._vshape)

    def top_simplex_indices(self):
        """List of (n+1)-tuples of vertex indices, one per (cube, permutation)."""
        cells = [np.arange(m) for m in self._cells]
        corners = np.stack([g.ravel() for g in np.meshgrid(*cells, indexing="ij")], axis=-1)
        out = []
        eye = np.eye(self.n, dtype=int)
        for corner in corners:
            for perm in self._perms:
                verts = [corner.copy()]
                cur = corner.copy()
                for axis in perm:
                    cur = cur + eye[axis]
                    verts.append(cur.copy())
                out.append(tuple(int(i) for i in self._vertex_index(np.asarray(verts))))
        return out

    def simplex(self, index_tuple, label=""):
        pos = self.vertex_positions()[list(index_tuple)]
        return AffineSimplex(pos, label=label)

    def simplices(self):
        pos = self.vertex_positions()
        return [AffineSimplex(pos[list(ix)], label=str(i))
                for i, ix in enumerate(self.top_simplex_indices())]

    def top_simplex_count(self):
        import math
        return int(np.prod(self._cells)) * math.factorial(self.n)

    def min_edge_length(self):
        return 1.0 / self.scale  # unjiggled lattice edge (short diagonal edges are longer)

    def with_offsets(self, offsets, epsilon=None):
        return LatticeTriangulation(self.scale, self.box, offsets,
                                    self.epsilon if epsilon is None else epsilon)

    def verify(self):
        """Invariants: offsets < epsilon, every top simplex nondegenerate."""
        norms = np.linalg.norm(self.offsets, axis=1)
        if self.epsilon == 0.0:
            if np.any(norms > 0):
                return False
        elif np.any(norms >= self.epsilon):
            return False
        pos = self.vertex_positions()
        for ix in self.top_simplex_indices():
            edges = pos[list(ix[1:])] - pos[ix[0]]
            if abs(np.linalg.det(edges)) < DEGENERACY_THRESHOLD:
                return False
        return True

    def verify_complex(self, tol=1e-9):
        """Brute-force check that every pair of top simplices meets in a common
        face.  Quadratic; intended for small boxes."""
        from scipy.optimize import linprog

        pos = self.vertex_positions()
        tops = self.top_simplex_indices()
        simps = [pos[list(ix)] for ix in tops]
        bboxes = [(v.min(axis=0), v.max(axis=0)) for v in simps]
        for i in range(len(tops)):
            for j in range(i + 1, len(tops)):
                if np.any(bboxes[i][0] > bboxes[j][1] + tol) or np.any(bboxes[j][0] > bboxes[i][1] + tol):
                    continue
                shared = set(tops[i]) & set(tops[j])
                v1, v2 = simps[i], simps[j]
                p1, p2 = len(tops[i]), len(tops[j])
                # maximize barycentric mass on non-shared vertices over common points
                c = np.zeros(p1 + p2)
                for a, vid in enumerate(tops[i]):
                    if vid not in shared:
                        c[a] = -1.0
                for b, vid in enumerate(tops[j]):
                    if vid not in shared:
                        c[p1 + b] = -1.0
                a_eq = np.zeros((self.n + 2, p1 + p2))
                a_eq[: self.n, :p1] = v1.T
                a_eq[: self.n, p1:] = -v2.T
                a_eq[self.n, :p1] = 1.0
                a_eq[self.n + 1, p1:] = 1.0
                b_eq = np.concatenate([np.zeros(self.n), [1.0, 1.0]])
                res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=[(0, 1)] * (p1 + p2),
                              method="highs")
                if res.status == 2:  # infeasible: hulls disjoint
                    continue
                if res.status == 0 and -res.fun > tol:
                    return False, (i, j, -res.fun)
        return True, None

    def to_json(self):
        nz = np.nonzero(np.linalg.norm(self.offsets, axis=1) > 0)[0]
        return {
            "scale": self.scale,
            "box": [list(b) for b in self.box],
            "epsilon": self.epsilon,
            "offsets": {str(int(i)): [float(v) for v in self.offsets[i]] for i in nz},
        }

    @classmethod
    def from_json(cls, data):
        tri = cls(data["scale"], [tuple(b) for b in data["box"]], epsilon=data["epsilon"])
        for key, vec in data.get("offsets", {}).items():
            tri.offsets[int(key)] = vec
        return tri


def standard_triangulation(l: int, box) -> LatticeTriangulation:
    """Permutation triangulation of the integer box at lattice scale 1/l."""
    return LatticeTriangulation(l, box)


@dataclass
class GeneralPositionReport:
    """Outcome of sampling one n-simplex against a plane field."""

    margin: float
    resolution: int
    passed: bool
    threshold: float = DEGENERACY_THRESHOLD
    witness: tuple = None  # (sample point, face vertex tuple) at the minimum
    label: str = ""


@dataclass
class ComplexPositionReport:
    margins: dict
    resolution: int
    passed: bool
    threshold: float
    failing: list = field(default_factory=list)

    def worst(self):
        return min(self.margins.values()) if self.margins else float("inf")


def _face_margins(simplex: AffineSimplex, frames: np.ndarray):
    """Smallest singular value of each projected (n-2)-face edge matrix.

    frames: (S, n, 2) orthonormal plane bases at the sample points.
    Returns (S, F) margins and the face index list.
    """
    n = simplex.ambient_dim
    k = n - 2
    faces = simplex.faces(k)
    verts = simplex.vertices
    edges = np.stack([verts[list(f[1:])] - verts[f[0]] for f in faces])  # (F, k, n)
    proj = np.einsum("snp,spq->snq", frames, np.transpose(frames, (0, 2, 1)))
    perp = np.eye(n)[None] - proj  # (S, n, n)
    m = np.einsum("sab,fkb->sfak", perp, edges)  # (S, F, n, k)
    svals = np.linalg.svd(m, compute_uv=False)
    return svals[..., -1], faces


def is_general_position(simplex: AffineSimplex, fld, resolution: int = 3,
                        threshold: float = DEGENERACY_THRESHOLD) -> GeneralPositionReport:
    """Sample the simplex on a barycentric grid and test injectivity of the
    projection of every (n-2)-face onto the plane's orthocomplement."""
    if simplex.dim != simplex.ambient_dim:
        raise InvalidInputError("general position is defined for top-dimensional simplices")
    pts = simplex.sample_grid(resolution)
    try:
        frames = fld.frame(pts)
    except Exception as exc:
        raise GeneralPositionError(
            f"field evaluation failed on simplex {simplex.label or '?'}: {exc}") from exc
    margins, faces = _face_margins(simplex, frames)
    flat = int(np.argmin(margins))
    si, fi = np.unravel_index(flat, margins.shape)
    margin = float(margins[si, fi])
    return GeneralPositionReport(margin=margin, resolution=resolution,
                                 passed=margin > threshold, threshold=threshold,
                                 witness=(pts[si], faces[fi]), label=simplex.label)


def _meets_region(simplex: AffineSimplex, region: Box):
    return simplex.bounding_box().intersects(region)


def certify_general_position(tri: LatticeTriangulation, fld, region: Box,
                             resolution: int = 3,
                             threshold: float = DEGENERACY_THRESHOLD) -> ComplexPositionReport:
    """Per-simplex margins for every top simplex meeting the region."""
    margins = {}
    failing = []
    pos = tri.vertex_positions()
    for i, ix in enumerate(tri.top_simplex_indices()):
        simp = AffineSimplex(pos[list(ix)], label=str(i))
        if not _meets_region(simp, region):
            continue
        rep = is_general_position(simp, fld, resolution, threshold)
        margins[i] = rep.margin
        if not rep.passed:
            failing.append(i)
    return ComplexPositionReport(margins=margins, resolution=resolution,
                                 passed=not failing, threshold=threshold,
                                 failing=failing)


def _ball_sample(rng, count, dim, radius):
    direction = rng.normal(size=(count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return direction * radii[:, None]


def jiggle(tri: LatticeTriangulation, fld, region: Box, epsilon: float, seed: int,
           max_iters: int = 200, resolution: int = 3,
           min_margin: float = 1e-3) -> LatticeTriangulation:
    """Seeded rejection search for an epsilon-jiggling in general position.

    Vertices of failing simplices are re-offset uniformly in the open
    epsilon-ball each round; combinatorics are untouched.  Raises JiggleError
    with the offending report when the budget runs out.
    """
    if epsilon < 0:
        raise InvalidInputError("epsilon must be nonnegative")
    if epsilon >= tri.min_edge_length() / 2:
        raise InvalidInputError("epsilon must stay below half the minimum edge length")
    rng = np.random.default_rng(seed)
    tops = tri.top_simplex_indices()
    active = []
    pos0 = tri.vertex_positions()
    for i, ix in enumerate(tops):
        simp = AffineSimplex(pos0[list(ix)], label=str(i))
        if _meets_region(simp, region):
            active.append(i)

    offsets = tri.offsets.copy()
    best = None
    for iteration in range(max_iters + 1):
        work = tri.with_offsets(offsets, epsilon=max(epsilon, tri.epsilon))
        pos = work.vertex_positions()
        failing = []
        margins = {}
        for i in active:
            simp = AffineSimplex(pos[list(tops[i])], label=str(i))
            rep = is_general_position(simp, fld, resolution)
            margins[i] = rep.margin
            if rep.margin < min_margin:
                failing.append(i)
        worst = min(margins.values()) if margins else float("inf")
        if best is None or worst > best[0]:
            best = (worst, failing)
        if not failing:
            return work
        if epsilon == 0.0 or iteration == max_iters:
            report = ComplexPositionReport(margins=margins, resolution=resolution,
                                           passed=False, threshold=min_margin,
                                           failing=failing)
            raise JiggleError(
                f"no admissible jiggling found: {len(failing)} simplices below "
                f"margin {min_margin:g} (best margin {best[0]:.3e})", report)
        moved = sorted({v for i in failing for v in tops[i]})
        offsets[moved] = _ball_sample(rng, len(moved), tri.n, epsilon)
    raise AssertionError("unreachable")


@dataclass
class ShadowDecomposition:
    """Projection of an n-simplex onto the plane's orthocomplement at x."""

    base_point: np.ndarray
    polytope: np.ndarray          # (m, n-2) hull vertices, boundary order
    polytope_vertex_ids: tuple    # simplex vertex indices realizing the hull
    boundary_faces: tuple         # (n-3)-faces of the simplex forming the shadow boundary
    projected_vertices: np.ndarray
    is_isomorphism: bool


def shadow_decomposition(simplex: AffineSimplex, fld, x) -> ShadowDecomposition:
    """Project the simplex to the orthocomplement of the plane at x and
    extract the boundary subcomplex mapping onto the shadow polytope."""
    x = np.asarray(x, dtype=float)
    rep_margin, _ = _face_margins(simplex, fld.frame(x[None]))
    if float(rep_margin.min()) <= DEGENERACY_THRESHOLD:
        raise GeneralPositionError(
            f"simplex is not in general position at the base point "
            f"(margin {float(rep_margin.min()):.3e})")
    frame = fld.frame(x)
    n = simplex.ambient_dim
    # deterministic orthonormal basis of the orthocomplement
    u, s, vt = np.linalg.svd(frame)
    basis = u[:, 2:]  # (n, n-2)
    proj = simplex.vertices @ basis  # (n+1, n-2)
    if n - 2 == 1:
        order = np.argsort(proj[:, 0])
        hull_ids = (int(order[0]), int(order[-1]))
        interior = [i for i in range(len(proj)) if i not in hull_ids]
        inside = all(proj[order[0], 0] < proj[i, 0] < proj[order[-1], 0] for i in interior)
        faces = tuple((i,) for i in hull_ids)
        return ShadowDecomposition(x, proj[list(hull_ids)], hull_ids, faces, proj, inside)
    if n - 2 != 2:
        raise InvalidInputError("shadow decomposition is implemented for codimension <= 2")

    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(proj)
    except QhullError as exc:
        raise GeneralPositionError(f"degenerate shadow polygon: {exc}") from exc
    hull_ids = tuple(int(i) for i in hull.vertices)  # counterclockwise
    inner = [i for i in range(len(proj)) if i not in hull_ids]
    strictly_inside = True
    for i in inner:
        vals = hull.equations[:, :-1] @ proj[i] + hull.equations[:, -1]
        if np.any(vals > -1e-12):
            strictly_inside = False
    boundary_faces = tuple(
        tuple(sorted((hull_ids[a], hull_ids[(a + 1) % len(hull_ids)])))
        for a in range(len(hull_ids)))
    # each boundary edge of the shadow must be the projection of an edge of
    # the simplex (automatic for vertex pairs) and the cycle must close
    iso = strictly_inside and 3 <= len(hull_ids) <= simplex.dim + 1
    return ShadowDecomposition(x, proj[list(hull_ids)], hull_ids, boundary_faces,
                               proj, iso)
