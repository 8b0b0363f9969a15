"""Tubular-neighborhood data for simplices relative to a plane field, the
civility condition certificates, radius search and the flattening homotopy.

For an i-simplex whose tangent space is transverse to the plane field, the
fiber over x is the product of a 2-disk in the affine plane x + tau(x) with
radius delta and a disk of radius eta in the orthogonal complement E_x of
tau(x) + T_sigma.  A field is *tube-constant* when it equals tau(x) on every
fiber; the flattening homotopy pushes a nearby field onto the tube-constant
one along straight lines of graph maps, damped radially so it is supported in
an enlarged tube.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np

from .boxes import Box
from .errors import BoundaryError, GeneralPositionError, InvalidInputError
from .geometry import AffineSimplex, barycentric_grid
from .holonomy import _step_scalar
from .planefield import (FieldHomotopy, PlaneField, plane_distance,
                         _complement_basis, _graph_between, _orthonormalize_pair)

__all__ = [
    "FiberFrame",
    "TubularNbhd",
    "LineTubularNbhd",
    "CertificateEntry",
    "CivilizationCertificate",
    "normal_fiber",
    "check_constancy",
    "check_compatibility",
    "radius_search",
    "flatten_on_tube",
    "pairwise_graph_norms",
    "certify_tube_system",
]


@dataclass
class FiberFrame:
    base_point: np.ndarray
    plane_basis: np.ndarray   # (n, 2) orthonormal
    normal_basis: np.ndarray  # (n, n-2-i) orthonormal
    delta: float
    eta: float


def normal_fiber(simplex: AffineSimplex, fld: PlaneField, x, delta: float,
                 eta: float) -> FiberFrame:
    """Orthonormal bases of the fiber directions at x: the plane tau(x) and
    the complement E_x of tau(x) + T_sigma."""
    x = np.asarray(x, dtype=float)
    n = simplex.ambient_dim
    i = simplex.dim
    frame = fld.frame(x)
    edges = simplex.edge_vectors().T  # (n, i)
    stacked = np.concatenate([frame, edges], axis=1)
    rank = np.linalg.matrix_rank(stacked, tol=1e-10)
    if rank != i + 2:
        raise GeneralPositionError(
            f"tau(x) + T_sigma drops dimension at {x} (rank {rank}, expected {i + 2})")
    u, s, _ = np.linalg.svd(stacked, full_matrices=True)
    normal = u[:, i + 2:]
    return FiberFrame(x, frame, normal, float(delta), float(eta))


@dataclass
class TubularNbhd:
    """Tube over an i-simplex with plane radius delta and normal radius eta."""

    simplex: AffineSimplex
    field: PlaneField
    delta: float
    eta: float
    label: str = ""

    @property
    def dim(self):
        return self.simplex.dim

    @property
    def normal_dim(self):
        return self.simplex.ambient_dim - 2 - self.simplex.dim

    def fiber(self, x) -> FiberFrame:
        return normal_fiber(self.simplex, self.field, x, self.delta, self.eta)

    # -- sampling -------------------------------------------------------------
    def base_samples(self, resolution: int = 3):
        return self.simplex.sample_grid(resolution)

    def _disk_offsets(self, dim, radius, shells=2, spokes=8):
        if dim == 0 or radius == 0.0:
            return np.zeros((1, dim))
        offs = [np.zeros(dim)]
        for shell in range(1, shells + 1):
            r = radius * shell / shells
            if dim == 1:
                offs.extend([[r], [-r]])
            else:
                for j in range(spokes):
                    ang = 2 * np.pi * j / spokes
                    vec = np.zeros(dim)
                    vec[0] = r * np.cos(ang)
                    vec[1] = r * np.sin(ang)
                    offs.append(vec)
                    if dim > 2:
                        for axis in range(2, dim):
                            vec = np.zeros(dim)
                            vec[axis] = r
                            offs.append(vec.copy())
                            vec[axis] = -r
                            offs.append(vec.copy())
        return np.asarray(offs)

    def sample_points(self, resolution: int = 3, shells: int = 2, spokes: int = 8,
                      scale: float = 1.0):
        """Fiber-grid points of the tube, tagged with their base points."""
        bases = self.base_samples(resolution)
        points = []
        base_of = []
        for x in bases:
            fr = self.fiber(x)
            b_offs = self._disk_offsets(2, self.delta * scale, shells, spokes)
            e_offs = self._disk_offsets(self.normal_dim, self.eta * scale, shells, spokes)
            for b in b_offs:
                for e in e_offs:
                    points.append(x + fr.plane_basis @ b + (fr.normal_basis @ e if self.normal_dim else 0.0))
                    base_of.append(x)
        return np.asarray(points), np.asarray(base_of)

    # -- membership -----------------------------------------------------------
    def locate(self, p, tol: float = 1e-10, max_iter: int = 50, slack: float = 1.0):
        """Solve p = x(lam) + B(x) b + E(x) e for x in the simplex.

        Returns (x, b, e) or None when p is not in the (slack-scaled) tube."""
        p = np.asarray(p, dtype=float)
        simp = self.simplex
        i = simp.dim
        edges = simp.edge_vectors().T  # (n, i)
        if i == 0:
            x = simp.vertices[0]
            fr = self.fiber(x)
            d = p - x
            b = fr.plane_basis.T @ d
            e = fr.normal_basis.T @ d if self.normal_dim else np.zeros(0)
            resid = d - fr.plane_basis @ b - (fr.normal_basis @ e if self.normal_dim else 0.0)
            if np.linalg.norm(resid) > 1e-8:
                return None
        else:
            lam = np.full(i, 1.0 / (i + 1))
            for _ in range(max_iter):
                x = simp.vertices[0] + edges @ lam
                fr = self.fiber(x)
                d = p - x
                b = fr.plane_basis.T @ d
                e = fr.normal_basis.T @ d if self.normal_dim else np.zeros(0)
                resid = d - fr.plane_basis @ b - (fr.normal_basis @ e if self.normal_dim else 0.0)
                # Newton step in lam on the residual projected to the edge span
                jac = np.concatenate([fr.plane_basis, fr.normal_basis, edges], axis=1) \
                    if self.normal_dim else np.concatenate([fr.plane_basis, edges], axis=1)
                try:
                    sol = np.linalg.lstsq(jac, d, rcond=None)[0]
                except np.linalg.LinAlgError:
                    return None
                new_lam = sol[-i:] + lam
                step = new_lam - lam
                lam = new_lam
                if np.linalg.norm(step) < tol:
                    break
            if np.any(lam < -1e-9) or np.sum(lam) > 1.0 + 1e-9:
                return None
            x = simp.vertices[0] + edges @ lam
            fr = self.fiber(x)
            d = p - x
            b = fr.plane_basis.T @ d
            e = fr.normal_basis.T @ d if self.normal_dim else np.zeros(0)
            resid = d - fr.plane_basis @ b - (fr.normal_basis @ e if self.normal_dim else 0.0)
            if np.linalg.norm(resid) > 1e-7:
                return None
        if np.linalg.norm(b) > self.delta * slack + 1e-12:
            return None
        if self.normal_dim and np.linalg.norm(e) > self.eta * slack + 1e-12:
            return None
        return x, b, e

    def contains(self, p, slack: float = 1.0):
        return self.locate(p, slack=slack) is not None

    def verify_structure(self, resolution: int = 3, tol: float = 1e-8):
        """Fiber dimension constancy and tubular injectivity on samples."""
        bases = self.base_samples(resolution)
        for x in bases:
            self.fiber(x)  # raises on dimension drop
        pts, base_of = self.sample_points(resolution, shells=1, spokes=6, scale=0.95)
        for p, x in zip(pts, base_of):
            hit = self.locate(p, slack=1.05)
            if hit is None:
                return False, (p, "fiber point does not locate in its own tube")
            if np.linalg.norm(hit[0] - x) > max(self.delta, self.eta) * 0.75:
                return False, (p, "tube fibers overlap: located far from the source fiber")
        return True, None


@dataclass
class LineTubularNbhd:
    """Segment tube over an (n-1)-simplex: fibers are delta-segments in the
    direction F_x, the complement in tau(x) of the line tau(x) & T_sigma."""

    simplex: AffineSimplex
    field: PlaneField
    delta: float
    label: str = ""

    def fiber_direction(self, x):
        x = np.asarray(x, dtype=float)
        frame = self.field.frame(x)
        edges = self.simplex.edge_vectors().T
        # line tau(x) & T_sigma: kernel of projection of tau-basis off T_sigma
        q = np.linalg.qr(edges)[0]
        perp = np.eye(len(x)) - q @ q.T
        m = perp @ frame  # components of tau-basis off the tangent plane
        u, s, vt = np.linalg.svd(m)
        if s[-1] > 1e-8 or s[0] < 1e-10:
            raise GeneralPositionError(
                f"tau(x) meets the tangent space in dimension != 1 at {x}")
        line_coords = vt[-1]            # direction inside tau with zero normal part
        f_coords = vt[0]                # complement of the line inside tau
        direction = frame @ f_coords
        return direction / np.linalg.norm(direction)

    def sample_points(self, resolution: int = 3, shells: int = 2, scale: float = 1.0):
        bases = self.simplex.sample_grid(resolution)
        points = []
        base_of = []
        for x in bases:
            d = self.fiber_direction(x)
            for shell in range(-shells, shells + 1):
                points.append(x + d * (self.delta * scale * shell / shells))
                base_of.append(x)
        return np.asarray(points), np.asarray(base_of)

    def verify_structure(self, resolution: int = 3):
        try:
            for x in self.simplex.sample_grid(resolution):
                self.fiber_direction(x)
        except GeneralPositionError as exc:
            return False, (None, str(exc))
        return True, None


# ---------------------------------------------------------------------------
# condition checks


@dataclass
class CertificateEntry:
    condition: str
    subject: str
    passed: bool
    margin: float
    witness: list = None


@dataclass
class CivilizationCertificate:
    entries: list = dc_field(default_factory=list)
    resolution: int = 3
    seed: int = 0

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def add(self, condition, subject, passed, margin, witness=None):
        self.entries.append(CertificateEntry(condition, subject, bool(passed),
                                             float(margin),
                                             None if witness is None else
                                             [float(v) for v in np.ravel(witness)]))

    def to_json(self):
        return {
            "resolution": self.resolution,
            "seed": self.seed,
            "passed": self.passed,
            "entries": [
                {"condition": e.condition, "subject": e.subject, "passed": e.passed,
                 "margin": e.margin, "witness": e.witness}
                for e in self.entries
            ],
        }


def check_constancy(fld: PlaneField, simplex: AffineSimplex, delta: float,
                    eta: float, resolution: int = 3, tol: float = 1e-8):
    """Max projector distance between the field on a fiber and at its base
    point; the tube-constancy condition asks for < tol."""
    tube = TubularNbhd(simplex, fld, delta, eta)
    pts, base_of = tube.sample_points(resolution)
    if np.any(~fld.domain.contains(pts)):
        raise BoundaryError("tube fiber exits the field domain")
    frames = fld.frame(pts)
    base_frames = fld.frame(base_of)
    dist = plane_distance(frames, base_frames)
    i = int(np.argmax(dist))
    return {"margin": float(dist[i]), "passed": bool(dist[i] < tol),
            "witness": pts[i].tolist(), "tolerance": tol}


def check_compatibility(tube_a: TubularNbhd, tube_b: TubularNbhd,
                        common: TubularNbhd = None, resolution: int = 3,
                        samples: int = 200, seed: int = 0):
    """Sampled check of tube intersection containment and fiber nesting.

    Points of tube_a that also lie in tube_b must lie in the tube of the
    common face (vacuous for disjoint simplices when ``common`` is None and
    no intersection point is found); for a proper face, the whole plane-disk
    through an intersection point must sit strictly inside the face fiber."""
    rng = np.random.default_rng(seed)
    pts, base_of = tube_a.sample_points(resolution)
    jitter = rng.normal(scale=0.2 * max(tube_a.delta, tube_a.eta, 1e-9),
                        size=pts.shape)
    cloud = np.concatenate([pts, pts + jitter])
    report = {"passed": True, "checked": 0, "witness": None, "inconclusive": False}
    face_of = common is not None and set(map(tuple, common.simplex.vertices)) < \
        set(map(tuple, tube_a.simplex.vertices))
    for p in cloud:
        if tube_a.locate(p) is None:
            continue
        hit_b = tube_b.locate(p)
        if hit_b is None:
            continue
        report["checked"] += 1
        if common is None:
            report["passed"] = False
            report["witness"] = p.tolist()
            return report
        hit_c = common.locate(p)
        if hit_c is None:
            report["passed"] = False
            report["witness"] = p.tolist()
            return report
    if face_of:
        # nesting: for fiber points of the face tube met by tube_a fibers,
        # the plane disk of tube_a must sit strictly inside the face's disk
        bases = tube_a.base_samples(resolution)
        for x in bases:
            hit = common.locate(x)
            if hit is None:
                continue
            v, b0, e0 = hit
            fr = tube_a.fiber(x)
            angles = np.linspace(0.0, 2 * np.pi, 9)[:-1]
            disk = x[None] + tube_a.delta * (
                np.cos(angles)[:, None] * fr.plane_basis[:, 0][None] +
                np.sin(angles)[:, None] * fr.plane_basis[:, 1][None])
            for q in disk:
                hit_q = common.locate(q, slack=1.0)
                if hit_q is None:
                    report["passed"] = False
                    report["witness"] = q.tolist()
                    return report
                _, bq, eq = hit_q
                if np.linalg.norm(bq) >= common.delta * (1.0 - 1e-9):
                    report["passed"] = False
                    report["witness"] = q.tolist()
                    return report
                if len(eq) and np.linalg.norm(eq - e0) > common.eta * 0.5:
                    report["inconclusive"] = True
    return report


def coface_boundary_clause(tube: TubularNbhd, coface: AffineSimplex,
                           resolution: int = 4):
    """An (n-2)-simplex having the tube's simplex as a face must meet the
    fiber boundary only in (interior plane disk) x (normal boundary)."""
    pts = coface.sample_grid(resolution * 2)
    worst = None
    for p in pts:
        hit = tube.locate(p, slack=1.02)
        if hit is None:
            continue
        _, b, e = hit
        nb = np.linalg.norm(b)
        if nb >= tube.delta * 0.98:
            return False, p, float(nb / tube.delta)
        worst = max(worst or 0.0, nb / tube.delta)
    return True, None, float(worst if worst is not None else 0.0)


def pairwise_graph_norms(fld: PlaneField, points):
    """Largest graph-map norm over all ordered point pairs (basis independent)."""
    pts = np.asarray(points, dtype=float)
    frames = fld.frame(pts)
    comps = np.stack([_complement_basis(f) for f in frames])
    a = np.einsum("xai,yaj->xyij", frames, frames)
    svals = np.linalg.svd(a, compute_uv=False)
    if np.any(svals[..., -1] < 1e-12):
        return float("inf"), None
    b = np.einsum("xak,yaj->xykj", comps, frames)
    l = b @ np.linalg.inv(a)
    norms = np.linalg.svd(l, compute_uv=False)[..., 0]
    idx = np.unravel_index(int(np.argmax(norms)), norms.shape)
    return float(norms[idx]), (pts[idx[0]], pts[idx[1]])


# ---------------------------------------------------------------------------
# radius search


def radius_search(simplex: AffineSimplex, fld: PlaneField, predecessors=(),
                  cofaces=(), region=None, resolution: int = 3,
                  eta_cap: float = 0.5, floor: float = 1e-6,
                  bisection_steps: int = 18):
    """Largest (delta_p, eta_p) passing the tube-structure predicates.

    ``predecessors``: already-certified tubes of the proper faces (their radii
    upper-bound ours); ``cofaces``: higher simplices for the boundary
    clause; ``region``: optional box that must contain the tube when the
    simplex lies in the declared integrable region.  Bisection assumes the
    predicates are monotone in the radii.
    """
    preds = list(predecessors)
    delta_hi = min([t.delta for t in preds], default=np.inf)
    eta_hi = min([t.eta for t in preds], default=np.inf)
    if not np.isfinite(delta_hi):
        dom = fld.domain
        margin = float(np.min(np.minimum(
            np.asarray(simplex.vertices) - np.asarray(dom.lo),
            np.asarray(dom.hi) - np.asarray(simplex.vertices))))
        delta_hi = max(margin, floor * 2)
        eta_hi = delta_hi
    delta_hi *= 0.99
    eta_hi *= 0.99

    def passes(delta, eta):
        tube = TubularNbhd(simplex, fld, delta, eta)
        ok, _ = tube.verify_structure(resolution)
        if not ok:
            return False
        if region is not None:
            pts, _ = tube.sample_points(resolution, shells=1, spokes=6)
            if np.any(~region.contains(pts)):
                return False
        for coface in cofaces:
            ok, _, _ = coface_boundary_clause(tube, coface, resolution)
            if not ok:
                return False
        for pred in preds:
            rep = check_compatibility(tube, pred, common=pred,
                                      resolution=resolution)
            if not rep["passed"]:
                return False
        return True

    # bisect delta with eta at its cap ratio
    lo, hi = floor, delta_hi
    if not passes(lo, min(eta_hi, lo * eta_cap)):
        raise GeneralPositionError(
            f"no admissible tube radii above {floor:g} for {simplex.label or 'simplex'}")
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        if passes(mid, min(eta_hi, mid * eta_cap)):
            lo = mid
        else:
            hi = mid
    delta_p = lo
    eta_target = min(eta_hi, delta_p * eta_cap)
    lo_e, hi_e = min(floor, eta_target), eta_target
    if passes(delta_p, hi_e):
        eta_p = hi_e
    else:
        for _ in range(bisection_steps):
            mid = 0.5 * (lo_e + hi_e)
            if passes(delta_p, mid):
                lo_e = mid
            else:
                hi_e = mid
        eta_p = lo_e
    return float(delta_p), float(eta_p)


# ---------------------------------------------------------------------------
# flattening homotopy


def flatten_on_tube(fld: PlaneField, simplex: AffineSimplex, delta: float,
                    eta: float, delta_bar: float, eta_bar: float,
                    graph_resolution: int = 3) -> FieldHomotopy:
    """Straight-line graph homotopy onto the tube-constant field.

    Inside the (delta, eta)-tube the endpoint plane equals tau(base point);
    between the tube and the enlarged (delta_bar, eta_bar)-tube the motion is
    radially damped to the identity; outside it is constant.  Graph norms
    along the way never exceed the initial ones (convexity of the graph
    segment)."""
    if not (delta_bar > delta and eta_bar >= eta):
        raise InvalidInputError("enlarged radii must strictly contain the tube")
    tube_bar = TubularNbhd(simplex, fld, delta_bar, eta_bar)
    # precondition: on the enlarged tube the field is a graph of norm < 1
    # over the plane at the fiber base point
    pts, base_of = tube_bar.sample_points(graph_resolution, shells=1, spokes=6)
    for p, x in zip(pts, base_of):
        fx = fld.frame(x)
        fp = fld.frame(p)
        try:
            l, _ = _graph_between(fx, fp)
        except Exception as exc:
            raise GeneralPositionError(
                f"graph precondition fails between {x} and {p}: {exc}") from exc
        norm = float(np.linalg.svd(l, compute_uv=False)[0]) if l.size else 0.0
        if norm >= 1.0 - 1e-9:
            raise GeneralPositionError(
                f"graph norm {norm:.3f} >= 1 between base {x} and fiber point {p}")

    support = simplex.bounding_box().expanded(1.05 * max(delta_bar, eta_bar))

    def ramp(b, e):
        nb = np.linalg.norm(b)
        ne = np.linalg.norm(e) if len(e) else 0.0
        rb = max(0.0, (nb - delta) / (delta_bar - delta))
        re = max(0.0, (ne - eta) / (eta_bar - eta)) if eta_bar > eta else \
            (0.0 if ne <= eta else 1.0)
        excess = max(rb, re)
        return 1.0 - _step_scalar(excess)

    def field_at(s):
        def span(points):
            points = np.asarray(points, dtype=float)
            frames = fld.frame(points)
            near = support.contains(points)
            for idx in np.nonzero(near)[0]:
                hit = tube_bar.locate(points[idx])
                if hit is None:
                    continue
                x, b, e = hit
                damp = ramp(b, e)
                if damp == 0.0:
                    continue
                fx = fld.frame(x)
                l, bx = _graph_between(fx, frames[idx])
                graph = fx + bx @ ((1.0 - s * damp) * l)
                frames[idx] = _orthonormalize_pair(graph)
            return frames

        return PlaneField(span, fld.domain, name=f"flatten@{s:g}")

    return FieldHomotopy(start=fld, end=field_at(1.0), evaluator=field_at,
                         support=support)


# ---------------------------------------------------------------------------
# face-poset driver


def certify_tube_system(top: AffineSimplex, fld: PlaneField, radii: dict,
                        resolution: int = 3, seed: int = 0,
                        constancy_tol: float = 1e-8,
                        region=None) -> CivilizationCertificate:
    """Run the tube conditions over the face poset of one top simplex.

    ``radii``: dim -> (delta, eta) for dims 0..n-2 plus optionally
    dim n-1 -> (delta, 0) for the segment tubes.  Checks per face: tube
    structure, fiber constancy, pairwise compatibility with faces; for
    (n-1)-faces the segment-tube analogues."""
    cert = CivilizationCertificate(resolution=resolution, seed=seed)
    n = top.ambient_dim
    tubes = {}
    for dim in range(0, n - 1):
        if dim not in radii:
            continue
        delta, eta = radii[dim]
        for face_ix in top.faces(dim):
            face = top.face(face_ix)
            label = f"{dim}-face{face_ix}"
            tube = TubularNbhd(face, fld, delta, eta, label=label)
            ok, witness = tube.verify_structure(resolution)
            cert.add("tube_structure", label, ok, 1.0 if ok else 0.0,
                     None if ok or witness is None else witness[0])
            if not ok:
                continue
            tubes[face_ix] = tube
            rep = check_constancy(fld, face, delta, eta, resolution,
                                  tol=constancy_tol)
            cert.add("fiber_constancy", label, rep["passed"], rep["margin"],
                     rep["witness"])
            if region is not None:
                pts, _ = tube.sample_points(resolution, shells=1, spokes=6)
                inside = bool(np.all(region.contains(pts)))
                cert.add("tube_in_declared_region", label, inside,
                         1.0 if inside else 0.0)
    for (ix_a, tube_a), (ix_b, tube_b) in itertools.combinations(tubes.items(), 2):
        shared = tuple(sorted(set(ix_a) & set(ix_b)))
        common = tubes.get(shared)
        if set(ix_b) < set(ix_a):
            common = tube_b
        elif set(ix_a) < set(ix_b):
            common = tube_a
        rep = check_compatibility(tube_a, tube_b, common=common,
                                  resolution=resolution, seed=seed)
        cert.add("tube_compatibility", f"{tube_a.label}&{tube_b.label}",
                 rep["passed"], float(rep["checked"]), rep["witness"])
    if n - 1 in radii:
        delta, _ = radii[n - 1]
        for face_ix in top.faces(n - 1):
            face = top.face(face_ix)
            label = f"{n-1}-face{face_ix}"
            ltube = LineTubularNbhd(face, fld, delta, label=label)
            ok, witness = ltube.verify_structure(resolution)
            cert.add("line_tube_structure", label, ok, 1.0 if ok else 0.0)
            if not ok:
                continue
            pts, base_of = ltube.sample_points(resolution)
            frames = fld.frame(pts)
            base_frames = fld.frame(base_of)
            dist = plane_distance(frames, base_frames)
            worst = float(np.max(dist))
            cert.add("line_fiber_constancy", label, worst < constancy_tol, worst)
            # fiber direction must be tangent to the plane field along the fiber
            worst_tan = 0.0
            for p, x in zip(pts, base_of):
                d = ltube.fiber_direction(x)
                fp = fld.frame(p)
                proj = fp @ (fp.T @ d)
                worst_tan = max(worst_tan, float(np.linalg.norm(proj - d)))
            cert.add("line_fiber_tangency", label, worst_tan < 1e-6, worst_tan)
    return cert
