"""Reeb-type hole fillings on D^2 x R^k (desk scale k = 2).

The filling of the suspension with slope profile f is defined by the 1-form

    (1 - g(x)) dtheta
      + g(x) (lambda_1(r)(dtheta - f(x) dphi) + lambda_1/2(r) dr + lambda_0(r) dtheta)

on D^2 x S^1 x D^{k-1}, where (r, phi) are polar coordinates on the disk,
theta is the circle coordinate of the fiber tube (both angles in turns),
{lambda_0, lambda_1/2, lambda_1} is a partition of unity in r, f is the slope
profile and g interpolates to the horizontal form near the tube boundary.
Collecting terms, the coefficients in the coframe
{omega = P dtheta + Q dr + S dphi, dx_1..dx_{k-1}} are

    P = 1 - g lambda_1/2,   Q = g lambda_1/2,   S = -g lambda_1 f c(phi),

with c = dtau/dphi an optional angular speed reparametrization (c = 1 for the
plain form).  P + Q = 1 pointwise, so the coframe never vanishes, and the
single integrability coefficient of omega ^ d omega reduces to
R = P dS/dr - S dP/dr, which vanishes identically when g = 1 on the support
of f and the lambda supports are disjoint.

The fiber tube is the annular model of the circle-times-interval: core circle
radius 1, tube half-width 1/2, transverse coordinate x1 = u in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .boxes import Box
from .errors import CertificationFailure, InvalidInputError
from .expr import Const, Expr, Mul, Add, Sub, Div, Var, Step, parse_expr
from .diffgroup import TUBE_CORE_RADIUS, TUBE_HALF_WIDTH, AnnulusRotation, CompactDiffeo
from .holonomy import PeriodicPath, concat as concat_paths
from .planefield import PlaneField

__all__ = [
    "PartitionProfiles",
    "FillingForm",
    "GluedFilling",
    "default_profiles",
    "default_slope_expr",
    "default_interpolation_expr",
    "horizontal_form",
    "reeb_filling_form",
    "integrability_residual_grid",
    "nonvanishing_certificate",
    "transversality_homotopy",
    "boundary_holonomy_check",
    "product_structure_check",
    "leaf_trace",
    "glue_concat",
]


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class PartitionProfiles:
    """Smooth partition of unity {lambda_0, lambda_1/2, lambda_1} on [0, 1]."""

    lam0: Expr
    lam_half: Expr
    lam1: Expr

    def validate(self, samples: int = 512, tol: float = 1e-12):
        r = np.linspace(0.0, 1.0, samples)
        v0 = np.asarray(self.lam0.eval({"r": r}), dtype=float)
        vh = np.asarray(self.lam_half.eval({"r": r}), dtype=float)
        v1 = np.asarray(self.lam1.eval({"r": r}), dtype=float)
        total = v0 + vh + v1
        if np.max(np.abs(total - 1.0)) > tol:
            i = int(np.argmax(np.abs(total - 1.0)))
            raise InvalidInputError(f"profiles do not sum to 1 at r={r[i]:.4f} "
                                    f"(sum {total[i]!r})")
        if abs(float(self.lam0.eval({"r": 0.0})) - 1.0) > tol or \
           abs(float(self.lam1.eval({"r": 1.0})) - 1.0) > tol or \
           abs(float(self.lam_half.eval({"r": 0.5})) - 1.0) > tol:
            raise InvalidInputError("each profile must be 1 near its anchor point")
        overlap = np.minimum(np.abs(v0), np.abs(v1))
        if np.max(overlap) > tol:
            i = int(np.argmax(overlap))
            raise InvalidInputError(
                f"lambda_0 and lambda_1 must have disjoint supports; both are "
                f"nonzero at r={r[i]:.4f}")
        return self

    def to_json(self):
        return {"lambda0": str(self.lam0), "lambda_half": str(self.lam_half),
                "lambda1": str(self.lam1)}


def default_profiles() -> PartitionProfiles:
    """lambda_0 = 1 on [0, .25], lambda_1 = 1 on [.75, 1], middle bump
    supported in [.25, .75]; built from the flat-ended smoothstep."""
    s_lo = "smoothstep((r - 0.25) / 0.15)"
    s_hi = "smoothstep((r - 0.6) / 0.15)"
    return PartitionProfiles(
        lam0=parse_expr(f"1 - {s_lo}"),
        lam_half=parse_expr(f"{s_lo} - {s_hi}"),
        lam1=parse_expr(s_hi),
    )


def default_slope_expr() -> str:
    """Plateau slope profile: 1 on |u| <= 0.3, supported in |u| <= 0.7."""
    return "1 - smoothstep((x1^2 - 0.09) / 0.4)"


def default_interpolation_expr() -> str:
    """Interpolation profile: 1 on |u| <= 0.7, supported in |u| < 0.9."""
    return "1 - smoothstep((x1^2 - 0.49) / 0.32)"


# ---------------------------------------------------------------------------
# the form


def _as_expr(e, variables):
    return e if isinstance(e, Expr) else parse_expr(e, variables=variables)


@dataclass(frozen=True)
class FillingForm:
    """Coefficient package (P, Q, S) of the filling 1-form.

    ``angle_progress`` is the boundary reparametrization tau(phi) (in turns);
    the plain form uses tau = phi.  Constructed unvalidated; use
    ``reeb_filling_form`` to enforce the admissibility relations.
    """

    slope: Expr              # f, in x1 = u
    interpolation: Expr      # g, in x1 = u
    profiles: PartitionProfiles
    angle_progress: Expr = None  # tau(phi); None means identity

    def __post_init__(self):
        if self.angle_progress is None:
            object.__setattr__(self, "angle_progress", Var("phi"))

    # -- scalar coefficient fields ------------------------------------------
    def _fg(self, x):
        env = {"x1": np.asarray(x, dtype=float)}
        return (np.asarray(self.slope.eval(env), dtype=float),
                np.asarray(self.interpolation.eval(env), dtype=float))

    def _lams(self, r):
        env = {"r": np.asarray(r, dtype=float)}
        return (np.asarray(self.profiles.lam0.eval(env), dtype=float),
                np.asarray(self.profiles.lam_half.eval(env), dtype=float),
                np.asarray(self.profiles.lam1.eval(env), dtype=float))

    def _rate(self, phi):
        env = {"phi": np.asarray(phi, dtype=float)}
        return np.asarray(self.angle_progress.diff("phi").eval(env), dtype=float)

    def coefficients(self, r, x, phi=0.0):
        """(P, Q, S) at radius r, tube coordinate x = u, disk angle phi."""
        r = np.asarray(r, dtype=float)
        x = np.asarray(x, dtype=float)
        f, g = self._fg(x)
        _, lh, l1 = self._lams(r)
        rate = self._rate(phi)
        p = 1.0 - g * lh
        q = g * lh
        s = -(g * l1 * f) * rate
        p, q, s = np.broadcast_arrays(p, q, s)
        return p.copy(), q.copy(), s.copy()

    def coefficients_dr(self, r, x, phi=0.0):
        """Analytic radial derivatives (dP/dr, dQ/dr, dS/dr)."""
        r = np.asarray(r, dtype=float)
        x = np.asarray(x, dtype=float)
        f, g = self._fg(x)
        envr = {"r": r}
        dlh = np.asarray(self.profiles.lam_half.diff("r").eval(envr), dtype=float)
        dl1 = np.asarray(self.profiles.lam1.diff("r").eval(envr), dtype=float)
        rate = self._rate(phi)
        return -g * dlh, g * dlh, -(g * dl1 * f) * rate

    def residual(self, r, x, phi=0.0, fd_step=None):
        """Integrability coefficient R = P dS/dr - S dP/dr.

        With ``fd_step`` the radial derivatives come from central differences
        instead of the symbolic ones (for convergence studies)."""
        p, _, s = self.coefficients(r, x, phi)
        if fd_step is None:
            dp, _, ds = self.coefficients_dr(r, x, phi)
        else:
            h = float(fd_step)
            pp, _, sp = self.coefficients(np.asarray(r) + h, x, phi)
            pm, _, sm = self.coefficients(np.asarray(r) - h, x, phi)
            dp = (pp - pm) / (2 * h)
            ds = (sp - sm) / (2 * h)
        return p * ds - s * dp

    def with_angle_progress(self, tau: Expr) -> "FillingForm":
        return replace(self, angle_progress=tau)

    def boundary_path(self, flat_zone_check: bool = False) -> PeriodicPath:
        """The suspension path v(t) = (tube rotation by tau(t) * slope)."""
        prof = self.slope
        tau = self.angle_progress

        def ev(t):
            turns = float(tau.eval({"phi": t}))
            if turns == 0.0:
                return CompactDiffeo.identity(2)
            return CompactDiffeo.of(AnnulusRotation(prof, turns, validate=False))

        rate = tau.diff("phi")
        flat0 = _flat_prefix(rate)
        flat1 = _flat_suffix(rate)
        horiz = ((0.0, flat0), (1.0 - flat1, 1.0))
        support = AnnulusRotation(prof, 1.0, validate=False).support
        return PeriodicPath(ev, horizontal=horiz, support=support,
                            label="filling_boundary")

    # -- geometric coframe on D^2 x R^2 --------------------------------------
    def coframe_rows(self, points):
        """Rows {omega, du} as covectors in Cartesian (z1, z2, y1, y2).

        Off the tube the same formulas apply with f = g = 0, giving
        {dtheta, du}; within a small disk around the fiber origin the rows
        switch to the Cartesian horizontal pair {dy1, dy2} (same plane)."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pb = pts[None] if single else pts
        n = len(pb)
        z = pb[:, :2]
        y = pb[:, 2:]
        r = np.linalg.norm(z, axis=1)
        rho = np.linalg.norm(y, axis=1)
        rows = np.zeros((n, 2, 4))

        deep = rho < 0.4 * TUBE_CORE_RADIUS
        rows[deep, 0, 2] = 1.0
        rows[deep, 1, 3] = 1.0

        sel = ~deep
        if np.any(sel):
            zs, ys, rs, rhos = z[sel], y[sel], r[sel], rho[sel]
            u = (rhos - TUBE_CORE_RADIUS) / TUBE_HALF_WIDTH
            phi = np.mod(np.arctan2(zs[:, 1], zs[:, 0]) / (2 * np.pi), 1.0)
            p, q, s = self.coefficients(np.clip(rs, 0.0, 1.0), u, phi)
            block = np.zeros((int(np.sum(sel)), 2, 4))
            # omega = P dtheta + Q dr + S dphi
            block[:, 0, 2] = p * (-ys[:, 1]) / (2 * np.pi * rhos ** 2)
            block[:, 0, 3] = p * (ys[:, 0]) / (2 * np.pi * rhos ** 2)
            r_safe = np.where(rs > 1e-12, rs, 1.0)
            qr = np.where(q != 0.0, q / r_safe, 0.0)
            block[:, 0, 0] += qr * zs[:, 0]
            block[:, 0, 1] += qr * zs[:, 1]
            sphi = np.where(s != 0.0, s / (2 * np.pi * r_safe ** 2), 0.0)
            block[:, 0, 0] += sphi * (-zs[:, 1])
            block[:, 0, 1] += sphi * (zs[:, 0])
            # du
            block[:, 1, 2] = ys[:, 0] / (rhos * TUBE_HALF_WIDTH)
            block[:, 1, 3] = ys[:, 1] / (rhos * TUBE_HALF_WIDTH)
            rows[sel] = block
        return rows[0] if single else rows

    def plane_field(self, domain: Box = None) -> PlaneField:
        dom = domain or Box((-1.0, -1.0, -2.0, -2.0), (1.0, 1.0, 2.0, 2.0))

        def span(pb):
            rows = self.coframe_rows(pb)
            _, _, vt = np.linalg.svd(rows)
            return np.transpose(vt[:, 2:, :], (0, 2, 1))

        return PlaneField(span, dom, name="filling_kernel")

    def to_json(self):
        data = {"f": str(self.slope), "g": str(self.interpolation)}
        data.update(self.profiles.to_json())
        if str(self.angle_progress) != "phi":
            data["angle_progress"] = str(self.angle_progress)
        return data

    @classmethod
    def from_json(cls, data):
        profiles = PartitionProfiles(lam0=parse_expr(data["lambda0"]),
                                     lam_half=parse_expr(data["lambda_half"]),
                                     lam1=parse_expr(data["lambda1"]))
        tau = parse_expr(data["angle_progress"]) if "angle_progress" in data else None
        return cls(slope=parse_expr(data["f"]), interpolation=parse_expr(data["g"]),
                   profiles=profiles, angle_progress=tau)


def _flat_prefix(rate: Expr, samples: int = 257, tol: float = 0.0):
    t = np.linspace(0.0, 1.0, samples)
    vals = np.abs(np.asarray(rate.eval({"phi": t}), dtype=float))
    nz = np.nonzero(vals > tol)[0]
    return float(t[nz[0] - 1]) if len(nz) and nz[0] > 0 else (1.0 if not len(nz) else 0.0)


def _flat_suffix(rate: Expr, samples: int = 257, tol: float = 0.0):
    t = np.linspace(0.0, 1.0, samples)
    vals = np.abs(np.asarray(rate.eval({"phi": t}), dtype=float))
    nz = np.nonzero(vals > tol)[0]
    return float(1.0 - t[nz[-1] + 1]) if len(nz) and nz[-1] < samples - 1 else (1.0 if not len(nz) else 0.0)


def horizontal_form() -> FillingForm:
    return FillingForm(slope=Const(0.0), interpolation=Const(0.0),
                       profiles=default_profiles())


def reeb_filling_form(f, g, profiles: PartitionProfiles = None,
                      samples: int = 1024) -> FillingForm:
    """Validated filling form: f, g into [0,1] vanishing near the tube
    boundary, g identically 1 on the support of f, admissible profiles."""
    fe = _as_expr(f, ("x1", "u"))
    ge = _as_expr(g, ("x1", "u"))
    profs = (profiles or default_profiles()).validate()
    u = np.linspace(-1.0, 1.0, samples)
    fv = np.asarray(fe.eval({"x1": u}), dtype=float)
    gv = np.asarray(ge.eval({"x1": u}), dtype=float)
    if np.any(fv < -1e-12) or np.any(fv > 1.0 + 1e-12) or \
       np.any(gv < -1e-12) or np.any(gv > 1.0 + 1e-12):
        raise InvalidInputError("slope and interpolation profiles must take values in [0, 1]")
    edge = np.abs(u) > 0.97
    if np.any(np.abs(fv[edge]) > 1e-9) or np.any(np.abs(gv[edge]) > 1e-9):
        i = int(np.argmax(np.where(edge, np.abs(fv) + np.abs(gv), 0.0)))
        raise InvalidInputError(f"profiles must vanish near the tube boundary "
                                f"(witness u={u[i]:.4f})")
    bad = (np.abs(fv) > 0.0) & (np.abs(gv - 1.0) > 1e-12)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidInputError(
            f"interpolation must equal 1 on the support of the slope "
            f"(witness u={u[i]:.4f}: f={fv[i]:.3e}, g={gv[i]!r})")
    return FillingForm(slope=fe, interpolation=ge, profiles=profs)


# ---------------------------------------------------------------------------
# certificates


def _default_grid(resolution=256):
    r = np.linspace(0.0, 1.0, resolution)
    u = np.linspace(-1.0, 1.0, resolution)
    return np.meshgrid(r, u, indexing="ij")


def integrability_residual_grid(form: FillingForm, resolution: int = 256,
                                fd_step=None, phi=0.25):
    """Max |R| over an (r, u) grid; phi only matters for reparametrized forms."""
    rr, uu = _default_grid(resolution)
    if fd_step is not None:
        h = float(fd_step)
        rr = np.clip(rr, h, 1.0 - h)
    vals = np.abs(form.residual(rr, uu, phi, fd_step=fd_step))
    return float(np.max(vals))


def nonvanishing_certificate(form: FillingForm, resolution: int = 256, phi=0.25):
    """min over the grid of max(|P|, |Q|, |S|); >= 1/2 since P + Q = 1."""
    rr, uu = _default_grid(resolution)
    p, q, s = form.coefficients(rr, uu, phi)
    return float(np.min(np.maximum(np.abs(p), np.maximum(np.abs(q), np.abs(s)))))


def transversality_homotopy(form: FillingForm, s: float) -> FillingForm:
    """Deform lambda_1/2 -> (1-s) lambda_1/2 and lambda_0 -> lambda_0 + s lambda_1/2.

    At s = 1 the dr-coefficient vanishes and the form becomes transverse to
    the fiber factor (P = 1 identically)."""
    if not 0.0 <= s <= 1.0:
        raise InvalidInputError("homotopy parameter must lie in [0, 1]")
    if s == 0.0:
        return form
    profs = form.profiles
    new = PartitionProfiles(
        lam0=Add(profs.lam0, Mul(Const(s), profs.lam_half)),
        lam_half=Mul(Const(1.0 - s), profs.lam_half),
        lam1=profs.lam1,
    )
    return replace(form, profiles=new)


def boundary_holonomy_check(form: FillingForm, band=(0.9, 1.0), x_count: int = 50,
                            grid: int = 64, steps: int = 256, tol: float = 1e-6):
    """Certify the boundary band and the one-turn holonomy.

    On r in [band] the coefficients must equal (1, 0, -f(x) tau'(phi))
    exactly; integrating the induced line field dtheta/dphi = -S/P over one
    turn must reproduce the tube rotation by f(x) * (tau(1) - tau(0))."""
    rs = np.linspace(band[0], band[1], grid)
    us = np.linspace(-0.999, 0.999, grid)
    rr, uu = np.meshgrid(rs, us, indexing="ij")
    phi_probe = np.linspace(0.0, 1.0, 17)
    f_vals = np.asarray(form.slope.eval({"x1": uu}), dtype=float)
    worst = 0.0
    witness = None
    for ph in phi_probe:
        p, q, s = form.coefficients(rr, uu, ph)
        rate = float(form.angle_progress.diff("phi").eval({"phi": ph}))
        target_s = np.broadcast_to(-f_vals * rate, s.shape)
        errs = np.maximum(np.abs(p - 1.0), np.maximum(np.abs(q), np.abs(s - target_s)))
        idx = np.unravel_index(int(np.argmax(errs)), errs.shape)
        if errs[idx] > worst:
            worst = float(errs[idx])
            witness = (float(rr[idx]), float(uu[idx]), float(ph))
    exact_band = worst == 0.0

    # line-field integration at r = 1 over one turn of phi
    xs = np.linspace(-0.95, 0.95, x_count)
    theta = np.zeros(x_count)
    h = 1.0 / steps

    def slope_at(ph):
        p, _, s = form.coefficients(1.0, xs, ph)
        return -s / p

    ph = 0.0
    for _ in range(steps):
        k1 = slope_at(ph)
        k2 = slope_at(ph + 0.5 * h)
        k3 = k2
        k4 = slope_at(ph + h)
        theta += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ph += h
    tau_span = float(form.angle_progress.eval({"phi": 1.0})) - \
        float(form.angle_progress.eval({"phi": 0.0}))
    expected = np.asarray(form.slope.eval({"x1": xs}), dtype=float) * tau_span
    holonomy_err = float(np.max(np.abs(theta - expected)))
    return {
        "band": list(band),
        "band_exact": bool(exact_band),
        "band_worst": worst,
        "band_witness": witness,
        "holonomy_error": holonomy_err,
        "passes": bool(exact_band and holonomy_err < tol),
        "tolerance": tol,
    }


def product_structure_check(form: FillingForm, resolution: int = 24,
                            tol: float = 1e-9):
    """Sampled verification of the product-structure clauses for the plane
    field of the filling: horizontality near the tube boundary and outside a
    compact set, transversality to the boundary cylinder, fiber
    transversality of the induced boundary line field, and radial constancy
    near the boundary circle."""
    field = form.plane_field()
    horizontal = np.zeros((4, 2))
    horizontal[0, 0] = 1.0
    horizontal[1, 1] = 1.0

    report = {"clauses": {}, "passes": True}

    def record(name, ok, worst, witness=None):
        report["clauses"][name] = {"passes": bool(ok), "worst": float(worst),
                                   "witness": None if witness is None else
                                   [float(v) for v in witness]}
        if not ok:
            report["passes"] = False

    # (a) horizontal where the tube interpolation vanishes and off-tube
    angles = np.linspace(0.0, 1.0, 8, endpoint=False)
    radii = np.linspace(0.05, 0.95, 6)
    edge_u = np.array([-1.2, -0.97, 0.97, 1.2, 1.6])
    pts = []
    for ang in angles:
        for r in radii:
            for u in edge_u:
                rho = TUBE_CORE_RADIUS + u * TUBE_HALF_WIDTH
                pts.append([r * math.cos(2 * math.pi * ang),
                            r * math.sin(2 * math.pi * ang), rho, 0.0])
    pts = np.asarray(pts)
    frames = field.frame(pts)
    proj = frames @ np.swapaxes(frames, -1, -2)
    hproj = horizontal @ horizontal.T
    dist = np.linalg.norm(proj - hproj, axis=(1, 2))
    i = int(np.argmax(dist))
    record("horizontal_near_tube_boundary", np.max(dist) < tol, np.max(dist), pts[i])

    # (b) transversality to the boundary cylinder r = 1
    boundary_pts = []
    us = np.linspace(-0.9, 0.9, 9)
    for ang in angles:
        for u in us:
            rho = TUBE_CORE_RADIUS + u * TUBE_HALF_WIDTH
            boundary_pts.append([math.cos(2 * math.pi * ang),
                                 math.sin(2 * math.pi * ang), rho, 0.0])
    boundary_pts = np.asarray(boundary_pts)
    frames = field.frame(boundary_pts)
    worst_rank = np.inf
    wit = None
    for pt, fr in zip(boundary_pts, frames):
        tangent = np.zeros((3, 4))
        tangent[0, :2] = (-pt[1], pt[0])  # boundary circle direction
        tangent[1, 2] = 1.0
        tangent[2, 3] = 1.0
        stacked = np.vstack([fr.T, tangent])
        sv = np.linalg.svd(stacked, compute_uv=False)
        if sv[3] < worst_rank:
            worst_rank = sv[3]
            wit = pt
    record("transverse_to_boundary_cylinder", worst_rank > 1e-6, worst_rank, wit)

    # (c) induced boundary line field transverse to the fibers: omega(d_theta)
    # = P must not vanish at r = 1 (sampled over the tube section)
    rr = np.ones((resolution,))
    uu = np.linspace(-0.99, 0.99, resolution)
    p, _, _ = form.coefficients(rr, uu, 0.25)
    record("boundary_line_field_transverse_to_fibers", np.min(np.abs(p)) > 1e-6,
           float(np.min(np.abs(p))))

    # (d) fiber transversality on the whole disk (the clause that fails at
    # s = 0 wherever P = 0 and holds after the homotopy)
    rr, uu = _default_grid(64)
    p, _, _ = form.coefficients(rr, uu, 0.25)
    idx = np.unravel_index(int(np.argmin(np.abs(p))), p.shape)
    record("transverse_to_fiber_factor", float(np.min(np.abs(p))) > 1e-6,
           float(np.min(np.abs(p))), (rr[idx], uu[idx]))

    # (e) radial constancy near the boundary: coefficients at r and at 1 agree
    band = np.linspace(0.9, 1.0, 8)
    uu = np.linspace(-0.99, 0.99, 32)
    worst = 0.0
    for r in band:
        p0, q0, s0 = form.coefficients(np.full_like(uu, r), uu, 0.3)
        p1, q1, s1 = form.coefficients(np.ones_like(uu), uu, 0.3)
        worst = max(worst, float(np.max(np.abs(p0 - p1))),
                    float(np.max(np.abs(q0 - q1))), float(np.max(np.abs(s0 - s1))))
    record("radially_constant_near_boundary", worst < tol, worst)
    return report


def leaf_trace(form: FillingForm, start, arc_length: float = 3.0,
               step: float = 1e-2) -> np.ndarray:
    """Unit-speed curve tangent to the kernel of the coframe.

    The direction is continued from the base-angular direction at the start;
    rows (s, z1, z2, y1, y2)."""
    p = np.asarray(start, dtype=float).copy()
    z = p[:2]
    prev = np.array([-z[1], z[0], 0.0, 0.0])
    nrm = np.linalg.norm(prev)
    if nrm < 1e-9:
        prev = np.array([1.0, 0.0, 0.0, 0.0])
    else:
        prev = prev / nrm

    def direction(q, ref):
        rows = form.coframe_rows(q)
        _, sv, vt = np.linalg.svd(rows)
        kernel = vt[2:, :]
        coeff = kernel @ ref
        d = coeff @ kernel
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise CertificationFailure("leaf direction degenerated")
        return d / n

    steps = int(arc_length / step)
    out = np.empty((steps + 1, 5))
    out[0] = (0.0, *p)
    s = 0.0
    for i in range(steps):
        k1 = direction(p, prev)
        k2 = direction(p + 0.5 * step * k1, k1)
        k3 = direction(p + 0.5 * step * k2, k1)
        k4 = direction(p + step * k3, k1)
        move = (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        p = p + move
        prev = k4
        s += step
        out[i + 1] = (s, *p)
    return out


# ---------------------------------------------------------------------------
# gluing


@dataclass(frozen=True)
class CapChart:
    """Conformal chart from a circular cap {|z| <= 1, +-Im z >= eps} onto the
    unit disk: Moebius map to a sector, power map to the half plane, Cayley
    map to the disk.  Analytic in the interior, boundary-analytic away from
    the two corners."""

    eps: float
    upper: bool

    @property
    def corner_right(self):
        x = math.sqrt(1.0 - self.eps ** 2)
        return complex(x, self.eps if self.upper else -self.eps)

    @property
    def corner_left(self):
        x = math.sqrt(1.0 - self.eps ** 2)
        return complex(-x, self.eps if self.upper else -self.eps)

    @property
    def power(self):
        return math.pi / math.acos(self.eps)

    def contains(self, z):
        im = np.imag(z)
        inside = np.abs(z) <= 1.0 + 1e-12
        return inside & ((im >= self.eps) if self.upper else (im <= -self.eps))

    def to_disk(self, z):
        """zeta(z) and the complex derivative dzeta/dz (vectorized)."""
        z = np.asarray(z, dtype=complex)
        if not self.upper:
            zeta, dz = CapChart(self.eps, True).to_disk(np.conj(z))
            return np.conj(zeta), np.conj(dz)
        a = self.corner_left
        b = self.corner_right
        p = self.power
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (z - a) / (b - z)
            dt = (b - a) / (b - z) ** 2
            w = np.exp(p * np.log(t))
            dw = np.where(t != 0, p * w / t, 0.0) * dt
            zeta = (w - 1j) / (w + 1j)
            dzeta = 2j / (w + 1j) ** 2 * dw
        # corners: t = 0 or infinity
        zeta = np.where(np.isfinite(zeta), zeta, 1.0)
        zeta = np.where(t == 0, -1.0, zeta)
        dzeta = np.where(np.isfinite(dzeta), dzeta, 0.0)
        return zeta, dzeta


def _progress_ramp(lo: float, hi: float) -> Expr:
    """tau(phi): exactly 0 for phi <= lo, exactly 1 for phi >= hi."""
    return Step(Div(Sub(Var("phi"), Const(lo)), Const(hi - lo)))


class GluedFilling:
    """Two cap-mounted fillings joined across a horizontal seam band.

    The upper cap {Im z >= eps} carries the first filling through the
    conformal cap chart, the lower cap carries the second, and the band
    {|Im z| <= eps} is foliated horizontally.  The boundary holonomy equals
    the concatenation endpoint w2(1) o w1(1)."""

    def __init__(self, fill1: FillingForm, fill2: FillingForm, eps: float,
                 margin: float = 0.08):
        if not 0.0 < eps < 0.3:
            raise InvalidInputError("band half-width must lie in (0, 0.3)")
        self.eps = float(eps)
        self.margin = float(margin)
        self.chart_up = CapChart(self.eps, True)
        self.chart_low = CapChart(self.eps, False)
        self.fill_upper = fill1.with_angle_progress(_progress_ramp(margin, 0.5 - margin))
        self.fill_lower = fill2.with_angle_progress(_progress_ramp(0.5 + margin, 1.0 - margin))
        self._check_band_condition()

    def _check_band_condition(self):
        """The arc points at height 2 eps must pull back into the flat zone."""
        if 2.0 * self.eps >= 1.0:
            raise InvalidInputError("band too wide")
        x = math.sqrt(1.0 - (2.0 * self.eps) ** 2)
        for z in (complex(x, 2 * self.eps), complex(-x, 2 * self.eps)):
            zeta, _ = self.chart_up.to_disk(np.asarray([z]))
            phi = float(np.mod(np.angle(zeta[0]) / (2 * np.pi), 1.0))
            dist = min(phi, abs(phi - 0.5), 1.0 - phi)
            if dist > self.margin:
                raise InvalidInputError(
                    f"band condition fails: boundary point at height 2*eps pulls "
                    f"back to angle {phi:.4f}, outside the horizontal zones of "
                    f"width {self.margin}")

    def region(self, z):
        im = np.imag(np.asarray(z, dtype=complex))
        return np.where(im > self.eps, 1, np.where(im < -self.eps, -1, 0))

    def _cap_coefficients(self, z, y, upper: bool):
        """(P, Q, S, zeta, dzeta) of the mounted filling at base point z."""
        chart = self.chart_up if upper else self.chart_low
        form = self.fill_upper if upper else self.fill_lower
        zeta, dzeta = chart.to_disk(z)
        r = np.abs(zeta)
        phi = np.mod(np.angle(zeta) / (2 * np.pi), 1.0)
        rho = np.linalg.norm(y, axis=-1)
        u = (rho - TUBE_CORE_RADIUS) / TUBE_HALF_WIDTH
        p, q, s = form.coefficients(np.clip(r, 0.0, 1.0), u, phi)
        return p, q, s, zeta, dzeta

    def seam_coefficients(self, x_values, y, side: str):
        """Cap-side coefficients at the band edge Im z = +-eps.

        Exactness here is the seam certificate: (P, Q, S) = (1, 0, 0)."""
        x = np.asarray(x_values, dtype=float)
        if side == "upper":
            z = x + 1j * self.eps
            p, q, s, _, _ = self._cap_coefficients(z, np.broadcast_to(y, (len(x), 2)), True)
        elif side == "lower":
            z = x - 1j * self.eps
            p, q, s, _, _ = self._cap_coefficients(z, np.broadcast_to(y, (len(x), 2)), False)
        else:
            raise InvalidInputError("side must be 'upper' or 'lower'")
        return p, q, s

    def coefficient_rows(self, points):
        """Coframe rows {omega, du} in Cartesian coordinates on D^2 x R^2."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pb = pts[None] if single else pts
        z = pb[:, 0] + 1j * pb[:, 1]
        y = pb[:, 2:]
        rows = np.zeros((len(pb), 2, 4))
        rho = np.linalg.norm(y, axis=1)
        deep = rho < 0.4 * TUBE_CORE_RADIUS
        rows[deep, 0, 2] = 1.0
        rows[deep, 1, 3] = 1.0
        reg = self.region(z)
        for which, upper in ((1, True), (-1, False)):
            sel = (reg == which) & ~deep
            if not np.any(sel):
                continue
            p, q, s, zeta, dzeta = self._cap_coefficients(z[sel], y[sel], upper)
            ys = y[sel]
            rhos = rho[sel]
            r = np.abs(zeta)
            r_safe = np.where(r > 1e-12, r, 1.0)
            # covector in zeta coordinates: Q dr + S dphi
            cr = np.where(q != 0.0, q / r_safe, 0.0)
            cphi = np.where(s != 0.0, s / (2 * np.pi * r_safe ** 2), 0.0)
            c_zeta = np.stack([cr * np.real(zeta) - cphi * np.imag(zeta),
                               cr * np.imag(zeta) + cphi * np.real(zeta)], axis=1)
            # pull back through the holomorphic chart: J^T c
            jr, ji = np.real(dzeta), np.imag(dzeta)
            block = np.zeros((int(np.sum(sel)), 2, 4))
            block[:, 0, 0] = jr * c_zeta[:, 0] + ji * c_zeta[:, 1]
            block[:, 0, 1] = -ji * c_zeta[:, 0] + jr * c_zeta[:, 1]
            block[:, 0, 2] = p * (-ys[:, 1]) / (2 * np.pi * rhos ** 2)
            block[:, 0, 3] = p * (ys[:, 0]) / (2 * np.pi * rhos ** 2)
            block[:, 1, 2] = ys[:, 0] / (rhos * TUBE_HALF_WIDTH)
            block[:, 1, 3] = ys[:, 1] / (rhos * TUBE_HALF_WIDTH)
            rows[sel] = block
        band = (reg == 0) & ~deep
        if np.any(band):
            ys = y[band]
            rhos = rho[band]
            block = np.zeros((int(np.sum(band)), 2, 4))
            block[:, 0, 2] = (-ys[:, 1]) / (2 * np.pi * rhos ** 2)
            block[:, 0, 3] = (ys[:, 0]) / (2 * np.pi * rhos ** 2)
            block[:, 1, 2] = ys[:, 0] / (rhos * TUBE_HALF_WIDTH)
            block[:, 1, 3] = ys[:, 1] / (rhos * TUBE_HALF_WIDTH)
            rows[band] = block
        return rows[0] if single else rows

    def boundary_path(self) -> PeriodicPath:
        """Oracle side: the reparametrized concatenation of the two boundary
        suspensions."""
        return concat_paths(self.fill_upper.boundary_path(),
                            self.fill_lower.boundary_path())

    def angular_speed(self, psi, u):
        """dtheta/dpsi of the boundary line field at circle position psi for
        fiber tube coordinate u; zero on the band, -(Q dr + S dphi)/P on the
        caps (dr, dphi pulled through the cap charts)."""
        psi = np.asarray(psi, dtype=float)
        u = np.asarray(u, dtype=float)
        z = np.exp(2j * np.pi * psi)
        reg = self.region(z)
        out = np.zeros(np.broadcast(psi, u).shape)
        for which, upper in ((1, True), (-1, False)):
            sel = np.broadcast_to(reg == which, out.shape)
            if not np.any(sel):
                continue
            zb = np.broadcast_to(z, out.shape)[sel]
            ub = np.broadcast_to(u, out.shape)[sel]
            chart = self.chart_up if upper else self.chart_low
            form = self.fill_upper if upper else self.fill_lower
            zeta, dzeta = chart.to_disk(zb)
            r = np.abs(zeta)
            phi = np.mod(np.angle(zeta) / (2 * np.pi), 1.0)
            p, q, s = form.coefficients(np.clip(r, 0.0, 1.0), ub, phi)
            dzeta_dpsi = dzeta * 2j * np.pi * zb
            r_safe = np.where(r > 1e-12, r, 1.0)
            dr = (np.real(zeta) * np.real(dzeta_dpsi) +
                  np.imag(zeta) * np.imag(dzeta_dpsi)) / r_safe
            dphi = (np.real(zeta) * np.imag(dzeta_dpsi) -
                    np.imag(zeta) * np.real(dzeta_dpsi)) / (2 * np.pi * r_safe ** 2)
            out[sel] = -(q * dr + s * dphi) / p
        return out

    def boundary_holonomy(self, y_points, steps: int = 8192) -> np.ndarray:
        """Transport fiber points once around the boundary circle along the
        induced line field.

        The angular speed does not depend on the current fiber angle, so the
        net transport is the rotation by the integral of the speed; the
        integral is taken by composite Simpson quadrature on a dense grid."""
        y = np.asarray(y_points, dtype=float)
        rho = np.linalg.norm(y, axis=1)
        u = (rho - TUBE_CORE_RADIUS) / TUBE_HALF_WIDTH
        if steps % 2:
            steps += 1
        psi = np.linspace(0.0, 1.0, steps + 1)
        speeds = self.angular_speed(psi[:, None], u[None, :])  # (steps+1, N)
        weights = np.ones(steps + 1)
        weights[1:-1:2] = 4.0
        weights[2:-1:2] = 2.0
        total = (weights[:, None] * speeds).sum(axis=0) / (3.0 * steps)
        ang = 2 * np.pi * total
        c, s = np.cos(ang), np.sin(ang)
        out = np.empty_like(y)
        out[:, 0] = c * y[:, 0] - s * y[:, 1]
        out[:, 1] = s * y[:, 0] + c * y[:, 1]
        return out


def glue_concat(fill1: FillingForm, fill2: FillingForm, eps: float = 0.05,
                margin: float = 0.08) -> GluedFilling:
    """Assemble the filling of the concatenated boundary path from two
    fillings: cap rescalings of each plus the horizontal band between."""
    return GluedFilling(fill1, fill2, eps, margin)
