"""Word calculus for compactly supported diffeomorphisms of R^k.

Diffeomorphisms are words over two primitive families: profile rotations
(exact closed-form evaluation, exact inverses) and flows of expression-defined
vector fields (classical 4th-order fixed-step integration).  Words free-reduce
on composition, so inverses are exact at the word level, and every element is
exactly the identity outside the union of the primitive support boxes.

The module also implements the conjugate/commutator factorizations: a
commutator [a, b] of maps supported in a ball U displaced off itself by h is
a product of four conjugates of h and h^{-1}, a product of r commutators is a
product of 4r conjugates, and the conjugated commutator of a small map with a
flow expands into twelve factors, each lying in a prescribed small
neighborhood of the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .boxes import Ball, Box
from .errors import DivergenceError, InvalidInputError
from .expr import Expr, parse_expr

__all__ = [
    "Primitive",
    "AnnulusRotation",
    "DiskTwist",
    "Flow",
    "CompactDiffeo",
    "DiffNorms",
    "ConjugateFactor",
    "ConjugateWord",
    "TwelveFactorExpansion",
    "profile_rotation",
    "norm_de",
    "eps_for_composition",
    "commutator",
    "commutator_as_four_conjugates",
    "product_as_conjugates",
    "twelve_factor_expansion",
    "check_displaced_off_itself",
    "TUBE_CORE_RADIUS",
    "TUBE_HALF_WIDTH",
]

# The annular model of the circle-times-interval tube inside R^2: core circle
# of radius 1, tube half-width 1/2, angular coordinate measured in turns.
TUBE_CORE_RADIUS = 1.0
TUBE_HALF_WIDTH = 0.5


class Primitive:
    """A primitive compactly supported diffeomorphism of R^k."""

    support: Box

    def key(self):
        raise NotImplementedError

    def apply(self, pts, sign):
        raise NotImplementedError

    def jacobian(self, pts, sign):
        raise NotImplementedError

    def support_ball(self):
        """Tight round support when known; None means use the box."""
        return None


def _as_batch(pts):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        return pts[None], True
    return pts, False


def _rotate(pts, center, angle_turns):
    """Rotate points about center by the per-point angles (in turns)."""
    rel = pts - center
    ang = 2.0 * np.pi * angle_turns
    c, s = np.cos(ang), np.sin(ang)
    out = np.empty_like(rel)
    out[:, 0] = c * rel[:, 0] - s * rel[:, 1]
    out[:, 1] = s * rel[:, 0] + c * rel[:, 1]
    return out + center


def _twist_jacobian(pts, center, angle_turns, dangle_drho):
    """Jacobian of the rotation x -> R(alpha(rho)) (x-c) + c.

    angle_turns / dangle_drho are per-point values of alpha (turns) and
    d(alpha)/d(rho) (turns per unit length).
    """
    rel = pts - center
    rho = np.linalg.norm(rel, axis=1)
    ang = 2.0 * np.pi * angle_turns
    dang = 2.0 * np.pi * dangle_drho
    c, s = np.cos(ang), np.sin(ang)
    n = len(pts)
    rot = np.zeros((n, 2, 2))
    rot[:, 0, 0] = c
    rot[:, 0, 1] = -s
    rot[:, 1, 0] = s
    rot[:, 1, 1] = c
    # d/dx [R(alpha(rho))v] = R + R' v (grad rho)^T,  R' v = dang * (perp of rotated v)
    rotated = np.einsum("nij,nj->ni", rot, rel)
    perp = np.stack([-rotated[:, 1], rotated[:, 0]], axis=1)
    safe = np.where(rho > 1e-300, rho, 1.0)
    grad_rho = rel / safe[:, None]
    jac = rot + dang[:, None, None] * np.einsum("ni,nj->nij", perp, grad_rho)
    return jac


class AnnulusRotation(Primitive):
    """Rotation of the tube's angular coordinate by ``turns * profile(u)``,
    where u in [-1, 1] is the normalized radial offset from the core circle.

    The profile must vanish near |u| = 1 so the map is smooth and compactly
    supported in the open annulus.
    """

    def __init__(self, profile: Expr | str, turns: float, validate: bool = True):
        self.profile = profile if isinstance(profile, Expr) else parse_expr(profile, variables=("x1", "u"))
        self.turns = float(turns)
        self._dprofile = self.profile.diff(self._var())
        self.support = Box((-TUBE_CORE_RADIUS - TUBE_HALF_WIDTH,) * 2,
                           (TUBE_CORE_RADIUS + TUBE_HALF_WIDTH,) * 2)
        if validate:
            self._check_boundary_decay()

    def _var(self):
        return "x1" if "x1" in self.profile.variables() else "u"

    def _profile_env(self, u):
        return {self._var(): u}

    def _check_boundary_decay(self, tol=1e-9):
        edge = np.concatenate([np.linspace(-1.0, -0.97, 16), np.linspace(0.97, 1.0, 16)])
        vals = np.abs(np.asarray(self.profile.eval(self._profile_env(edge)), dtype=float))
        dvals = np.abs(np.asarray(self._dprofile.eval(self._profile_env(edge)), dtype=float))
        if np.any(vals > tol) or np.any(dvals > 1e-6):
            raise InvalidInputError(
                "rotation profile must vanish (with derivative) near the tube boundary")

    def key(self):
        return ("annulus_rotation", id(self.profile), self.turns)

    def _offsets(self, pts):
        rho = np.linalg.norm(pts, axis=1)
        u = (rho - TUBE_CORE_RADIUS) / TUBE_HALF_WIDTH
        inside = np.abs(u) < 1.0
        return rho, u, inside

    def apply(self, pts, sign):
        rho, u, inside = self._offsets(pts)
        if not np.any(inside):
            return pts.copy()
        ang = np.zeros(len(pts))
        vals = np.asarray(self.profile.eval(self._profile_env(u[inside])), dtype=float)
        ang[inside] = sign * self.turns * vals
        out = pts.copy()
        out[inside] = _rotate(pts[inside], np.zeros(2), ang[inside])
        return out

    def jacobian(self, pts, sign):
        rho, u, inside = self._offsets(pts)
        jac = np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()
        if not np.any(inside):
            return jac
        ui = u[inside]
        ang = sign * self.turns * np.asarray(self.profile.eval(self._profile_env(ui)), dtype=float)
        dang = sign * self.turns * np.asarray(self._dprofile.eval(self._profile_env(ui)), dtype=float) / TUBE_HALF_WIDTH
        jac[inside] = _twist_jacobian(pts[inside], np.zeros(2), ang, dang)
        return jac


class DiskTwist(Primitive):
    """Rotation about ``center`` by ``2 pi turns * profile(u)`` with
    u = (rho/radius)^2; profile must vanish near u = 1.

    Smooth everywhere (u is a smooth function of position), supported in the
    disk of the given radius, exactly evaluable with a closed-form Jacobian.
    """

    def __init__(self, center, radius: float, profile: Expr | str, turns: float,
                 validate: bool = True):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.profile = profile if isinstance(profile, Expr) else parse_expr(profile, variables=("u",))
        self.turns = float(turns)
        self._dprofile = self.profile.diff("u")
        c, r = self.center, self.radius
        self.support = Box(tuple(c - r), tuple(c + r))
        if validate:
            edge = np.linspace(0.94, 1.0, 16)
            vals = np.abs(np.asarray(self.profile.eval({"u": edge}), dtype=float))
            if np.any(vals > 1e-9):
                raise InvalidInputError("twist profile must vanish near u = 1")

    def key(self):
        return ("disk_twist", tuple(self.center), self.radius, id(self.profile), self.turns)

    def support_ball(self):
        return Ball(tuple(self.center), self.radius)

    def _u(self, pts):
        rel = pts - self.center
        rho2 = np.sum(rel * rel, axis=1)
        u = rho2 / (self.radius * self.radius)
        return u, u < 1.0

    def apply(self, pts, sign):
        u, inside = self._u(pts)
        if not np.any(inside):
            return pts.copy()
        ang = sign * self.turns * np.asarray(self.profile.eval({"u": u[inside]}), dtype=float)
        out = pts.copy()
        out[inside] = _rotate(pts[inside], self.center, ang)
        return out

    def jacobian(self, pts, sign):
        u, inside = self._u(pts)
        jac = np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()
        if not np.any(inside):
            return jac
        ui = u[inside]
        rel = pts[inside] - self.center
        rho = np.linalg.norm(rel, axis=1)
        ang = sign * self.turns * np.asarray(self.profile.eval({"u": ui}), dtype=float)
        # d(alpha)/d(rho) = turns * profile'(u) * 2 rho / radius^2
        dang = sign * self.turns * np.asarray(self._dprofile.eval({"u": ui}), dtype=float) \
            * 2.0 * rho / (self.radius * self.radius)
        jac[inside] = _twist_jacobian(pts[inside], self.center, ang, dang)
        return jac


class Flow(Primitive):
    """Time-t map of an expression-defined compactly supported vector field,
    integrated with the classical 4th-order fixed-step scheme."""

    def __init__(self, components, time: float, support: Box,
                 steps_per_unit: int = 256, safety: Box = None):
        self.components = tuple(
            c if isinstance(c, Expr) else parse_expr(c, variables=("x1", "x2"))
            for c in components)
        self.time = float(time)
        self.support = support
        self.steps_per_unit = int(steps_per_unit)
        self.safety = safety or support.expanded(2.0)

    def key(self):
        return ("flow", tuple(id(c) for c in self.components), self.time,
                self.steps_per_unit)

    def _field(self, pts):
        env = {"x1": pts[:, 0], "x2": pts[:, 1]}
        out = np.empty_like(pts)
        for i, comp in enumerate(self.components):
            out[:, i] = comp.eval(env)
        return out

    def apply(self, pts, sign):
        inside = self.support.contains(pts)
        if not np.any(inside):
            return pts.copy()
        total = sign * self.time
        steps = max(1, int(math.ceil(abs(total) * self.steps_per_unit)))
        h = total / steps
        x = pts[inside].copy()
        for _ in range(steps):
            k1 = self._field(x)
            k2 = self._field(x + 0.5 * h * k1)
            k3 = self._field(x + 0.5 * h * k2)
            k4 = self._field(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if np.any(~self.safety.contains(x)):
                raise DivergenceError("flow trajectory left the safety box")
        out = pts.copy()
        out[inside] = x
        return out

    def jacobian(self, pts, sign, step: float = 1e-6):
        n = len(pts)
        jac = np.empty((n, 2, 2))
        for a in range(2):
            e = np.zeros(2)
            e[a] = step
            plus = self.apply(pts + e, sign)
            minus = self.apply(pts - e, sign)
            jac[:, :, a] = (plus - minus) / (2 * step)
        return jac


class CompactDiffeo:
    """A word over primitives; ``word[0]`` is applied last (outermost)."""

    def __init__(self, word=(), dim: int = 2):
        self.word = tuple(word)
        self.dim = dim

    @classmethod
    def identity(cls, dim: int = 2):
        return cls((), dim)

    @classmethod
    def of(cls, primitive: Primitive, exponent: int = 1):
        return cls(((primitive, int(np.sign(exponent))),) * abs(exponent))

    def __len__(self):
        return len(self.word)

    @property
    def is_identity_word(self):
        return not self.word

    def compose(self, other: "CompactDiffeo") -> "CompactDiffeo":
        """self after other, with free reduction at the junction."""
        left = list(self.word)
        right = list(other.word)
        while left and right and left[-1][0].key() == right[0][0].key() \
                and left[-1][1] == -right[0][1]:
            left.pop()
            right.pop(0)
        return CompactDiffeo(left + right, self.dim)

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self) -> "CompactDiffeo":
        return CompactDiffeo(tuple((p, -e) for p, e in reversed(self.word)), self.dim)

    def power(self, m: int) -> "CompactDiffeo":
        if m == 0:
            return CompactDiffeo.identity(self.dim)
        base = self if m > 0 else self.inverse()
        out = base
        for _ in range(abs(m) - 1):
            out = out.compose(base)
        return out

    def eval(self, pts):
        batch, single = _as_batch(pts)
        x = batch.copy()
        for prim, e in reversed(self.word):
            x = prim.apply(x, e)
        return x[0] if single else x

    def __call__(self, pts):
        return self.eval(pts)

    def jacobian(self, pts):
        batch, single = _as_batch(pts)
        x = batch.copy()
        jac = np.broadcast_to(np.eye(self.dim), (len(batch), self.dim, self.dim)).copy()
        for prim, e in reversed(self.word):
            jac = np.einsum("nij,njk->nik", prim.jacobian(x, e), jac)
            x = prim.apply(x, e)
        return jac[0] if single else jac

    def support_box(self):
        boxes = [p.support for p, _ in self.word]
        if not boxes:
            return None
        lo = np.min([b.lo for b in boxes], axis=0)
        hi = np.max([b.hi for b in boxes], axis=0)
        return Box(tuple(lo), tuple(hi))

    def conjugated_by(self, g: "CompactDiffeo") -> "CompactDiffeo":
        return g.compose(self).compose(g.inverse())

    def to_json(self):
        def prim_json(p):
            if isinstance(p, AnnulusRotation):
                return {"type": "annulus_rotation", "profile": str(p.profile), "turns": p.turns}
            if isinstance(p, DiskTwist):
                return {"type": "disk_twist", "center": list(p.center), "radius": p.radius,
                        "profile": str(p.profile), "turns": p.turns}
            if isinstance(p, Flow):
                return {"type": "flow", "components": [str(c) for c in p.components],
                        "time": p.time, "support": p.support.to_json(),
                        "steps_per_unit": p.steps_per_unit}
            raise InvalidInputError(f"unknown primitive {type(p).__name__}")

        return [{"primitive": prim_json(p), "exponent": e} for p, e in self.word]

    @classmethod
    def from_json(cls, data, dim: int = 2):
        word = []
        cache = {}
        for entry in data:
            spec = entry["primitive"]
            key = repr(spec)
            if key not in cache:
                kind = spec["type"]
                if kind == "annulus_rotation":
                    cache[key] = AnnulusRotation(spec["profile"], spec["turns"])
                elif kind == "disk_twist":
                    cache[key] = DiskTwist(spec["center"], spec["radius"],
                                           spec["profile"], spec["turns"])
                elif kind == "flow":
                    cache[key] = Flow(spec["components"], spec["time"],
                                      Box.from_json(spec["support"]),
                                      spec.get("steps_per_unit", 256))
                else:
                    raise InvalidInputError(f"unknown primitive type {kind!r}")
            word.append((cache[key], int(entry["exponent"])))
        return cls(tuple(word), dim)


def profile_rotation(profile, turns: float) -> CompactDiffeo:
    """The model tube rotation: angular coordinate advances by turns*profile(u)."""
    return CompactDiffeo.of(AnnulusRotation(profile, turns))


def commutator(a: CompactDiffeo, b: CompactDiffeo) -> CompactDiffeo:
    return a.compose(b).compose(a.inverse()).compose(b.inverse())


# ---------------------------------------------------------------------------
# norms


@dataclass
class DiffNorms:
    sup_displacement: float
    jac_deviation: float
    jac_deviation_refined: float
    support_radius: float
    resolution: int

    def within_deviation(self, eps: float) -> bool:
        return max(self.jac_deviation, self.jac_deviation_refined) < eps


def norm_de(d: CompactDiffeo, resolution: int = 33, box: Box = None) -> DiffNorms:
    """Estimate sup |d(x)-x| and max ||J(x) - I|| over a grid of the support
    box, refining the grid once to expose sampling bias."""
    region = box or d.support_box()
    if region is None:
        return DiffNorms(0.0, 0.0, 0.0, 0.0, resolution)

    def deviation(res):
        pts = region.grid(res)
        jac = d.jacobian(pts)
        dev = jac - np.eye(d.dim)
        sv = np.linalg.svd(dev, compute_uv=False)[..., 0]
        disp = np.linalg.norm(d.eval(pts) - pts, axis=1)
        return float(np.max(sv)), float(np.max(disp))

    dev1, disp1 = deviation(resolution)
    dev2, disp2 = deviation(2 * resolution - 1)
    radius = float(np.max(np.abs(np.concatenate([region.lo, region.hi]))))
    return DiffNorms(max(disp1, disp2), dev1, dev2, radius, resolution)


def eps_for_composition(count: int = 72) -> float:
    """The deviation threshold with (1+eps)^count = 2, so that compositions of
    ``count`` maps below it keep Jacobian deviation strictly under 1."""
    return float(brentq(lambda e: (1.0 + e) ** count - 2.0, 1e-12, 1.0, xtol=1e-15))


# ---------------------------------------------------------------------------
# conjugate factorizations


@dataclass
class ConjugateFactor:
    conjugator: CompactDiffeo
    core_inverse: bool

    def diffeo(self, core: CompactDiffeo) -> CompactDiffeo:
        h = core.inverse() if self.core_inverse else core
        return h.conjugated_by(self.conjugator)


@dataclass
class ConjugateWord:
    """Ordered conjugate factors of a fixed core and the product they claim."""

    core: CompactDiffeo
    factors: list
    claimed: CompactDiffeo

    def __len__(self):
        return len(self.factors)

    def product(self) -> CompactDiffeo:
        out = CompactDiffeo.identity(self.core.dim)
        for f in self.factors:
            out = out.compose(f.diffeo(self.core))
        return out

    def max_error(self, pts) -> float:
        return float(np.max(np.linalg.norm(self.product().eval(pts) - self.claimed.eval(pts), axis=1)))


def check_displaced_off_itself(h: CompactDiffeo, region: Ball, samples: int = 400,
                               seed: int = 0):
    """Sampled verification that region and h(region) are disjoint.

    Returns (ok, witness, margin): margin is the smallest clearance of h(x)
    from the ball over the samples."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate([region.sample(samples, rng),
                          region.surface_grid(samples // 4 + 1, rng)])
    images = h.eval(pts)
    dist = np.linalg.norm(images - np.asarray(region.center), axis=1) - region.radius
    i = int(np.argmin(dist))
    if dist[i] <= 0:
        return False, pts[i], float(dist[i])
    return True, None, float(dist[i])


def _check_supported_in(d: CompactDiffeo, region: Ball, name: str,
                        resolution: int = 25, tol: float = 1e-9):
    """Verify the map fixes everything outside the ball.

    Exact containment of primitive support balls is accepted directly;
    otherwise the word is evaluated on a grid of its support box restricted
    to the ball's complement (correct for conjugated words, whose word-level
    box overstates the support of the map)."""
    if d.is_identity_word:
        return
    c = np.asarray(region.center)
    exact = True
    for prim, _ in d.word:
        ball = prim.support_ball()
        if ball is None or \
                np.linalg.norm(np.asarray(ball.center) - c) + ball.radius > region.radius:
            exact = False
            break
    if exact:
        return
    pts = d.support_box().grid(resolution)
    outside = pts[~region.contains(pts)]
    if len(outside) == 0:
        return
    moved = np.linalg.norm(d.eval(outside) - outside, axis=1)
    i = int(np.argmax(moved))
    if moved[i] > tol:
        raise InvalidInputError(
            f"{name} moves {outside[i]} (outside the ball) by {moved[i]:.3e}")


def commutator_as_four_conjugates(a: CompactDiffeo, b: CompactDiffeo,
                                  h: CompactDiffeo, region: Ball,
                                  samples: int = 400, seed: int = 0) -> ConjugateWord:
    """Factor [a, b] as h (c h^-1 c^-1)(b c h c^-1 b^-1)(b h^-1 b^-1) with
    c = h^-1 a h, valid whenever a, b are supported in the ball and h moves
    the ball off itself."""
    _check_supported_in(a, region, "a")
    _check_supported_in(b, region, "b")
    ok, witness, margin = check_displaced_off_itself(h, region, samples, seed)
    if not ok:
        raise InvalidInputError(
            f"h does not displace the ball off itself: h({witness}) stays inside "
            f"(clearance {margin:.3e})")
    c = a.conjugated_by(h.inverse())
    factors = [
        ConjugateFactor(CompactDiffeo.identity(a.dim), core_inverse=False),
        ConjugateFactor(c, core_inverse=True),
        ConjugateFactor(b.compose(c), core_inverse=False),
        ConjugateFactor(b, core_inverse=True),
    ]
    return ConjugateWord(core=h, factors=factors, claimed=commutator(a, b))


def product_as_conjugates(pairs, h: CompactDiffeo, region: Ball, movers,
                          samples: int = 400, seed: int = 0) -> ConjugateWord:
    """Factor prod_i [a_i, b_i] as 4r conjugates of h and h^-1.

    ``pairs`` is a list of (a_i, b_i, U_i) with supports in the ball U_i and
    ``movers[i]`` maps U_i into ``region``; region is moved off itself by h.
    """
    if len(pairs) != len(movers):
        raise InvalidInputError("need one mover per commutator pair")
    rng = np.random.default_rng(seed)
    factors = []
    claimed = CompactDiffeo.identity(h.dim)
    for i, ((a, b, source), g) in enumerate(zip(pairs, movers)):
        pts = source.sample(samples, rng)
        moved = g.eval(pts)
        inside = region.contains(moved)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise InvalidInputError(
                f"mover {i} fails containment: g({bad}) is outside the target ball")
        word = commutator_as_four_conjugates(a.conjugated_by(g), b.conjugated_by(g),
                                             h, region, samples, seed + i + 1)
        ginv = g.inverse()
        for f in word.factors:
            factors.append(ConjugateFactor(ginv.compose(f.conjugator), f.core_inverse))
        claimed = claimed.compose(commutator(a, b))
    return ConjugateWord(core=h, factors=factors, claimed=claimed)


@dataclass
class TwelveFactorExpansion:
    """The twelve-unit rewriting of g [sigma_a, exp X] g^{-1}.

    Units (outermost first): h, c1, h^-1, c2, B, c1, h, c2, B^-1, B, h^-1, B^-1
    with c1 = h^-1 g sigma_a g^-1 h, c2 = h^-1 g sigma_a^-1 g^-1 h and
    B = g (exp X) g^-1.
    """

    units: list
    claimed: CompactDiffeo
    core: CompactDiffeo

    def product(self) -> CompactDiffeo:
        out = CompactDiffeo.identity(self.core.dim)
        for u in self.units:
            out = out.compose(u)
        return out

    def max_error(self, pts) -> float:
        return float(np.max(np.linalg.norm(self.product().eval(pts) - self.claimed.eval(pts), axis=1)))

    def membership_report(self, eps: float, resolution: int = 21, box: Box = None):
        """Per-unit Jacobian deviations against the given threshold."""
        rows = []
        for i, u in enumerate(self.units):
            norms = norm_de(u, resolution=resolution, box=box)
            rows.append({
                "factor": i,
                "jac_deviation": norms.jac_deviation,
                "jac_deviation_refined": norms.jac_deviation_refined,
                "passes": bool(norms.within_deviation(eps)),
            })
        return rows


def twelve_factor_expansion(sigma_a: CompactDiffeo, exp_x: CompactDiffeo,
                            g: CompactDiffeo, h: CompactDiffeo,
                            source: Ball = None, region: Ball = None,
                            samples: int = 300, seed: int = 0) -> TwelveFactorExpansion:
    """Expand g [sigma_a, exp X] g^{-1} into twelve factors.

    Preconditions (sampled when the regions are given): sigma_a is supported
    in ``source``, g maps it into ``region``, and h displaces ``region`` off
    itself.
    """
    if source is not None:
        _check_supported_in(sigma_a, source, "sigma_a")
        if region is not None:
            rng = np.random.default_rng(seed)
            pts = source.sample(samples, rng)
            moved = g.eval(pts)
            if not np.all(region.contains(moved)):
                bad = pts[~region.contains(moved)][0]
                raise InvalidInputError(f"g does not map the source ball into the "
                                        f"target ball (witness {bad})")
    if region is not None:
        ok, witness, margin = check_displaced_off_itself(h, region, samples, seed)
        if not ok:
            raise InvalidInputError(
                f"h does not displace the ball off itself at {witness} "
                f"(clearance {margin:.3e})")
    hinv = h.inverse()
    ginv = g.inverse()
    conj_in = lambda d: hinv.compose(g).compose(d).compose(ginv).compose(h)
    c1 = conj_in(sigma_a)
    c2 = conj_in(sigma_a.inverse())
    big = g.compose(exp_x).compose(ginv)
    units = [h, c1, hinv, c2, big, c1, h, c2, big.inverse(), big, hinv, big.inverse()]
    claimed = commutator(sigma_a, exp_x).conjugated_by(g)
    return TwelveFactorExpansion(units=units, claimed=claimed, core=h)
