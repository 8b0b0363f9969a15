"""Periodic paths in the compactly supported diffeomorphism group.

A smooth periodic path t -> w(t) with w(0) = id is the same thing as a
foliated R^k-product over the circle: the leaf through (1, y) is
{(exp(2 pi i t), w(t)(y))}, and the path extends to all times by
w(m + t) = w(t) o w(1)^m.  Paths here are *adjusted*: constant on declared
horizontal intervals near 0 and 1, which makes concatenation and subdivision
smooth by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .errors import InvalidInputError
from .expr import Expr, parse_expr
from .diffgroup import AnnulusRotation, CompactDiffeo, Flow

__all__ = [
    "PeriodicPath",
    "smooth_ramp",
    "trivial_path",
    "rotation_path",
    "flow_path",
    "periodic_extend",
    "leaf",
    "concat",
    "conjugate",
    "subdivide",
    "pointwise_product",
    "DEFAULT_FLAT",
]

DEFAULT_FLAT = 1.0 / 16.0


def _step_scalar(u):
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    e0 = np.exp(-1.0 / u)
    e1 = np.exp(-1.0 / (1.0 - u))
    return float(e0 / (e0 + e1))


def smooth_ramp(t, flat=DEFAULT_FLAT):
    """Monotone C^infinity ramp: exactly 0 on [0, flat], exactly 1 on [1-flat, 1]."""
    return _step_scalar((t - flat) / (1.0 - 2.0 * flat))


@dataclass
class PeriodicPath:
    """t in [0,1] -> CompactDiffeo, with w(0) = id.

    ``horizontal``: intervals where the path is constant (always including
    neighborhoods of 0 and 1 for adjusted paths).  ``support``: box outside
    which every w(t) is the identity.
    """

    evaluator: callable
    horizontal: tuple = ((0.0, DEFAULT_FLAT), (1.0 - DEFAULT_FLAT, 1.0))
    support: Box = None
    dim: int = 2
    label: str = ""

    def at(self, t: float) -> CompactDiffeo:
        if not 0.0 <= t <= 1.0:
            raise InvalidInputError("path parameter must lie in [0, 1]")
        return self.evaluator(float(t))

    @property
    def endpoint(self) -> CompactDiffeo:
        return self.at(1.0)

    def is_adjusted(self, margin=1e-12):
        has_start = any(a <= margin and b > a for a, b in self.horizontal)
        has_end = any(b >= 1.0 - margin and b > a for a, b in self.horizontal)
        return has_start and has_end


def trivial_path(dim: int = 2) -> PeriodicPath:
    return PeriodicPath(lambda t: CompactDiffeo.identity(dim),
                        horizontal=((0.0, 1.0),), support=None, dim=dim,
                        label="trivial")


def rotation_path(profile, turns: float = 1.0, flat: float = DEFAULT_FLAT,
                  adjusted: bool = True) -> PeriodicPath:
    """Path of tube rotations t -> (rotation by turns*ramp(t)*profile)."""
    prof = profile if isinstance(profile, Expr) else parse_expr(profile, variables=("x1", "u"))
    AnnulusRotation(prof, turns)  # validate profile decay once
    ramp = (lambda t: smooth_ramp(t, flat)) if adjusted else (lambda t: t)

    def ev(t):
        s = ramp(t)
        if s == 0.0:
            return CompactDiffeo.identity(2)
        return CompactDiffeo.of(AnnulusRotation(prof, turns * s, validate=False))

    horiz = ((0.0, flat), (1.0 - flat, 1.0)) if adjusted else ((0.0, 0.0), (1.0, 1.0))
    support = AnnulusRotation(prof, turns, validate=False).support
    return PeriodicPath(ev, horizontal=horiz, support=support,
                        label=f"rotation({turns:g})")


def flow_path(components, time: float, support: Box, flat: float = DEFAULT_FLAT,
              steps_per_unit: int = 256) -> PeriodicPath:
    comps = tuple(c if isinstance(c, Expr) else parse_expr(c, variables=("x1", "x2"))
                  for c in components)

    def ev(t):
        s = smooth_ramp(t, flat)
        if s == 0.0:
            return CompactDiffeo.identity(2)
        return CompactDiffeo.of(Flow(comps, time * s, support, steps_per_unit))

    return PeriodicPath(ev, horizontal=((0.0, flat), (1.0 - flat, 1.0)),
                        support=support, label=f"flow({time:g})")


def periodic_extend(w: PeriodicPath, t: float) -> CompactDiffeo:
    """w(m + s) = w(s) o w(1)^m for integer m and s in [0, 1)."""
    m = int(np.floor(t))
    s = t - m
    out = w.at(s)
    if m != 0:
        out = out.compose(w.endpoint.power(m))
    return out


def leaf(w: PeriodicPath, y, t_range=(0.0, 1.0), samples: int = 100) -> np.ndarray:
    """Sample the leaf {(exp(2 pi i t), w(t)(y))}; rows (t, angle_turns, y...)."""
    y = np.asarray(y, dtype=float)
    ts = np.linspace(t_range[0], t_range[1], samples)
    rows = np.empty((samples, 2 + len(y)))
    for i, t in enumerate(ts):
        rows[i, 0] = t
        rows[i, 1] = t % 1.0
        rows[i, 2:] = periodic_extend(w, t).eval(y)
    return rows


def _union_box(a: Box, b: Box) -> Box:
    if a is None:
        return b
    if b is None:
        return a
    lo = np.minimum(a.lo, b.lo)
    hi = np.maximum(a.hi, b.hi)
    return Box(tuple(lo), tuple(hi))


def concat(w1: PeriodicPath, w2: PeriodicPath) -> PeriodicPath:
    """Run w1 at double speed, then w2 o w1(1); smooth because both paths are
    horizontal near their endpoints."""
    if not (w1.is_adjusted() and w2.is_adjusted()):
        raise InvalidInputError("concatenation needs adjusted paths "
                                "(horizontal near 0 and 1)")
    e1 = w1.endpoint

    def ev(t):
        if t <= 0.5:
            return w1.at(2.0 * t)
        return w2.at(2.0 * t - 1.0).compose(e1)

    def half(iv, offset):
        return (iv[0] / 2.0 + offset, iv[1] / 2.0 + offset)

    horiz = [half(iv, 0.0) for iv in w1.horizontal] + \
            [half(iv, 0.5) for iv in w2.horizontal]
    return PeriodicPath(ev, horizontal=tuple(horiz),
                        support=_union_box(w1.support, w2.support),
                        dim=w1.dim, label=f"{w1.label}*{w2.label}")


def conjugate(g: CompactDiffeo, w: PeriodicPath) -> PeriodicPath:
    """Pointwise conjugation g o w(t) o g^{-1}."""
    def ev(t):
        return w.at(t).conjugated_by(g)

    supp = w.support
    if supp is not None:
        image = g.eval(supp.grid(5))
        pad = 1e-9 + 0.05 * float(np.max(supp.widths))
        supp = Box(tuple(image.min(axis=0) - pad), tuple(image.max(axis=0) + pad))
    return PeriodicPath(ev, horizontal=w.horizontal, support=supp, dim=w.dim,
                        label=f"conj({w.label})")


def subdivide(w: PeriodicPath, q: int, flat: float = DEFAULT_FLAT) -> list:
    """Split w into q periodic pieces w_i(t) = w((i + ramp(t))/q) o w(i/q)^{-1}.

    Each piece starts at the identity, is horizontal near its ends, and the
    endpoint composition telescopes to w(1)."""
    if q <= 0:
        raise InvalidInputError("subdivision count must be positive")
    if q == 1:
        return [w]
    pieces = []
    for i in range(q):
        base_inv = w.at(i / q).inverse()

        def ev(t, i=i, base_inv=base_inv):
            s = smooth_ramp(t, flat)
            return w.at((i + s) / q).compose(base_inv)

        pieces.append(PeriodicPath(ev, horizontal=((0.0, flat), (1.0 - flat, 1.0)),
                                   support=w.support, dim=w.dim,
                                   label=f"{w.label}[{i}/{q}]"))
    return pieces


def pointwise_product(paths) -> PeriodicPath:
    """t -> w_1(t) o w_2(t) o ... (group product of paths, not concatenation)."""
    paths = list(paths)
    if not paths:
        raise InvalidInputError("need at least one path")

    def ev(t):
        out = CompactDiffeo.identity(paths[0].dim)
        for p in paths:
            out = out.compose(p.at(t))
        return out

    start = min((max((b for a, b in p.horizontal if a <= 1e-12), default=0.0)
                 for p in paths))
    end = max((min((a for a, b in p.horizontal if b >= 1.0 - 1e-12), default=1.0)
               for p in paths))
    supp = None
    for p in paths:
        supp = _union_box(supp, p.support)
    return PeriodicPath(ev, horizontal=((0.0, start), (end, 1.0)), support=supp,
                        dim=paths[0].dim, label="product")
