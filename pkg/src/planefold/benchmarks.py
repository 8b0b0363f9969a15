"""Seeded benchmark constructions used by the CLI and the verification suite.

The conjugate-factorization suites live at two scales: unit-scale disk twists
inside a ball on the model annulus (exactly evaluable, so word identities
hold to float precision), and a small-deviation suite whose twelve expansion
factors all lie in the prescribed Jacobian-deviation neighborhood of the
identity.
"""

from __future__ import annotations

import numpy as np

from .boxes import Ball, Box
from .diffgroup import (AnnulusRotation, CompactDiffeo, DiskTwist, Flow,
                        profile_rotation, twelve_factor_expansion)
from .expr import parse_expr

__all__ = [
    "four_conjugate_instance",
    "twelve_factor_instance",
    "half_turn_displacer",
    "WORD_GRID_BOX",
]

WORD_GRID_BOX = Box((-1.6, -1.6), (1.6, 1.6))

_TWIST_PROFILE = parse_expr("1 - smoothstep((u - 0.2) / 0.6)")
_ROTATION_PROFILE = parse_expr("1 - smoothstep((x1^2 - 0.49) / 0.32)")


def half_turn_displacer() -> CompactDiffeo:
    """Tube rotation by half a turn: moves any small ball near the core circle
    at angle 0 off itself."""
    return profile_rotation(_ROTATION_PROFILE, 0.5)


def four_conjugate_instance(seed: int):
    """(a, b, h, U): twists supported in a ball on the core circle, displaced
    off itself by the half-turn rotation."""
    rng = np.random.default_rng(seed)
    region = Ball((1.0, 0.0), 0.22)
    centers = rng.uniform(-0.04, 0.04, (2, 2)) + np.array([1.0, 0.0])
    radii = rng.uniform(0.12, 0.17, 2)
    turns = rng.uniform(0.15, 0.45, 2) * rng.choice([-1.0, 1.0], 2)
    a = CompactDiffeo.of(DiskTwist(centers[0], radii[0], _TWIST_PROFILE, turns[0]))
    b = CompactDiffeo.of(DiskTwist(centers[1], radii[1], _TWIST_PROFILE, turns[1]))
    return a, b, half_turn_displacer(), region


def twelve_factor_instance(seed: int):
    """Small-deviation instance of the twelve-factor expansion.

    Returns (sigma_a, exp_x, g, h, source, region, unit_boxes): the mover g
    carries the source ball (seated just outside) into the target ball, the
    rotation h displaces the target ball off itself, and every expansion unit
    keeps Jacobian deviation a few times below the 72-fold composition
    threshold.  ``unit_boxes`` are tight boxes for the per-unit deviation
    grids (the supports are tiny compared to the annulus box)."""
    rng = np.random.default_rng(seed)
    turns_h = 3e-5 * rng.uniform(0.9, 1.1)
    h = profile_rotation(_ROTATION_PROFILE, turns_h)
    arc = 2 * np.pi * turns_h  # displacement of the core point (1, 0)
    r_u = arc / 3.2
    region = Ball((1.0, 0.0), r_u)

    shift = 2.8 * r_u
    r_a = 0.55 * r_u
    source = Ball((1.0 + shift, 0.0), r_a)

    # mover: gentle localized translation in -x1 by `shift`
    gbox = Box((0.95, -0.05), (1.05, 0.05))
    cut = "bump(((x1 - 1)^2 + x2^2) / 0.002)"
    scale = shift / float(parse_expr(cut).eval({"x1": 1.0 + shift, "x2": 0.0}))
    g = CompactDiffeo.of(Flow((f"0 - {scale:.12g} * {cut}", "0"), 1.0, gbox,
                              steps_per_unit=256))

    # sigma_a: exact twist inside the source ball
    t_sigma = 1e-4 * rng.uniform(0.8, 1.2)
    sigma_a = CompactDiffeo.of(DiskTwist(source.center, r_a * 0.95,
                                         _TWIST_PROFILE, t_sigma))

    # exp X: flow of a small rotational field inside the source ball (the
    # rotation rate is dimensionless, so it directly sets the deviation)
    amp = 2e-3 * rng.uniform(0.8, 1.2)
    cx, cy = source.center
    b2 = (r_a * 0.9) ** 2
    fx = f"{amp:.12g} * bump(((x1 - {cx:.12g})^2 + (x2 - {cy:.12g})^2) / {b2:.12g}) * (x2 - {cy:.12g})"
    fy = f"0 - {amp:.12g} * bump(((x1 - {cx:.12g})^2 + (x2 - {cy:.12g})^2) / {b2:.12g}) * (x1 - {cx:.12g})"
    fbox = Box((cx - r_a, cy - r_a), (cx + r_a, cy + r_a))
    exp_x = CompactDiffeo.of(Flow((fx, fy), 1.0, fbox, steps_per_unit=64))

    expansion = twelve_factor_expansion(sigma_a, exp_x, g, h,
                                        source=source, region=region, seed=seed)

    annulus = Box((-1.6, -1.6), (1.6, 1.6))

    def blob_box(word: CompactDiffeo, center, radius):
        c = word.eval(np.asarray(center, dtype=float))
        pad = 6.0 * radius
        return Box((c[0] - pad, c[1] - pad), (c[0] + pad, c[1] + pad))

    hinv = h.inverse()
    c_center = hinv.compose(g)
    unit_boxes = []
    for i, unit in enumerate(expansion.units):
        kind = [
            "h", "c", "h", "c", "B", "c", "h", "c", "B", "B", "h", "B"][i]
        if kind == "h":
            unit_boxes.append(annulus)
        elif kind == "c":
            unit_boxes.append(blob_box(c_center, source.center, r_a))
        else:
            unit_boxes.append(blob_box(g, source.center, r_a))
    return sigma_a, exp_x, g, h, source, region, expansion, unit_boxes
