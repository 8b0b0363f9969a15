"""Axis-aligned boxes and round balls in R^n, the common region currency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Box", "Ball"]


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box corners must be 1-d and of equal length")
        if np.any(hi < lo):
            raise ValueError("box has hi < lo")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))

    @property
    def dim(self):
        return len(self.lo)

    @property
    def center(self):
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    @property
    def widths(self):
        return np.asarray(self.hi) - np.asarray(self.lo)

    @classmethod
    def cube(cls, dim, lo, hi):
        return cls((lo,) * dim, (hi,) * dim)

    def contains(self, points, margin=0.0):
        """Vectorized membership; margin > 0 shrinks the box."""
        p = np.asarray(points, dtype=float)
        lo = np.asarray(self.lo) + margin
        hi = np.asarray(self.hi) - margin
        return np.all((p >= lo) & (p <= hi), axis=-1)

    def intersects(self, other: "Box"):
        return bool(np.all(np.asarray(self.lo) <= np.asarray(other.hi)) and
                    np.all(np.asarray(other.lo) <= np.asarray(self.hi)))

    def expanded(self, amount):
        return Box(tuple(np.asarray(self.lo) - amount), tuple(np.asarray(self.hi) + amount))

    def grid(self, per_axis):
        """Regular grid of points, shape (prod(per_axis), dim)."""
        if np.isscalar(per_axis):
            per_axis = (int(per_axis),) * self.dim
        axes = [np.linspace(l, h, int(m)) for l, h, m in zip(self.lo, self.hi, per_axis)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, count, rng):
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    def to_json(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, data):
        return cls(tuple(data["lo"]), tuple(data["hi"]))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self):
        return len(self.center)

    def contains(self, points, margin=0.0):
        p = np.asarray(points, dtype=float)
        d = np.linalg.norm(p - np.asarray(self.center), axis=-1)
        return d <= self.radius - margin

    def bounding_box(self):
        c = np.asarray(self.center)
        return Box(tuple(c - self.radius), tuple(c + self.radius))

    def sample(self, count, rng):
        """Uniform points in the ball."""
        direction = rng.normal(size=(count, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * rng.random(count) ** (1.0 / self.dim)
        return np.asarray(self.center) + direction * radii[:, None]

    def surface_grid(self, count, rng):
        direction = rng.normal(size=(count, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * direction

    def to_json(self):
        return {"center": list(self.center), "radius": self.radius}

    @classmethod
    def from_json(cls, data):
        return cls(tuple(data["center"]), data["radius"])
