"""Run configuration: JSON schema, canonical serialization, object builders.

Reports embed the sha256 hash of the canonical config dump plus the
tolerances in force, and all floats are serialized with fixed precision in
sorted-key order, so reruns with the same config and seed produce
byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .boxes import Box
from .errors import InvalidInputError
from .expr import check_denominators, parse_expr
from .filling import FillingForm, PartitionProfiles, default_interpolation_expr, \
    default_profiles, default_slope_expr, reeb_filling_form
from .holonomy import PeriodicPath, concat as concat_paths, flow_path, rotation_path
from .planefield import (NormalCoframe, PlaneField, coframe_to_field,
                         constant_field, linear_tilt_field)

__all__ = ["RunConfig", "canonical_json", "config_hash", "Artifacts"]

DEFAULT_TOLERANCES = {
    "residual_symbolic": 1e-9,
    "residual_negative_control": 1e-3,
    "partition_sum": 1e-12,
    "coefficient_identity": 1e-12,
    "holonomy": 1e-6,
    "word_identity": 1e-8,
    "path_identity": 1e-9,
    "general_position_margin": 1e-3,
    "constancy": 1e-8,
    "graph_norm_slack": 1e-9,
}

DEFAULT_RESOLUTIONS = {
    "residual_grid": 256,
    "barycentric": 3,
    "word_grid": 100,
    "norm_grid": 21,
    "holonomy_steps": 8192,
}


def _fmt(value):
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            return repr(value)
        return float(f"{value:.12g}")
    return value


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _fmt(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    return str(obj)


def canonical_json(obj) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, indent=1)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    """Everything a command needs, with the standing requirement k >= 2."""

    n: int = 4
    domain: list = field(default_factory=lambda: [[-2.0, 2.0]] * 4)
    field_spec: dict = field(default_factory=lambda: {"catalog": "constant"})
    region: list = field(default_factory=lambda: [[0.0, 1.0]] * 4)   # K
    integrable_region: list = None                                   # U
    lattice: dict = field(default_factory=lambda: {
        "scale": 1, "box": [[0, 1]] * 4, "epsilon": 0.05, "seed": 7,
        "max_iters": 200, "min_margin": 1e-3})
    filling: dict = field(default_factory=lambda: {
        "f": default_slope_expr(), "g": default_interpolation_expr()})
    paths: list = field(default_factory=list)
    words: dict = field(default_factory=dict)
    tubes: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    resolutions: dict = field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise InvalidInputError(
                f"codimension k = n - 2 must be >= 2 (got n = {self.n})")
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        self.resolutions = {**DEFAULT_RESOLUTIONS, **(self.resolutions or {})}

    @property
    def k(self):
        return self.n - 2

    # -- builders -------------------------------------------------------------
    def domain_box(self) -> Box:
        lo, hi = zip(*self.domain)
        return Box(lo, hi)

    def region_box(self) -> Box:
        lo, hi = zip(*self.region)
        return Box(lo, hi)

    def integrable_box(self):
        if self.integrable_region is None:
            return None
        lo, hi = zip(*self.integrable_region)
        return Box(lo, hi)

    def build_field(self) -> PlaneField:
        spec = self.field_spec
        dom = self.domain_box()
        if "catalog" in spec:
            name = spec["catalog"]
            if name == "constant":
                return constant_field(self.n, domain=dom)
            if name == "linear_tilt":
                return linear_tilt_field(spec.get("slope", 0.3), self.n, domain=dom)
            raise InvalidInputError(f"unknown catalog field {name!r}")
        if "coframe" in spec:
            rows = spec["coframe"]
            if len(rows) != self.k:
                raise InvalidInputError(
                    f"coframe needs k = {self.k} rows, got {len(rows)}")
            bounds = {f"x{i+1}": (dom.lo[i], dom.hi[i]) for i in range(self.n)}
            parsed = [[parse_expr(c) for c in row] for row in rows]
            for row in parsed:
                for comp in row:
                    check_denominators(comp, bounds, seed=self.seed)
            cof = NormalCoframe.from_expressions(parsed, dom)
            fld = coframe_to_field(cof)
            fld.coframe = cof
            return fld
        raise InvalidInputError("field spec needs 'catalog' or 'coframe'")

    def build_profiles(self) -> PartitionProfiles:
        spec = self.filling
        if all(k in spec for k in ("lambda0", "lambda_half", "lambda1")):
            return PartitionProfiles(parse_expr(spec["lambda0"]),
                                     parse_expr(spec["lambda_half"]),
                                     parse_expr(spec["lambda1"])).validate()
        return default_profiles()

    def build_filling(self, validated: bool = True) -> FillingForm:
        spec = self.filling
        f = spec.get("f", default_slope_expr())
        g = spec.get("g", default_interpolation_expr())
        profiles = self.build_profiles()
        if validated:
            return reeb_filling_form(f, g, profiles)
        return FillingForm(slope=parse_expr(f, variables=("x1", "u")),
                           interpolation=parse_expr(g, variables=("x1", "u")),
                           profiles=profiles)

    def build_path(self, spec) -> PeriodicPath:
        segments = []
        for seg in spec["segments"]:
            gen = seg["generator"]
            if gen["type"] == "rotation":
                segments.append(rotation_path(gen["profile"], gen.get("turns", 1.0)))
            elif gen["type"] == "flow":
                lo, hi = zip(*gen["support"])
                segments.append(flow_path(gen["components"], gen.get("time", 1.0),
                                          Box(lo, hi)))
            else:
                raise InvalidInputError(f"unknown generator type {gen['type']!r}")
        path = segments[0]
        for nxt in segments[1:]:
            path = concat_paths(path, nxt)
        return path

    # -- io ---------------------------------------------------------------
    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def hash(self) -> str:
        return config_hash(self.to_json())


class Artifacts:
    """Deterministic artifact writer; stamps every report with the config
    hash, tolerances, and environment overrides."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = os.environ.get("PLANEFOLD_OUT", config.out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.stamp = {
            "config_hash": config.hash(),
            "tolerances": config.tolerances,
            "threads": os.environ.get("PLANEFOLD_THREADS", "default"),
        }

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def write_json(self, name, payload: dict) -> str:
        payload = dict(payload)
        payload["meta"] = self.stamp
        text = canonical_json(payload)
        p = self.path(name)
        with open(p, "w") as fh:
            fh.write(text + "\n")
        return p

    def write_csv(self, name, header, rows) -> str:
        p = self.path(name)
        with open(p, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                                  for v in row) + "\n")
        return p
