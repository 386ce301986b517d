"""Run configuration: flat ``section.key = value`` text with a fixed schema.

Blank lines and ``#`` comments are ignored.  Every key has a default;
unknown keys are rejected.  Numbers may be written as fractions
(``1/3``), lists are comma separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError
from .grid import BoxDomain, GridSpec, RRule, SourceKind, SourceSpec
from .linalg import PRECONDITIONERS, SolverConfig
from .micro import PhysicalParams


def _num(text):
    return float(Fraction(text.strip()))


def _float(text):
    return _num(text)


def _int(text):
    v = _num(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _floats(text):
    return tuple(_num(t) for t in text.split(",") if t.strip())


def _vec3(text):
    v = _floats(text)
    if len(v) != 3:
        raise ValueError("expected three comma-separated numbers")
    return v


def _opt_vec3(text):
    return None if text.strip().lower() in ("", "none", "center") else _vec3(text)


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else _num(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _str(text):
    return text.strip()


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


# key: (parser, default, description)
SCHEMA = {
    "box.lo": (_vec3, (0.0, 0.0, 0.0), "lower corner of the box"),
    "box.hi": (_vec3, (1.0, 1.0, 1.0), "upper corner of the box"),
    "grid.n": (_int, 96, "cells per axis"),
    "domain.epsilons": (_floats, (0.5, 1.0 / 3.0, 0.25), "periods of the sweep, decreasing; micro uses the first"),
    "domain.gamma": (_float, 2.0, "capacity parameter, sphere radius gamma*eps^3"),
    "domain.R_rule": (_str, "geometric", "intermediate radius rule: geometric or quarter_period"),
    "physics.a": (_float, 0.0, "Rayleigh number (0 decouples flow and heat)"),
    "physics.b": (_float, 1.0, "conductivity coefficient of the suspensions"),
    "source.f.kind": (_str, "gaussian", "fluid source: constant, gaussian or product_sine"),
    "source.f.amplitude": (_float, 1.0, "fluid source amplitude"),
    "source.f.center": (_opt_vec3, None, "gaussian centre (none = box centre)"),
    "source.f.width": (_float, 0.3, "gaussian width"),
    "source.f.support_radius": (_opt_float, None, "truncation radius (none = no truncation)"),
    "source.g.kind": (_str, "gaussian", "suspension source kind"),
    "source.g.amplitude": (_float, 1.0, "suspension source amplitude"),
    "source.g.center": (_opt_vec3, None, "gaussian centre (none = box centre)"),
    "source.g.width": (_float, 0.3, "gaussian width"),
    "source.g.support_radius": (_opt_float, None, "truncation radius (none = no truncation)"),
    "solver.rel_tol": (_float, 1e-8, "relative tolerance (Picard change and outer solves)"),
    "solver.abs_tol": (_float, 1e-14, "absolute residual floor"),
    "solver.max_iter": (_int, 20000, "iteration cap of each Krylov solve"),
    "solver.preconditioner": (_str, "jacobi", "jacobi or none"),
    "picard.relax": (_float, 0.7, "under-relaxation of the temperature update"),
    "picard.max_outer": (_int, 100, "Picard iteration cap"),
    "cell.r": (_float, 1.0, "sphere radius of the drag problem"),
    "cell.R_list": (_floats, (4.0, 8.0, 16.0), "half-widths of the drag boxes"),
    "cell.cells_per_radius": (_int, 6, "grid cells across the sphere radius"),
    "cell.rel_tol": (_float, 1e-3, "Uzawa tolerance of the drag solves (drag moves < 1e-4 relative below this)"),
    "cell.energy_R_list": (_floats, (2.0, 4.0, 8.0, 16.0), "outer radii of the corrector energy table"),
    "cell.quad_n": (_int, 2000, "radial quadrature points of the corrector energy"),
    "audit.seed": (_int, 0, "seed of the randomized audits"),
    "audit.n_profiles": (_int, 20, "random radial profiles for the annulus inequality"),
    "audit.n_fields": (_int, 10, "random smooth fields for the averaging identities"),
    "audit.corrector_power": (_float, 1.0, "power applied to the corrector (1 = untouched)"),
    "audit.quad_n": (_int, 2000, "radial quadrature points of the capacity audit"),
    "output.dir": (_str, "out", "output directory (overridden by --out)"),
    "output.timings": (_bool, False, "write wall-clock seconds instead of 0 in reports"),
    "output.plots": (_bool, True, "render PNG figures next to the reports"),
}


def parse_text(text):
    """Parse config text into a ``{key: raw string}`` dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", key=None)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key=key)
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key=key)
        out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_raw(cls, raw: dict):
        vals = {k: d for k, (_, d, _) in SCHEMA.items()}
        for key, text in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}", key=key)
            try:
                vals[key] = SCHEMA[key][0](text)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"{key}: {exc}", key=key) from None
        cfg = cls(vals)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides=()):
        raw = parse_text(Path(path).read_text()) if path else {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value", key=None)
            k, v = (s.strip() for s in item.split("=", 1))
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}", key=k)
            raw[k] = v
        return cls.from_raw(raw)

    def with_values(self, **changes):
        vals = dict(self.values)
        for k, v in changes.items():
            vals[k.replace("__", ".")] = v
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    def validate(self):
        v = self.values

        def need(ok, key, msg):
            if not ok:
                raise ConfigError(f"{key}: {msg}", key=key)

        need(all(h > l for l, h in zip(v["box.lo"], v["box.hi"])), "box.hi", "must exceed box.lo on every axis")
        need(v["grid.n"] >= 4, "grid.n", "must be at least 4")
        need(len(v["domain.epsilons"]) >= 1, "domain.epsilons", "needs at least one value")
        need(all(e > 0 for e in v["domain.epsilons"]), "domain.epsilons", "must be positive")
        need(v["domain.gamma"] > 0, "domain.gamma", "must be positive")
        need(v["domain.R_rule"] in {r.value for r in RRule}, "domain.R_rule", "unknown rule")
        need(v["physics.a"] >= 0, "physics.a", "must be non-negative")
        need(v["physics.b"] > 0, "physics.b", "must be positive")
        for s in ("f", "g"):
            need(v[f"source.{s}.kind"] in {k.value for k in SourceKind}, f"source.{s}.kind", "unknown kind")
            need(v[f"source.{s}.width"] > 0, f"source.{s}.width", "must be positive")
            sr = v[f"source.{s}.support_radius"]
            need(sr is None or sr > 0, f"source.{s}.support_radius", "must be positive")
        need(v["solver.rel_tol"] > 0, "solver.rel_tol", "must be positive")
        need(v["solver.abs_tol"] > 0, "solver.abs_tol", "must be positive")
        need(v["solver.max_iter"] >= 1, "solver.max_iter", "must be at least 1")
        need(v["solver.preconditioner"] in PRECONDITIONERS, "solver.preconditioner", "jacobi or none")
        need(0 < v["picard.relax"] <= 1, "picard.relax", "must lie in (0, 1]")
        need(v["picard.max_outer"] >= 1, "picard.max_outer", "must be at least 1")
        need(v["cell.r"] > 0, "cell.r", "must be positive")
        need(len(v["cell.R_list"]) >= 1, "cell.R_list", "needs at least one value")
        need(all(R > v["cell.r"] for R in v["cell.R_list"]), "cell.R_list", "every R must exceed cell.r")
        need(all(R > v["cell.r"] for R in v["cell.energy_R_list"]), "cell.energy_R_list", "every R must exceed cell.r")
        need(v["cell.cells_per_radius"] >= 1, "cell.cells_per_radius", "must be positive")
        need(v["cell.rel_tol"] > 0, "cell.rel_tol", "must be positive")
        need(v["cell.quad_n"] >= 2, "cell.quad_n", "must be at least 2")
        need(v["audit.n_profiles"] >= 1, "audit.n_profiles", "must be positive")
        need(v["audit.n_fields"] >= 1, "audit.n_fields", "must be positive")
        need(v["audit.quad_n"] >= 2, "audit.quad_n", "must be at least 2")
        need(math.isfinite(v["audit.corrector_power"]), "audit.corrector_power", "must be finite")

    # typed views

    def box(self):
        return BoxDomain(self["box.lo"], self["box.hi"])

    def grid(self):
        return GridSpec(self.box(), self["grid.n"])

    def source(self, which):
        p = f"source.{which}."
        return SourceSpec(
            SourceKind(self[p + "kind"]),
            self[p + "amplitude"],
            self[p + "center"],
            self[p + "width"],
            self[p + "support_radius"],
        )

    def params(self):
        return PhysicalParams(
            a=self["physics.a"],
            b=self["physics.b"],
            gamma=self["domain.gamma"],
            f=self.source("f"),
            g=self.source("g"),
        )

    def solver(self):
        return SolverConfig(
            rel_tol=self["solver.rel_tol"],
            abs_tol=self["solver.abs_tol"],
            max_iter=self["solver.max_iter"],
            preconditioner=self["solver.preconditioner"],
        )

    def manifest(self):
        """Every setting as formatted text, keyed by its dotted name."""
        return {k: _fmt(self.values[k]) for k in SCHEMA}


def describe_schema():
    """Documentation lines ``key = default  # description`` for every key."""
    return [f"{k} = {_fmt(d)}  # {desc}" for k, (_, d, desc) in SCHEMA.items()]
