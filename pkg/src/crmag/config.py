"""Run configuration: TOML files with dotted sections.

Example::

    [grid]
    counts = [32, 32, 32]
    padding = [2.0, 4.0]        # or lengths = [2.0, 2.0, 4.0]

    [geometry]
    omega = "rect(1, 1)"        # full | disk(r) | rect(a, b)

    [material]
    alpha = 0.1
    m_s = 1.0
    anisotropy.kind = "uniaxial"
    anisotropy.axis = [1, 0, 0]
    anisotropy.strength = 1.0

    [minimize]
    eps = 0.5                   # 0 selects the reduced 2D energy
    grad_tol = 1e-6

    [sweep]
    eps = [1.0, 0.5, 0.25, 0.125]

    [io]
    output_directory = "out"
    formats = ["csv", "json", "crml"]

Unknown keys are errors; every error names the offending key path.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .energy import AnisotropyModel, MaterialParams, SampleGeometry, make_geometry
from .minimize import MinimizeConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FORMATS = ("csv", "json", "crml")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_OMEGA = re.compile(r"^\s*(full|disk|rect)\s*(?:\(([^()]*)\))?\s*$")


def parse_omega(text: str, path: str = "geometry.omega") -> tuple:
    """``"full"``, ``"disk(r)"`` or ``"rect(a, b)"`` as a shape tuple."""
    match = _OMEGA.match(text) if isinstance(text, str) else None
    if not match:
        raise ConfigError(path, f"expected full, disk(r) or rect(a, b), got {text!r}")
    kind, args = match.group(1), match.group(2)
    try:
        values = [float(a) for a in args.split(",")] if args and args.strip() else []
    except ValueError:
        raise ConfigError(path, f"non-numeric size in {text!r}") from None
    arity = {"full": 0, "disk": 1, "rect": 2}[kind]
    if len(values) != arity:
        raise ConfigError(path, f"{kind} takes {arity} size(s), got {len(values)}")
    if any(v <= 0 for v in values):
        raise ConfigError(path, "sizes must be positive")
    return (kind, *values)


class _Section:
    """Typed access to one table that remembers which keys were consumed."""

    def __init__(self, table: dict, prefix: str):
        if not isinstance(table, dict):
            raise ConfigError(prefix, "expected a table")
        self.table = table
        self.prefix = prefix
        self.used = set()

    def path(self, key):
        return f"{self.prefix}.{key}" if self.prefix else key

    def get(self, key, kind, default=None, required=False):
        self.used.add(key)
        if key not in self.table:
            if required:
                raise ConfigError(self.path(key), "missing required key")
            return default
        value = self.table[key]
        p = self.path(key)
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(p, f"expected a number, got {value!r}")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(p, f"expected an integer, got {value!r}")
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ConfigError(p, f"expected a string, got {value!r}")
            return value
        if kind in ("floats", "ints", "strs"):
            if not isinstance(value, list):
                raise ConfigError(p, f"expected a list, got {value!r}")
            one = {"floats": float, "ints": int, "strs": str}[kind]
            sub = _Section({str(i): v for i, v in enumerate(value)}, p)
            return tuple(sub.get(str(i), one) for i in range(len(value)))
        if kind is dict:
            return _Section(value, p)
        raise TypeError(kind)

    def finish(self):
        extra = sorted(set(self.table) - self.used)
        if extra:
            raise ConfigError(self.path(extra[0]), "unknown key")


def _guard(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


@dataclass(frozen=True)
class RunConfig:
    counts: tuple
    omega: tuple = ("full",)
    padding: tuple = (2.0, 4.0)
    lengths: tuple | None = None
    params: MaterialParams = field(default_factory=lambda: MaterialParams(alpha=0.1))
    minimize: MinimizeConfig = MinimizeConfig()
    eps: float = 1.0
    schedule: tuple = (1.0, 0.5, 0.25, 0.125)
    output_directory: str = "out"
    formats: tuple = FORMATS

    def geometry(self, eps: float | None = None) -> SampleGeometry:
        g = make_geometry(self.counts, self.omega, self.padding, self.lengths)
        return g if eps is None else g.with_eps(eps)

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "RunConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        if out is not None:
            kw["output_directory"] = out
        if seed is not None:
            kw["minimize"] = MinimizeConfig(**{**self.minimize.__dict__, "seed": seed})
        return RunConfig(**kw)


def parse_config(data: dict) -> RunConfig:
    root = _Section(data, "")
    kw = {}

    grid = root.get("grid", dict, required=True)
    counts = grid.get("counts", "ints", required=True)
    if len(counts) != 3 or any(c < 1 for c in counts):
        raise ConfigError("grid.counts", "expected three positive integers")
    kw["counts"] = counts
    padding = grid.get("padding", "floats", (2.0, 4.0))
    if len(padding) != 2 or any(p < 1 for p in padding):
        raise ConfigError("grid.padding", "expected [in_plane, vertical], each >= 1")
    kw["padding"] = padding
    lengths = grid.get("lengths", "floats")
    if lengths is not None and (len(lengths) != 3 or any(v <= 0 for v in lengths)):
        raise ConfigError("grid.lengths", "expected three positive lengths")
    kw["lengths"] = lengths
    grid.finish()

    if "geometry" in data:
        geo = root.get("geometry", dict)
        kw["omega"] = parse_omega(geo.get("omega", str, "full"))
        geo.finish()

    mat = root.get("material", dict, required=True)
    alpha = mat.get("alpha", float, required=True)
    m_s = mat.get("m_s", float, 1.0)
    aniso = AnisotropyModel("zero")
    if "anisotropy" in mat.table:
        a = mat.get("anisotropy", dict)
        kind = a.get("kind", str, "zero")
        axis = a.get("axis", "floats", (1.0, 0.0, 0.0))
        strength = a.get("strength", float, 0.0)
        a.finish()
        aniso = _guard("material.anisotropy", AnisotropyModel, kind, axis, strength)
    mat.finish()
    kw["params"] = _guard("material", MaterialParams, alpha, m_s, aniso)

    if "minimize" in data:
        mn = root.get("minimize", dict)
        eps = mn.get("eps", float, 1.0)
        if eps < 0:
            raise ConfigError("minimize.eps", "must be positive, or 0 for the reduced energy")
        kw["eps"] = eps
        opts = {}
        for key, kind in (("max_iters", int), ("grad_tol", float), ("step0", float), ("armijo_c", float),
                          ("armijo_shrink", float), ("seed", int), ("init", str), ("init_file", str)):
            v = mn.get(key, kind)
            if v is not None:
                opts[key] = v
        axis = mn.get("init_axis", "floats")
        if axis is not None:
            if len(axis) != 3 or not any(axis):
                raise ConfigError("minimize.init_axis", "expected a nonzero 3-vector")
            opts["init_axis"] = axis
        mn.finish()
        kw["minimize"] = _guard("minimize", MinimizeConfig, **opts)

    if "sweep" in data:
        sw = root.get("sweep", dict)
        sched = sw.get("eps", "floats", RunConfig.schedule)
        if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("sweep.eps", "must be nonempty, positive and strictly decreasing")
        kw["schedule"] = sched
        sw.finish()

    if "io" in data:
        io = root.get("io", dict)
        kw["output_directory"] = io.get("output_directory", str, "out")
        formats = io.get("formats", "strs", FORMATS)
        bad = [f for f in formats if f not in FORMATS]
        if bad:
            raise ConfigError("io.formats", f"unknown format {bad[0]!r}; choose from {', '.join(FORMATS)}")
        kw["formats"] = formats
        io.finish()
    root.finish()

    cfg = RunConfig(**kw)
    _guard("grid", cfg.geometry)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"{path}: {exc}") from None
    return parse_config(data)


def loads_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", str(exc)) from None
    return parse_config(data)


def ensure_directory(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
