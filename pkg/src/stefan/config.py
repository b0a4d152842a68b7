"""Run configuration files.

A config is a flat ``key = value`` file (a subset of TOML: bare keys, numbers,
strings, arrays, ``#`` comments). Example::

    model = "classic-ms"
    n = 2
    d = [1.0]
    cells = 200
    dt_init = 1e-5
    t_end = 0.1
    profile = "cosine"
    base = [0.5, 0.5]
    amplitude = [0.1, -0.1]
"""

import re
import sys
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParseError, PreconditionError, ValidationError
from .models import MODEL_KINDS, ModelSpec, make_model
from .solver import (
    Field,
    Grid1D,
    SolverConfig,
    cosine_profile,
    init_field,
    make_field,
    perturb_initial,
    random_smooth_profile,
)

PROFILES = ("constant", "cosine", "random")
PERTURBATIONS = ("cosine", "random")


@dataclass(frozen=True)
class RunConfig:
    model: str
    n: int
    cells: int
    dt_init: float
    t_end: float
    base: Tuple[float, ...]
    d: Optional[Tuple[float, ...]] = None
    gamma: Optional[float] = None
    beta: Optional[float] = None
    theta: Optional[float] = None
    k: Optional[Tuple[float, ...]] = None
    masses: Optional[Tuple[float, ...]] = None
    length: float = 1.0
    safety: float = 0.4
    profile: str = "constant"
    amplitude: Optional[Tuple[float, ...]] = None
    wavenumber: int = 1
    modes: int = 3
    margin: float = 0.05
    seed: int = 0
    snapshot_stride: int = 1
    output: Optional[str] = None
    epsilon: float = 0.0
    perturbation: str = "cosine"

    def build_model(self) -> ModelSpec:
        return make_model(
            self.model,
            n=self.n,
            d=None if self.d is None else list(self.d),
            gamma=self.gamma,
            beta=self.beta,
            theta=self.theta,
            k=None if self.k is None else list(self.k),
            masses=None if self.masses is None else list(self.masses),
        )

    def grid(self) -> Grid1D:
        return Grid1D(self.cells, self.length)

    def solver_config(self, model: Optional[ModelSpec] = None) -> SolverConfig:
        return SolverConfig(model or self.build_model(), self.dt_init, self.t_end, safety=self.safety)

    def reference_field(self) -> Field:
        """Initial data without the epsilon perturbation."""
        grid = self.grid()
        base = np.array(self.base)
        if self.profile == "constant":
            return make_field(grid, np.tile(base, (self.cells, 1)))
        if self.profile == "cosine":
            return init_field(grid, cosine_profile(base, np.array(self.amplitude), self.wavenumber, self.length))
        return init_field(grid, random_smooth_profile(base, self.modes, self.margin, self.seed, self.length))

    def initial_field(self) -> Field:
        ref = self.reference_field()
        if self.epsilon == 0.0:
            return ref
        return perturb_initial(ref, self.epsilon, self.perturbation, self.seed)

    def with_epsilon(self, epsilon) -> "RunConfig":
        return replace(self, epsilon=float(epsilon))


_KEYS = {f.name: f for f in fields(RunConfig)}
_REQUIRED = ("model", "n", "cells", "dt_init", "t_end", "base")
_INT_KEYS = {"n", "cells", "wavenumber", "modes", "seed", "snapshot_stride"}
_STR_KEYS = {"model", "profile", "output", "perturbation"}
_LIST_KEYS = {"d", "k", "masses", "base", "amplitude"}


def _line_of(text, key):
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for no, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return no
    return None


def _coerce(key, value):
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ValidationError(key, "expected a string")
        return value
    if key in _LIST_KEYS:
        if not isinstance(value, list) or not value:
            raise ValidationError(key, "expected a non-empty array of numbers")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(key, "array entries must be numbers")
            out.append(float(v))
        return tuple(out)
    if isinstance(value, bool):
        raise ValidationError(key, "booleans are not accepted")
    if key in _INT_KEYS:
        if not isinstance(value, int):
            raise ValidationError(key, "expected an integer")
        return value
    if not isinstance(value, (int, float)):
        raise ValidationError(key, "expected a number")
    return float(value)


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc).split(" (at")[0], int(m.group(1)) if m else None) from exc
    values = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ParseError(f"tables are not supported ([{key}])", _line_of(text, "\\[" + key) or _line_of(text, key))
        if key not in _KEYS:
            raise ValidationError(key, f"unknown key (line {_line_of(text, key)})")
        values[key] = _coerce(key, value)
    for key in _REQUIRED:
        if key not in values:
            raise ValidationError(key, "required key is missing")
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def _check(cond, key, message):
    if not cond:
        raise ValidationError(key, message)


def validate(cfg: RunConfig) -> RunConfig:
    n = cfg.n
    _check(cfg.model in MODEL_KINDS, "model", f"unknown model; choose from {', '.join(MODEL_KINDS)}")
    _check(n >= 2, "n", "need at least two species")
    pairs = n * (n - 1) // 2
    if cfg.model in ("classic-ms", "pvd", "porous-medium"):
        _check(cfg.d is not None, "d", f"{cfg.model} needs d")
    if cfg.d is not None:
        _check(len(cfg.d) == pairs, "d", f"needs exactly n(n-1)/2 = {pairs} entries, got {len(cfg.d)}")
        _check(all(v > 0.0 for v in cfg.d), "d", "entries must be positive")
    if cfg.model == "porous-medium":
        _check(cfg.gamma is not None, "gamma", "porous-medium needs gamma")
        _check(cfg.gamma > 1.0, "gamma", "must exceed 1")
    if cfg.model == "tumor":
        _check(n == 3, "n", "the tumor model has three species")
        _check(cfg.beta is not None, "beta", "tumor needs beta")
        _check(cfg.theta is not None, "theta", "tumor needs theta")
        _check(cfg.beta > 0.0, "beta", "must be positive")
        _check(cfg.theta >= 0.0, "theta", "must be nonnegative")
        if cfg.k is not None:
            _check(len(cfg.k) == pairs, "k", f"needs exactly {pairs} entries")
            _check(all(v > 0.0 for v in cfg.k), "k", "entries must be positive")
    if cfg.model == "molar-mass":
        _check(cfg.masses is not None, "masses", "molar-mass needs masses")
        _check(len(cfg.masses) == n, "masses", f"needs {n} entries")
        _check(all(v > 0.0 for v in cfg.masses), "masses", "entries must be positive")
    _check(cfg.cells >= 4, "cells", "need at least 4 cells")
    _check(cfg.length > 0.0, "length", "must be positive")
    _check(cfg.dt_init > 0.0, "dt_init", "must be positive")
    _check(0.0 < cfg.safety <= 1.0, "safety", "must lie in (0, 1]")
    _check(cfg.t_end >= 0.0, "t_end", "must be nonnegative")
    _check(cfg.profile in PROFILES, "profile", f"choose from {', '.join(PROFILES)}")
    _check(len(cfg.base) == n, "base", f"needs {n} entries")
    _check(min(cfg.base) >= 0.0, "base", "entries must be nonnegative")
    _check(abs(sum(cfg.base) - 1.0) <= 1e-9, "base", "entries must sum to 1")
    if cfg.profile == "cosine":
        _check(cfg.amplitude is not None, "amplitude", "cosine profile needs amplitude")
        _check(len(cfg.amplitude) == n, "amplitude", f"needs {n} entries")
        _check(abs(sum(cfg.amplitude)) <= 1e-12, "amplitude", "entries must sum to zero")
        low = min(b - abs(a) for b, a in zip(cfg.base, cfg.amplitude))
        _check(low >= 0.0, "amplitude", "profile leaves the simplex")
        _check(cfg.wavenumber >= 0, "wavenumber", "must be nonnegative")
    if cfg.profile == "random":
        _check(cfg.modes >= 1, "modes", "must be >= 1")
        _check(0.0 <= cfg.margin < min(cfg.base), "margin", "must lie below every base entry")
    _check(0 <= cfg.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
    _check(cfg.snapshot_stride >= 1, "snapshot_stride", "must be >= 1")
    _check(cfg.epsilon >= 0.0, "epsilon", "must be nonnegative")
    _check(cfg.perturbation in PERTURBATIONS, "perturbation", f"choose from {', '.join(PERTURBATIONS)}")
    try:
        cfg.build_model()
    except PreconditionError as exc:
        raise ValidationError("model", str(exc)) from exc
    return cfg


def _fmt(value):
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(cfg: RunConfig) -> str:
    """Serialize back to the config format; parse_config(render(c)) == c."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
