"""Problem configuration and the flat ``key=value`` file format."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

MODES = ("stationary", "unsteady")
SOURCES = ("outer_boundary", "shell")


@dataclass(frozen=True)
class ProblemConfig:
    """Everything one Monte Carlo run needs.

    The inner radius follows ``alpha + beta * t``; ``beta`` must be zero in
    stationary mode. ``n`` is the total history count in stationary mode and
    the number emitted per time step in unsteady mode.
    """

    r1: float = 1.0
    alpha: float = 0.1
    beta: float = 0.0
    kappa_s: float = 0.9
    kappa_t: float = 1.0
    t_final: float = 10.0
    dt: float = 1e-2
    n: int = 1000
    n_r: int = 90
    n_mu: int = 1000
    seed: int = 1
    mode: str = "stationary"
    source: str = "outer_boundary"
    r_source: float = 0.45
    importance: bool = False
    weight_cutoff: float = 1e-12
    profile: bool = False
    source_stop: float | None = None
    gl_order: int = 8

    def __post_init__(self):
        validate(self)

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def source_end(self):
        return self.t_final if self.source_stop is None else self.source_stop

    def inner_radius(self, t):
        return self.alpha + self.beta * t

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


def validate(cfg: ProblemConfig):
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {cfg.mode!r}")
    if cfg.source not in SOURCES:
        raise ConfigError(f"source: must be one of {SOURCES}, got {cfg.source!r}")
    if not cfg.r1 > 0.0:
        raise ConfigError("r1: must be positive")
    if cfg.kappa_s < 0.0 or cfg.kappa_t < 0.0:
        raise ConfigError("kappa_s/kappa_t: cross sections must be non-negative")
    if cfg.kappa_s > cfg.kappa_t:
        raise ConfigError("kappa_s: kappa_s exceeds kappa_t")
    if not 0.0 <= cfg.alpha < cfg.r1:
        raise ConfigError("alpha: need 0 <= alpha < r1")
    if cfg.mode == "stationary" and cfg.beta != 0.0:
        raise ConfigError("beta: must be 0 in stationary mode")
    if not cfg.t_final > 0.0:
        raise ConfigError("t_final: must be positive")
    if not cfg.dt > 0.0:
        raise ConfigError("dt: must be positive")
    if cfg.mode == "unsteady":
        steps = cfg.t_final / cfg.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError("dt: t_final/dt must be an integer")
        r_end = cfg.alpha + cfg.beta * cfg.t_final
        if cfg.beta != 0.0 and not r_end > 0.0 and cfg.source == "outer_boundary":
            raise ConfigError("beta: inner radius alpha + beta*T must stay positive")
        if r_end >= cfg.r1:
            raise ConfigError("beta: inner radius reaches the outer sphere")
    if cfg.n < 1:
        raise ConfigError("n: need at least one history")
    if cfg.n_r < 1 or cfg.n_mu < 1:
        raise ConfigError("n_r/n_mu: mesh sizes must be positive")
    if cfg.source == "shell":
        if cfg.importance:
            raise ConfigError("importance: biased runs need the outer boundary source")
        if not cfg.alpha <= cfg.r_source <= cfg.r1:
            raise ConfigError("r_source: outside the domain")
    elif cfg.alpha <= 0.0:
        raise ConfigError("alpha: target radius must be positive for the boundary source")
    if cfg.importance and cfg.kappa_t <= 0.0:
        raise ConfigError("kappa_t: importance needs kappa_t > 0")
    if cfg.weight_cutoff < 0.0:
        raise ConfigError("weight_cutoff: must be non-negative")
    if cfg.source_stop is not None and cfg.source_stop < 0.0:
        raise ConfigError("source_stop: must be non-negative")
    if cfg.gl_order < 1:
        raise ConfigError("gl_order: must be positive")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed: must fit in an unsigned 64-bit integer")


_ALIASES = {"r0": "alpha", "r_outer": "r1", "particles": "n"}
_EXTRA_KEYS = ("output_dir", "workers")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(name, typ, raw):
    raw = raw.strip()
    try:
        if name == "source_stop":
            return None if raw.lower() in ("", "none", "t_final") else float(raw)
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        if typ in (float, "float"):
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def _field_types():
    return {f.name: f.type for f in fields(ProblemConfig)}


def parse_assignments(pairs, base: ProblemConfig | None = None):
    """Apply ``(key, text)`` pairs to ``base``; returns ``(config, extras)``."""
    types = _field_types()
    values = {} if base is None else base.as_dict()
    extras = {}
    for key, raw in pairs:
        key = key.strip()
        name = _ALIASES.get(key, key)
        if name in _EXTRA_KEYS:
            extras[name] = raw.strip()
            continue
        if name not in types:
            raise ConfigError(f"{key}: unknown key")
        typ = types[name]
        if isinstance(typ, str):
            typ = typ.split("|")[0].strip()
        values[name] = _convert(name, typ, raw)
    if "workers" in extras:
        extras["workers"] = _convert("workers", int, extras["workers"])
        if extras["workers"] < 1:
            raise ConfigError("workers: must be at least 1")
    try:
        cfg = ProblemConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, extras


def parse_config(text, base: ProblemConfig | None = None, with_extras=False):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = line.split("=", 1)
        pairs.append((key, raw))
    cfg, extras = parse_assignments(pairs, base)
    return (cfg, extras) if with_extras else cfg
