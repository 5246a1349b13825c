"""Run configuration: parsing, validation, rendering, hashing.

Plain ``key = value`` files with ``#`` comments under the sections
[physics], [discretization], [noise] and [run].  Unknown sections or keys
are errors, every omitted key is filled from the documented default and
recorded, and ``parse_config(render_config(cfg))`` reproduces ``cfg``
exactly (numbers are rendered with round-trip precision).
"""

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field

SQRT2 = math.sqrt(2.0)


class ConfigError(ValueError):
    """Invalid, unknown, or inconsistent configuration input."""


def _bool(text):
    t = str(text).strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# (section, key) -> (attribute, type, default)
_SCHEMA = {
    ("physics", "nu"): ("nu", float, 1.0),
    ("physics", "alpha"): ("alpha", float, 1.0),
    ("physics", "alpha_rule"): ("alpha_rule", str, "const"),
    ("physics", "c"): ("c", float, 1.0),
    ("physics", "f_magnitude"): ("f_magnitude", float, 1.0),
    ("physics", "g"): ("g", str, "additive"),
    ("discretization", "n"): ("n", int, 48),
    ("discretization", "t"): ("T", float, 1.0),
    ("discretization", "k"): ("k", float, 1e-3),
    ("noise", "noise_m"): ("noise_M", int, 10),
    ("noise", "seed"): ("seed", int, 12345),
    ("noise", "sample_mode"): ("sample_mode", str, "interpolate"),
    ("run", "paths"): ("paths", int, 1),
    ("run", "solver"): ("solver", str, "direct"),
    ("run", "tol"): ("tol", float, 1e-10),
    ("run", "stride"): ("stride", int, 0),
    ("run", "out"): ("out", str, ""),
    ("run", "regime"): ("regime", str, ""),
    ("run", "regime_l"): ("regime_L", float, 0.95),
    ("run", "u0"): ("u0", str, "zero"),
    ("run", "convection"): ("convection", str, "compensated"),
}

# configparser lowercases keys on input; render with the documented casing.
_DISPLAY = {"t": "T", "noise_m": "noise_M", "regime_l": "regime_L"}

_ENUMS = {
    "alpha_rule": ("const", "c_times_h"),
    "g": ("additive", "multiplicative", "none"),
    "sample_mode": ("interpolate", "project"),
    "solver": ("direct", "iterative"),
    "regime": ("", "alpha_le_ch", "alpha_fixed"),
    "u0": ("zero", "vortex"),
    "convection": ("compensated", "plain"),
}


@dataclass
class RunConfig:
    """Resolved simulation parameters; see module docstring for the file format."""

    nu: float = 1.0
    alpha: float = 1.0
    alpha_rule: str = "const"
    c: float = 1.0
    f_magnitude: float = 1.0
    g: str = "additive"
    n: int = 48
    T: float = 1.0
    k: float = 1e-3
    noise_M: int = 10
    seed: int = 12345
    sample_mode: str = "interpolate"
    paths: int = 1
    solver: str = "direct"
    tol: float = 1e-10
    stride: int = 0
    out: str = ""
    regime: str = ""
    regime_L: float = 0.95
    u0: str = "zero"
    convection: str = "compensated"
    defaults_applied: list = field(default_factory=list, compare=False, repr=False)

    @property
    def h_max(self):
        """Mesh size of the structured unit-square triangulation."""
        return SQRT2 / self.n

    @property
    def n_steps(self):
        return int(round(self.T / self.k))

    def effective_alpha(self):
        """Filter scale after applying the alpha rule."""
        return self.c * self.h_max if self.alpha_rule == "c_times_h" else self.alpha

    def validate(self):
        for name, allowed in _ENUMS.items():
            value = getattr(self, name)
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        if self.k <= 0 or self.T <= 0:
            raise ConfigError("T and k must be positive")
        m = self.T / self.k
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ConfigError(f"T/k = {m!r} is not an integer number of steps")
        if self.noise_M < 1:
            raise ConfigError("noise_M must be at least 1")
        if self.paths < 1:
            raise ConfigError("paths must be at least 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.stride < 0:
            raise ConfigError("stride must be nonnegative")
        a = self.effective_alpha()
        if not 0.0 < a <= 1.0:
            raise ConfigError(f"effective alpha {a!r} outside (0, 1]")
        if self.regime == "alpha_le_ch":
            bound = self.c * self.h_max
            if a > bound * (1 + 1e-12):
                raise ConfigError(
                    f"regime alpha_le_ch violated: alpha = {a!r} > c*h = {bound!r}"
                )
        elif self.regime == "alpha_fixed":
            ratio = math.sqrt(self.k) / self.h_max
            if not ratio < self.regime_L:
                raise ConfigError(
                    f"regime alpha_fixed violated: sqrt(k)/h = {ratio!r} >= L = {self.regime_L!r}"
                )
            if not self.regime_L <= a <= 1.0:
                raise ConfigError(
                    f"regime alpha_fixed violated: need L = {self.regime_L!r} <= alpha = {a!r} <= 1"
                )
        return self


def _render_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text):
    """Parse config text into a validated RunConfig.

    Raises ConfigError on unknown sections/keys, type errors, or
    constraint violations; records every default applied in
    ``defaults_applied`` as ``section.key = value`` strings.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from err

    known_sections = {s for s, _ in _SCHEMA}
    values = {}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, typ, _ = spec
            try:
                values[attr] = _bool(raw) if typ is bool else typ(raw)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({err})") from err

    cfg = RunConfig()
    applied = []
    for (section, key), (attr, _, default) in _SCHEMA.items():
        if attr in values:
            setattr(cfg, attr, values[attr])
        else:
            setattr(cfg, attr, default)
            name = _DISPLAY.get(key, key)
            applied.append(f"{section}.{name} = {_render_value(default)}")
    cfg.defaults_applied = sorted(applied)
    return cfg.validate()


def parse_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(cfg):
    """Full-precision text rendering; parse_config inverts it exactly."""
    out = io.StringIO()
    sections = {}
    for (section, key), (attr, _, _) in _SCHEMA.items():
        name = _DISPLAY.get(key, key)
        sections.setdefault(section, []).append((name, getattr(cfg, attr)))
    for section in ("physics", "discretization", "noise", "run"):
        out.write(f"[{section}]\n")
        for key, value in sections[section]:
            out.write(f"{key} = {_render_value(value)}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg):
    """Short stable hash of the resolved configuration."""
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()[:16]


def apply_overrides(cfg, seed=None, paths=None, out=None):
    """CLI flag overrides; returns the same (mutated, revalidated) config."""
    if seed is not None:
        cfg.seed = int(seed)
    if paths is not None:
        cfg.paths = int(paths)
    if out is not None:
        cfg.out = str(out)
    return cfg.validate()
