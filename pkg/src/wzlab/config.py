"""Scenario configuration: dataclass, validation and flat key-value files.

A config file is plain ``key = value`` lines (``#`` starts a comment).  Lists
are comma separated; matrices separate rows with ``;``::

    scenario = markov-driver
    n_grid = 16, 32, 64, 128
    transition = 0.7, 0.3; 0.6, 0.4
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

SCENARIOS = ("scalar-wz", "hilbert-interpolation", "mollified-noise", "markov-driver")
FIELDS = ("linear", "sine", "constant", "augmented")
DRIVERS = ("brownian", "deterministic")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    dim: int = 4
    horizon: float = 1.0
    n_grid: tuple[int, ...] = (8, 16, 32, 64)
    refine: int = 8
    substeps: int = 4
    replicates: int = 10_000
    seed: int = 0
    field: str = "linear"
    field_vector: tuple[float, ...] | None = None
    coupling: float = 0.5          # weight of U in the augmented field
    x0: float = 1.0
    driver: str = "brownian"
    eigenvalues: tuple[float, ...] | None = None
    points_per_axis: int = 16
    kernel_width: float = 0.2
    transition: tuple[tuple[float, ...], ...] = ((0.7, 0.3), (0.6, 0.4))
    markov_s: str = "sqrt-pi"
    chunk: int = 0                 # replicates per batch; 0 picks one from a memory budget
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        validate(self)

    @property
    def fine_steps(self) -> int:
        """Steps of the common fine grid, ``refine * max(n) * T``."""
        return int(round(self.refine * max(self.n_grid) * self.horizon))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def validate(c: ScenarioConfig) -> None:
    if c.scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {c.scenario!r}; choose from {SCENARIOS}")
    if c.dim < 1:
        raise ConfigError("dim", "must be >= 1")
    if not c.horizon > 0:
        raise ConfigError("horizon", "must be positive")
    if not c.n_grid:
        raise ConfigError("n_grid", "must list at least one level")
    if any(n < 1 for n in c.n_grid):
        raise ConfigError("n_grid", "levels must be positive")
    if any(b <= a for a, b in zip(c.n_grid, c.n_grid[1:])):
        raise ConfigError("n_grid", "levels must be strictly increasing")
    top = max(c.n_grid)
    for n in c.n_grid:
        cells = n * c.horizon
        if abs(cells - round(cells)) > 1e-9:
            raise ConfigError("n_grid", f"horizon {c.horizon} is not a multiple of 1/{n}")
        if top % n:
            raise ConfigError("n_grid", f"level {n} does not divide the finest level {top}")
    if c.refine < 1:
        raise ConfigError("refine", "must be >= 1")
    if c.substeps < 1:
        raise ConfigError("substeps", "must be >= 1")
    if c.replicates < 100:
        raise ConfigError("replicates", "statistical summaries need at least 100 replicates")
    if c.field not in FIELDS:
        raise ConfigError("field", f"unknown field {c.field!r}; choose from {FIELDS}")
    if c.driver not in DRIVERS:
        raise ConfigError("driver", f"unknown driver {c.driver!r}; choose from {DRIVERS}")
    if c.eigenvalues is not None and any(v < 0 for v in c.eigenvalues):
        raise ConfigError("eigenvalues", "must be nonnegative")
    if c.eigenvalues is not None and c.scenario in ("scalar-wz", "hilbert-interpolation"):
        want = 1 if c.scenario == "scalar-wz" else c.dim
        if len(c.eigenvalues) != want:
            raise ConfigError("eigenvalues", f"need {want} values, got {len(c.eigenvalues)}")
    if c.scenario == "mollified-noise":
        if c.points_per_axis < 1:
            raise ConfigError("points_per_axis", "must be >= 1")
        if not c.kernel_width > 0:
            raise ConfigError("kernel_width", "must be positive")
        if c.refine * top < 4 * top:
            raise ConfigError("refine", "mollified noise needs dt <= 1/(4n): use refine >= 4")
        if c.field == "augmented":
            raise ConfigError("field", "augmented field is not available for mollified noise")
    if c.scenario == "markov-driver":
        rows = [len(r) for r in c.transition]
        if len(set(rows)) != 1 or rows[0] != len(rows):
            raise ConfigError("transition", "must be a square matrix")
        if c.markov_s not in ("sqrt-pi", "identity"):
            raise ConfigError("markov_s", "must be 'sqrt-pi' or 'identity'")
        if c.field == "augmented":
            raise ConfigError("field", "augmented field is not available for the Markov driver")
    if c.scenario == "scalar-wz" and c.field == "augmented":
        raise ConfigError("field", "augmented field needs the hilbert-interpolation scenario")
    if c.chunk < 0:
        raise ConfigError("chunk", "must be >= 0")
    if c.workers < 1:
        raise ConfigError("workers", "must be >= 1")


# ---------------------------------------------------------------------------
# parsing

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _matrix(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(row) for row in text.split(";") if row.strip())


_PARSERS = {
    "scenario": str, "dim": int, "horizon": float, "n_grid": _ints, "refine": int,
    "substeps": int, "replicates": int, "seed": int, "field": str,
    "field_vector": _floats, "coupling": float, "x0": float, "driver": str,
    "eigenvalues": _floats, "points_per_axis": int, "kernel_width": float,
    "transition": _matrix, "markov_s": str, "chunk": int, "workers": int, "out": str,
}


def from_mapping(values: dict, **overrides) -> ScenarioConfig:
    """Build a config from string values (as read from a file) plus overrides."""
    kwargs = {}
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            kwargs[key] = _PARSERS[key](raw.strip()) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if "scenario" not in kwargs:
        raise ConfigError("scenario", "missing")
    base = dataclasses.asdict(default_config(kwargs["scenario"]))
    base.update(kwargs)
    return ScenarioConfig(**base)


def load_config(path: str | Path, **overrides) -> ScenarioConfig:
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[scenario]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    values = {}
    for section in parser.sections():
        values.update(parser[section])
    return from_mapping(values, **overrides)


def dump_config(c: ScenarioConfig) -> str:
    lines = []
    for f in dataclasses.fields(c):
        v = getattr(c, f.name)
        if v is None:
            continue
        if f.name == "transition":
            v = "; ".join(", ".join(repr(x) for x in row) for row in v)
        elif isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# built-in scenarios

def default_config(name: str) -> ScenarioConfig:
    if name == "scalar-wz":
        return ScenarioConfig("scalar-wz", dim=1, eigenvalues=(1.0,))
    if name == "hilbert-interpolation":
        return ScenarioConfig("hilbert-interpolation", dim=4,
                              eigenvalues=(1.0, 0.5, 0.25, 0.125))
    if name == "mollified-noise":
        return ScenarioConfig("mollified-noise", n_grid=(4, 8, 16), points_per_axis=16)
    if name == "markov-driver":
        return ScenarioConfig("markov-driver", n_grid=(16, 32, 64, 128))
    raise ConfigError("scenario", f"unknown scenario {name!r}; choose from {SCENARIOS}")


BUILTIN = {name: default_config(name) for name in SCENARIOS}
