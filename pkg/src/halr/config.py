"""Experiment configuration: one flat record shared by the CLI and drivers.

Configs can come from long-form command-line flags, from a key=value file,
or both; flags win.  The file format is deliberately minimal: one `key =
value` pair per line, `#` comments, keys named like the flags.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import HalrError

COMMANDS = ("approximate", "refine", "sylvester", "burgers", "allen-cahn", "helmholtz", "render")


@dataclass
class ExperimentConfig:
    command: str
    n: int = 256
    dt: float = 5e-4
    t_max: float = 0.1
    steps: int | None = None
    coefficient: float = 0.01
    maxrank: int = 50
    eps_rel: float = 1e-8
    eps_step: float = 1e-5
    tol: float = 1e-6
    n_min: int = 256
    seed: int = 0
    threads: int | None = None
    out_dir: str | None = None
    snapshot_every: int = 0
    error_every: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise HalrError(f"unknown command {self.command!r}")
        for name in ("n", "maxrank", "n_min"):
            if getattr(self, name) <= 0:
                raise HalrError(f"{name} must be positive")
        for name in ("dt", "t_max", "coefficient", "eps_step", "tol"):
            if getattr(self, name) <= 0:
                raise HalrError(f"{name} must be positive")
        if self.eps_rel < 0:
            raise HalrError("eps_rel must be nonnegative")
        if self.steps is not None and self.steps < 0:
            raise HalrError("steps must be nonnegative")

    def resolved_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        return max(int(round(self.t_max / self.dt)), 0)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_INT_KEYS = {"n", "steps", "maxrank", "n_min", "seed", "threads", "snapshot_every", "error_every"}
_FLOAT_KEYS = {"dt", "t_max", "coefficient", "eps_rel", "eps_step", "tol"}
_STR_KEYS = {"command", "out_dir"}


def parse_config_value(key: str, raw: str):
    raw = raw.strip().strip('"').strip("'")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _STR_KEYS:
        return raw
    raise HalrError(f"unknown config key {key!r}")


def read_config_file(path) -> dict:
    """Parse `key = value` lines into a dict of typed config fields."""
    out: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise HalrError(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip().replace("-", "_")
            out[key] = parse_config_value(key, raw)
    return out
