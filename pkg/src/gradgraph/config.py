"""Flat key = value experiment configuration.

Config files are line-oriented: ``key = value`` with ``#`` comments (full
line or trailing). Lists are comma-separated. A handful of keys accept the
string ``auto`` and resolve to measured or grid-derived defaults at run
time. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigurationError


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_strings(text: str) -> tuple:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def _float_or_auto(text: str):
    return "auto" if text.lower() == "auto" else float(text)


@dataclasses.dataclass
class ExperimentConfig:
    # grid geometry
    n: int = 2
    points_per_axis: int = 33
    radius: float = 2.0  # box half-width
    mask: str = "box"  # "box" | "ball"
    mask_radius: float | None = None  # ball mask radius; default 0.9 * radius

    # boundary data: quadratic (upper-triangle Hessian entries) + perturbation
    quad: tuple | None = None  # None -> identity Hessian
    eta: float = 0.0
    shape: str = "gauss"  # "none" | "gauss" | "mode"
    shape_center: tuple | None = None
    shape_width: float = 0.5
    shape_freq: int = 1

    # rotation / semiconvexity
    M: object = "auto"  # float or "auto" (measured + safety margin)
    delta: float | None = None  # rotation-angle override / phase-condition margin

    # linear solver
    solver_tol: float = 1e-10
    solver_max_iter: int = 0  # 0 -> 20 * unknown count

    # descent
    step_rule: str = "bb"
    grad_tol: object = "auto"  # float or "auto" (1e-8 * h^n)
    max_steps: int = 100000
    step0: float = 1.0
    warm_start: str = "boundary"  # "boundary" | "quad" | "perturbed"
    warm_eta: float = 0.01
    warm_width: float = 0.5

    # experiment sweeps
    seed: int | None = None
    radii: tuple = (4.0, 8.0, 16.0)
    trials: int = 50
    rescale: tuple = (2.0, 4.0)
    harnack_radius: float = 1.0
    decay_threshold: float = 0.9
    functionals: tuple = ("trace", "logdet", "phase")

    # output
    dump_fields: bool = False
    verbose: bool = False

    def validate(self) -> None:
        if self.n < 1 or self.n > 4:
            raise ConfigurationError(f"n must be 1..4, got {self.n}")
        if self.points_per_axis < 5:
            raise ConfigurationError("points_per_axis must be at least 5")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ConfigurationError("radius must be positive and finite")
        if self.mask not in ("box", "ball"):
            raise ConfigurationError(f"mask must be 'box' or 'ball', got {self.mask!r}")
        if self.shape not in ("none", "gauss", "mode"):
            raise ConfigurationError(f"unknown perturbation shape {self.shape!r}")
        if self.warm_start not in ("boundary", "quad", "perturbed"):
            raise ConfigurationError(f"unknown warm start {self.warm_start!r}")
        tri = self.n * (self.n + 1) // 2
        if self.quad is not None and len(self.quad) != tri:
            raise ConfigurationError(f"quad needs {tri} upper-triangle entries for n={self.n}")
        if isinstance(self.M, str) and self.M != "auto":
            raise ConfigurationError(f"M must be a number or 'auto', got {self.M!r}")
        if isinstance(self.grad_tol, str) and self.grad_tol != "auto":
            raise ConfigurationError(f"grad_tol must be a number or 'auto', got {self.grad_tol!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigurationError("this experiment is randomized: a seed is mandatory")
        return int(self.seed)


_PARSERS = {
    "n": int,
    "points_per_axis": int,
    "radius": float,
    "mask": str,
    "mask_radius": float,
    "quad": _parse_floats,
    "eta": float,
    "shape": str,
    "shape_center": _parse_floats,
    "shape_width": float,
    "shape_freq": int,
    "M": _float_or_auto,
    "delta": float,
    "solver_tol": float,
    "solver_max_iter": int,
    "step_rule": str,
    "grad_tol": _float_or_auto,
    "max_steps": int,
    "step0": float,
    "warm_start": str,
    "warm_eta": float,
    "warm_width": float,
    "seed": int,
    "radii": _parse_floats,
    "trials": int,
    "rescale": _parse_floats,
    "harnack_radius": float,
    "decay_threshold": float,
    "functionals": _parse_strings,
    "dump_fields": _parse_bool,
    "verbose": _parse_bool,
}


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _PARSERS:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"config line {lineno}: bad value for {key!r}: {exc}") from exc
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)
