"""Experiment configuration: JSON file -> validated, resolved settings."""

from __future__ import annotations

import ast
import copy
import hashlib
import json
import math
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..grid import BoundaryPatch, Grid, RegionPartition, build_grid, carve_regions, make_patch, smooth_window
from ..grid import smoothstep

DEFAULTS: dict[str, Any] = {
    "grid": {"box": ["pi", "pi", "pi"], "resolution": [11, 11, 11]},
    "regions": {"inner": [["pi/4", "3*pi/4"]] * 3, "margin": 1},
    "patches": {"gamma": "all", "sigma": "all"},
    "q0": {"kind": "constant", "value": 0.0},
    "perturbation": {"shape": "bump", "amplitudes": [0.1]},
    "lambdas": [10.0],
    "taus": [4.0, 8.0, 16.0, 32.0],
    "kappa0": 1.0,
    "kappa1": 1.0,
    "lambda0": 1.0,
    "mode": "dirichlet",
    "impedance": {"a": 1.0, "sign": 1},
    "max_modes": None,
    "seed": 0,
    "out": "out",
}

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def number(value) -> float:
    """Float from a number or an arithmetic string using ``pi`` and ``e``."""
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in ("pi", "e"):
            return math.pi if node.id == "pi" else math.e
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {value!r}")

    return ev(ast.parse(value, mode="eval"))


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data: dict, seed: int | None = None, out: str | None = None) -> "ExperimentConfig":
        unknown = set(data) - set(DEFAULTS) - {"forward", "runge", "reconstruct", "fit", "gaps", "cgo", "dtn", "sweep"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw = _merge(DEFAULTS, data)
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["out"] = out
        cfg = cls(raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, seed: int | None = None, out: str | None = None) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
        return cls.from_dict(data, seed, out)

    # -- validation -----------------------------------------------------
    def validate(self) -> None:
        r = self.raw
        try:
            box = [number(v) for v in r["grid"]["box"]]
            res = r["grid"]["resolution"]
            if len(box) != len(res):
                raise ConfigError("grid.box and grid.resolution differ in length")
            [number(v) for v in self.lambdas + self.taus + self.amplitudes]
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        seed = r["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if r["mode"] not in ("dirichlet", "impedance"):
            raise ConfigError("mode must be 'dirichlet' or 'impedance'")
        if r["perturbation"].get("shape") not in ("bump", "flat", "fourier", "random"):
            raise ConfigError("perturbation.shape must be bump, flat, fourier or random")
        if any(lam <= 0 for lam in self.lambdas):
            raise ConfigError("lambdas must be positive")

    # -- accessors ------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def lambdas(self) -> list[float]:
        return [number(v) for v in self.raw["lambdas"]]

    @property
    def taus(self) -> list[float]:
        return [number(v) for v in self.raw["taus"]]

    @property
    def amplitudes(self) -> list[float]:
        return [number(v) for v in self.raw["perturbation"]["amplitudes"]]

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name) or {})

    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- geometry -------------------------------------------------------
    def grid(self) -> Grid:
        g = self.raw["grid"]
        return build_grid([number(v) for v in g["box"]], g["resolution"])

    def partition(self, grid: Grid | None = None) -> RegionPartition:
        grid = grid or self.grid()
        reg = self.raw["regions"]
        inner = _numbers(reg["inner"])
        return carve_regions(grid, inner, int(reg.get("margin", 1)))

    def patch(self, name: str, grid: Grid | None = None) -> BoundaryPatch:
        grid = grid or self.grid()
        spec = self.raw["patches"].get(name)
        if spec is None:
            raise ConfigError(f"patch {name!r} is not configured")
        if isinstance(spec, dict):
            spec = {k: (None if v is None else _numbers(v)) for k, v in spec.items()}
        return make_patch(grid, spec)

    def q0(self, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.grid()
        spec = self.raw["q0"]
        if spec.get("kind", "constant") == "constant":
            return np.full(grid.shape, number(spec.get("value", 0.0)))
        if spec["kind"] == "field":
            from ..io import read_field

            values, _ = read_field(spec["path"])
            return np.asarray(values, dtype=float).reshape(grid.shape)
        raise ConfigError(f"unknown q0 kind {spec['kind']!r}")

    def shape(self, grid: Grid | None = None, partition: RegionPartition | None = None) -> np.ndarray:
        """Unit-amplitude perturbation shape, supported in M0."""
        grid = grid or self.grid()
        partition = partition or self.partition(grid)
        return perturbation_shape(grid, partition, self.raw["perturbation"], self.seed)


def _numbers(obj):
    if isinstance(obj, (list, tuple)):
        return [_numbers(v) for v in obj]
    return number(obj)


def perturbation_shape(grid: Grid, partition: RegionPartition, spec: dict, seed: int = 0) -> np.ndarray:
    """Perturbation families, each multiplied by the characteristic function of M0.

    bump:    prod (1 - t_j^2)^3 over the bounding box of M0
    flat:    plateau with quintic ramps over a fraction ``ramp`` of each half width
    fourier: cos(k . x) times the smooth window of the partition
    random:  band-limited random field times the smooth window
    """
    kind = spec.get("shape", "bump")
    chi = partition.inner_mask
    x = grid.mesh()
    lo = np.array([min(b[a][0] for b in partition.boxes) for a in range(grid.dim)]) * np.array(grid.spacing)
    hi = np.array([max(b[a][1] for b in partition.boxes) for a in range(grid.dim)]) * np.array(grid.spacing)
    # half a cell beyond the outermost M0 nodes so the shape vanishes just outside
    lo = lo - 0.5 * np.array(grid.spacing)
    hi = hi + 0.5 * np.array(grid.spacing)
    c, r = (lo + hi) / 2, (hi - lo) / 2
    if kind == "bump":
        f = np.prod([np.clip(1 - ((xj - cj) / rj) ** 2, 0, None) ** 3 for xj, cj, rj in zip(x, c, r)], axis=0)
    elif kind == "flat":
        frac = float(spec.get("ramp", 0.4))
        f = np.prod(
            [1 - smoothstep((np.abs(xj - cj) - rj * (1 - frac)) / (rj * frac)) for xj, cj, rj in zip(x, c, r)],
            axis=0,
        )
    elif kind == "fourier":
        k = [number(v) for v in spec.get("k", [1] * grid.dim)]
        f = np.cos(sum(kj * xj for kj, xj in zip(k, x))) * smooth_window(grid, partition)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        band = int(spec.get("band", 3))
        f = np.zeros(grid.shape)
        for _ in range(int(spec.get("terms", 8))):
            k = rng.integers(-band, band + 1, size=grid.dim)
            f += rng.standard_normal() * np.cos(sum(kj * xj for kj, xj in zip(k, x)) + rng.uniform(0, 2 * np.pi))
        f *= smooth_window(grid, partition)
        f /= max(np.max(np.abs(f)), 1e-300)
    else:
        raise ConfigError(f"unknown perturbation shape {kind!r}")
    return np.where(chi, f, 0.0)
