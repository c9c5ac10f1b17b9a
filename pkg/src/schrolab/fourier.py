"""Periodic embedding of a box grid and Fourier-weighted norms.

The torus has ``2 (N_j + 1)`` nodes per axis at the grid spacing, i.e. side
``2 L_j``; box lattice index ``i`` sits at torus index ``i``. Fourier
coefficients use the unnormalized convention

    q_hat(eta) = sum_x q(x) exp(-i x . eta) prod h,

so that ``sum |q|^2 prod h = T^{-n} sum_eta |q_hat(eta)|^2`` with ``T^n`` the
torus volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid


@dataclass(frozen=True)
class Torus:
    counts: tuple[int, ...]
    spacing: tuple[float, ...]
    sides: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(n * h for n, h in zip(self.counts, self.spacing)))

    @classmethod
    def around(cls, grid: Grid) -> "Torus":
        return cls(grid.torus_counts(), grid.spacing)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(self.counts[axis]) * self.spacing[axis]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.coords(a) for a in range(self.dim)), indexing="ij")

    def frequencies(self, axis: int) -> np.ndarray:
        """Dual-lattice frequencies 2 pi m / T in FFT order."""
        n = self.counts[axis]
        return 2 * np.pi * np.fft.fftfreq(n, d=self.spacing[axis])

    def frequency_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.frequencies(a) for a in range(self.dim)), indexing="ij")

    def frequency_index(self, eta) -> tuple[int, ...]:
        """FFT array index of a dual-lattice point."""
        out = []
        for a, e in enumerate(eta):
            m = e * self.sides[a] / (2 * np.pi)
            mi = int(round(m))
            if abs(m - mi) > 1e-8:
                raise ValueError(f"{tuple(eta)} is not on the dual lattice of the torus")
            n = self.counts[a]
            if not -(n // 2) <= mi < n - n // 2:
                raise ValueError(f"{tuple(eta)} lies outside the resolved frequency band")
            out.append(mi % n)
        return tuple(out)

    def embed(self, interior: np.ndarray, grid: Grid) -> np.ndarray:
        """Zero-extend an interior field to the torus."""
        out = np.zeros(self.counts, dtype=np.result_type(interior, 0.0))
        out[tuple(slice(1, n + 1) for n in grid.counts)] = interior
        return out

    def restrict(self, values: np.ndarray, grid: Grid) -> np.ndarray:
        return values[tuple(slice(1, n + 1) for n in grid.counts)]

    def lattice_view(self, values: np.ndarray, grid: Grid) -> np.ndarray:
        """Values at the box lattice nodes (interior plus boundary layers)."""
        return values[tuple(slice(0, n + 2) for n in grid.counts)]

    def transform(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values) * self.cell_volume

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(coeffs) / self.cell_volume


def sobolev_weighted_norm(values: np.ndarray, torus: Torus, order: float) -> float:
    coeffs = torus.transform(values)
    k2 = sum(k**2 for k in torus.frequency_mesh())
    total = np.sum((1.0 + k2) ** order * np.abs(coeffs) ** 2) / torus.volume
    return float(np.sqrt(total))


def h_minus1_norm(values: np.ndarray, grid: Grid | None = None, torus: Torus | None = None) -> float:
    """H^{-1} norm with weights (1 + |eta|^2)^{-1} on the enclosing torus.

    ``values`` may be an interior field of ``grid`` (zero-extended) or an
    array already of torus shape.
    """
    if torus is None:
        if grid is None:
            raise ValueError("need a grid or a torus")
        torus = Torus.around(grid)
    values = np.asarray(values)
    if values.shape != torus.counts:
        if grid is None or values.shape != grid.shape:
            raise ValueError(f"field of shape {values.shape} matches neither grid nor torus")
        values = torus.embed(values, grid)
    return sobolev_weighted_norm(values, torus, -1.0)
