"""Green/Alessandrini identity, Fourier samples of a potential difference from
CGO pairs, low-pass inversion and H^-1 error metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bvp import apply_helmholtz, solve_dirichlet
from .cgo import cgo_pair, make_xi_pair
from .fourier import Torus, h_minus1_norm
from .grid import Grid, RegionPartition
from .spectral import Resolvent

EPS = np.finfo(float).eps


def sbp_trace(grid: Grid, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Two-point outward difference (u_b - u_adjacent) / h at every boundary node."""
    from .bvp import normal_spacing

    lattice = grid.pad(u, phi)
    return (grid.lattice_layer(lattice, 0) - grid.lattice_layer(lattice, 1)) / normal_spacing(grid)


def boundary_pairing(grid: Grid, u1, phi1, u2, phi2) -> complex:
    """sum_dM w (phi2 d_nu u1 - phi1 d_nu u2) with the two-point normal difference."""
    w = grid.boundary_weights()
    return complex(np.sum(w * (phi2 * sbp_trace(grid, u1, phi1) - phi1 * sbp_trace(grid, u2, phi2))))


@dataclass(frozen=True)
class IdentityCheck:
    lhs: complex
    rhs: complex
    mismatch: float


def interior_identity_check(grid: Grid, q1, q2, lam: float, u1, phi1, u2, phi2, rtol: float = 1e-8) -> IdentityCheck:
    """lhs = sum (q1 - q2) u1 u2 prod h against the summation-by-parts boundary pairing."""
    q1 = np.broadcast_to(np.asarray(q1, float), grid.shape)
    q2 = np.broadcast_to(np.asarray(q2, float), grid.shape)
    for name, q, u, phi in (("u1", q1, u1, phi1), ("u2", q2, u2, phi2)):
        r = apply_helmholtz(grid, q, lam, u, phi)
        scale = np.max(np.abs(grid.pad(u, phi))) * (max(1 / h**2 for h in grid.spacing) + lam + np.max(np.abs(q)))
        if scale > 0 and np.max(np.abs(r)) > rtol * scale:
            raise ValueError(f"{name} is not a discrete solution (residual {np.max(np.abs(r)) / scale:.2e})")
    lhs = complex(np.sum((q1 - q2) * u1 * u2) * grid.cell_volume)
    rhs = boundary_pairing(grid, u1, phi1, u2, phi2)
    mismatch = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + EPS)
    return IdentityCheck(lhs, rhs, float(mismatch))


def sbp_dtn_apply(grid: Grid, q, lam: float, phi: np.ndarray, resolvent: Resolvent | None = None) -> np.ndarray:
    """Summation-by-parts DtN map: two-point normal difference of the Dirichlet solution."""
    u = solve_dirichlet(grid, q, lam, phi, resolvent=resolvent)
    return sbp_trace(grid, u, phi)


# ---------------------------------------------------------------------------
# Fourier samples


def _check_support(grid: Grid, q1, q2, partition: RegionPartition) -> np.ndarray:
    dq = np.broadcast_to(np.asarray(q1, float), grid.shape) - np.broadcast_to(np.asarray(q2, float), grid.shape)
    if np.any(dq[~partition.inner_mask] != 0):
        raise ValueError("q1 and q2 must coincide outside M0")
    return dq


def fourier_sample(
    grid: Grid,
    q1,
    q2,
    lam: float,
    eta,
    tau: float,
    partition: RegionPartition,
    mode: str = "oracle",
    kappa: float = 0.0,
    seed: int | None = None,
    tol: float = 1e-10,
) -> complex:
    """Estimate of the Fourier coefficient of q1 - q2 at eta from a CGO pair."""
    if grid.dim != 3:
        raise ValueError("Fourier sampling needs dimension n = 3")
    if mode not in ("oracle", "boundary"):
        raise ValueError(f"mode must be 'oracle' or 'boundary', got {mode!r}")
    dq = _check_support(grid, q1, q2, partition)
    if not np.any(dq):
        return 0j
    q1 = np.broadcast_to(np.asarray(q1, float), grid.shape)
    q2 = np.broadcast_to(np.asarray(q2, float), grid.shape)
    dirs = make_xi_pair(eta, tau, lam, seed=seed, kappa=kappa)
    # the boundary route needs CGO fields that solve the stencil equation exactly
    s1, s2 = cgo_pair(grid, q1, q2, dirs, tol, "spectral" if mode == "oracle" else "discrete")
    if mode == "oracle":
        u1, u2 = s1.u_values(grid), s2.u_values(grid)
        return complex(np.sum(dq * u1 * u2) * grid.cell_volume)
    f1, f2 = s1.u_boundary(grid), s2.u_boundary(grid)
    d1 = sbp_dtn_apply(grid, q1, lam, f1)
    d2 = sbp_dtn_apply(grid, q2, lam, f1)
    return complex(np.sum(grid.boundary_weights() * f2 * (d1 - d2)))


@dataclass
class FourierSampleSet:
    etas: np.ndarray  # (m, n)
    values: np.ndarray  # complex (m,)
    tau: float
    s: float
    lam: float
    budget: float = field(init=False)

    def __post_init__(self):
        self.budget = 1.0 / self.tau

    def rows(self):
        for eta, v in zip(self.etas, self.values):
            row = {f"eta{j + 1}": float(e) for j, e in enumerate(eta)}
            row.update(re=float(v.real), im=float(v.imag), tau=self.tau, budget=self.budget)
            yield row

    def columns(self) -> list[str]:
        return [f"eta{j + 1}" for j in range(self.etas.shape[1])] + ["re", "im", "tau", "budget"]

    def to_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, self.columns(), self.rows())


def choose_scales(tau: float, n: int, varkappa: float | None = None, beta: float | None = None) -> dict:
    """s = tau^{2/(n+2)} and the diagnostic eps schedule (flagged when unfitted)."""
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    if n < 3:
        raise ValueError("n must be at least 3")
    s = tau ** (2.0 / (n + 2))
    if varkappa is None or beta is None:
        return {"s": s, "eps": None, "status": "unfitted"}
    eps = (tau ** (-4.0 / (n + 2)) * math.exp(-varkappa * tau)) ** (1.0 / beta)
    return {"s": s, "eps": eps, "status": "fitted"}


def lattice_points(torus: Torus, s: float) -> np.ndarray:
    """Dual lattice points of the torus with |eta| <= s, in lexicographic order."""
    axes = []
    for side in torus.sides:
        unit = 2 * np.pi / side
        m = int(math.floor(s / unit))
        axes.append(np.arange(-m, m + 1) * unit)
    pts = np.array(list(itertools.product(*axes)))
    return pts[np.linalg.norm(pts, axis=1) <= s + 1e-12]


def sample_set(
    grid: Grid,
    q1,
    q2,
    lam: float,
    tau: float,
    partition: RegionPartition,
    s: float | None = None,
    mode: str = "oracle",
    kappa: float = 0.0,
    seed: int | None = None,
    executor=None,
) -> FourierSampleSet:
    """Samples at every dual lattice point with |eta| <= s, symmetrized so that
    the value at -eta is the conjugate of the value at eta."""
    torus = Torus.around(grid)
    if s is None:
        s = choose_scales(tau, grid.dim)["s"]
    etas = lattice_points(torus, s)

    def one(eta):
        return fourier_sample(grid, q1, q2, lam, eta, tau, partition, mode, kappa, seed)

    if executor is None:
        raw = np.array([one(e) for e in etas])
    else:
        raw = np.array(list(executor.map(one, etas)))
    index = {tuple(np.round(e, 12)): i for i, e in enumerate(etas)}
    sym = np.array([(raw[i] + np.conj(raw[index[tuple(np.round(-e, 12) + 0.0)]])) / 2 for i, e in enumerate(etas)])
    return FourierSampleSet(etas, sym, float(tau), float(s), float(lam))


@dataclass
class Reconstruction:
    torus_field: np.ndarray
    interior: np.ndarray
    imag_residue: float


def lowpass_invert(samples: FourierSampleSet, grid: Grid) -> Reconstruction:
    """q(x) = T^{-n} sum_{|eta| <= s} q_hat(eta) exp(i x.eta), real part kept."""
    torus = Torus.around(grid)
    coeffs = np.zeros(torus.counts, dtype=complex)
    for eta, v in zip(samples.etas, samples.values):
        coeffs[torus.frequency_index(eta)] += v
    field = torus.inverse(coeffs)
    resid = float(np.max(np.abs(field.imag))) if field.size else 0.0
    real = field.real
    return Reconstruction(real, torus.restrict(real, grid), resid)


def h_minus1_error(q_rec, q_true, grid: Grid) -> tuple[float, float]:
    """Absolute and relative H^-1 error on the enclosing torus (relative is nan for q_true = 0)."""
    torus = Torus.around(grid)

    def to_torus(f):
        f = np.asarray(f)
        if f.shape == torus.counts:
            return f
        if f.shape == grid.shape:
            return torus.embed(f, grid)
        raise ValueError(f"field of shape {f.shape} matches neither grid nor torus")

    diff = to_torus(q_rec) - to_torus(q_true)
    ab = h_minus1_norm(diff, torus=torus)
    ref = h_minus1_norm(to_torus(q_true), torus=torus)
    return ab, (ab / ref if ref > 0 else float("nan"))


def exact_samples(q, grid: Grid, s: float, tau: float = 2.0, lam: float = 1.0) -> FourierSampleSet:
    """DFT samples of a zero-extended field at |eta| <= s (oracle for tests and baselines)."""
    torus = Torus.around(grid)
    etas = lattice_points(torus, s)
    hat = torus.transform(torus.embed(np.asarray(q, float), grid))
    vals = np.array([hat[torus.frequency_index(e)] for e in etas])
    return FourierSampleSet(etas, vals, float(tau), float(s), float(lam))


def reconstruct(
    grid: Grid,
    q1,
    q2,
    lam: float,
    tau: float,
    partition: RegionPartition,
    mode: str = "oracle",
    kappa: float = 0.0,
    s: float | None = None,
    executor=None,
) -> dict:
    """End-to-end: samples, low-pass inversion and H^-1 error of q1 - q2."""
    samples = sample_set(grid, q1, q2, lam, tau, partition, s, mode, kappa, executor=executor)
    rec = lowpass_invert(samples, grid)
    dq = np.broadcast_to(np.asarray(q1, float), grid.shape) - np.broadcast_to(np.asarray(q2, float), grid.shape)
    ab, rel = h_minus1_error(rec.torus_field, dq, grid)
    return {"samples": samples, "reconstruction": rec, "abs_error": ab, "rel_error": rel}
