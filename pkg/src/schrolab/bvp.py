"""Forward solvers: the Dirichlet problem, the interior impedance problem and
second-order Neumann traces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import BoundaryPatch, Grid
from .spectral import Resolvent, assemble_schrodinger, empirical_e, sobolev_norm, spectral_window


def normal_spacing(grid: Grid) -> np.ndarray:
    """Grid spacing along the normal at every boundary node."""
    h = np.empty(grid.n_boundary)
    for face in grid.faces:
        h[grid.face_slice(face)] = grid.spacing[face.axis]
    return h


def boundary_forcing(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Interior right-hand side produced by Dirichlet values folded out of -Delta_h."""
    phi = np.asarray(phi)
    if phi.shape != (grid.n_boundary,):
        raise ValueError(f"boundary data must have length {grid.n_boundary}, got shape {phi.shape}")
    out = np.zeros(grid.shape, dtype=np.result_type(phi, 0.0))
    for face in grid.faces:
        idx = [slice(None)] * grid.dim
        idx[face.axis] = 0 if face.side == 0 else -1
        out[tuple(idx)] += grid.face_view(phi, face) / grid.spacing[face.axis] ** 2
    return out


def apply_helmholtz(grid: Grid, q, lam: float, u: np.ndarray, phi: np.ndarray | None = None) -> np.ndarray:
    """(Delta_h + lam - q) u at interior nodes, using boundary values phi."""
    lattice = grid.pad(u, phi)
    core = tuple(slice(1, n + 1) for n in grid.counts)
    out = (lam - np.asarray(q)) * lattice[core]
    for axis, h in enumerate(grid.spacing):
        lo = list(core)
        hi = list(core)
        lo[axis] = slice(0, grid.counts[axis])
        hi[axis] = slice(2, grid.counts[axis] + 2)
        out = out + (lattice[tuple(lo)] + lattice[tuple(hi)] - 2 * lattice[core]) / h**2
    return out


def solve_dirichlet(
    grid: Grid,
    q,
    lam: float,
    phi: np.ndarray,
    resolvent: Resolvent | None = None,
) -> np.ndarray:
    """Interior values of u solving (Delta_h + lam - q) u = 0, u = phi on the boundary.

    ``phi`` may hold several data sets as columns, shape (n_boundary, m).
    Pass a prebuilt :class:`Resolvent` to reuse its factorization.
    """
    if resolvent is None:
        resolvent = Resolvent(assemble_schrodinger(grid, q), lam)
    elif resolvent.lam != lam:
        raise ValueError("resolvent was factorized at a different lambda")
    phi = np.asarray(phi)
    if phi.ndim == 1:
        rhs = boundary_forcing(grid, phi).ravel()
    else:
        rhs = np.stack([boundary_forcing(grid, c).ravel() for c in phi.T], axis=1)
    u = resolvent.solve(rhs)
    if resolvent.residual(rhs, u) > 1e-10:
        raise RuntimeError("Dirichlet solve did not reach relative residual 1e-10")
    if phi.ndim == 1:
        return u.reshape(grid.shape)
    return u.reshape(grid.shape + (phi.shape[1],))


def neumann_trace(
    grid: Grid, u: np.ndarray, phi: np.ndarray, patch: BoundaryPatch | None = None
) -> np.ndarray:
    """Outward normal derivative (3 u_0 - 4 u_1 + u_2) / (2h) on the patch nodes.

    The formula is the one-sided three-point difference with the outward sign
    already applied, so it reads the same on low and high faces.
    """
    if patch is not None and patch.grid != grid:
        raise ValueError("patch belongs to a different grid")
    lattice = grid.pad(u, phi)
    d = (
        3 * grid.lattice_layer(lattice, 0) - 4 * grid.lattice_layer(lattice, 1) + grid.lattice_layer(lattice, 2)
    ) / (2 * normal_spacing(grid))
    return d if patch is None else d[patch.indices]


# ---------------------------------------------------------------------------
# Impedance problem


@dataclass(frozen=True)
class ImpedanceSpec:
    """Robin data for (d_nu -+ i sqrt(mu) a) u = phi.

    ``sign=+1`` selects d_nu - i sqrt(mu) a with a > 0, ``sign=-1`` selects
    d_nu + i sqrt(mu) a with a < 0.
    """

    a: np.ndarray | float
    mu: float
    sign: int = 1
    kappa: float = 0.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        a = np.asarray(self.a, dtype=float)
        if not np.all(self.sign * a > 0):
            raise ValueError(f"impedance coefficient must satisfy {'+-'[self.sign < 0]}a > 0 everywhere")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.mu < self.mu0 or self.mu <= 0:
            raise ValueError(f"mu={self.mu} is below mu0 = 4 kappa^2 = {self.mu0}")

    @property
    def mu0(self) -> float:
        return 4.0 * self.kappa**2

    def coefficient(self, grid: Grid) -> np.ndarray:
        """Boundary vector of the complex Robin coefficient -+ i sqrt(mu) a."""
        a = np.broadcast_to(np.asarray(self.a, dtype=float), (grid.n_boundary,))
        return -self.sign * 1j * math.sqrt(self.mu) * a


def _face_lines(grid: Grid):
    """For each boundary node: flat interior index at depth 1 and depth 2."""
    lin = np.arange(grid.size).reshape(grid.shape)
    d1 = np.empty(grid.n_boundary, dtype=np.int64)
    d2 = np.empty(grid.n_boundary, dtype=np.int64)
    for face in grid.faces:
        for depth, out in ((0, d1), (1, d2)):
            idx = [slice(None)] * grid.dim
            idx[face.axis] = depth if face.side == 0 else grid.counts[face.axis] - 1 - depth
            out[grid.face_slice(face)] = lin[tuple(idx)].ravel()
    return d1, d2


class ImpedanceSolver:
    """Factorized impedance problem for fixed (q, spec).

    Boundary unknowns are eliminated through the one-sided Robin row
    u_b = (phi + (4 u_1 - u_2) / (2h)) / (3 / (2h) + c), c the Robin coefficient.
    """

    def __init__(self, grid: Grid, q, spec: ImpedanceSpec):
        self.grid = grid
        self.spec = spec
        self.q = np.broadcast_to(np.asarray(q, dtype=float), grid.shape)
        if spec.kappa > 0 and np.max(np.abs(self.q)) > spec.kappa:
            raise ValueError("potential exceeds kappa")
        h = normal_spacing(grid)
        self._h = h
        self._c = spec.coefficient(grid)
        self._g = 1.0 / (3.0 / (2 * h) + self._c)
        self._d1, self._d2 = _face_lines(grid)
        A = assemble_schrodinger(grid, self.q) - spec.mu * sp.identity(grid.size)
        # -Delta_h row at depth 1 carries -u_b / h^2
        w = self._g / h**2 / (2 * h)
        corr = sp.coo_matrix(
            (np.concatenate([-4 * w, w]), (np.concatenate([self._d1, self._d1]), np.concatenate([self._d1, self._d2]))),
            shape=(grid.size, grid.size),
        )
        self.matrix = (A.astype(complex) + corr).tocsc()
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise RuntimeError("impedance system is singular") from exc

    def boundary_values(self, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
        flat = u.reshape(-1)
        return self._g * (phi + (4 * flat[self._d1] - flat[self._d2]) / (2 * self._h))

    def solve(self, f: np.ndarray | None, phi: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        grid = self.grid
        f = np.zeros(grid.shape) if f is None else np.asarray(f)
        phi = np.zeros(grid.n_boundary) if phi is None else np.asarray(phi)
        rhs = -f.astype(complex).ravel()
        np.add.at(rhs, self._d1, self._g * phi / self._h**2)
        u = self._lu.solve(rhs)
        r = rhs - self.matrix @ u
        if np.linalg.norm(r) > 1e-12 * np.linalg.norm(rhs):
            u = u + self._lu.solve(r)
            r = rhs - self.matrix @ u
        nr = np.linalg.norm(rhs)
        if nr > 0 and np.linalg.norm(r) > 1e-10 * nr:
            raise RuntimeError(f"impedance solve residual {np.linalg.norm(r) / nr:.3e} exceeds 1e-10")
        u = u.reshape(grid.shape)
        return u, self.boundary_values(u, phi)

    def equation_residuals(self, u, ub, f, phi) -> tuple[float, float]:
        """Max-norm residuals of the interior equation and of the Robin rows."""
        grid = self.grid
        f = np.zeros(grid.shape) if f is None else f
        phi = np.zeros(grid.n_boundary) if phi is None else phi
        r_int = apply_helmholtz(grid, self.q, self.spec.mu, u, ub) - f
        r_bnd = neumann_trace(grid, u, ub) + self._c * ub - phi
        return float(np.max(np.abs(r_int))), float(np.max(np.abs(r_bnd)))


def solve_impedance(grid: Grid, q, spec: ImpedanceSpec, f=None, phi=None) -> tuple[np.ndarray, np.ndarray]:
    """Interior and boundary values of u solving (Delta + mu - q) u = f with
    (d_nu -+ i sqrt(mu) a) u = phi."""
    return ImpedanceSolver(grid, q, spec).solve(f, phi)


# ---------------------------------------------------------------------------
# Probes


def energy_norm(grid: Grid, u: np.ndarray, ub: np.ndarray, mu: float) -> float:
    """|grad u| + sqrt(mu) |u| with forward differences on the padded lattice."""
    lattice = grid.pad(u, ub)
    core = tuple(slice(1, n + 1) for n in grid.counts)
    total = 0.0
    for axis, h in enumerate(grid.spacing):
        sl = list(core)
        sl[axis] = slice(None)
        total += np.sum(np.abs(np.diff(lattice[tuple(sl)], axis=axis) / h) ** 2)
    grad = math.sqrt(total * grid.cell_volume)
    return grad + math.sqrt(mu) * grid.l2_norm(u)


def boundary_l2(grid: Grid, phi: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.boundary_weights() * np.abs(phi) ** 2)))


def probe_impedance_bound(grid: Grid, q, spec: ImpedanceSpec, samples: list[tuple[np.ndarray, np.ndarray]]) -> list[dict]:
    """Empirical C_1 = (|grad u| + sqrt(mu)|u|) / (|f| + |phi|_{L2(bdry)})."""
    solver = ImpedanceSolver(grid, q, spec)
    rows = []
    for sid, (f, phi) in enumerate(samples):
        den = grid.l2_norm(f) + boundary_l2(grid, phi)
        if den == 0:
            raise ValueError("f and phi must not both vanish")
        u, ub = solver.solve(f, phi)
        rows.append({"mu": spec.mu, "sample_id": sid, "ratio": energy_norm(grid, u, ub, spec.mu) / den})
    return rows


def probe_dirichlet_bound(grid: Grid, q, lams, samples: int = 5, seed: int = 0, modes: int = 4) -> list[dict]:
    """Empirical c_2 = |u|_{H^2} / (lam^2 e_lam |phi|_{H^{3/2}}) over random smooth phi."""
    from .dtn import BoundarySobolev

    rng = np.random.default_rng(seed)
    A = assemble_schrodinger(grid, q)
    sob = BoundarySobolev.full(grid)
    rows = []
    for lam in lams:
        R = Resolvent(A, lam)
        e = empirical_e(lam, [spectral_window(A, lam, 6, grid)])
        for sid in range(samples):
            phi = sob.random_smooth(rng, modes)
            u = solve_dirichlet(grid, q, lam, phi, resolvent=R)
            ratio = sobolev_norm(u, 2, grid, phi) / (lam**2 * e * sob.norm(phi, 1.5))
            rows.append({"lambda": float(lam), "sample_id": sid, "ratio": ratio})
    return rows
