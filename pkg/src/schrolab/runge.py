"""Quantitative Runge approximation through the SVD of the restriction
operator T: windowed boundary data -> solution values on M0."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bvp import ImpedanceSolver, ImpedanceSpec, solve_dirichlet
from .dtn import windowed_basis
from .grid import Grid, RegionPartition, make_patch
from .spectral import Resolvent, assemble_schrodinger, sobolev_norm

DROP = 1e-13


@dataclass
class RestrictionOperator:
    """Matrix of T with columns indexed by an orthonormal windowed basis."""

    grid: Grid
    matrix: np.ndarray  # (M0 nodes, basis size)
    basis: np.ndarray  # boundary vectors, orthonormal in H^s
    mask: np.ndarray  # interior mask of M0
    kind: str
    order: float
    lam: float
    q: np.ndarray = field(repr=False)
    spec: ImpedanceSpec | None = None
    _solver: object = field(default=None, repr=False)

    def datum(self, coeffs: np.ndarray) -> np.ndarray:
        return self.basis @ coeffs

    def solve(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Global solution (interior, boundary values) for a coefficient vector."""
        phi = self.datum(coeffs)
        if self.kind == "dirichlet":
            if self._solver is None:
                self._solver = Resolvent(assemble_schrodinger(self.grid, self.q), self.lam)
            return solve_dirichlet(self.grid, self.q, self.lam, phi, resolvent=self._solver), phi
        if self._solver is None:
            self._solver = ImpedanceSolver(self.grid, self.q, self.spec)
        return self._solver.solve(None, phi)

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return u[self.mask]


def assemble_restriction(
    grid: Grid,
    q,
    lam: float,
    window: np.ndarray,
    partition: RegionPartition,
    kind: str = "dirichlet",
    spec: ImpedanceSpec | None = None,
    max_modes: int | None = None,
) -> RestrictionOperator:
    """T phi = u|_{M0} over the windowed domain basis.

    ``kind='dirichlet'`` uses H^{3/2}-orthonormal data and the Dirichlet
    problem at frequency ``lam``; ``kind='impedance'`` uses H^{1/2} data and
    the impedance problem described by ``spec`` (its mu replaces lam).
    """
    q = np.broadcast_to(np.asarray(q, dtype=float), grid.shape)
    window = np.asarray(window, dtype=float)
    mask = partition.inner_mask
    if kind == "dirichlet":
        order = 1.5
    elif kind == "impedance":
        if spec is None:
            raise ValueError("impedance restriction needs an ImpedanceSpec")
        order = 0.5
        lam = spec.mu
    else:
        raise ValueError(f"unknown kind {kind!r}")
    faces = sorted({f.label for f in grid.faces if np.any(grid.face_view(window, f))})
    if not faces:
        basis = np.zeros((grid.n_boundary, 0))
    else:
        basis = windowed_basis(grid, make_patch(grid, faces), order, window, max_modes)
    op = RestrictionOperator(grid, np.zeros((int(mask.sum()), 0)), basis, mask, kind, order, lam, q, spec)
    if basis.shape[1]:
        if kind == "dirichlet":
            U = solve_dirichlet(grid, q, lam, basis, resolvent=_resolvent(op))
            op.matrix = U[mask]
        else:
            cols = [op.solve(np.eye(basis.shape[1])[:, j])[0][mask] for j in range(basis.shape[1])]
            op.matrix = np.stack(cols, axis=1)
    return op


def _resolvent(op: RestrictionOperator) -> Resolvent:
    if op._solver is None:
        op._solver = Resolvent(assemble_schrodinger(op.grid, op.q), op.lam)
    return op._solver


@dataclass(frozen=True)
class RungeDecomposition:
    """Weighted SVD T = sum tau_j u_j psi_j^*.

    ``psi`` columns are orthonormal in the domain inner product, ``u`` columns
    in the codomain one (weights ``w_out`` on M0 nodes).
    """

    taus: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    w_out: np.ndarray
    w_in: np.ndarray
    dropped: int

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return b.conj().T @ (self.w_out[:, None] * a if a.ndim == 2 else self.w_out * a)

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(np.real(np.vdot(a, self.w_out * a))))

    def reassemble(self) -> np.ndarray:
        return (self.u * self.taus) @ (self.w_in[:, None] * self.psi).conj().T


def svd_decompose(T: np.ndarray, w_in: np.ndarray | float = 1.0, w_out: np.ndarray | float = 1.0) -> RungeDecomposition:
    """SVD of W_out^{1/2} T W_in^{-1/2}; singular values below 1e-13 tau_1 are dropped."""
    T = np.asarray(T)
    if T.size == 0 or not np.any(T):
        raise ValueError("T is the zero operator")
    w_in = np.broadcast_to(np.asarray(w_in, dtype=float), (T.shape[1],)).copy()
    w_out = np.broadcast_to(np.asarray(w_out, dtype=float), (T.shape[0],)).copy()
    B = np.sqrt(w_out)[:, None] * T / np.sqrt(w_in)[None, :]
    U, s, Vh = np.linalg.svd(B, full_matrices=False)
    keep = s > DROP * s[0]
    U, s, V = U[:, keep], s[keep], Vh[keep].conj().T
    return RungeDecomposition(
        taus=s,
        psi=V / np.sqrt(w_in)[:, None],
        u=U / np.sqrt(w_out)[:, None],
        w_out=w_out,
        w_in=w_in,
        dropped=int((~keep).sum()),
    )


def decompose(op: RestrictionOperator) -> RungeDecomposition:
    return svd_decompose(op.matrix, 1.0, op.grid.cell_volume)


@dataclass
class RungeApproximation:
    t: float
    coeffs: np.ndarray  # phi_t in the domain basis
    err: float  # |u - v|_{M0}| from the truncation algebra
    err_direct: float  # same, measured on the restricted solution (nan without an operator)
    datum_norm: float
    out_of_span: float
    u_norm: float
    v: np.ndarray | None = None
    v_boundary: np.ndarray | None = None


def runge_approximate(u, dec: RungeDecomposition, t: float, op: RestrictionOperator | None = None) -> RungeApproximation:
    """phi_t = sum_{tau_j > t} a_j / tau_j psi_j with a_j = (u, u_j)."""
    if not t > 0:
        raise ValueError("t must be positive")
    u = np.asarray(u)
    if op is not None and u.shape == op.grid.shape:
        u = op.restrict(u)
    a = dec.inner(u, dec.u)
    proj = dec.u @ a
    out = dec.norm(u - proj)
    keep = dec.taus > t
    coeffs = dec.psi[:, keep] @ (a[keep] / dec.taus[keep])
    datum_norm = float(np.sqrt(np.sum(np.abs(a[keep] / dec.taus[keep]) ** 2)))
    err = float(np.sqrt(np.sum(np.abs(a[~keep]) ** 2) + out**2))
    u_norm = dec.norm(u)
    if datum_norm > u_norm / t * (1 + 1e-12) + 1e-300:
        raise AssertionError(f"datum norm {datum_norm} exceeds |u|/t = {u_norm / t}")
    res = RungeApproximation(t, coeffs, err, float("nan"), datum_norm, out, u_norm)
    if op is not None:
        v, vb = op.solve(coeffs)
        res.v, res.v_boundary = v, vb
        res.err_direct = dec.norm(u - op.restrict(v))
    return res


def tradeoff_curve(u, dec: RungeDecomposition, ts, op: RestrictionOperator | None = None) -> list[dict]:
    """Records (t, err, datum_norm, v_H2_norm) for a decreasing t grid."""
    ts = [float(t) for t in ts]
    if any(t <= 0 for t in ts) or any(b > a for a, b in zip(ts, ts[1:])):
        raise ValueError("t grid must be positive and decreasing")
    rows = []
    for t in ts:
        r = runge_approximate(u, dec, t, op)
        h2 = float("nan")
        if r.v is not None and op is not None:
            h2 = sobolev_norm(r.v, 2, op.grid, r.v_boundary)
        rows.append({"t": t, "err": r.err, "datum_norm": r.datum_norm, "v_H2_norm": h2, "err_direct": r.err_direct})
    return rows
