"""Boundary Sobolev norms, partial Dirichlet-to-Neumann maps, impedance trace
maps and weighted operator norms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bvp import ImpedanceSolver, ImpedanceSpec, _face_lines, normal_spacing, solve_dirichlet
from .grid import BoundaryPatch, Grid, make_patch
from .spectral import Resolvent, assemble_schrodinger, empirical_e, spectral_window

KINDS = {
    "lambda0": (1.5, 0.0),
    "lambda1": (1.5, 0.0),
    "n0": (0.5, 1.0),
    "n1": (0.5, 1.0),
}


def cosine_basis(n: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Neumann cosine vectors cos(pi k (i + 1/2) / n), orthonormal for weight h,
    and the eigenvalues (4/h^2) sin^2(pi k / (2n)) of the forward-difference Laplacian."""
    k = np.arange(n)
    i = np.arange(n)
    C = np.cos(np.pi * np.outer(i + 0.5, k) / n)
    C[:, 0] *= np.sqrt(1.0 / (n * h))
    C[:, 1:] *= np.sqrt(2.0 / (n * h))
    nu = (4.0 / h**2) * np.sin(np.pi * k / (2 * n)) ** 2
    return C, nu


@dataclass
class BoundarySobolev:
    """Spectral H^s norms on a boundary patch, one tensor cosine basis per piece.

    ``modes`` holds the patch-local basis (columns, in boundary-vector layout
    restricted to ``patch.indices``); ``nu`` the matching eigenvalues.
    """

    patch: BoundaryPatch
    modes: np.ndarray = field(init=False, repr=False)
    nu: np.ndarray = field(init=False, repr=False)
    piece_of_mode: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.patch.grid
        blocks, nus, owner = [], [], []
        for p_id, piece in enumerate(self.patch.pieces):
            spacing = g.face_spacing(piece.face)
            mats = [cosine_basis(n, h) for n, h in zip(piece.shape, spacing)]
            C = mats[0][0]
            nu = mats[0][1]
            for Cm, num in mats[1:]:
                C = np.kron(C, Cm)
                nu = np.add.outer(nu, num).ravel()
            blocks.append(C)
            nus.append(nu)
            owner.append(np.full(len(nu), p_id))
        size = self.patch.size
        modes = np.zeros((size, sum(b.shape[1] for b in blocks)))
        r = c = 0
        for b in blocks:
            modes[r : r + b.shape[0], c : c + b.shape[1]] = b
            r += b.shape[0]
            c += b.shape[1]
        self.modes = modes
        self.nu = np.concatenate(nus)
        self.piece_of_mode = np.concatenate(owner)

    @classmethod
    def full(cls, grid: Grid) -> "BoundarySobolev":
        return cls(make_patch(grid, "all"))

    @property
    def grid(self) -> Grid:
        return self.patch.grid

    def _local(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi)
        if phi.shape[0] == self.grid.n_boundary:
            return phi[self.patch.indices]
        if phi.shape[0] == self.patch.size:
            return phi
        raise ValueError(f"boundary vector of length {phi.shape[0]} fits neither the patch nor the boundary")

    def coefficients(self, phi: np.ndarray) -> np.ndarray:
        w = self.patch.weights
        loc = self._local(phi)
        return self.modes.T @ (w[:, None] * loc if loc.ndim == 2 else w * loc)

    def weights(self, s: float) -> np.ndarray:
        return (1.0 + self.nu) ** s

    def norm(self, phi: np.ndarray, s: float) -> float:
        c = self.coefficients(phi)
        return float(np.sqrt(np.sum(self.weights(s) * np.abs(c) ** 2)))

    def gram(self, vectors: np.ndarray, s: float) -> np.ndarray:
        """H^s Gram matrix of the columns of ``vectors``."""
        c = self.coefficients(vectors)
        return c.T.conj() @ (self.weights(s)[:, None] * c)

    def basis(self, s: float, max_modes: int | None = None) -> np.ndarray:
        """Cosine modes scaled to unit H^s norm, as full boundary vectors.

        ``max_modes`` keeps the modes with index below it along every axis.
        """
        keep = self._select(max_modes)
        out = np.zeros((self.grid.n_boundary, int(keep.sum())))
        out[self.patch.indices] = self.modes[:, keep] * self.weights(-s / 2)[keep]
        return out

    def _select(self, max_modes: int | None) -> np.ndarray:
        if max_modes is None:
            return np.ones(len(self.nu), dtype=bool)
        keep = []
        for piece in self.patch.pieces:
            idx = np.indices(piece.shape).reshape(len(piece.shape), -1)
            keep.append(np.all(idx < max_modes, axis=0))
        return np.concatenate(keep)

    def random_smooth(self, rng: np.random.Generator, max_modes: int = 4) -> np.ndarray:
        """Random real boundary field built from low cosine modes with decaying amplitude."""
        keep = self._select(max_modes)
        c = np.zeros(len(self.nu))
        c[keep] = rng.standard_normal(int(keep.sum())) / (1.0 + self.nu[keep])
        out = np.zeros(self.grid.n_boundary)
        out[self.patch.indices] = self.modes @ c
        return out


def h1_forward(grid: Grid, phi: np.ndarray, patch: BoundaryPatch) -> float:
    """H^1 norm on a patch from forward differences inside each piece."""
    total = 0.0
    for piece in patch.pieces:
        sub = grid.face_view(phi, piece.face)[tuple(slice(a, b) for a, b in piece.ranges)]
        hs = grid.face_spacing(piece.face)
        w = float(np.prod(hs))
        total += w * np.sum(np.abs(sub) ** 2)
        for ax, h in enumerate(hs):
            total += w * np.sum(np.abs(np.diff(sub, axis=ax) / h) ** 2)
    return float(np.sqrt(total))


def windowed_basis(
    grid: Grid, gamma: BoundaryPatch, s: float, window: np.ndarray | None = None,
    max_modes: int | None = None, rtol: float = 1e-10,
) -> np.ndarray:
    """Orthonormal basis of H^s_Gamma: cosine modes of the faces carrying Gamma,
    multiplied by the boundary window, re-orthonormalized in H^s(dM)."""
    faces = {p.face.label: None for p in gamma.pieces}
    face_sob = BoundarySobolev(make_patch(grid, faces))
    if window is None:
        window = gamma.mask.astype(float)
    raw = face_sob.basis(0.0, max_modes) * window[:, None]
    raw = raw[:, np.linalg.norm(raw, axis=0) > 0]
    full = BoundarySobolev.full(grid)
    G = full.gram(raw, s)
    G = 0.5 * (G + G.T)
    vals, vecs = np.linalg.eigh(G)
    keep = vals > rtol * vals.max()
    return raw @ (vecs[:, keep] / np.sqrt(vals[keep]))


# ---------------------------------------------------------------------------
# Maps


@dataclass
class BoundaryOperatorMap:
    """Dense partial boundary map: rows are codomain patch nodes, columns the
    responses to an H^{s_in}-orthonormal domain basis."""

    matrix: np.ndarray
    kind: str
    domain: BoundaryPatch
    codomain: BoundaryPatch
    s_in: float
    s_out: float
    basis: np.ndarray | None = field(default=None, repr=False)

    def _check(self, other: "BoundaryOperatorMap"):
        if self.matrix.shape != other.matrix.shape or self.kind != other.kind:
            raise ValueError("maps are not comparable")
        if self.basis is not None and other.basis is not None and not np.allclose(self.basis, other.basis):
            raise ValueError("maps use different domain bases")

    def __sub__(self, other: "BoundaryOperatorMap") -> "BoundaryOperatorMap":
        self._check(other)
        return BoundaryOperatorMap(
            self.matrix - other.matrix, self.kind, self.domain, self.codomain, self.s_in, self.s_out, self.basis
        )

    def __mul__(self, alpha: float) -> "BoundaryOperatorMap":
        return BoundaryOperatorMap(
            alpha * self.matrix, self.kind, self.domain, self.codomain, self.s_in, self.s_out, self.basis
        )

    __rmul__ = __mul__

    def weighted(self) -> np.ndarray:
        """Matrix in coordinates where both norms are Euclidean."""
        sob = BoundarySobolev(self.codomain)
        c = sob.coefficients(self.matrix)
        return np.sqrt(sob.weights(self.s_out))[:, None] * c

    def norm(self) -> float:
        return operator_norm(self)

    def save(self, path) -> None:
        from .io import write_matrix

        write_matrix(
            path,
            self.matrix,
            kind=self.kind,
            domain=self.domain.describe(),
            codomain=self.codomain.describe(),
            s_in=self.s_in,
            s_out=self.s_out,
        )


def operator_norm(op, w_in: np.ndarray | None = None, w_out: np.ndarray | None = None) -> float:
    """Largest singular value of W_out^{1/2} M W_in^{-1/2}.

    ``op`` is a :class:`BoundaryOperatorMap` (weights implied by its orders)
    or a plain array with optional diagonal weights (unit by default).
    """
    if isinstance(op, BoundaryOperatorMap):
        M = op.weighted()
    else:
        M = np.asarray(op)
        if w_out is not None:
            M = np.sqrt(np.asarray(w_out))[:, None] * M
        if w_in is not None:
            M = M / np.sqrt(np.asarray(w_in))[None, :]
    if M.size == 0 or not np.any(M):
        return 0.0
    return float(np.linalg.norm(M, 2))


def _dtn_columns(grid: Grid, U: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Three-point outward normal derivative for many solutions at once."""
    d1, d2 = _face_lines(grid)
    flat = U.reshape(grid.size, -1)
    h = normal_spacing(grid)[:, None]
    return (3 * phi - 4 * flat[d1] + flat[d2]) / (2 * h)


def assemble_dtn(
    grid: Grid,
    q,
    lam: float,
    kind: str,
    gamma: BoundaryPatch | None,
    sigma: BoundaryPatch,
    window: np.ndarray | None = None,
    max_modes: int | None = None,
    resolvent: Resolvent | None = None,
    basis: np.ndarray | None = None,
) -> BoundaryOperatorMap:
    """Lambda^0 (data in H^{3/2}_Gamma) or Lambda^1 (data in H^{3/2}(dM)) read on Sigma."""
    if kind not in ("lambda0", "lambda1"):
        raise ValueError(f"kind must be 'lambda0' or 'lambda1', got {kind!r}")
    s_in, s_out = KINDS[kind]
    if basis is None:
        if kind == "lambda0":
            if gamma is None:
                raise ValueError("lambda0 needs a patch Gamma")
            basis = windowed_basis(grid, gamma, s_in, window, max_modes)
        else:
            basis = BoundarySobolev.full(grid).basis(s_in, max_modes)
    domain = gamma if kind == "lambda0" else make_patch(grid, "all")
    U = solve_dirichlet(grid, q, lam, basis, resolvent=resolvent)
    D = _dtn_columns(grid, U, basis)[sigma.indices]
    return BoundaryOperatorMap(D, kind, domain, sigma, s_in, s_out, basis)


def assemble_impedance_map(
    grid: Grid,
    q,
    spec: ImpedanceSpec,
    kind: str,
    gamma: BoundaryPatch | None,
    sigma: BoundaryPatch,
    window: np.ndarray | None = None,
    max_modes: int | None = None,
    basis: np.ndarray | None = None,
    solver: ImpedanceSolver | None = None,
) -> BoundaryOperatorMap:
    """N^0 (data in H^{1/2}_Gamma) or N^1 (data in H^{1/2}(dM)): trace on Sigma of u(0, phi)."""
    if kind not in ("n0", "n1"):
        raise ValueError(f"kind must be 'n0' or 'n1', got {kind!r}")
    s_in, s_out = KINDS[kind]
    if basis is None:
        if kind == "n0":
            if gamma is None:
                raise ValueError("n0 needs a patch Gamma")
            basis = windowed_basis(grid, gamma, s_in, window, max_modes)
        else:
            basis = BoundarySobolev.full(grid).basis(s_in, max_modes)
    domain = gamma if kind == "n0" else make_patch(grid, "all")
    solver = solver or ImpedanceSolver(grid, q, spec)
    cols = [solver.solve(None, basis[:, j])[1][sigma.indices] for j in range(basis.shape[1])]
    M = np.stack(cols, axis=1) if cols else np.zeros((sigma.size, 0), dtype=complex)
    return BoundaryOperatorMap(M, kind, domain, sigma, s_in, s_out, basis)


def lipschitz_probe(
    grid: Grid,
    q1,
    q2,
    lam: float,
    gamma: BoundaryPatch,
    sigma: BoundaryPatch,
    window: np.ndarray | None = None,
    max_modes: int | None = None,
    spectra: Sequence | None = None,
) -> dict:
    """Empirical C = |Lambda0_1 - Lambda0_2| / (lam^2 e_lam^2 |q1 - q2|_inf)."""
    q1 = np.broadcast_to(np.asarray(q1, dtype=float), grid.shape)
    q2 = np.broadcast_to(np.asarray(q2, dtype=float), grid.shape)
    dq = float(np.max(np.abs(q1 - q2)))
    if dq == 0:
        raise ValueError("q1 and q2 coincide; the ratio is undefined")
    basis = windowed_basis(grid, gamma, 1.5, window, max_modes)
    maps = []
    specs = []
    for q in (q1, q2):
        A = assemble_schrodinger(grid, q)
        R = Resolvent(A, lam)
        maps.append(assemble_dtn(grid, q, lam, "lambda0", gamma, sigma, basis=basis, resolvent=R))
        specs.append(spectral_window(A, lam, 6, grid))
    e = empirical_e(lam, list(spectra) if spectra is not None else specs)
    num = operator_norm(maps[0] - maps[1])
    return {"lambda": lam, "e": e, "dq_inf": dq, "dtn_diff": num, "ratio": num / (lam**2 * e**2 * dq)}
