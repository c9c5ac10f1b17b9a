"""Discrete Schrodinger operator, its spectrum and resolvent, admissible
potentials and the frequency-dependent amplification factors."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fourier import h_minus1_norm
from .grid import Grid

GUARD = 1e-6


class NearResonanceError(ValueError):
    """Raised when lambda sits inside the guard band around the spectrum."""


def second_difference(n: int, h: float) -> sp.csr_matrix:
    """1D Dirichlet matrix of -d^2/dx^2, n interior nodes."""
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def negative_laplacian(grid: Grid) -> sp.csr_matrix:
    mats = [second_difference(n, h) for n, h in zip(grid.counts, grid.spacing)]
    out = sp.csr_matrix((grid.size, grid.size))
    for axis, D in enumerate(mats):
        factors = [sp.identity(n, format="csr") for n in grid.counts]
        factors[axis] = D
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        out = out + term
    return out.tocsr()


def assemble_schrodinger(grid: Grid, q: np.ndarray | float = 0.0) -> sp.csr_matrix:
    """A_q = -Delta_h + q with Dirichlet rows eliminated (7-point stencil in 3D)."""
    q = np.broadcast_to(np.asarray(q, dtype=float), grid.shape)
    if not np.all(np.isfinite(q)):
        raise ValueError("potential must be finite")
    return (negative_laplacian(grid) + sp.diags(q.ravel())).tocsr()


# ---------------------------------------------------------------------------
# Spectrum


@dataclass(frozen=True)
class SpectralData:
    """Eigenpairs ascending; eigenvectors are columns orthonormal in the
    weighted inner product sum u v prod h."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residuals: np.ndarray
    lowest: bool  # True when the pairs start at the bottom of the spectrum

    @property
    def k_max(self) -> int:
        return len(self.eigenvalues)

    def covers(self, lam: float) -> bool:
        ev = self.eigenvalues
        return lam < ev[-1] and (self.lowest or ev[0] <= lam)

    def distance(self, lam: float) -> float:
        return float(np.min(np.abs(self.eigenvalues - lam)))

    def rows(self):
        for k, (ev, res) in enumerate(zip(self.eigenvalues, self.residuals), start=1):
            yield {"k": k, "lambda_k": float(ev), "residual": float(res)}

    def to_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, ["k", "lambda_k", "residual"], self.rows())


def _lower_bound(A: sp.spmatrix) -> float:
    A = sp.csr_matrix(A)
    diag = A.diagonal()
    radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius))


def eigensolve(
    A: sp.spmatrix,
    k: int,
    grid: Grid | None = None,
    near: float | None = None,
    tol: float = 0.0,
    maxiter: int | None = None,
) -> SpectralData:
    """k smallest eigenpairs of a symmetric operator, or the k nearest to ``near``."""
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    weight = grid.cell_volume if grid is not None else 1.0
    if k >= n - 1 or n <= 600:
        vals, vecs = sla.eigh(A.toarray())
        if near is not None:
            order = np.argsort(np.abs(vals - near))[:k]
            order = np.sort(order)
            lowest = bool(order[0] == 0)
            vals, vecs = vals[order], vecs[:, order]
        else:
            vals, vecs, lowest = vals[:k], vecs[:, :k], True
    else:
        sigma = near if near is not None else _lower_bound(A) - 1.0
        try:
            # fixed start vector: ARPACK's default is random, which breaks reproducibility
            v0 = np.cos(np.arange(n) + 0.5)
            vals, vecs = spla.eigsh(A, k=k, sigma=sigma, which="LM", tol=tol, maxiter=maxiter, v0=v0)
        except spla.ArpackNoConvergence as exc:
            ev = exc.eigenvalues
            vv = exc.eigenvectors
            res = (
                np.linalg.norm(A @ vv - vv * ev, axis=0) / np.maximum(np.abs(ev), 1.0)
                if len(ev)
                else np.array([np.inf])
            )
            raise RuntimeError(
                f"eigensolver did not converge: {len(ev)}/{k} pairs, worst residual {res.max():.3e}"
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        lowest = near is None
        if near is not None and vals[0] <= _lower_bound(A):
            lowest = True
    vecs = vecs / np.sqrt(weight)
    resid = np.linalg.norm(A @ vecs - vecs * vals, axis=0) * np.sqrt(weight)
    scale = np.maximum(np.abs(vals), 1.0)
    if np.any(resid > 1e-8 * scale):
        raise RuntimeError(f"eigenpair residual too large: {np.max(resid / scale):.3e}")
    return SpectralData(vals, vecs, resid, lowest)


def spectral_window(A: sp.spmatrix, lam: float, k: int = 6, grid: Grid | None = None) -> SpectralData:
    """Eigenpairs nearest to lam; always brackets lam when the operator allows it."""
    k = min(k, A.shape[0])
    data = eigensolve(A, k, grid, near=lam)
    if not data.covers(lam) and lam < data.eigenvalues[0]:
        # every pair found lies above lam: lam may sit below the whole spectrum
        bottom = eigensolve(A, 1, grid).eigenvalues[0]
        if bottom >= data.eigenvalues[0] - 1e-10 * max(1.0, abs(bottom)):
            return replace(data, lowest=True)
    if not data.covers(lam) and k < A.shape[0]:
        data = eigensolve(A, min(2 * k + 2, A.shape[0]), grid, near=lam)
    return data


# ---------------------------------------------------------------------------
# Resolvent


class Resolvent:
    """Factorized (A - lam)^{-1} with a guard band around the spectrum."""

    def __init__(self, A: sp.spmatrix, lam: float, guard: float = GUARD, check: bool = True):
        self.A = sp.csc_matrix(A)
        self.lam = float(lam)
        n = A.shape[0]
        shifted = (self.A - self.lam * sp.identity(n, format="csc")).tocsc()
        try:
            self._lu = spla.splu(shifted)
        except RuntimeError as exc:  # exactly singular
            raise NearResonanceError(f"lambda={lam} is an eigenvalue") from exc
        self.distance = self._nearest_distance() if check else math.inf
        if check and self.distance <= guard * max(abs(self.lam), 1.0):
            raise NearResonanceError(
                f"lambda={lam} is within {self.distance:.3e} of the spectrum (guard {guard:g}*lambda)"
            )

    def _nearest_distance(self) -> float:
        n = self.A.shape[0]
        if n <= 600:
            vals = sla.eigvalsh(self.A.toarray())
            return float(np.min(np.abs(vals - self.lam)))
        op = spla.LinearOperator((n, n), matvec=self._lu.solve, dtype=float)
        mu = spla.eigsh(
            self.A, k=1, sigma=self.lam, which="LM", OPinv=op, return_eigenvectors=False,
            v0=np.cos(np.arange(self.A.shape[0]) + 0.5),
        )
        return float(np.min(np.abs(mu - self.lam)))

    def solve(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        shape = f.shape
        flat = f.reshape(self.A.shape[0], -1)
        if np.iscomplexobj(flat):
            u = self._lu.solve(np.ascontiguousarray(flat.real)) + 1j * self._lu.solve(
                np.ascontiguousarray(flat.imag)
            )
        else:
            u = self._lu.solve(np.ascontiguousarray(flat))
        r = flat - (self.A @ u - self.lam * u)
        fn = np.linalg.norm(flat)
        if fn > 0 and np.linalg.norm(r) > 1e-10 * fn:
            u = u + self._lu.solve(np.ascontiguousarray(r.real)) + (
                1j * self._lu.solve(np.ascontiguousarray(r.imag)) if np.iscomplexobj(r) else 0
            )
        return u.reshape(shape)

    def residual(self, f: np.ndarray, u: np.ndarray) -> float:
        n = self.A.shape[0]
        f = np.asarray(f).reshape(n, -1)
        u = np.asarray(u).reshape(n, -1)
        fn = np.linalg.norm(f)
        r = np.linalg.norm(self.A @ u - self.lam * u - f)
        return float(r / fn) if fn else float(r)


def resolvent_apply(A: sp.spmatrix, lam: float, f: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """u = (A - lam)^{-1} f; ``f`` may be an interior field or a flat vector."""
    f = np.asarray(f)
    R = Resolvent(A, lam)
    u = R.solve(f.reshape(A.shape[0], -1)).reshape(f.shape)
    if R.residual(f, u) > 1e-10:
        raise RuntimeError("resolvent solve did not reach relative residual 1e-10")
    return u


# ---------------------------------------------------------------------------
# Amplification factors


def b_factor(mu: float) -> float:
    """sqrt(2 cosh(sqrt(mu)/2))."""
    return math.sqrt(2.0 * math.cosh(math.sqrt(mu) / 2.0))


@dataclass(frozen=True)
class AmplificationFactors:
    lam: float
    e: float
    b: float
    m: float
    m_tilde: float
    n_prelim: float
    n_impedance: float
    n_impedance_tilde: float

    @classmethod
    def from_e(cls, lam: float, e: float) -> "AmplificationFactors":
        if e < 1:
            raise ValueError("e_lambda is at least 1 by definition")
        b = b_factor(lam)
        m = max(lam**3.5 * e**1.5, b) * lam**7 * e**2
        n7 = lam**3 * e
        return cls(
            lam=lam,
            e=e,
            b=b,
            m=m,
            m_tilde=lam**2 * b * e,
            n_prelim=m / lam**2,
            n_impedance=n7,
            n_impedance_tilde=max(n7**2, math.sqrt(lam) * b),
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "e": self.e,
            "b": self.b,
            "m": self.m,
            "m_tilde": self.m_tilde,
            "n_prelim": self.n_prelim,
            "n_impedance": self.n_impedance,
            "n_impedance_tilde": self.n_impedance_tilde,
        }


def empirical_e(lam: float, spectra: Sequence[SpectralData]) -> float:
    """max(1/dist(lam, union of computed spectra), 1)."""
    if not spectra:
        raise ValueError("need at least one spectrum")
    for s in spectra:
        if not s.covers(lam):
            raise ValueError(
                f"lambda={lam} lies outside the computed spectral range "
                f"[{s.eigenvalues[0]:.4g}, {s.eigenvalues[-1]:.4g}]"
            )
    dist = min(s.distance(lam) for s in spectra)
    return max(1.0 / dist, 1.0) if dist > 0 else math.inf


def amplification(lam: float, spectra: Sequence[SpectralData], lam0: float | None = None) -> AmplificationFactors:
    if lam0 is not None and lam < lam0:
        raise ValueError(f"lambda={lam} below lambda_0={lam0}")
    return AmplificationFactors.from_e(lam, empirical_e(lam, spectra))


# ---------------------------------------------------------------------------
# Admissible potentials


@dataclass
class PotentialClass:
    """Potentials q = q0 + q' with |q'|_inf < min(1/|R_{q0}(lam)|, kappa1)."""

    grid: Grid
    q0: np.ndarray
    kappa0: float
    kappa1: float
    lam0: float
    lam: float

    def __post_init__(self):
        self.q0 = np.broadcast_to(np.asarray(self.q0, dtype=float), self.grid.shape).copy()
        sup = float(np.max(np.abs(self.q0)))
        if not self.kappa0 > sup:
            raise ValueError(f"kappa0={self.kappa0} must exceed |q0|_inf={sup}")
        if not self.kappa1 > 0:
            raise ValueError("kappa1 must be positive")
        if not self.lam0 > 0 or self.lam < self.lam0:
            raise ValueError(f"need 0 < lambda0 <= lambda, got {self.lam0}, {self.lam}")
        self._dist = None

    @property
    def kappa(self) -> float:
        return self.kappa0 + self.kappa1

    @property
    def resolvent_norm(self) -> float:
        """|R_{q0}(lam)| = 1/dist(lam, sigma(A_{q0}))."""
        if self._dist is None:
            A = assemble_schrodinger(self.grid, self.q0)
            self._dist = spectral_window(A, self.lam, 4, self.grid).distance(self.lam)
        return math.inf if self._dist == 0 else 1.0 / self._dist

    @property
    def radius(self) -> float:
        return min(1.0 / self.resolvent_norm, self.kappa1)

    def contains(self, q: np.ndarray) -> bool:
        dq = np.asarray(q, dtype=float) - self.q0
        return bool(np.max(np.abs(dq)) < self.radius)


# ---------------------------------------------------------------------------
# Norms and probes


def _inner_slice(grid: Grid):
    return tuple(slice(1, n + 1) for n in grid.counts)


def sobolev_norm(field: np.ndarray, order: int, grid: Grid, boundary: np.ndarray | None = None) -> float:
    """Discrete H^s norm, s in {-1, 0, 1, 2}.

    Interior fields are padded with ``boundary`` (zero by default) before
    differencing; full-lattice arrays are used as given. Order 1 adds forward
    differences along lines with interior transverse indices, order 2 adds
    central second differences and mixed differences on the interior block.
    Order -1 is the Fourier norm on the enclosing torus.
    """
    if order == -1:
        return h_minus1_norm(field, grid)
    if order not in (0, 1, 2):
        raise ValueError(f"unsupported order {order}")
    field = np.asarray(field)
    if field.shape == grid.shape:
        lattice = grid.pad(field, boundary)
    elif field.shape == grid.lattice_shape:
        lattice = field
    else:
        raise ValueError(f"field shape {field.shape} does not fit the grid")
    inner = _inner_slice(grid)
    total = np.sum(np.abs(lattice[inner]) ** 2)
    if order >= 1:
        for axis, h in enumerate(grid.spacing):
            sl = list(inner)
            sl[axis] = slice(None)
            total += np.sum(np.abs(np.diff(lattice[tuple(sl)], axis=axis) / h) ** 2)
    if order >= 2:
        block = lattice[inner]
        for axis, h in enumerate(grid.spacing):
            sl = list(inner)
            sl[axis] = slice(None)
            total += np.sum(np.abs(np.diff(lattice[tuple(sl)], n=2, axis=axis) / h**2) ** 2)
            for other in range(axis + 1, grid.dim):
                mixed = np.diff(np.diff(block, axis=axis), axis=other) / (h * grid.spacing[other])
                total += 2 * np.sum(np.abs(mixed) ** 2)
    return float(np.sqrt(total * grid.cell_volume))


def random_forcing(
    rng: np.random.Generator, spectrum: SpectralData | None, grid: Grid, kind: str = "window"
) -> np.ndarray:
    """Unit-norm random interior field.

    ``window``: Gaussian combination of the eigenfunctions in ``spectrum``.
    ``white``: i.i.d. Gaussian nodal values.
    """
    if kind == "window":
        if spectrum is None or spectrum.eigenvectors is None:
            raise ValueError("window forcing needs eigenvectors")
        c = rng.standard_normal(spectrum.k_max)
        f = (spectrum.eigenvectors @ c).reshape(grid.shape)
    elif kind == "white":
        f = rng.standard_normal(grid.shape)
    else:
        raise ValueError(f"unknown forcing {kind!r}")
    return f / grid.l2_norm(f)


def probe_resolvent_bound(
    grid: Grid,
    q: np.ndarray,
    lams: Iterable[float],
    orders: Sequence[int] = (0, 1, 2),
    samples: int = 10,
    seed: int = 0,
    forcing: str = "window",
    window: int = 8,
    forcings: Sequence[np.ndarray] | None = None,
) -> list[dict]:
    """Samples of |R_q(lam) f|_{H^j} / (lam^{j/2} e_lam) over unit f."""
    A = assemble_schrodinger(grid, q)
    rng = np.random.default_rng(seed)
    rows = []
    for lam in lams:
        R = Resolvent(A, lam)
        spec = spectral_window(A, lam, window, grid)
        e = empirical_e(lam, [spec])
        fs = list(forcings) if forcings is not None else [
            random_forcing(rng, spec, grid, forcing) for _ in range(samples)
        ]
        for sid, f in enumerate(fs):
            norm_f = grid.l2_norm(f)
            if norm_f == 0:
                raise ValueError("forcing must be nonzero")
            u = R.solve(f / norm_f)
            for j in orders:
                ratio = sobolev_norm(u, j, grid) / (lam ** (j / 2) * e)
                rows.append({"lambda": float(lam), "j": j, "sample_id": sid, "ratio": ratio, "e": e})
    return rows
