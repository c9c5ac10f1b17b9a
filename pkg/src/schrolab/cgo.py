"""Complex geometric optics solutions u = exp(-i x.xi) (1 + w) on a periodic
embedding of the box, and the direction pairs xi_1, xi_2 used to sample
Fourier coefficients of a potential difference.

The conjugated equation (Delta - 2i xi.grad - q) w = q is solved spectrally on
the torus with symbol p(k) = -|k|^2 + 2 xi.k evaluated on a dual lattice shifted
by half a lattice unit along one axis, which keeps p away from zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fourier import Torus
from .grid import Grid, RegionPartition


@dataclass(frozen=True)
class CgoDirections:
    eta: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    tau: float
    lam: float
    varpi: float
    lattice_direction: tuple[int, ...] | None = None  # integer vector parallel to eta2, if any

    def check(self) -> dict[str, float]:
        """Deviation of every defining relation; all should be ~0."""
        eta, e1, e2 = self.eta, self.eta1, self.eta2
        lam, tau = self.lam, self.tau
        scale = max(1.0, float(np.linalg.norm(eta)), float(np.linalg.norm(e1)), float(np.linalg.norm(e2)))
        im = [float(np.linalg.norm(x.imag)) for x in (self.xi1, self.xi2)]
        return {
            "eta1.eta2": abs(e1 @ e2) / scale**2,
            "eta1.eta": abs(e1 @ eta) / scale**2,
            "eta2.eta": abs(e2 @ eta) / scale**2,
            "|eta1|^2": abs(e1 @ e1 - (lam + tau**2)) / (lam + tau**2),
            "|eta2|^2": abs(e2 @ e2 - (eta @ eta / 4 + e1 @ e1 - lam)) / (eta @ eta / 4 + e1 @ e1),
            "xi1.xi1": abs(self.xi1 @ self.xi1 - lam) / (lam + 1),
            "xi2.xi2": abs(self.xi2 @ self.xi2 - lam) / (lam + 1),
            "xi1+xi2": float(np.max(np.abs(self.xi1 + self.xi2 - eta))),
            "im_low": max(0.0, tau - min(im)),
            "im_high": max(0.0, max(im) - (tau + float(np.linalg.norm(eta)) / 2)),
            "im_varpi": max(0.0, 2 * self.varpi - min(im)),
        }


def _primitive_orthogonal(eta: np.ndarray, radius: int = 6) -> tuple[int, ...] | None:
    """Shortest primitive integer vector orthogonal to an integer eta."""
    if not np.allclose(eta, np.round(eta), atol=1e-12):
        return None
    e = np.round(eta).astype(int)
    if not np.any(e) and np.any(eta):
        return None
    best = None
    for d in itertools.product(range(-radius, radius + 1), repeat=len(e)):
        if not any(d) or int(np.dot(d, e)) != 0 or math.gcd(*d) != 1:
            continue
        key = (sum(x * x for x in d), tuple(-x for x in reversed(d)))
        if best is None or key < best[0]:
            best = (key, d)
    return None if best is None else best[1]


def _plane_basis(eta: np.ndarray, d: tuple[int, ...] | None) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (e1, e2) spanning the plane orthogonal to eta, e2 along d when given."""
    n = len(eta)
    if d is not None:
        e2 = np.asarray(d, dtype=float)
        e2 /= np.linalg.norm(e2)
        if np.linalg.norm(eta) > 0:
            e1 = np.cross(e2, eta / np.linalg.norm(eta))
        else:
            e1 = np.eye(n)[1] if abs(e2[1]) < 0.5 else np.eye(n)[0]
            e1 = e1 - (e1 @ e2) * e2
        return e1 / np.linalg.norm(e1), e2
    vecs = [eta / np.linalg.norm(eta)] if np.linalg.norm(eta) > 0 else []
    for v in np.eye(n)[::-1]:
        for _ in range(2):  # second pass restores orthogonality after cancellation
            for u in vecs:
                v = v - (v @ u) * u
        if np.linalg.norm(v) > 1e-8:
            vecs.append(v / np.linalg.norm(v))
    rest = vecs[1:] if np.linalg.norm(eta) > 0 else vecs
    return rest[1], rest[0]


def make_xi_pair(eta, tau: float, lam: float, seed: int | None = None, kappa: float = 0.0) -> CgoDirections:
    """Direction pair xi_1 = eta/2 + eta1 + i eta2, xi_2 = eta/2 - eta1 - i eta2.

    With ``seed=None`` and integer eta, eta2 points along the shortest integer
    vector orthogonal to eta (lattice aligned). An integer seed rotates
    (eta1, eta2) within the orthogonal plane by a seed-determined angle.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (3,):
        raise ValueError("CGO directions need dimension n = 3")
    varpi = max(1.0, float(kappa))
    if not tau > 2 * varpi:
        raise ValueError(f"tau={tau} must exceed 2*varpi = {2 * varpi}")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    d = _primitive_orthogonal(eta) if seed is None else None
    e1, e2 = _plane_basis(eta, d)
    if seed is not None:
        theta = np.random.default_rng(seed).uniform(0, 2 * np.pi)
        e1, e2 = math.cos(theta) * e1 + math.sin(theta) * e2, -math.sin(theta) * e1 + math.cos(theta) * e2
    n1 = math.sqrt(lam + tau**2)
    eta1 = n1 * e1
    n2 = math.sqrt(eta @ eta / 4 + n1**2 - lam)
    eta2 = n2 * e2
    xi1 = (eta / 2 + eta1) + 1j * eta2
    xi2 = (eta / 2 - eta1) - 1j * eta2
    return CgoDirections(eta, eta1, eta2, xi1, xi2, float(tau), float(lam), varpi, d)


# ---------------------------------------------------------------------------
# Discrete dispersion


def discrete_dispersion(xi, spacing) -> complex:
    """D(xi) = sum_j (2 - 2 cos(xi_j h_j)) / h_j^2, so that Delta_h exp(-i x.xi) = -D(xi) exp(-i x.xi)."""
    xi = np.asarray(xi, dtype=complex)
    h = np.asarray(spacing, dtype=float)
    return complex(np.sum((2 - 2 * np.cos(xi * h)) / h**2))


def discrete_xi_pair(dirs: CgoDirections, spacing, tol: float = 1e-13, maxiter: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Pair xi_1 = eta/2 + z, xi_2 = eta/2 - z with D(xi_1) = D(xi_2) = lambda.

    z starts at the continuum value eta1 + i eta2 and is moved, within the span
    of eta1, eta2 and eta, by minimum-norm Newton steps. The component along
    eta separates the two equations, which agree to O(h^2) otherwise. The sum
    xi_1 + xi_2 = eta is kept exactly.
    """
    h = np.asarray(spacing, dtype=float)
    basis = [dirs.eta1 / np.linalg.norm(dirs.eta1), dirs.eta2 / np.linalg.norm(dirs.eta2)]
    x = [np.linalg.norm(dirs.eta1), 1j * np.linalg.norm(dirs.eta2)]
    if np.linalg.norm(dirs.eta) > 0:
        basis.append(dirs.eta / np.linalg.norm(dirs.eta))
        x.append(0.0)
    E = np.array(basis).T
    x = np.array(x, dtype=complex)
    half = dirs.eta / 2

    def F(x):
        z = E @ x
        return np.array([discrete_dispersion(half + z, h), discrete_dispersion(half - z, h)]) - dirs.lam

    for _ in range(maxiter):
        z = E @ x
        fx = F(x)
        if np.max(np.abs(fx)) <= tol * (dirs.lam + 1):
            break
        J = np.array([2 * np.sin((half + z) * h) / h, -2 * np.sin((half - z) * h) / h]) @ E
        x = x - np.linalg.lstsq(J, fx, rcond=1e-12)[0]
    else:
        raise RuntimeError(f"discrete dispersion solve did not converge: {np.abs(F(x))}")
    z = E @ x
    return half + z, half - z


def _symbol(torus: Torus, xi: np.ndarray, shift: np.ndarray, kind: str) -> np.ndarray:
    """Symbol p(k) of the conjugated operator on the shifted dual lattice.

    ``spectral``: -|k|^2 + 2 xi.k. ``discrete``: the 7-point stencil,
    D(xi) - D(xi - k) with D as in :func:`discrete_dispersion`.
    """
    s_phys = 2 * np.pi * np.asarray(shift) / np.asarray(torus.sides)
    k = [kj + sj for kj, sj in zip(torus.frequency_mesh(), s_phys)]
    if kind == "spectral":
        return -sum(kj**2 for kj in k) + 2 * sum(kj * x for kj, x in zip(k, xi))
    if kind == "discrete":
        out = 0
        for kj, x, h in zip(k, xi, torus.spacing):
            out = out + (2 * np.cos((x - kj) * h) - 2 * np.cos(x * h)) / h**2
        return out
    raise ValueError(f"symbol must be 'spectral' or 'discrete', got {kind!r}")


# ---------------------------------------------------------------------------
# Faddeev-type solver


class ResonantLatticeError(RuntimeError):
    pass


@dataclass
class CgoSolution:
    xi: np.ndarray
    w: np.ndarray  # torus field
    torus: Torus
    shift: np.ndarray  # lattice shift in units of 2 pi / T
    residual: float
    method: str
    iterations: int
    history: list[float] = field(default_factory=list)
    contraction: float = math.nan
    symbol: str = "spectral"

    def box_values(self, grid: Grid) -> np.ndarray:
        """w at the interior nodes of the box."""
        return self.torus.restrict(self.w, grid)

    def u_values(self, grid: Grid) -> np.ndarray:
        """u = exp(-i x.xi)(1 + w) at the interior nodes."""
        x = grid.mesh()
        phase = -1j * sum(xj * c for xj, c in zip(x, self.xi))
        return np.exp(phase) * (1 + self.box_values(grid))

    def u_boundary(self, grid: Grid) -> np.ndarray:
        """u on the boundary nodes (boundary-vector layout)."""
        lat = self.torus.lattice_view(self.w, grid)
        wb = grid.lattice_layer(lat, 0)
        pts = grid.boundary_points()
        return np.exp(-1j * pts @ self.xi) * (1 + wb)

    def w_norm(self, grid: Grid, mask: np.ndarray | None = None) -> float:
        w = self.box_values(grid)
        if mask is not None:
            w = np.where(mask, w, 0)
        return grid.l2_norm(w)

    def save(self, path, lam: float) -> None:
        from .io import write_field

        write_field(
            path,
            self.w,
            xi=[[float(z.real), float(z.imag)] for z in self.xi],
            lam=lam,
            shift=self.shift.tolist(),
            residual=self.residual,
            symbol=self.symbol,
            spacing=list(self.torus.spacing),
        )


def _shift_for(d: tuple[int, ...] | None, n: int) -> np.ndarray:
    s = np.zeros(n)
    if d is None:
        s[:] = 0.5
        return s
    j = next(i for i, v in enumerate(d) if v % 2)
    s[j] = 0.5
    return s


def faddeev_solve(
    q_torus: np.ndarray,
    xi: np.ndarray,
    torus: Torus,
    lam: float | None = None,
    tol: float = 1e-10,
    shift: np.ndarray | None = None,
    lattice_direction: tuple[int, ...] | None = None,
    maxiter: int = 500,
    symbol: str = "spectral",
) -> CgoSolution:
    """Solve (Delta - 2i xi.grad - q) w = q on the torus.

    ``symbol='discrete'`` uses the 7-point stencil instead of the Fourier
    Laplacian; xi must then satisfy D(xi) = lambda (see :func:`discrete_xi_pair`)
    and u restricted to the box solves the finite-difference equation.

    w is represented as exp(i s.x) v with v periodic and s the lattice shift.
    Born iteration is used when max|q| / min|p| < 1/2, GMRES on the
    symbol-preconditioned fixed point equation otherwise.
    """
    xi = np.asarray(xi, dtype=complex)
    if lam is not None:
        dispersion = xi @ xi if symbol == "spectral" else discrete_dispersion(xi, torus.spacing)
        if abs(dispersion - lam) > 1e-10 * (abs(lam) + 1):
            raise ValueError("xi does not satisfy the dispersion relation for lambda")
    if shift is None:
        shift = _shift_for(lattice_direction, torus.dim)
    shift = np.asarray(shift, dtype=float)
    s_phys = 2 * np.pi * shift / np.asarray(torus.sides)
    p = _symbol(torus, xi, shift, symbol)
    pmin = float(np.min(np.abs(p)))
    if pmin < 1e-8:
        raise ResonantLatticeError(f"shifted symbol has |p| = {pmin:.2e} < 1e-8; choose another shift")

    q = np.asarray(q_torus, dtype=float)
    x = torus.mesh()
    phase = np.exp(-1j * sum(xj * sj for xj, sj in zip(x, s_phys)))  # exp(-i s.x)
    rhs = phase * q
    qmax = float(np.max(np.abs(q)))
    contraction = qmax / pmin
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0:
        return CgoSolution(xi, np.zeros(torus.counts, complex), torus, shift, 0.0, "trivial", 0, [], contraction, symbol)

    def P_inv(f):
        return np.fft.ifftn(np.fft.fftn(f) / p)

    def residual(v):
        Pv = np.fft.ifftn(p * np.fft.fftn(v))
        return float(np.linalg.norm(Pv - q * v - rhs) / rhs_norm)

    history: list[float] = []
    g = P_inv(rhs)
    if contraction < 0.5:
        method = "born"
        v = g
        for it in range(1, maxiter + 1):
            v = g + P_inv(q * v)
            r = residual(v)
            history.append(r)
            if r <= tol:
                break
        else:
            raise RuntimeError(f"Born iteration stalled at residual {history[-1]:.3e}; history {history[-5:]}")
        iterations = it
    else:
        method = "gmres"
        shape = torus.counts
        n = int(np.prod(shape))

        def matvec(vec):
            v = vec.reshape(shape)
            return (v - P_inv(q * v)).ravel()

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        count = [0]

        def cb(rk):
            count[0] += 1
            history.append(float(rk))

        vec, info = spla.gmres(
            op, g.ravel(), rtol=tol * 1e-2, atol=0.0, restart=60, maxiter=maxiter, callback=cb,
            callback_type="pr_norm",
        )
        v = vec.reshape(shape)
        iterations = count[0]
        if info != 0 and residual(v) > tol:
            raise RuntimeError(f"GMRES did not converge (info={info}); residual history tail {history[-5:]}")
    res = residual(v)
    if res > tol:
        raise RuntimeError(f"CGO residual {res:.3e} above tolerance {tol:.1e}")
    w = np.conj(phase) * v
    return CgoSolution(xi, w, torus, shift, res, method, iterations, history, contraction, symbol)


def conjugated_residual(sol: CgoSolution, q_torus: np.ndarray, lam: float) -> float:
    """|(Delta + lam - q) u| / |u| for u = exp(-i x.xi)(1 + w), evaluated in the
    conjugated frame with the exponential weight carried explicitly."""
    torus = sol.torus
    s_phys = 2 * np.pi * sol.shift / np.asarray(torus.sides)
    x = torus.mesh()
    p = _symbol(torus, sol.xi, sol.shift, sol.symbol)
    phase = np.exp(-1j * sum(xj * sj for xj, sj in zip(x, s_phys)))
    v = phase * sol.w
    Pw = np.conj(phase) * np.fft.ifftn(p * np.fft.fftn(v))
    dispersion = sol.xi @ sol.xi if sol.symbol == "spectral" else discrete_dispersion(sol.xi, torus.spacing)
    r = Pw + (lam - dispersion) * (1 + sol.w) - q_torus * (1 + sol.w)
    log_weight = sum(xj * c.imag for xj, c in zip(x, sol.xi))  # |exp(-i x.xi)| = exp(x.Im xi)
    weight = np.exp(log_weight - log_weight.max())
    return float(np.linalg.norm(weight * r) / np.linalg.norm(weight * (1 + sol.w)))


def cgo_pair(
    grid: Grid,
    q1: np.ndarray,
    q2: np.ndarray,
    dirs: CgoDirections,
    tol: float = 1e-10,
    symbol: str = "spectral",
) -> tuple[CgoSolution, CgoSolution]:
    """CGO solutions for q1 with xi_1 and for q2 with xi_2.

    With ``symbol='discrete'`` the pair is corrected to the stencil's
    dispersion relation first (the sum xi_1 + xi_2 = eta is unchanged).
    """
    if grid.dim != 3:
        raise ValueError("CGO solutions need dimension n = 3")
    torus = Torus.around(grid)
    xis = (dirs.xi1, dirs.xi2) if symbol == "spectral" else discrete_xi_pair(dirs, grid.spacing)
    out = []
    for q, xi in zip((q1, q2), xis):
        qt = torus.embed(np.broadcast_to(np.asarray(q, float), grid.shape), grid)
        out.append(
            faddeev_solve(qt, xi, torus, dirs.lam, tol, lattice_direction=dirs.lattice_direction, symbol=symbol)
        )
    return out[0], out[1]


def decay_probe(
    grid: Grid,
    q: np.ndarray,
    lam: float,
    taus,
    partition: RegionPartition,
    eta=(0.0, 0.0, 0.0),
    seed: int | None = None,
    kappa: float = 0.0,
    tol: float = 1e-10,
) -> dict:
    """Least-squares slope of log |w|_{L2(M0)} against log |Im xi|."""
    taus = sorted(float(t) for t in taus)
    if len(taus) < 4 or taus[-1] < 4 * taus[0]:
        raise ValueError("need at least 4 values of tau spanning a factor >= 4")
    torus = Torus.around(grid)
    qt = torus.embed(np.broadcast_to(np.asarray(q, float), grid.shape), grid)
    if not np.any(qt):
        raise ValueError("q = 0 gives w = 0 for every tau; the decay fit is degenerate")
    mask = partition.inner_mask
    rows = []
    for tau in taus:
        dirs = make_xi_pair(eta, tau, lam, seed=seed, kappa=kappa)
        sol = faddeev_solve(qt, dirs.xi1, torus, lam, tol, lattice_direction=dirs.lattice_direction)
        rows.append(
            {
                "tau": tau,
                "im_xi": float(np.linalg.norm(dirs.xi1.imag)),
                "w_norm": sol.w_norm(grid, mask),
                "method": sol.method,
                "iterations": sol.iterations,
                "residual": sol.residual,
            }
        )
    lx = np.log([r["im_xi"] for r in rows])
    ly = np.log([r["w_norm"] for r in rows])
    slope, intercept = np.polyfit(lx, ly, 1)
    return {"slope": float(slope), "C": float(np.exp(intercept)), "rows": rows}
