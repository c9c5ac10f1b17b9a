"""Stability sweep over (amplitude, lambda): potential difference in H^-1
against the norm of the boundary-map difference."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..bvp import ImpedanceSpec
from ..dtn import BoundarySobolev, assemble_dtn, assemble_impedance_map, operator_norm, windowed_basis
from ..fourier import h_minus1_norm
from ..spectral import PotentialClass, Resolvent, amplification, assemble_schrodinger, spectral_window
from .config import ExperimentConfig

COLUMNS = [
    "amplitude_index",
    "lambda_index",
    "amplitude",
    "lambda",
    "status",
    "dq_inf",
    "dq_hm1",
    "map_diff",
    "map1_diff",
    "e",
    "b",
    "m",
    "m_tilde",
    "n_prelim",
    "n_impedance",
    "n_impedance_tilde",
]


def run_stability_sweep(cfg: ExperimentConfig, threads: int = 1, full_data: bool = True) -> list[dict]:
    """One record per (amplitude, lambda), ordered by amplitude then lambda.

    ``map_diff`` is |Lambda0_1 - Lambda0_2| (or |N0_1 - N0_2| in impedance
    mode); ``map1_diff`` the full-data counterpart when ``full_data`` is set.
    """
    grid = cfg.grid()
    part = cfg.partition(grid)
    gamma = cfg.patch("gamma", grid)
    sigma = cfg.patch("sigma", grid)
    q0 = cfg.q0(grid)
    shape = cfg.shape(grid, part)
    amps = cfg.amplitudes
    lams = cfg.lambdas
    r = cfg.raw
    max_modes = r.get("max_modes")
    s_in = 1.5 if cfg.mode == "dirichlet" else 0.5
    basis0 = windowed_basis(grid, gamma, s_in, None, max_modes)
    basis1 = BoundarySobolev.full(grid).basis(s_in, max_modes) if full_data else None

    # empirical spectrum: every operator of the experiment, near every lambda
    potentials = [q0] + [q0 + a * shape for a in amps]
    spectra: dict[int, list] = {i: [] for i in range(len(lams))}
    for q in potentials:
        A = assemble_schrodinger(grid, q)
        for i, lam in enumerate(lams):
            spectra[i].append(spectral_window(A, lam, 6, grid))

    def maps_for(q, lam):
        if cfg.mode == "dirichlet":
            R = Resolvent(assemble_schrodinger(grid, q), lam)
            m0 = assemble_dtn(grid, q, lam, "lambda0", gamma, sigma, basis=basis0, resolvent=R)
            m1 = assemble_dtn(grid, q, lam, "lambda1", None, sigma, basis=basis1, resolvent=R) if full_data else None
            return m0, m1
        imp = r["impedance"]
        spec = ImpedanceSpec(float(imp.get("a", 1.0)), lam, int(imp.get("sign", 1)))
        m0 = assemble_impedance_map(grid, q, spec, "n0", gamma, sigma, basis=basis0)
        m1 = assemble_impedance_map(grid, q, spec, "n1", None, sigma, basis=basis1) if full_data else None
        return m0, m1

    reference = {}

    def ref(i):
        if i not in reference:
            reference[i] = maps_for(q0, lams[i])
        return reference[i]

    def task(ai, li):
        a, lam = amps[ai], lams[li]
        q = q0 + a * shape
        fac = amplification(lam, spectra[li])
        rec = {
            "amplitude_index": ai,
            "lambda_index": li,
            "amplitude": a,
            "lambda": lam,
            "dq_inf": float(np.max(np.abs(q - q0))),
            "dq_hm1": h_minus1_norm(q - q0, grid),
        }
        rec.update(fac.as_dict())
        cls = PotentialClass(grid, q0, float(r["kappa0"]), float(r["kappa1"]), float(r["lambda0"]), lam)
        if a != 0 and not cls.contains(q):
            rec.update(status=f"skipped: |q'|_inf={rec['dq_inf']:.4g} outside class radius {cls.radius:.4g}")
            return rec
        if a == 0:
            rec.update(status="degenerate", map_diff=0.0, map1_diff=0.0 if full_data else None)
            return rec
        m0, m1 = maps_for(q, lam)
        r0, r1 = ref(li)
        rec["map_diff"] = operator_norm(m0 - r0)
        rec["map1_diff"] = operator_norm(m1 - r1) if full_data else None
        rec["status"] = "ok"
        return rec

    # reference maps first so worker threads only read them
    for li in range(len(lams)):
        ref(li)
    jobs = [(ai, li) for ai in range(len(amps)) for li in range(len(lams))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda j: task(*j), jobs))
    else:
        records = [task(*j) for j in jobs]
    return records
