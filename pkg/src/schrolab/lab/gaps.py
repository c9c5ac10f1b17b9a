"""Dirichlet spectrum of a box prod (0, mu_j pi): gaps, multiplicities and the
Weyl-type constant c = max gap_k / k^{1/n}."""

from __future__ import annotations

import math

import numpy as np


def box_eigenvalues(mu, K: int) -> tuple[np.ndarray, np.ndarray]:
    """First K eigenvalues sum_j k_j^2 / mu_j^2 (k_j >= 1) with their index tuples."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("side parameters must be positive")
    n = len(mu)
    bound = float(np.sum(1 / mu**2)) * 2
    while True:
        kmax = [int(math.floor(m * math.sqrt(bound))) for m in mu]
        axes = [np.arange(1, k + 1) for k in kmax]
        if all(len(a) for a in axes):
            grids = np.meshgrid(*axes, indexing="ij")
            ks = np.stack([g.ravel() for g in grids], axis=1)
            vals = np.sum((ks / mu) ** 2, axis=1)
            inside = vals <= bound
            if inside.sum() >= K:
                ks, vals = ks[inside], vals[inside]
                order = np.lexsort((*ks.T[::-1], vals))
                return vals[order][:K], ks[order][:K]
        bound *= 1.5 if n > 1 else 2.0


def multiplicities(values: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values and their multiplicities (relative duplicate scan)."""
    distinct, counts = [], []
    for v in values:
        if distinct and abs(v - distinct[-1]) <= tol * max(1.0, abs(v)):
            counts[-1] += 1
        else:
            distinct.append(float(v))
            counts.append(1)
    return np.array(distinct), np.array(counts)


def gap_explorer(mu, K: int, tol: float = 1e-9) -> dict:
    if K < 10:
        raise ValueError("K must be at least 10")
    mu = np.asarray(mu, dtype=float)
    n = len(mu)
    vals, ks = box_eigenvalues(mu, K)
    distinct, mult = multiplicities(vals, tol)
    gaps = np.diff(vals)
    k = np.arange(1, len(gaps) + 1)
    ratios = gaps / k ** (1.0 / n)
    c = float(ratios.max()) if len(ratios) else 0.0
    product = np.prod((ks / mu) ** 2, axis=1)
    return {
        "eigenvalues": vals,
        "indices": ks,
        "product": product,
        "distinct": distinct,
        "multiplicities": mult,
        "gaps": gaps,
        "ratios": ratios,
        "c": c,
        "argmax_k": int(np.argmax(ratios)) + 1 if len(ratios) else 0,
        "resonant": bool(np.any(mult > 1)),
    }


def gap_records(result: dict) -> list[dict]:
    rows = []
    vals, gaps, ratios = result["eigenvalues"], result["gaps"], result["ratios"]
    for i, v in enumerate(vals):
        rows.append(
            {
                "k": i + 1,
                "lambda_k": float(v),
                "indices": " ".join(str(int(x)) for x in result["indices"][i]),
                "gap": float(gaps[i]) if i < len(gaps) else None,
                "ratio": float(ratios[i]) if i < len(ratios) else None,
                "product": float(result["product"][i]),
            }
        )
    return rows
