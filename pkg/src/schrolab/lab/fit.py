"""Modulus-of-continuity fits: y = C g(x) with the model exponent pinned."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

MODELS = ("double-log", "single-log", "power", "exponential")


def kendall(a, b) -> float:
    """Kendall tau; constant inputs give 0 instead of nan."""
    if len(a) < 2:
        return 0.0
    tau = stats.kendalltau(a, b).statistic
    return 0.0 if tau is None or math.isnan(tau) else float(tau)


def abscissa(x: np.ndarray, model: str, n: int = 3) -> np.ndarray:
    """g(x) of the log models: |ln|ln x||^{-p} or |ln x|^{-p} with p = 2/(n+2)."""
    p = 2.0 / (n + 2)
    x = np.asarray(x, dtype=float)
    if model == "double-log":
        return np.abs(np.log(np.abs(np.log(x)))) ** (-p)
    if model == "single-log":
        return np.abs(np.log(x)) ** (-p)
    raise ValueError(f"{model} has no pinned abscissa")


def domain(x: np.ndarray, model: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if model == "double-log":
        return (x > 0) & (x < math.exp(-1))
    if model == "single-log":
        return (x > 0) & (x < 1)
    if model == "power":
        return x > 0
    if model == "exponential":
        return np.isfinite(x)
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


@dataclass
class FitResult:
    model: str
    C: float
    exponent: float
    exponent_pinned: bool
    free_C: float
    free_exponent: float
    r2: float
    kendall_tau: float
    n_used: int
    n_excluded: int
    window: list

    def as_dict(self) -> dict:
        return asdict(self)


def _r2(y, yhat) -> float:
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def fit_modulus(x, y, model: str = "double-log", n: int = 3, min_records: int = 5) -> FitResult:
    """Fit y against x (y: potential-difference norm, x: boundary-map difference norm).

    Log models pin the exponent to 2/(n+2) and fit C by least squares; a
    free-exponent log regression is reported alongside. Power (y = C x^p)
    and exponential (y = C e^{p x}) fit both parameters.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = domain(x, model) & np.isfinite(y)
    if int(ok.sum()) < min_records:
        raise ValueError(f"{model} fit needs at least {min_records} records in its domain, got {int(ok.sum())}")
    xs, ys = x[ok], y[ok]
    window = [float(xs.min()), float(xs.max())]
    p = 2.0 / (n + 2)
    if model in ("double-log", "single-log"):
        g = abscissa(xs, model, n)
        C = float(g @ ys / (g @ g))
        r2 = _r2(ys, C * g)
        base = np.abs(np.log(np.abs(np.log(xs)))) if model == "double-log" else np.abs(np.log(xs))
        free_C, free_exp = _loglog(base, ys)
        return FitResult(model, C, p, True, free_C, -free_exp, r2, kendall(ys, g), int(ok.sum()), int((~ok).sum()), window)
    if model == "power":
        C, e = _loglog(xs, ys)
        return FitResult(model, C, e, False, C, e, _r2(ys, C * xs**e), kendall(ys, xs), int(ok.sum()), int((~ok).sum()), window)
    pos = ys > 0
    slope, icpt = np.polyfit(xs[pos], np.log(ys[pos]), 1)
    C = float(np.exp(icpt))
    return FitResult(
        model, C, float(slope), False, C, float(slope), _r2(ys, C * np.exp(slope * xs)), kendall(ys, xs),
        int(ok.sum()), int((~ok).sum()), window,
    )


def _loglog(x, y) -> tuple[float, float]:
    pos = (x > 0) & (y > 0)
    if pos.sum() < 2:
        return float("nan"), float("nan")
    lx, ly = np.log(x[pos]), np.log(y[pos])
    if np.ptp(lx) == 0:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(lx, ly, 1)
    return float(np.exp(icpt)), float(slope)


def fit_records(records: list[dict], model: str, x_key: str = "map_diff", y_key: str = "dq_hm1", n: int = 3) -> FitResult:
    rows = [r for r in records if r.get("status") == "ok" and r.get(x_key) not in (None, "")]
    return fit_modulus([float(r[x_key]) for r in rows], [float(r[y_key]) for r in rows], model, n)
