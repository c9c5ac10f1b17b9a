import itertools
import math

import numpy as np
import pytest

from schrolab.lab import ConfigError, ExperimentConfig, emit_report, fit_modulus, gap_explorer, run_stability_sweep
from schrolab.lab.config import number
from schrolab.lab.fit import abscissa, fit_records, kendall
from schrolab.lab.gaps import multiplicities

# -- config -------------------------------------------------------------


def test_number_evaluator():
    assert number("pi/4") == pytest.approx(math.pi / 4)
    assert number("2.5*pi/17") == pytest.approx(2.5 * math.pi / 17)
    assert number("-e**2") == pytest.approx(-math.e**2)
    assert number(3) == 3.0
    for bad in ("__import__('os')", "pi.real", "sqrt(2)", True, None):
        with pytest.raises(ValueError):
            number(bad)


def test_config_defaults_and_overrides():
    cfg = ExperimentConfig.from_dict({"lambdas": [5, "2*pi"]}, seed=7, out="x")
    assert cfg.lambdas == [5.0, pytest.approx(2 * math.pi)]
    assert cfg.seed == 7 and str(cfg.out) == "x"
    assert cfg.grid().counts == (11, 11, 11)


@pytest.mark.parametrize(
    "bad",
    [
        {"nonsense": 1},
        {"mode": "neumann"},
        {"lambdas": [-1.0]},
        {"seed": -3},
        {"seed": 1.5},
        {"perturbation": {"shape": "star"}},
        {"grid": {"box": ["pi", "pi"], "resolution": [9, 9, 9]}},
        {"taus": ["tau"]},
    ],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_load_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)


def test_config_hash():
    a = ExperimentConfig.from_dict({"lambdas": [5]})
    b = ExperimentConfig.from_dict({"lambdas": [5]})
    assert a.hash() == b.hash()
    assert a.hash() != ExperimentConfig.from_dict({"lambdas": [6]}).hash()
    assert a.hash() != ExperimentConfig.from_dict({"lambdas": [5]}, seed=1).hash()


@pytest.mark.parametrize("shape", ["bump", "flat", "fourier", "random"])
def test_shapes_supported_in_inner_region(shape):
    cfg = ExperimentConfig.from_dict({"perturbation": {"shape": shape, "amplitudes": [1]}})
    g = cfg.grid()
    part = cfg.partition(g)
    f = cfg.shape(g, part)
    assert f.shape == g.shape
    assert np.all(f[~part.inner_mask] == 0)
    assert np.max(np.abs(f)) > 0


def test_bump_peak_and_flat_plateau():
    cfg = ExperimentConfig.from_dict({"grid": {"box": ["pi"] * 3, "resolution": [15] * 3}})
    g = cfg.grid()
    f = cfg.shape(g)
    assert f[7, 7, 7] == pytest.approx(1.0)
    flat = ExperimentConfig.from_dict(
        {"grid": {"box": ["pi"] * 3, "resolution": [15] * 3}, "perturbation": {"shape": "flat", "ramp": 0.4}}
    ).shape(g)
    assert flat[7, 7, 7] == pytest.approx(1.0)
    assert flat[6, 7, 7] == pytest.approx(1.0)


# -- fits ---------------------------------------------------------------


@pytest.mark.parametrize("model", ["double-log", "single-log"])
def test_fit_recovers_constant(model):
    x = np.geomspace(1e-12, 0.3, 12)
    g = abscissa(x, model)
    # oracle abscissa written out directly
    p = 0.4
    direct = np.abs(np.log(np.abs(np.log(x)))) ** -p if model == "double-log" else np.abs(np.log(x)) ** -p
    assert np.allclose(g, direct)
    fit = fit_modulus(x, 2.5 * g, model)
    assert fit.C == pytest.approx(2.5, rel=1e-2)
    assert fit.exponent == pytest.approx(0.4) and fit.exponent_pinned
    assert fit.r2 == pytest.approx(1.0)
    assert fit.kendall_tau == pytest.approx(1.0)
    assert fit.free_exponent == pytest.approx(0.4, rel=1e-6)


def test_fit_domain_and_minimum():
    x = np.array([1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.5, 0.9])
    fit = fit_modulus(x, abscissa(np.minimum(x, 0.3), "single-log"), "double-log")
    assert fit.n_used == 5 and fit.n_excluded == 2
    assert fit.window[1] < math.exp(-1)
    with pytest.raises(ValueError):
        fit_modulus(x[:4], x[:4], "double-log")


def test_fit_power_and_exponential():
    x = np.linspace(0.1, 2, 8)
    assert fit_modulus(x, 3 * x**1.7, "power").exponent == pytest.approx(1.7)
    fe = fit_modulus(x, 0.5 * np.exp(-2 * x), "exponential")
    assert fe.C == pytest.approx(0.5) and fe.exponent == pytest.approx(-2)
    with pytest.raises(ValueError):
        fit_modulus(x, x, "cubic")


def test_kendall_constant_is_zero():
    assert kendall([1, 1, 1], [1, 2, 3]) == 0.0
    assert kendall([1], [2]) == 0.0
    assert kendall([1, 2, 3], [3, 2, 1]) == pytest.approx(-1)


def test_fit_records_filters_status():
    rows = [{"status": "ok", "map_diff": str(v), "dq_hm1": str(2 * abscissa(np.array([v]), "double-log")[0])}
            for v in np.geomspace(1e-8, 0.1, 6)]
    rows.append({"status": "degenerate", "map_diff": "0", "dq_hm1": "0"})
    rows.append({"status": "skipped: outside", "map_diff": "", "dq_hm1": "1"})
    fit = fit_records(rows, "double-log")
    assert fit.n_used == 6 and fit.C == pytest.approx(2)


# -- gaps ---------------------------------------------------------------


def brute_eigenvalues(mu, K, kmax=40):
    vals = sorted(
        sum((k / m) ** 2 for k, m in zip(ks, mu)) for ks in itertools.product(range(1, kmax + 1), repeat=len(mu))
    )
    return np.array(vals[:K])


def test_gaps_unit_cube():
    res = gap_explorer((1, 1, 1), 100)
    assert np.allclose(res["eigenvalues"], brute_eigenvalues((1, 1, 1), 100, 12))
    assert res["distinct"][:4].tolist() == [3, 6, 9, 11]
    assert res["multiplicities"][:4].tolist() == [1, 3, 3, 3]
    assert res["gaps"][0] == pytest.approx(3)  # first gap 6 - 3
    assert np.count_nonzero(res["gaps"][:9]) == 3
    assert res["resonant"]


def test_gaps_non_resonant():
    mu = (1.0, 2**0.25, 3**0.25)
    res = gap_explorer(mu, 100)
    assert np.allclose(res["eigenvalues"], brute_eigenvalues(mu, 100, 14))
    assert np.all(res["multiplicities"] == 1) and not res["resonant"]
    assert res["c"] == pytest.approx(np.max(np.diff(res["eigenvalues"]) / np.arange(1, 100) ** (1 / 3)))


def test_gaps_large_k_and_validation():
    res = gap_explorer((1, 1.3, 1.7), 10_000)
    assert len(res["eigenvalues"]) == 10_000
    assert np.all(np.diff(res["eigenvalues"]) >= 0)
    assert np.isfinite(res["c"]) and res["c"] >= np.max(res["ratios"])
    with pytest.raises(ValueError):
        gap_explorer((1, 1, 1), 5)
    with pytest.raises(ValueError):
        gap_explorer((1, -1, 1), 20)


def test_multiplicities_tolerance():
    d, m = multiplicities(np.array([1.0, 1.0 + 1e-12, 2.0, 2.1]))
    assert d.tolist() == [1.0, 2.0, 2.1] and m.tolist() == [2, 1, 1]


# -- report -------------------------------------------------------------


def test_report_empty_and_deterministic(tmp_path):
    paths = emit_report([], ["a", "b"], {}, tmp_path / "r", "h", 0)
    assert paths["records"].read_text().strip() == "a,b"
    rows = [{"a": 1, "b": 0.1}, {"a": 2, "b": None}]
    p1 = emit_report(rows, ["a", "b"], {"z": 1, "y": [1.5]}, tmp_path / "s", "h", 3, "sweep")
    p2 = emit_report(rows, ["a", "b"], {"y": [1.5], "z": 1}, tmp_path / "t", "h", 3, "sweep")
    for k in p1:
        assert p1[k].read_bytes() == p2[k].read_bytes()


# -- sweep --------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_records():
    cfg = ExperimentConfig.from_dict(
        {
            "perturbation": {"shape": "bump", "amplitudes": [0, 0.02, 0.05, 50.0]},
            "lambdas": [5.0],
            "max_modes": 3,
        }
    )
    return run_stability_sweep(cfg), cfg


def test_sweep_records(sweep_records):
    recs, _ = sweep_records
    assert [r["amplitude_index"] for r in recs] == [0, 1, 2, 3]
    assert recs[0]["status"] == "degenerate" and recs[0]["map_diff"] == 0
    assert recs[1]["status"] == "ok" and recs[2]["status"] == "ok"
    assert 0 < recs[1]["map_diff"] < recs[2]["map_diff"]
    assert recs[1]["dq_hm1"] < recs[2]["dq_hm1"]
    # linear regime: doubling-ish amplitude scales the map difference alike
    assert recs[2]["map_diff"] / recs[1]["map_diff"] == pytest.approx(2.5, rel=0.1)
    assert recs[3]["status"].startswith("skipped")


def test_sweep_amplification_pass_through(sweep_records):
    recs, _ = sweep_records
    r = recs[1]
    lam, e = r["lambda"], r["e"]
    b = math.sqrt(2 * math.cosh(math.sqrt(lam) / 2))
    m = max(lam**3.5 * e**1.5, b) * lam**7 * e**2
    assert e >= 1
    assert r["b"] == pytest.approx(b)
    assert r["m"] == pytest.approx(m)
    assert r["m_tilde"] == pytest.approx(lam**2 * b * e)
    assert r["n_prelim"] == pytest.approx(m / lam**2)
    assert r["n_impedance"] == pytest.approx(lam**3 * e)


def test_sweep_threads_match(sweep_records):
    recs, cfg = sweep_records
    again = run_stability_sweep(cfg, threads=3)
    assert again == recs
