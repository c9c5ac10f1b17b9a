import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrolab.cgo import (
    ResonantLatticeError,
    cgo_pair,
    conjugated_residual,
    decay_probe,
    discrete_dispersion,
    discrete_xi_pair,
    faddeev_solve,
    make_xi_pair,
)
from schrolab.bvp import apply_helmholtz
from schrolab.fourier import Torus
from schrolab.grid import build_grid, carve_regions

PI = np.pi


def test_xi_example_axis():
    d = make_xi_pair((1, 0, 0), 3.0, 4.0)
    assert np.allclose(d.eta1, (0, math.sqrt(13), 0), atol=1e-14)
    assert np.allclose(d.eta2, (0, 0, math.sqrt(9.25)), atol=1e-14)
    assert np.allclose(d.xi1, np.array([0.5, math.sqrt(13), 0]) + 1j * np.array([0, 0, math.sqrt(9.25)]))
    assert d.xi1 @ d.xi1 == pytest.approx(4.0, abs=1e-12)
    assert np.allclose(d.xi1 + d.xi2, (1, 0, 0))


def test_xi_example_zero_eta():
    d = make_xi_pair((0, 0, 0), 5.0, 1.0)
    assert d.eta2 @ d.eta2 == pytest.approx(25.0)
    assert d.xi1 @ d.xi1 == pytest.approx(1.0, abs=1e-12)
    assert abs(d.eta1 @ d.eta2) < 1e-12


def test_tau_threshold():
    with pytest.raises(ValueError):
        make_xi_pair((1, 0, 0), 2.0, 4.0)
    with pytest.raises(ValueError):
        make_xi_pair((1, 0, 0), 5.0, 4.0, kappa=3.0)
    with pytest.raises(ValueError):
        make_xi_pair((1, 0), 5.0, 4.0)


@given(
    st.lists(st.floats(-6, 6), min_size=3, max_size=3),
    st.floats(2.01, 60),
    st.floats(0.1, 80),
    st.one_of(st.none(), st.integers(0, 2**32)),
)
@settings(max_examples=100, deadline=None)
def test_invariants_property(eta, tau, lam, seed):
    d = make_xi_pair(eta, tau, lam, seed=seed)
    c = d.check()
    for key in ("eta1.eta2", "eta1.eta", "eta2.eta"):
        assert c[key] <= 1e-12
    for key in ("|eta1|^2", "|eta2|^2", "xi1.xi1", "xi2.xi2"):
        assert c[key] <= 1e-10
    assert c["xi1+xi2"] <= 1e-12 * max(1, np.linalg.norm(eta))
    assert c["im_low"] <= 1e-12 * tau and c["im_high"] <= 1e-12 * tau and c["im_varpi"] == 0


def test_lattice_alignment():
    d = make_xi_pair((1, 1, 0), 5.0, 3.0)
    assert d.lattice_direction == (0, 0, 1)
    assert np.allclose(np.cross(d.eta2, (0, 0, 1)), 0)


@pytest.fixture(scope="module")
def setup():
    g = build_grid((PI, PI, PI), (11, 11, 11))
    part = carve_regions(g, [(PI / 4, 3 * PI / 4)] * 3, 1)
    x = g.mesh()
    c = PI / 2
    bump = np.prod([np.clip(1 - ((xj - c) / (PI / 4 + g.spacing[0])) ** 2, 0, None) ** 3 for xj in x], axis=0)
    q = 0.5 * np.where(part.inner_mask, bump, 0)
    return g, part, q, Torus.around(g)


def test_zero_potential(setup):
    g, _, _, t = setup
    d = make_xi_pair((1, 0, 0), 6.0, 4.0)
    sol = faddeev_solve(np.zeros(t.counts), d.xi1, t, 4.0)
    assert np.max(np.abs(sol.w)) <= 1e-12
    assert sol.method == "trivial"


def test_residual_and_conjugation(setup):
    g, _, q, t = setup
    qt = t.embed(q, g)
    for tau in (3.0, 8.0):
        d = make_xi_pair((1, 0, 0), tau, 4.0)
        sol = faddeev_solve(qt, d.xi1, t, 4.0, tol=1e-10, lattice_direction=d.lattice_direction)
        assert sol.residual <= 1e-10
        assert conjugated_residual(sol, qt, 4.0) <= 10 * 1e-10


def test_born_contraction(setup):
    g, _, q, t = setup
    qt = t.embed(q, g)
    d = make_xi_pair((0, 0, 0), 16.0, 4.0)
    sol = faddeev_solve(qt, d.xi1, t, 4.0, tol=1e-12, lattice_direction=d.lattice_direction)
    assert sol.method == "born"
    h = np.array(sol.history)
    ratios = h[1:] / h[:-1]
    assert np.all(ratios <= sol.contraction * (1 + 1e-6))


def test_gmres_branch(setup):
    g, _, q, t = setup
    qt = 20 * t.embed(q, g)
    d = make_xi_pair((0, 0, 0), 3.0, 4.0)
    sol = faddeev_solve(qt, d.xi1, t, 4.0, tol=1e-10, lattice_direction=d.lattice_direction)
    assert sol.method == "gmres"
    assert sol.residual <= 1e-10


def test_resonant_lattice_rejected(setup):
    g, _, q, t = setup
    # unshifted lattice: p(0) = 0
    with pytest.raises(ResonantLatticeError):
        faddeev_solve(t.embed(q, g), np.array([2.0, 0, 0]), t, 4.0, shift=np.zeros(3))


def test_xi_mismatch_rejected(setup):
    _, _, _, t = setup
    with pytest.raises(ValueError):
        faddeev_solve(np.ones(t.counts), np.array([1.0, 0, 0]), t, 4.0)


@pytest.mark.parametrize("eta", [(0, 0, 0), (1, 0, 0), (1, 2, -1), (0.3, 0.7, 0.0)])
def test_discrete_pair_dispersion(eta):
    d = make_xi_pair(eta, 4.0, 4.0)
    h = (0.15, 0.12, 0.1)
    x1, x2 = discrete_xi_pair(d, h)
    assert np.max(np.abs(x1 + x2 - d.eta)) <= 1e-12
    for x in (x1, x2):
        assert abs(discrete_dispersion(x, h) - 4.0) <= 1e-10
    # O(h^2) corrections to the continuum pair
    assert np.linalg.norm(x1 - d.xi1) <= 0.1 * np.linalg.norm(d.xi1)


def test_discrete_dispersion_plane_wave():
    # oracle: the 7-point Laplacian applied to a plane wave, node by node
    g = build_grid((PI, PI, PI), (9, 9, 9))
    xi = np.array([0.4 + 0.2j, -1.1, 0.3j])
    lat = np.exp(-1j * np.einsum("...j,j->...", np.stack(np.meshgrid(
        *[np.arange(n + 2) * h for n, h in zip(g.counts, g.spacing)], indexing="ij"), -1), xi))
    c = lat[1:-1, 1:-1, 1:-1]
    lap = sum((np.roll(lat, 1, a) + np.roll(lat, -1, a) - 2 * lat)[1:-1, 1:-1, 1:-1] / h**2
              for a, h in enumerate(g.spacing))
    assert np.max(np.abs(lap + discrete_dispersion(xi, g.spacing) * c)) <= 1e-9 * np.max(np.abs(c))


def test_discrete_cgo_solves_stencil(setup):
    g, _, q, t = setup
    d = make_xi_pair((1, 0, 0), 4.0, 3.0)
    s1, _ = cgo_pair(g, q, q, d, tol=1e-12, symbol="discrete")
    assert s1.symbol == "discrete"
    assert conjugated_residual(s1, t.embed(q, g), 3.0) <= 1e-10
    u = s1.u_values(g)
    r = apply_helmholtz(g, q, 3.0, u, s1.u_boundary(g))
    assert np.max(np.abs(r)) <= 1e-9 * np.max(np.abs(u)) * 4 / g.spacing[0] ** 2


def test_pair_and_save(tmp_path, setup):
    g, _, q, t = setup
    d = make_xi_pair((1, 0, 0), 6.0, 4.0)
    s1, s2 = cgo_pair(g, q, q, d, 1e-10)
    assert s1.u_values(g).shape == g.shape
    assert s2.u_boundary(g).shape == (g.n_boundary,)
    s1.save(tmp_path / "w.bin", 4.0)
    from schrolab.io import read_field

    w, meta = read_field(tmp_path / "w.bin")
    assert np.array_equal(w, s1.w)
    assert meta["lam"] == 4.0


def test_decay_probe_degenerate(setup):
    g, part, _, _ = setup
    with pytest.raises(ValueError):
        decay_probe(g, np.zeros(g.shape), 4.0, [4, 8, 16, 32], part)
    with pytest.raises(ValueError):
        decay_probe(g, np.ones(g.shape), 4.0, [4, 8, 10, 12], part)


def test_decay_slope_seed_invariance(setup):
    g, part, q, _ = setup
    taus = [4.0, 8.0, 16.0, 32.0]
    a = decay_probe(g, q, 10.0, taus, part)
    b = decay_probe(g, q, 10.0, taus, part, seed=7)
    assert -1.3 <= a["slope"] <= -0.7
    assert abs(a["slope"] - b["slope"]) < 0.15
