import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schrolab.bvp import ImpedanceSpec, neumann_trace, solve_dirichlet, solve_impedance
from schrolab.dtn import (
    BoundarySobolev,
    assemble_dtn,
    assemble_impedance_map,
    cosine_basis,
    h1_forward,
    lipschitz_probe,
    operator_norm,
    windowed_basis,
)
from schrolab.grid import build_grid, make_patch

PI = np.pi


def test_cosine_basis_orthonormal():
    C, nu = cosine_basis(6, 0.3)
    assert np.allclose(C.T @ C * 0.3, np.eye(6), atol=1e-12)
    # eigenvectors of the Neumann forward-difference Laplacian
    L = (np.diag(np.full(6, 2.0)) - np.diag(np.ones(5), 1) - np.diag(np.ones(5), -1))
    L[0, 0] = L[-1, -1] = 1
    assert np.allclose(L @ C / 0.3**2, C * nu, atol=1e-10)


def test_l2_equivalence(cube7, rng):
    sob = BoundarySobolev.full(cube7)
    phi = rng.standard_normal(cube7.n_boundary)
    l2 = np.sqrt(np.sum(cube7.boundary_weights() * phi**2))
    assert sob.norm(phi, 0) == pytest.approx(l2, rel=1e-10)


def test_h1_matches_forward_differences(cube7, rng):
    patch = make_patch(cube7, ["x1-", "x3+"])
    sob = BoundarySobolev(patch)
    phi = rng.standard_normal(cube7.n_boundary)
    assert sob.norm(phi, 1) == pytest.approx(h1_forward(cube7, phi, patch), rel=1e-10)


@given(st.floats(-1.5, 1.5), st.floats(0.01, 1.0), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_norm_monotone_in_s(s, ds, seed):
    g = build_grid((PI, PI, PI), (5, 5, 5))
    sob = BoundarySobolev.full(g)
    phi = np.random.default_rng(seed).standard_normal(g.n_boundary)
    assert sob.norm(phi, s) <= sob.norm(phi, s + ds) * (1 + 1e-12)


def test_restriction_norm(cube7, rng):
    sigma = make_patch(cube7, {"x1+": None, "x2-": [(0.5, 2.5), (0.3, 2.0)]})
    for _ in range(5):
        f = rng.standard_normal(cube7.n_boundary)
        assert BoundarySobolev(sigma).norm(f, 1) <= BoundarySobolev.full(cube7).norm(f, 1) + 1e-12


def test_windowed_basis_orthonormal(cube7):
    gamma = make_patch(cube7, {"x1-": [(0.4, 2.8), (0.4, 2.8)]})
    B = windowed_basis(cube7, gamma, 1.5)
    G = BoundarySobolev.full(cube7).gram(B, 1.5)
    assert np.allclose(G, np.eye(B.shape[1]), atol=1e-10)
    assert not np.any(B[~gamma.mask])


def test_equal_potentials_give_zero(cube7, rng):
    q = rng.uniform(0, 1, cube7.shape)
    gamma = make_patch(cube7, ["x1-"])
    sigma = make_patch(cube7, ["x1+", "x2+"])
    m1 = assemble_dtn(cube7, q, 5.3, "lambda0", gamma, sigma, max_modes=3)
    m2 = assemble_dtn(cube7, q.copy(), 5.3, "lambda0", gamma, sigma, max_modes=3)
    assert operator_norm(m1 - m2) == 0.0


def test_linear_field_image(cube7):
    sigma = make_patch(cube7, "all")
    sob = BoundarySobolev.full(cube7)
    basis = sob.basis(1.5)
    m = assemble_dtn(cube7, 0.0, 0.0, "lambda1", None, sigma, basis=basis)
    phi = cube7.boundary_trace(lambda x1, *_: x1)
    c = sob.coefficients(phi) * sob.weights(0.75)
    img = m.matrix @ c
    for face in cube7.faces:
        expect = face.normal_sign if face.axis == 0 else 0.0
        assert np.allclose(cube7.face_view(img, face), expect, atol=1e-9)


def test_column_consistency(cube7, rng):
    q = rng.uniform(0, 1, cube7.shape)
    gamma = make_patch(cube7, ["x1-", "x2-"])
    sigma = make_patch(cube7, ["x1+"])
    m = assemble_dtn(cube7, q, 4.7, "lambda0", gamma, sigma, max_modes=3)
    j = m.matrix.shape[1] // 2
    phi = m.basis[:, j]
    u = solve_dirichlet(cube7, q, 4.7, phi)
    assert np.allclose(m.matrix[:, j], neumann_trace(cube7, u, phi, sigma), atol=1e-12 * max(1, np.abs(m.matrix).max()))


def test_impedance_map_column(cube7):
    spec = ImpedanceSpec(1.0, 4.0, kappa=1.0)
    gamma = make_patch(cube7, ["x1-"])
    sigma = make_patch(cube7, ["x1+", "x3-"])
    m = assemble_impedance_map(cube7, 0.5, spec, "n0", gamma, sigma, max_modes=3)
    _, ub = solve_impedance(cube7, 0.5, spec, None, m.basis[:, 2])
    assert np.allclose(m.matrix[:, 2], ub[sigma.indices], atol=1e-12)
    same = assemble_impedance_map(cube7, 0.5, spec, "n0", gamma, sigma, max_modes=3)
    assert operator_norm(m - same) == 0.0
    # recorded constant of |N phi|_{H1(Sigma)} <= C sqrt(mu) |phi|_{H^1/2}
    C = operator_norm(m) / np.sqrt(spec.mu)
    assert np.isfinite(C) and C > 0


def test_operator_norm_basics(rng):
    assert operator_norm(np.zeros((3, 2))) == 0.0
    assert operator_norm(np.diag([2.0, 1.0])) == pytest.approx(2.0)
    M = rng.standard_normal((7, 4))
    wi, wo = rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 7)
    B = np.sqrt(wo)[:, None] * M / np.sqrt(wi)[None, :]
    v = rng.standard_normal(4)
    for _ in range(2000):
        v = B.T @ (B @ v)
        v /= np.linalg.norm(v)
    power = np.linalg.norm(B @ v)
    assert operator_norm(M, wi, wo) == pytest.approx(power, rel=1e-8)
    assert operator_norm(-3.5 * M) == pytest.approx(3.5 * operator_norm(M), rel=1e-14)


def test_map_scaling(cube7):
    gamma = make_patch(cube7, ["x1-"])
    sigma = make_patch(cube7, ["x1+"])
    m = assemble_dtn(cube7, 0.0, 4.7, "lambda0", gamma, sigma, max_modes=3)
    assert operator_norm(m * -2.0) == pytest.approx(2 * operator_norm(m), rel=1e-14)
    with pytest.raises(ValueError):
        m - assemble_dtn(cube7, 0.0, 4.7, "lambda0", gamma, sigma, max_modes=2)


def test_save(tmp_path, cube7):
    from schrolab.io import read_matrix

    m = assemble_dtn(cube7, 0.0, 4.7, "lambda0", make_patch(cube7, ["x1-"]), make_patch(cube7, ["x1+"]), max_modes=2)
    m.save(tmp_path / "m.bin")
    back, meta = read_matrix(tmp_path / "m.bin")
    assert np.array_equal(back, m.matrix)
    assert meta["kind"] == "lambda0" and meta["s_in"] == 1.5


def test_lipschitz_probe(cube7, rng):
    gamma = make_patch(cube7, "all")
    sigma = make_patch(cube7, "all")
    bump = np.zeros(cube7.shape)
    bump[2:5, 2:5, 2:5] = 1.0
    r1 = lipschitz_probe(cube7, 0.0, 0.02 * bump, 5.3, gamma, sigma, max_modes=3)
    r2 = lipschitz_probe(cube7, 0.0, 0.01 * bump, 5.3, gamma, sigma, max_modes=3)
    assert r1["ratio"] > 0 and np.isfinite(r1["ratio"])
    # linear regime: halving the perturbation halves the numerator
    assert r2["dtn_diff"] / r1["dtn_diff"] == pytest.approx(0.5, rel=0.05)
    with pytest.raises(ValueError):
        lipschitz_probe(cube7, 0.0, 0.0, 5.3, gamma, sigma)
