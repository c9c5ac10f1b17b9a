import numpy as np
import pytest

from schrolab.fourier import Torus, h_minus1_norm, sobolev_weighted_norm


def test_parseval(cube7, rng):
    t = Torus.around(cube7)
    f = rng.standard_normal(t.counts)
    l2 = np.sqrt(np.sum(f**2) * t.cell_volume)
    assert sobolev_weighted_norm(f, t, 0) == pytest.approx(l2, rel=1e-12)


def test_single_mode_hm1(cube7):
    t = Torus.around(cube7)
    x = t.mesh()
    # |eta| = 1 lies on the dual lattice of a torus with side 2 pi
    q = np.cos(x[0])
    l2 = np.sqrt(np.sum(q**2) * t.cell_volume)
    assert h_minus1_norm(q, torus=t) == pytest.approx(l2 / np.sqrt(2), rel=1e-12)


def test_constant_hm1(cube7):
    t = Torus.around(cube7)
    c = 0.7
    assert h_minus1_norm(np.full(t.counts, c), torus=t) == pytest.approx(c * np.sqrt(t.volume), rel=1e-12)


def test_zero_and_embedding(cube7, rng):
    t = Torus.around(cube7)
    assert h_minus1_norm(np.zeros(cube7.shape), cube7) == 0
    u = rng.standard_normal(cube7.shape)
    assert np.array_equal(t.restrict(t.embed(u, cube7), cube7), u)
    f = t.embed(u, cube7)
    assert np.allclose(t.inverse(t.transform(f)).real, f)


def test_frequency_index(cube7):
    t = Torus.around(cube7)
    assert t.frequency_index((0, 0, 0)) == (0, 0, 0)
    assert t.frequency_index((1, -1, 0)) == (1, t.counts[1] - 1, 0)
    with pytest.raises(ValueError):
        t.frequency_index((0.3, 0, 0))
