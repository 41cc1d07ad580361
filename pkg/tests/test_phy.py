import numpy as np
import pytest
from scipy.stats import norm

from mumaxweight.phy import (
    GainMatrix,
    interference,
    link_rate,
    outage_capacity,
    path_gain,
    q_inverse,
    sinr,
)


@pytest.mark.parametrize("p", [1e-12, 1e-6, 0.001, 0.01, 0.02275, 0.3, 0.5, 0.7, 0.99, 1 - 1e-9])
def test_q_inverse_against_scipy(p):
    assert q_inverse(p) == pytest.approx(norm.isf(p), rel=1e-9, abs=1e-12)


def test_q_inverse_domain():
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            q_inverse(p)


def test_outage_capacity_oracle():
    # Q^-1(0.0227501) = 2.000, so 10 - 2 * 2 = 6
    assert outage_capacity(10.0, 4.0, 0.0227501) == pytest.approx(6.0, abs=1e-5)
    assert outage_capacity(1.0, 100.0, 0.01) == 0.0
    with pytest.raises(ValueError):
        outage_capacity(1.0, -1.0, 0.1)


def test_path_gain():
    assert path_gain(2.0) == 1 / 16
    np.testing.assert_allclose(path_gain([1.0, 10.0], rho=2), [1.0, 0.01])
    with pytest.raises(ValueError):
        path_gain(0.0)


def test_two_link_sinr_oracle():
    G = np.array([[1.0, 0.1], [0.2, 0.5]])
    p = np.array([1.0, 2.0])
    np.testing.assert_allclose(interference(p, G, 0.1), [0.1 + 0.4, 0.1 + 0.1])
    np.testing.assert_allclose(sinr(p, G, 0.1), [1.0 / 0.5, 1.0 / 0.2])


def test_link_rate():
    assert link_rate(1.0, W=2.0) == 2.0
    np.testing.assert_allclose(link_rate([0.0, 3.0]), [0.0, 2.0])
    with pytest.raises(ValueError):
        link_rate(-0.5)


def test_gain_matrix_from_coordinates():
    coords = [(0, 0), (1, 0), (3, 0)]
    g = GainMatrix.from_coordinates(coords, [(0, 1), (1, 2)], rho=2)
    # node 1 relays, so link 1 does not interfere with link 0's receiver
    np.testing.assert_allclose(g.G, [[1.0, 1 / 9], [0.0, 1 / 4]])
    with pytest.raises(ValueError):
        GainMatrix(np.array([[0.0, 1.0], [1.0, 1.0]]))


def test_gain_matrix_from_file(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("1 0.5\n0.25 2\n")
    np.testing.assert_array_equal(GainMatrix.from_file(f).G, [[1, 0.5], [0.25, 2]])
