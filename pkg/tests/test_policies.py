import itertools

import numpy as np
import pytest
from sklearn.base import clone

from mumaxweight.crw import feasible_controls, make_rng
from mumaxweight.fields import CostFunction, Perturbation, build_field, maxweight_field
from mumaxweight.policies import (
    HMaxWeightScheduler,
    MaxWeightScheduler,
    MuMaxWeightScheduler,
    PickAndCompare,
    first_argmin,
    make_scheduler,
    pick_and_compare_step,
    select_h_maxweight,
    select_maxweight,
    select_mu_maxweight,
)
from mumaxweight.scenarios import build_energy, build_tandem


def brute_force(mu, B, alpha, C):
    """Plain loop over {0,1}^l in lexicographic order, first strict minimum wins."""
    best, best_v = None, np.inf
    for bits in itertools.product((0, 1), repeat=B.shape[1]):
        u = np.array(bits)
        if C.size and np.any(C @ u > 1):
            continue
        v = float(mu @ (B @ u + alpha))
        if best is None or v < best_v - 1e-12 * max(1.0, abs(best_v)):
            best, best_v = u, v
    return best


def test_tandem_maxweight_serves_longer_queue():
    net = build_tandem()
    s = MaxWeightScheduler().fit(net)
    np.testing.assert_array_equal(s.select([10.0, 2.0]), [1])
    np.testing.assert_array_equal(s.select([2.0, 10.0]), [0])
    np.testing.assert_array_equal(s.select([0.0, 0.0]), [0])


def test_mu_maxweight_matches_brute_force_on_random_networks():
    rng = make_rng(11)
    for _ in range(40):
        m, l = rng.integers(2, 6), rng.integers(1, 8)
        B = rng.normal(size=(m, l)).round(2)
        C = (rng.random((2, l)) < 0.4).astype(float)
        alpha = rng.random(m)
        x = rng.random(m) * 20
        cf = CostFunction("linear", 0.1 + rng.random(m))
        f = build_field(cf, Perturbation())
        u = select_mu_maxweight(f, x, B, alpha, feasible_controls(C, l))
        np.testing.assert_array_equal(u, brute_force(f(x), B, alpha, C))


def test_select_maxweight_equals_field_version():
    B = np.array([[-1.0, 0.0], [1.0, -1.0]])
    U = feasible_controls(np.ones((1, 2)))
    x = np.array([5.0, 3.0])
    np.testing.assert_array_equal(select_maxweight(x, B, np.zeros(2), U),
                                  select_mu_maxweight(maxweight_field(), x, B, np.zeros(2), U))


def test_first_argmin_tie_band():
    assert first_argmin([3.0, 1.0, 1.0 + 1e-14]) == 1
    assert first_argmin([1.0 + 1e-14, 1.0]) == 0


def test_h_maxweight_respects_admissibility():
    net = build_tandem()
    cf = CostFunction.uniform("linear", 2)
    U = feasible_controls(net.C)
    u = select_h_maxweight(cf, Perturbation("logarithmic"), [0.0, 4.0], net.B, np.zeros(2), U)
    np.testing.assert_array_equal(u, [0])


def test_pick_and_compare_only_improves():
    net = build_energy()
    f = build_field(CostFunction("linear", np.ones(7)), Perturbation())
    U = feasible_controls(net.C)
    x = make_rng(2).random(7) * 10
    u, trace = pick_and_compare_step(U[0], x, f, net.B, net.alpha, make_rng(5), U, k=50,
                                     return_trace=True)
    assert np.all(np.diff(trace) <= 0)
    best = select_mu_maxweight(f, x, net.B, net.alpha, U)
    vals = lambda v: f(x) @ (net.B @ v + net.alpha)
    assert vals(u) >= vals(best) - 1e-12


def test_estimator_api():
    net = build_tandem()
    s = MuMaxWeightScheduler(cost="composite", weights=[0.01, 1.0])
    params = s.get_params()
    assert params["cost"] == "composite" and params["perturbation"] == "coupled"
    s2 = clone(s).set_params(theta=2.0).fit(net)
    X = np.array([[30.0, 5.0], [1.0, 40.0], [0.0, 0.0]])
    pred = s2.predict(X)
    assert pred.shape == (3, 1) and pred.dtype == np.int8
    assert s2.decision_function(X).shape == (3, 2)
    with pytest.raises(ValueError):
        s2.predict([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        s2.predict([[-1.0, 2.0]])


def test_pick_and_compare_estimator_is_seeded():
    net = build_energy()
    X = make_rng(4).random((20, 7)) * 5
    a = PickAndCompare(MuMaxWeightScheduler(), n_iter=5, random_state=3).fit(net).predict(X)
    b = PickAndCompare(MuMaxWeightScheduler(), n_iter=5, random_state=3).fit(net).predict(X)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        PickAndCompare(n_iter=0).fit(net)


def test_make_scheduler():
    assert isinstance(make_scheduler("maxweight"), MaxWeightScheduler)
    assert isinstance(make_scheduler("h_maxweight"), HMaxWeightScheduler)
    pac = make_scheduler("mu_maxweight_pac", pac_iterations=7, cost="linear")
    assert pac.n_iter == 7 and pac.scheduler.cost == "linear"
    with pytest.raises(ValueError, match="valid options"):
        make_scheduler("round_robin")


def test_field_values_after_fit_on_tuple():
    B = np.array([[-1.0], [1.0]])
    s = MuMaxWeightScheduler().fit((B, np.zeros(2), np.eye(1)))
    assert s.field_values([0.0, 3.0])[0] == 0.0
