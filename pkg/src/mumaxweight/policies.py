"""Scheduling policies: MaxWeight, h-MaxWeight, mu-MaxWeight, pick-and-compare.

The functional selectors work on a single backlog vector. The estimator
classes wrap them behind ``fit(network)`` / ``predict(X)`` so schedulers can
be cloned, grid-searched and configured through ``get_params``.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .crw import Network, admissible_controls, feasible_controls, make_rng
from .fields import (
    CostFunction,
    Perturbation,
    SchedulingField,
    build_field,
    gradient_field,
    maxweight_field,
)

TIE_RTOL = 1e-12


def objective_values(mu, B, alpha, candidates) -> np.ndarray:
    """``<mu, B u + alpha>`` for every candidate row ``u``."""
    mu = np.asarray(mu, dtype=float)
    return np.asarray(candidates, dtype=float) @ (np.asarray(B).T @ mu) + mu @ np.asarray(alpha)


def first_argmin(values) -> int:
    """Index of the first value within a relative tie band of the minimum."""
    values = np.asarray(values, dtype=float)
    vmin = values.min()
    scale = np.abs(values).max()
    tol = TIE_RTOL * scale if scale > 0 else 0.0
    return int(np.flatnonzero(values <= vmin + tol)[0])


def _select(mu, x, B_mean, alpha, candidates) -> np.ndarray:
    candidates = np.asarray(candidates)
    if candidates.shape[0] == 0:
        raise ValueError("empty candidate set")
    if not np.any(np.asarray(x) != 0):
        return np.zeros(candidates.shape[1], dtype=candidates.dtype)
    vals = objective_values(mu, B_mean, alpha, candidates)
    return candidates[first_argmin(vals)]


def select_mu_maxweight(field: SchedulingField, x, B_mean, alpha, candidates) -> np.ndarray:
    """argmin over candidates of ``<mu(x), B u + alpha>``.

    Ties go to the lexicographically smallest control when ``candidates`` is
    in lexicographic order; ``x == 0`` idles.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x != 0):
        return np.zeros(np.asarray(candidates).shape[1], dtype=np.asarray(candidates).dtype)
    return _select(field(x), x, B_mean, alpha, candidates)


def select_maxweight(x, B_mean, alpha, candidates) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return _select(x, x, B_mean, alpha, candidates)


def select_h_maxweight(cf: CostFunction, p: Perturbation, x, B_mean, alpha,
                       candidates) -> np.ndarray:
    """Myopic in the gradient of ``h(x) = h0(x~)`` over admissible controls."""
    x = np.asarray(x, dtype=float)
    adm = admissible_controls(candidates, x, B_mean, alpha)
    grad = gradient_field(cf, p)(x)
    if not np.any(grad != 0):
        return np.zeros(adm.shape[1], dtype=adm.dtype)
    return adm[first_argmin(objective_values(grad, B_mean, alpha, adm))]


def pick_and_compare_step(u_prev, x, field: SchedulingField, B_mean, alpha,
                          rng: np.random.Generator, candidates, k: int = 1,
                          return_trace: bool = False):
    """Randomized selection: draw ``k`` controls uniformly, keep strict improvements.

    Sequential keep-if-strictly-better over ``[u_prev, d_1, ..., d_k]`` ends on
    the first occurrence of the minimum, so the loop is evaluated in one pass.
    """
    candidates = np.asarray(candidates)
    u_prev = np.asarray(u_prev, dtype=candidates.dtype)
    draws = candidates[rng.integers(0, candidates.shape[0], size=k)]
    pool = np.vstack([u_prev[None, :], draws])
    mu = field(np.asarray(x, dtype=float))
    vals = objective_values(mu, B_mean, alpha, pool)
    if return_trace:
        return pool[int(np.argmin(vals))], np.minimum.accumulate(vals)
    return pool[int(np.argmin(vals))]


def _network_parts(network):
    if isinstance(network, Network):
        return network.B, network.alpha, network.C, network.app_queues
    B, alpha, C = network
    return np.asarray(B, float), np.asarray(alpha, float), np.asarray(C, float), ()


class _SchedulerBase(BaseEstimator):
    """Common fit/predict plumbing for the scheduling estimators."""

    def _admissible_only(self) -> bool:
        return False

    def fit(self, network, y=None):
        """Bind the scheduler to a network.

        ``network`` is a :class:`Network` or a ``(B, alpha, C)`` triple.
        """
        B, alpha, C, app = _network_parts(network)
        self.B_ = B
        self.alpha_ = alpha
        self.candidates_ = feasible_controls(C, B.shape[1])
        self.n_queues_ = B.shape[0]
        self.n_links_ = B.shape[1]
        self.field_ = self._make_field(B.shape[0], app)
        return self

    def _make_field(self, m, app) -> SchedulingField:
        raise NotImplementedError

    def field_for(self, m: int, app_queues=()) -> SchedulingField:
        """The field this scheduler would use on ``m`` queues, without binding a network."""
        return self._make_field(m, tuple(app_queues))

    def _candidates_for(self, x):
        if self._admissible_only():
            return admissible_controls(self.candidates_, x, self.B_, self.alpha_)
        return self.candidates_

    def field_values(self, x) -> np.ndarray:
        check_is_fitted(self, "field_")
        return self.field_(np.asarray(x, dtype=float))

    def select(self, x, u_prev=None, rng=None) -> np.ndarray:
        """Control for a single backlog vector."""
        x = np.asarray(x, dtype=float)
        return select_mu_maxweight(self.field_, x, self.B_, self.alpha_, self._candidates_for(x))

    def decision_function(self, X) -> np.ndarray:
        """Objective value of every feasible control, one row per state."""
        check_is_fitted(self, "field_")
        X = check_array(X, ensure_min_features=self.n_queues_)
        return np.vstack([objective_values(self.field_(x), self.B_, self.alpha_, self.candidates_)
                          for x in X])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = check_array(X)
        if X.shape[1] != self.n_queues_:
            raise ValueError(f"X has {X.shape[1]} queues, scheduler was fit on {self.n_queues_}")
        if np.any(X < 0):
            raise ValueError("backlogs must be nonnegative")
        return np.vstack([self.select(x) for x in X]).astype(np.int8)


class MaxWeightScheduler(_SchedulerBase):
    """Backpressure on raw backlogs."""

    def _make_field(self, m, app):
        return maxweight_field()


class MuMaxWeightScheduler(_SchedulerBase):
    """Cost-driven scheduler ``argmin <mu(x), B u + alpha>``.

    Parameters
    ----------
    cost : {"linear", "shifted_quadratic", "composite"}
    weights : array-like or None
        Per-queue cost weights; ones when None.
    target : float
        Target backlog of the quadratic terms.
    app_queues : sequence of int or None
        Application buffers; taken from the network when None.
    perturbation : {"coupled", "exponential", "logarithmic"}
    theta : float
    clip_negative : bool
        Floor weights at zero instead of keeping the signed field.
    """

    def __init__(self, cost="linear", weights=None, target=20.0, app_queues=None,
                 perturbation="coupled", theta=1.0, clip_negative=False):
        self.cost = cost
        self.weights = weights
        self.target = target
        self.app_queues = app_queues
        self.perturbation = perturbation
        self.theta = theta
        self.clip_negative = clip_negative

    def cost_function(self, m: int, app=()) -> CostFunction:
        w = np.ones(m) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (m,):
            raise ValueError(f"weights must have {m} entries")
        app = app if self.app_queues is None else self.app_queues
        tgt = self.target if self.cost != "linear" else 0.0
        return CostFunction(self.cost, w, target=tgt, app_queues=tuple(app))

    def _make_field(self, m, app):
        self.cost_ = self.cost_function(m, app)
        return build_field(self.cost_, Perturbation(self.perturbation, self.theta),
                           clip_negative=self.clip_negative)


class HMaxWeightScheduler(MuMaxWeightScheduler):
    """Myopic in the gradient of a perturbed cost, over admissible controls."""

    def __init__(self, cost="linear", weights=None, target=20.0, app_queues=None,
                 perturbation="logarithmic", theta=1.0):
        super().__init__(cost=cost, weights=weights, target=target, app_queues=app_queues,
                         perturbation=perturbation, theta=theta)

    def _admissible_only(self):
        return True

    def _make_field(self, m, app):
        self.cost_ = self.cost_function(m, app)
        return gradient_field(self.cost_, Perturbation(self.perturbation, self.theta))


class PickAndCompare(BaseEstimator):
    """Randomized wrapper around a fitted-field scheduler.

    ``predict`` treats the rows of ``X`` as a trajectory and carries the held
    control from row to row.
    """

    def __init__(self, scheduler=None, n_iter=100, random_state=None):
        self.scheduler = scheduler
        self.n_iter = n_iter
        self.random_state = random_state

    def fit(self, network, y=None):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        base = MuMaxWeightScheduler() if self.scheduler is None else self.scheduler
        self.scheduler_ = clone(base).fit(network)
        self.candidates_ = self.scheduler_.candidates_
        self.rng_ = make_rng(0 if self.random_state is None else self.random_state)
        self.u_ = np.zeros(self.scheduler_.n_links_, dtype=np.int8)
        return self

    def field_values(self, x):
        return self.scheduler_.field_values(x)

    def select(self, x, u_prev=None, rng=None) -> np.ndarray:
        s = self.scheduler_
        u_prev = self.u_ if u_prev is None else u_prev
        rng = self.rng_ if rng is None else rng
        u = pick_and_compare_step(u_prev, x, s.field_, s.B_, s.alpha_, rng,
                                  s._candidates_for(np.asarray(x, float)), k=self.n_iter)
        self.u_ = u
        return u

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "scheduler_")
        X = check_array(X)
        return np.vstack([self.select(x) for x in X]).astype(np.int8)


POLICIES = ("maxweight", "h_maxweight", "mu_maxweight", "mu_maxweight_pac")


def make_scheduler(policy: str, pac_iterations: int = 100, random_state: Optional[int] = None,
                   **params):
    """Scheduler estimator by policy name."""
    if policy == "maxweight":
        return MaxWeightScheduler()
    if policy == "h_maxweight":
        params.setdefault("perturbation", "logarithmic")
        params.pop("clip_negative", None)
        return HMaxWeightScheduler(**params)
    if policy == "mu_maxweight":
        return MuMaxWeightScheduler(**params)
    if policy == "mu_maxweight_pac":
        return PickAndCompare(MuMaxWeightScheduler(**params), n_iter=pac_iterations,
                              random_state=random_state)
    raise ValueError(f"unknown policy {policy!r}; valid options: {', '.join(POLICIES)}")
