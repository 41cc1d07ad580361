"""Cost functions, state perturbations and scheduling fields.

A scheduling field maps a backlog vector ``x`` to a weight vector ``mu(x)``.
Fields are built from the gradient of a base cost ``h0`` and a perturbation
that forces the weight of an empty queue to zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

COST_KINDS = ("linear", "shifted_quadratic", "composite")
PERTURBATION_KINDS = ("exponential", "logarithmic", "coupled")


@dataclass(frozen=True)
class CostFunction:
    """Separable holding cost over the queue vector.

    ``linear``: sum c_i x_i. ``shifted_quadratic``: sum c_i (x_i - target)^2.
    ``composite``: quadratic on ``app_queues``, linear elsewhere.
    """

    kind: str
    weights: np.ndarray
    target: float = 0.0
    app_queues: tuple = ()

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {COST_KINDS}")
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(w <= 0):
            raise ValueError("cost weights must be positive")
        if self.target < 0:
            raise ValueError("target must be nonnegative")
        app = tuple(sorted(int(i) for i in self.app_queues))
        if app and (app[0] < 0 or app[-1] >= w.size):
            raise ValueError("app_queues out of range")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "app_queues", app)

    @classmethod
    def uniform(cls, kind: str, m: int, weight: float = 1.0, **kw) -> "CostFunction":
        return cls(kind, np.full(m, float(weight)), **kw)

    @property
    def m(self) -> int:
        return self.weights.size

    def quadratic_mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        if self.kind == "shifted_quadratic":
            mask[:] = True
        elif self.kind == "composite":
            mask[list(self.app_queues)] = True
        return mask

    def __call__(self, x) -> float:
        return cost_eval(self, x)

    def gradient(self, x) -> np.ndarray:
        return cost_gradient(self, x)

    def hessian_diag(self, x) -> np.ndarray:
        return np.where(self.quadratic_mask(), 2.0 * self.weights, 0.0) * np.ones_like(
            np.asarray(x, dtype=float)
        )


def _as_state(x, m: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if m is not None and x.shape[-1] != m:
        raise ValueError(f"state has {x.shape[-1]} queues, cost expects {m}")
    return x


def cost_eval(cf: CostFunction, x) -> float:
    x = _as_state(x, cf.m)
    q = cf.quadratic_mask()
    quad = cf.weights * (x - cf.target) ** 2
    lin = cf.weights * x
    return float(np.sum(np.where(q, quad, lin), axis=-1))


def cost_gradient(cf: CostFunction, x) -> np.ndarray:
    x = _as_state(x, cf.m)
    q = cf.quadratic_mask()
    return np.where(q, 2.0 * cf.weights * (x - cf.target), cf.weights)


@dataclass(frozen=True)
class Perturbation:
    kind: str = "coupled"
    theta: float = 1.0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(
                f"unknown perturbation {self.kind!r}; expected one of {PERTURBATION_KINDS}"
            )
        if self.kind == "exponential" and self.theta < 1:
            raise ValueError("exponential perturbation needs theta >= 1")
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    @property
    def separable(self) -> bool:
        return self.kind != "coupled"


def _others(x: np.ndarray) -> np.ndarray:
    # sum over j != i, per component
    return x.sum() - x


def _coupled_exponent(theta: float, x: np.ndarray):
    denom = theta * (1.0 + _others(x))
    return x / denom, denom


def perturb(p: Perturbation, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("perturbation is defined on the nonnegative orthant")
    th = p.theta
    if p.kind == "exponential":
        return x + th * np.expm1(-x / th)
    if p.kind == "logarithmic":
        return x * np.log1p(x / th)
    y, _ = _coupled_exponent(th, x)
    return x + np.exp(-y)


def perturb_derivative(p: Perturbation, x) -> np.ndarray:
    """d x~_i / d x_i for the separable perturbations."""
    x = np.asarray(x, dtype=float)
    th = p.theta
    if p.kind == "exponential":
        return -np.expm1(-x / th)
    if p.kind == "logarithmic":
        return np.log1p(x / th) + x / (th + x)
    raise ValueError("coupled perturbation has no scalar derivative; use perturbation_jacobian")


def perturb_second_derivative(p: Perturbation, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    th = p.theta
    if p.kind == "exponential":
        return np.exp(-x / th) / th
    if p.kind == "logarithmic":
        return 1.0 / (th + x) + th / (th + x) ** 2
    raise ValueError("coupled perturbation has no scalar derivative")


def perturbation_jacobian(p: Perturbation, x) -> np.ndarray:
    """Full Jacobian d x~_i / d x_k."""
    x = np.asarray(x, dtype=float)
    if p.separable:
        return np.diag(perturb_derivative(p, x))
    y, denom = _coupled_exponent(p.theta, x)
    e = np.exp(-y)
    J = np.outer(e * x / (p.theta * (1.0 + _others(x)) ** 2), np.ones_like(x))
    np.fill_diagonal(J, 1.0 - e / denom)
    return J


def perturbation_diag(theta: float, x) -> np.ndarray:
    """Diagonal entries 1 - exp(-x_i / (theta (1 + sum_{j != i} x_j)))."""
    x = np.asarray(x, dtype=float)
    y, _ = _coupled_exponent(theta, x)
    return -np.expm1(-y)


def perturbation_matrix(theta: float, x) -> np.ndarray:
    if theta <= 0:
        raise ValueError("theta must be positive")
    return np.diag(perturbation_diag(theta, x))


def _perturbation_diag_jacobian(theta: float, x: np.ndarray) -> np.ndarray:
    y, denom = _coupled_exponent(theta, x)
    e = np.exp(-y)
    # d/dx_k of (1 - e_i), k != i
    J = -np.outer(e * x / (theta * (1.0 + _others(x)) ** 2), np.ones_like(x))
    np.fill_diagonal(J, e / denom)
    return J


def fd_jacobian(fn: Callable, x, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences with a step scaled to each coordinate's magnitude."""
    x = np.asarray(x, dtype=float)
    J = np.empty((np.asarray(fn(x)).size, x.size))
    for k in range(x.size):
        h = rel_step * (1.0 + abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] = x[k] - h
        J[:, k] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2 * h)
    return J


class SchedulingField:
    """Vector field ``x -> mu(x)`` with an optional analytic Jacobian.

    ``jacobian(x)[i, k]`` is d mu_i / d x_k. Without an analytic Jacobian
    the field falls back to central differences and reports it through
    ``analytic_jacobian``.
    """

    def __init__(self, fn: Callable, jac: Optional[Callable] = None, name: str = "",
                 structural_zero: bool = False):
        self._fn = fn
        self._jac = jac
        self.name = name
        # mu_i(x) == 0 whenever x_i == 0, by construction
        self.structural_zero = structural_zero

    @property
    def analytic_jacobian(self) -> bool:
        return self._jac is not None

    def __call__(self, x) -> np.ndarray:
        return self._fn(np.asarray(x, dtype=float))

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._jac is not None:
            return self._jac(x)
        return fd_jacobian(self._fn, x)

    def normalized(self, x) -> np.ndarray:
        return normalize_field(self(x))

    def scaled(self, factor: float) -> "SchedulingField":
        jac = None if self._jac is None else (lambda x: factor * self._jac(x))
        return SchedulingField(lambda x: factor * self._fn(x), jac, f"{factor}*{self.name}",
                               self.structural_zero)

    def __repr__(self):
        return f"SchedulingField({self.name!r})"


def normalize_field(mu) -> np.ndarray:
    """``mu / ||mu||_1`` with the absolute-value l1 norm; signs are kept."""
    mu = np.asarray(mu, dtype=float)
    norm = np.abs(mu).sum()
    if norm == 0 or not np.isfinite(norm):
        raise ZeroDivisionError("cannot normalize a zero weight vector")
    return mu / norm


def build_field(cf: CostFunction, p: Optional[Perturbation] = None,
                clip_negative: bool = False) -> SchedulingField:
    """Weight function from a cost gradient and a perturbation.

    Coupled perturbation: ``mu(x) = P_theta(x) grad h0(x)``. Separable
    perturbations: ``mu_i(x) = dh0/dx~_i(x~) * dx~_i/dx_i``, the gradient of
    ``h0(x~(x))``. With ``p=None`` the raw cost gradient is used.
    ``clip_negative`` floors the weights at zero.
    """
    if p is None:
        def fn(x):
            return cost_gradient(cf, x)

        def jac(x):
            return np.diag(cf.hessian_diag(x))
        zero = False
    elif p.kind == "coupled":
        th = p.theta

        def fn(x):
            return perturbation_diag(th, x) * cost_gradient(cf, x)

        def jac(x):
            g = cost_gradient(cf, x)
            P = perturbation_diag(th, x)
            J = _perturbation_diag_jacobian(th, x) * g[:, None]
            J[np.diag_indices_from(J)] += P * cf.hessian_diag(x)
            return J
        zero = True
    else:
        def fn(x):
            return cost_gradient(cf, perturb(p, x)) * perturb_derivative(p, x)

        def jac(x):
            xt = perturb(p, x)
            d1 = perturb_derivative(p, x)
            d2 = perturb_second_derivative(p, x)
            return np.diag(cf.hessian_diag(xt) * d1 ** 2 + cost_gradient(cf, xt) * d2)
        zero = True

    name = f"{cf.kind}/{p.kind if p else 'none'}"
    if not clip_negative:
        return SchedulingField(fn, jac, name, zero)

    def fn_c(x):
        return np.maximum(fn(x), 0.0)

    def jac_c(x):
        return jac(x) * (fn(x) > 0)[:, None]
    return SchedulingField(fn_c, jac_c, name + "/clipped", zero)


def gradient_field(cf: CostFunction, p: Perturbation) -> SchedulingField:
    """Exact gradient of ``h(x) = h0(x~(x))`` by the chain rule.

    Identical to ``build_field`` for separable perturbations; for the coupled
    perturbation the cross terms of the Jacobian of ``x~`` are included.
    """
    if p.separable:
        return build_field(cf, p)

    def fn(x):
        return perturbation_jacobian(p, x).T @ cost_gradient(cf, perturb(p, x))
    return SchedulingField(fn, None, f"grad h {cf.kind}/{p.kind}")


def maxweight_field() -> SchedulingField:
    """``mu(x) = x``: classical MaxWeight on raw backlogs."""
    return SchedulingField(lambda x: np.asarray(x, dtype=float),
                           lambda x: np.eye(np.asarray(x).size), "maxweight", True)
