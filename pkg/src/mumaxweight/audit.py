"""Sampled checks of the throughput-optimality conditions of a scheduling field.

The conditions are asymptotic, so sampling can falsify but never certify:
a passing report means the field is consistent with the condition on the
sampled shells.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import (
    CostFunction,
    Perturbation,
    SchedulingField,
    perturb,
    perturb_derivative,
    perturb_second_derivative,
)

DEFAULT_SHELLS = (1e1, 1e2, 1e3, 1e4)
DEFAULT_SAMPLES = 200
AUDIT_COLUMNS = ("condition", "radius", "worst_violation", "pass")


class AuditError(RuntimeError):
    """The field could not be evaluated at a sampled state."""


@dataclass
class AuditReport:
    condition: str
    radii: np.ndarray
    statistic: np.ndarray  # worst sampled quantity per shell
    violation: np.ndarray  # max(0, statistic - threshold) per shell
    passed: np.ndarray  # per shell
    samples: int
    threshold: float = 0.0
    notes: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def worst_violation(self) -> float:
        return float(np.max(self.violation)) if self.violation.size else 0.0

    @property
    def passes(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def first_passing_radius(self) -> Optional[float]:
        """Smallest shell from which every larger shell passes, or None."""
        ok = np.asarray(self.passed, dtype=bool)
        for k in range(ok.size):
            if ok[k:].all():
                return float(self.radii[k])
        return None

    def rows(self) -> list:
        return [
            {"condition": self.condition, "radius": float(r), "worst_violation": float(v),
             "pass": bool(p)}
            for r, v, p in zip(self.radii, self.violation, self.passed)
        ]

    def decays(self, noise: float = 0.05) -> bool:
        """Statistic non-increasing across shells, allowing relative ``noise``."""
        s = np.asarray(self.statistic, dtype=float)
        return bool(np.all(s[1:] <= s[:-1] * (1 + noise)))


def _report(cond, radii, stat, threshold, samples, notes="", **extra):
    stat = np.asarray(stat, dtype=float)
    viol = np.maximum(stat - threshold, 0.0)
    return AuditReport(cond, np.asarray(radii, dtype=float), stat, viol, viol == 0, samples,
                       threshold, notes, extra)


def sample_shell(rng: np.random.Generator, m: int, radius: float, n: int) -> np.ndarray:
    """``n`` points of the nonnegative orthant with l1 norm ``radius`` (uniform on the simplex)."""
    return radius * rng.dirichlet(np.ones(m), size=n)


def _eval(fieldfn, x):
    with np.errstate(all="ignore"):
        v = np.asarray(fieldfn(x), dtype=float)
    if not np.all(np.isfinite(v)):
        raise AuditError(f"field not finite at x={x}")
    return v


def _normalized(fieldfn, x):
    v = _eval(fieldfn, x)
    s = np.abs(v).sum()
    if s == 0:
        raise AuditError(f"field vanishes at x={x}")
    return v / s


def check_A1(fieldfn, m: int, eps1: float, C1: float, rng: np.random.Generator,
             shell_radii: Sequence[float] = DEFAULT_SHELLS,
             samples: int = DEFAULT_SAMPLES) -> AuditReport:
    """Continuity of the normalized field under bounded perturbations.

    For ``x`` on each shell and ``dx`` uniform in the l2 ball of radius C1
    (any sign), measures ``max_i |mu_bar_i(x + dx) - mu_bar_i(x)|`` with the
    perturbed point projected onto the nonnegative orthant.
    """
    if not 0 < eps1 < 1 or C1 <= 0:
        raise ValueError("need 0 < eps1 < 1 and C1 > 0")
    stats = []
    for R in shell_radii:
        X = sample_shell(rng, m, R, samples)
        d = rng.normal(size=(samples, m))
        d *= (C1 * rng.random(samples) ** (1.0 / m) / np.linalg.norm(d, axis=1))[:, None]
        worst = 0.0
        for x, dx in zip(X, d):
            xp = np.maximum(x + dx, 0.0)
            worst = max(worst, float(np.max(np.abs(_normalized(fieldfn, xp) - _normalized(fieldfn, x)))))
        stats.append(worst)
    return _report("A1", shell_radii, stats, eps1, samples)


def check_A2(fieldfn, m: int, eps2: float, C2: float, rng: np.random.Generator,
             shell_radii: Sequence[float] = DEFAULT_SHELLS,
             samples: int = DEFAULT_SAMPLES) -> AuditReport:
    """Small normalized weight on short queues of large states.

    Samples ``x`` with ``||x||_1 = R`` whose coordinate ``i`` is below C2 and
    records ``max mu_bar_i(x)``.
    """
    if not 0 < eps2 < 1 or C2 <= 0:
        raise ValueError("need 0 < eps2 < 1 and C2 > 0")
    stats = []
    for R in shell_radii:
        worst = 0.0
        for _ in range(samples):
            i = int(rng.integers(m))
            xi = C2 * rng.random()
            x = np.zeros(m)
            if m > 1:
                rest = np.delete(np.arange(m), i)
                x[rest] = max(R - xi, 0.0) * rng.dirichlet(np.ones(m - 1))
            x[i] = xi
            worst = max(worst, float(_normalized(fieldfn, x)[i]))
        stats.append(worst)
    return _report("A2", shell_radii, stats, eps2, samples)


def check_C1(fld: SchedulingField, m: int, eps: float, rng: np.random.Generator,
             shell_radii: Sequence[float] = DEFAULT_SHELLS,
             samples: int = DEFAULT_SAMPLES) -> AuditReport:
    """``||grad mu_i||_1 <= eps ||mu||_1`` on sampled shells (the weaker branch).

    The statistic is the worst ratio ``||grad mu_i||_1 / ||mu||_1``. The
    stronger ``||grad log mu_i||_1`` is reported in ``extra`` where mu_i > 0.
    """
    stats, strong = [], []
    for R in shell_radii:
        X = sample_shell(rng, m, R, samples)
        worst, worst_log = 0.0, 0.0
        for x in X:
            mu = _eval(fld, x)
            J = fld.jacobian(x)
            if not np.all(np.isfinite(J)):
                raise AuditError(f"gradient not finite at x={x}")
            norm = np.abs(mu).sum()
            rows = np.abs(J).sum(axis=1)
            worst = max(worst, float(rows.max() / norm))
            pos = mu > 0
            if np.any(pos):
                worst_log = max(worst_log, float((rows[pos] / mu[pos]).max()))
        stats.append(worst)
        strong.append(worst_log)
    note = "" if fld.analytic_jacobian else "finite-difference gradients (reduced confidence)"
    return _report("C1", shell_radii, stats, eps, samples, note, log_gradient=np.array(strong))


def check_C2(fieldfn, m: int, rng: np.random.Generator, samples: int = 1000,
             scale: float = 100.0, atol: float = 1e-12) -> AuditReport:
    """Weight of an empty queue must vanish.

    Samples states with one or more zeroed coordinates and records the
    largest ``|mu_i|`` over the zeroed ``i``.
    """
    worst = 0.0
    for _ in range(samples):
        x = scale * rng.random(m)
        k = int(rng.integers(1, m + 1)) if m > 1 else 1
        zero = rng.choice(m, size=k, replace=False)
        x[zero] = 0.0
        if not np.any(x):
            continue
        mu = _eval(fieldfn, x)
        worst = max(worst, float(np.abs(mu[zero]).max()))
    stat = 0.0 if worst <= atol else worst
    return _report("C2", [np.nan], [stat], 0.0, samples, exact_max=worst)


def default_grid(lo: float = 1e2, hi: float = 1e6, n: int = 81) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _lipschitz(values, grid) -> float:
    return float(np.max(np.abs(np.diff(values) / np.diff(grid))))


def _diverges(values, grid) -> bool:
    """Grows without a vanishing increment per decade over the top two decades."""
    lg = np.log10(grid)
    top = lg[-1]
    v1 = np.interp(top - 2, lg, values)
    v2 = np.interp(top - 1, lg, values)
    v3 = values[-1]
    inc_prev, inc_last = v2 - v1, v3 - v2
    return bool(inc_last > 0 and inc_last >= 0.5 * inc_prev)


def check_D1_D2(p: Perturbation, cf: CostFunction, eps: float = 0.1, grid=None,
                lipschitz_bound: float = 10.0, queue: int = 0) -> tuple:
    """Sufficient conditions for a separable perturbation and cost.

    D1: ``dx~/dx`` Lipschitz (max difference quotient on ``grid`` below
    ``lipschitz_bound``) and divergent. D2: ``dh0/dx`` Lipschitz and
    ``dh0/dx~(x~) >= (dx~/dx)^(1 + eps)`` on the top decade of the grid.
    Returns the two reports.
    """
    if not p.separable:
        raise ValueError("D1/D2 apply to separable perturbations; audit coupled fields with C1/C2")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    d1 = perturb_derivative(p, grid)
    d2 = perturb_second_derivative(p, grid)
    lip1 = max(_lipschitz(d1, grid), float(np.max(np.abs(d2))))
    div = _diverges(d1, grid)
    stat1 = 0.0 if (lip1 <= lipschitz_bound and div) else 1.0
    r1 = _report("D1", [grid[-1]], [stat1], 0.0, grid.size,
                 lipschitz=lip1, diverges=div)

    xs = np.zeros((grid.size, cf.m))
    xs[:, queue] = grid
    g_raw = np.array([cf.gradient(x)[queue] for x in xs])
    lip2 = _lipschitz(g_raw, grid)
    xt = perturb(p, grid)
    xts = np.zeros_like(xs)
    xts[:, queue] = xt
    g_pert = np.array([cf.gradient(x)[queue] for x in xts])
    top = grid >= grid[-1] / 10
    need = d1[top] ** (1 + eps)
    shortfall = float(np.max(np.maximum(need - g_pert[top], 0.0) / need))
    ok = lip2 <= lipschitz_bound
    stat2 = shortfall if ok else max(shortfall, 1.0)
    r2 = _report("D2", [grid[-1]], [stat2], 0.0, grid.size, lipschitz=lip2)
    return r1, r2


def check_cond_log(cf: CostFunction, eps: float = 0.01, grid=None) -> AuditReport:
    """``dh0/dx_i >= eps x_i`` for every queue along the grid (one report row per queue)."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    stats = []
    for i in range(cf.m):
        xs = np.zeros((grid.size, cf.m))
        xs[:, i] = grid
        g = np.array([cf.gradient(x)[i] for x in xs])
        stats.append(float(np.max(np.maximum(eps * grid - g, 0.0) / (eps * grid))))
    return _report("CondLog", np.arange(cf.m), stats, 0.0, grid.size,
                   notes="radius column holds the queue index")


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    slope: float


def empirical_stability(series, window: int = 100, tol: float = 1e-3) -> StabilityVerdict:
    """Slope of block means over the second half of a trajectory.

    Stable iff the least-squares slope (units per slot) is at most ``tol``.
    """
    x = np.asarray(series, dtype=float)
    half = x[x.size // 2:]
    nb = half.size // window
    if nb < 2:
        raise ValueError(f"second half of a {x.size}-slot trajectory holds fewer than two "
                         f"windows of {window}")
    blocks = half[: nb * window].reshape(nb, window).mean(axis=1)
    t = (np.arange(nb) + 0.5) * window
    slope = float(np.polyfit(t, blocks, 1)[0])
    return StabilityVerdict(slope <= tol, slope)
