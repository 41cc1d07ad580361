"""Weighted sum-rate power control by successive convex approximation.

Each outer iteration replaces ``log(1 + gamma)`` by the lower bound
``a * log(gamma) + b``, tight at the current SINR. In log-powers the bound
is concave, so the inner maximization is solved globally by projected
gradient ascent; re-tightening afterwards can only increase the true rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .phy import LN2, _gain, interference, sinr

P_MIN_FRACTION = 1e-6


class SolverError(RuntimeError):
    """The inner solver met a non-finite objective."""


def sca_params(z0):
    """Surrogate coefficients tight at ``z0``: ``(z0/(1+z0), log(1+z0) - a log z0)``."""
    z = np.asarray(z0, dtype=float)
    if np.any(z <= 0):
        raise ValueError("z0 must be positive")
    a = z / (1.0 + z)
    b = np.log1p(z) - a * np.log(z)
    if a.ndim == 0:
        return float(a), float(b)
    return a, b


@dataclass
class ScaState:
    alpha: np.ndarray
    beta: np.ndarray
    iteration: int = 0
    rates: Optional[np.ndarray] = None

    @classmethod
    def high_sinr(cls, n_links: int) -> "ScaState":
        return cls(np.ones(n_links), np.zeros(n_links))

    def tighten(self, gamma) -> "ScaState":
        """Re-tighten at ``gamma``; links with zero SINR keep their coefficients."""
        gamma = np.asarray(gamma, dtype=float)
        a, b = self.alpha.copy(), self.beta.copy()
        pos = gamma > 0
        if np.any(pos):
            a[pos], b[pos] = sca_params(gamma[pos])
        return ScaState(a, b, self.iteration + 1, self.rates)


@dataclass(frozen=True)
class PowerBudget:
    """Per-node power limits. ``owner[l]`` is the transmitting node of link ``l``."""

    owner: np.ndarray
    p_max: np.ndarray  # per node

    def __post_init__(self):
        owner = np.asarray(self.owner, dtype=int)
        p_max = np.asarray(self.p_max, dtype=float)
        if p_max.ndim == 0:
            p_max = np.full(owner.max() + 1, float(p_max))
        if np.any(p_max <= 0):
            raise ValueError("power budgets must be positive")
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "p_max", p_max)
        groups = tuple(np.flatnonzero(owner == n) for n in range(p_max.size))
        object.__setattr__(self, "_groups", groups)
        # padded (node, slot) layout for the vectorized projection
        kmax = max(1, max(g.size for g in groups))
        pad = np.full((p_max.size, kmax), -1)
        for n, g in enumerate(groups):
            pad[n, : g.size] = g
        object.__setattr__(self, "_pad", pad)
        object.__setattr__(self, "_valid", pad >= 0)
        object.__setattr__(self, "_sizes", np.array([g.size for g in groups]))

    @property
    def n_links(self) -> int:
        return self.owner.size

    @property
    def groups(self) -> tuple:
        return self._groups

    @property
    def p_min(self) -> np.ndarray:
        """Per-link floor."""
        return P_MIN_FRACTION * self.p_max[self.owner]

    def node_totals(self, p) -> np.ndarray:
        return np.bincount(self.owner, weights=np.asarray(p, dtype=float),
                           minlength=self.p_max.size)

    def equal_split(self, active=None) -> np.ndarray:
        """Each node's budget shared evenly by its active links; the rest sit at the floor."""
        active = np.ones(self.n_links, bool) if active is None else np.asarray(active, bool)
        p = self.p_min.copy()
        for n, g in enumerate(self.groups):
            on = g[active[g]]
            if on.size:
                p[on] = (self.p_max[n] - (g.size - on.size) * P_MIN_FRACTION * self.p_max[n]) / on.size
        return p


def project_capped_simplex(v, cap: float, floor: float = 0.0) -> np.ndarray:
    """Euclidean projection onto ``{y >= floor, sum(y) <= cap}``."""
    v = np.asarray(v, dtype=float)
    k = v.size
    if cap < k * floor:
        raise ValueError("budget below the per-link floor")
    z = v - floor
    c = cap - k * floor
    y = np.maximum(z, 0.0)
    if y.sum() <= c:
        return y + floor
    # projection onto the simplex {y >= 0, sum y = c}
    s = np.sort(z)[::-1]
    css = np.cumsum(s) - c
    idx = np.arange(1, k + 1)
    rho = np.flatnonzero(s - css / idx > 0)[-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(z - tau, 0.0) + floor


def project_budget(p, budget: PowerBudget, free=None) -> np.ndarray:
    """Per-node projection; links outside ``free`` stay at the floor.

    Vectorized over nodes; agrees with ``project_capped_simplex`` applied
    node by node.
    """
    floor = budget.p_min
    z = np.asarray(p, dtype=float) - floor
    if free is not None:
        z = np.where(free, z, -np.inf)
    pad, valid = budget._pad, budget._valid
    Z = np.full(pad.shape, -np.inf)
    Z[valid] = z[pad[valid]]
    cap = budget.p_max * (1.0 - budget._sizes * P_MIN_FRACTION)
    Y = np.maximum(Z, 0.0)
    over = Y.sum(axis=1) > cap
    if over.any():
        Zo = Z[over]
        S = -np.sort(-Zo, axis=1)
        fin = np.isfinite(S)
        css = np.cumsum(np.where(fin, S, 0.0), axis=1) - cap[over, None]
        k = np.arange(1, S.shape[1] + 1)
        cond = fin & (S - css / k > 0)
        rho = S.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        tau = css[np.arange(rho.size), rho] / (rho + 1)
        Y[over] = np.maximum(Zo - tau[:, None], 0.0)
    out = floor.copy()
    out[pad[valid]] += Y[valid]
    return out


def project_budget_scaled(v, d, budget: PowerBudget, free) -> np.ndarray:
    """Projection onto the budget set in the metric ``sum (y - v)^2 / d``.

    Per node the solution is ``max(v - tau d, floor)`` with the smallest
    ``tau >= 0`` meeting the budget, found exactly on the sorted breakpoints.
    """
    out = budget.p_min.copy()
    for n, g in enumerate(budget.groups):
        f = g[free[g]]
        if f.size == 0:
            continue
        floor = P_MIN_FRACTION * budget.p_max[n]
        cap = budget.p_max[n] - (g.size - f.size) * floor
        vf, df = v[f], d[f]
        y = np.maximum(vf, floor)
        if y.sum() <= cap:
            out[f] = y
            continue
        bp = np.maximum(vf - floor, 0.0) / df  # tau at which each link hits the floor
        order = np.argsort(bp)[::-1]
        # walk breakpoints from large to small: links in `on` are above the floor
        v_on = d_on = 0.0
        n_floor = f.size
        tau = 0.0
        for k in order:
            v_on += vf[k]
            d_on += df[k]
            n_floor -= 1
            tau = (v_on + n_floor * floor - cap) / d_on
            nxt = bp[order[f.size - n_floor]] if n_floor else -np.inf
            if tau >= nxt:
                break
        y = np.maximum(vf - tau * df, floor)
        # large steps cancel catastrophically in v - tau d; push the residual
        # back onto the links above the floor so the budget holds exactly
        excess = y.sum() - cap
        if excess > 0:
            on = y > floor
            y[on] = np.maximum(y[on] - excess * df[on] / df[on].sum(), floor)
        out[f] = y
    return out


def surrogate_objective(pt, weights, sca: ScaState, G, noise, W: float = 1.0) -> float:
    """Surrogate weighted rate at log-powers ``pt`` (bit/s when ``W`` is in Hz)."""
    G = _gain(G)
    pt = np.asarray(pt, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    ln_gamma = np.log(np.diag(G)) + pt - np.log(interference(np.exp(pt), G, noise))
    return float(W / LN2 * np.sum(w * (sca.alpha * ln_gamma + sca.beta)))


def _surrogate_p(p, w, sca, Gd, Goff, noise, K):
    I = noise + p @ Goff
    val = K * np.sum(w * (sca.alpha * (np.log(Gd * p / I)) + sca.beta))
    v = K * w * sca.alpha / I
    grad = K * w * sca.alpha / p - Goff @ v
    return val, grad


def weighted_rate(p, weights, G, noise, W: float = 1.0) -> float:
    """True weighted sum-rate ``sum w_l W log2(1 + gamma_l)``."""
    return float(np.sum(np.asarray(weights) * W * np.log2(1.0 + sinr(p, G, noise))))


def solve_convex_subproblem(weights, sca: ScaState, G, noise, W: float, budget: PowerBudget,
                            p0=None, rtol: float = 1e-8, max_iter: int = 2000) -> tuple:
    """Maximize the surrogate over the per-node budgets.

    Projected gradient ascent in power space with Barzilai-Borwein steps and
    Armijo backtracking. Zero-weight links are held at the floor. Returns
    ``(p, kkt_residual)`` where the residual is ``||P(p + grad) - p||_inf``.
    """
    G = _gain(G)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    free = w > 0
    start = budget.equal_split() if p0 is None else np.asarray(p0, dtype=float)
    if not free.any():
        return start.copy(), 0.0
    Gd = np.diag(G).copy()
    Goff = G - np.diag(Gd)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), w.shape)
    K = W / LN2

    p = project_budget(start, budget, free)
    f, g = _surrogate_p(p, w, sca, Gd, Goff, noise, K)
    if not np.isfinite(f):
        raise SolverError("surrogate objective is not finite at the start point")
    g[~free] = 0.0
    # scaled metric diag(p^2): Newton-like on the log terms, same fixed points
    d = p * p
    t = 0.1 / max(np.abs(p * g).max(), 1e-300)
    xtol = 1e-14 * budget.p_max.max()
    for _ in range(max_iter):
        while True:
            q = project_budget_scaled(p + t * d * g, d, budget, free)
            if np.abs(q - p).max() <= xtol:
                q = None  # no representable ascent step left
                break
            fq, gq = _surrogate_p(q, w, sca, Gd, Goff, noise, K)
            if np.isfinite(fq) and fq >= f + 1e-4 * g @ (q - p):
                break
            t *= 0.5
        if q is None:
            break
        gq[~free] = 0.0
        improvement = fq - f
        s, y = q - p, gq - g
        p, f, g = q, fq, gq
        if improvement <= rtol * max(abs(f), 1e-300):
            break
        d_new = p * p
        sy = s @ y
        # Barzilai-Borwein step in the scaled metric
        t = (s @ (s / d_new)) / -sy if sy < 0 else 2 * t
        d = d_new
    residual = float(np.abs(project_budget(p + g, budget, free) - p).max())
    return p, residual


@dataclass
class ScaResult:
    p: np.ndarray
    rates: np.ndarray  # true rates, W log2(1 + gamma)
    iterations: int
    sca: ScaState
    history: list = field(default_factory=list)  # true weighted rate per outer iteration


def sca_power_control(weights, G, noise, W: float, budget: PowerBudget, max_outer: int = 20,
                      tol: float = 1e-4, sca: Optional[ScaState] = None, tighten: bool = True,
                      p0=None, inner_rtol: float = 1e-8, inner_max_iter: int = 2000) -> ScaResult:
    """Alternate maximize and tighten steps until the surrogate rates settle.

    ``tighten=False`` runs a single maximize step with the given (default
    high-SINR) coefficients.
    """
    G = _gain(G)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative with at least one positive")
    state = ScaState.high_sinr(w.size) if sca is None else sca
    p = budget.equal_split(w > 0) if p0 is None else np.asarray(p0, dtype=float)
    history, prev = [], None
    it = 0
    for it in range(1, max_outer + 1):
        p, _ = solve_convex_subproblem(w, state, G, noise, W, budget, p0=p,
                                       rtol=inner_rtol, max_iter=inner_max_iter)
        gamma = sinr(p, G, noise)
        surrogate = W / LN2 * (state.alpha * np.log(gamma) + state.beta)
        history.append(weighted_rate(p, w, G, noise, W))
        if not tighten:
            break
        state = state.tighten(gamma)
        active = w > 0
        if prev is not None:
            change = np.abs(surrogate - prev)[active] / np.maximum(np.abs(prev[active]), 1e-300)
            if change.max() < tol:
                break
        # after tightening the surrogate rates at p equal the true rates
        prev = W * np.log2(1.0 + gamma)
    rates = W * np.log2(1.0 + sinr(p, G, noise))
    state.rates = rates
    return ScaResult(p, rates, it, state, history)


@dataclass(frozen=True)
class LinkWeightSet:
    weights: np.ndarray
    commodity: np.ndarray  # argmax commodity per link


def bppc_link_weights(mu_tx, mu_rx, schedule=None, allowed=None) -> LinkWeightSet:
    """Backpressure link weights from per-commodity field values.

    ``mu_tx[l, c]`` and ``mu_rx[l, c]`` are the field at the transmitter and
    receiver of link ``l`` for commodity ``c``. Commodities outside the
    boolean mask ``allowed`` are never chosen. Negative differentials clip to 0.
    """
    diff = np.atleast_2d(np.asarray(mu_tx, dtype=float) - np.asarray(mu_rx, dtype=float))
    if allowed is not None:
        diff = np.where(allowed, diff, -np.inf)
    c = np.argmax(diff, axis=1)
    best = diff[np.arange(diff.shape[0]), c]
    w = np.maximum(best, 0.0)
    if schedule is not None:
        w = w * np.asarray(schedule, dtype=float)
    return LinkWeightSet(w, c)
