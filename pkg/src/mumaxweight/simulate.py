"""Per-slot simulation of a network under a scheduler."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .crw import Network, make_rng, sample_arrivals, step_crw
from .metrics import MetricsLedger, OutageBand

ARRIVAL_STREAM, POLICY_STREAM = 0, 1


@dataclass
class SimulationResult:
    trajectory: np.ndarray  # (T, m) backlogs after each slot
    ledger: MetricsLedger
    controls: Optional[np.ndarray] = None


def simulate(network: Network, scheduler, T: int, seed: int = 0, run_index: int = 0,
             cost=None, band: Optional[OutageBand] = None, keep_controls: bool = False,
             x0=None) -> SimulationResult:
    """Run ``T`` slots from ``x0`` (default empty network).

    Each slot: select a control from the current backlog, realize B(t) and
    the arrivals, apply the CRW update with the drains as always-on columns,
    record metrics. Arrivals and policy randomness use separate streams.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    arr_rng = make_rng(seed, 2 * run_index + ARRIVAL_STREAM)
    pol_rng = make_rng(seed, 2 * run_index + POLICY_STREAM)
    if not hasattr(scheduler, "field_") and not hasattr(scheduler, "scheduler_"):
        scheduler.fit(network)
    if hasattr(scheduler, "rng_"):
        scheduler.rng_ = pol_rng
        scheduler.u_ = np.zeros(network.l, dtype=np.int8)

    D = network.drain_matrix()
    n_drain = D.shape[1]
    u_full = np.ones(network.l + n_drain)
    x = np.zeros(network.m) if x0 is None else np.asarray(x0, dtype=float).copy()
    traj = np.empty((T, network.m))
    controls = np.empty((T, network.l), dtype=np.int8) if keep_controls else None
    ledger = MetricsLedger(network.m, network.app_queues, network.idle_queues, band, cost)

    for t in range(T):
        u = scheduler.select(x, rng=pol_rng)
        B_t = network.draw_B(t, arr_rng)
        a = sample_arrivals(network.arrivals, arr_rng)
        u_full[:network.l] = u
        x = step_crw(x, u_full, np.hstack([B_t, D]) if n_drain else B_t, a,
                     conserving=network.conserving)
        traj[t] = x
        if controls is not None:
            controls[t] = u
        ledger.record(x)
    return SimulationResult(traj, ledger, controls)


POWER_MODES = ("sca", "equal", "high_sinr")


@dataclass
class CrossLayerResult:
    trajectory: np.ndarray  # (T, m)
    ledger: MetricsLedger
    rates: np.ndarray  # (T, l) realized service per slot, queue units
    sca_iterations: np.ndarray  # (T,)


def crosslayer_link_weights(net, mu: np.ndarray):
    """Backpressure weights and commodity per link from field values on the queues."""
    from .power import bppc_link_weights

    L, K = net.l, net.n_commodities
    tx = np.zeros((L, K))
    rx = np.zeros((L, K))
    allowed = np.zeros((L, K), bool)
    tx[net.col_link, net.col_commodity] = mu[net.col_tx]
    rx[net.col_link, net.col_commodity] = mu[net.col_rx]
    allowed[net.col_link, net.col_commodity] = True
    return bppc_link_weights(tx, rx, allowed=allowed)


def simulate_crosslayer(net, field, T: int, power: str = "sca", seed: int = 0,
                        run_index: int = 0, cost=None, warm_start: bool = False,
                        inner_rtol: float = 1e-5, max_outer: int = 20) -> CrossLayerResult:
    """Per slot: field -> link weights -> power allocation -> rates -> conserving CRW step.

    ``power`` is ``"sca"`` (tightened SCA), ``"high_sinr"`` (one maximize
    step with the high-SINR surrogate) or ``"equal"`` (each node splits its
    budget evenly over its links with positive weight).
    """
    from .phy import sinr
    from .power import ScaState, sca_power_control

    if power not in POWER_MODES:
        raise ValueError(f"power must be one of {POWER_MODES}")
    if T < 1:
        raise ValueError("T must be >= 1")
    arr_rng = make_rng(seed, 2 * run_index + ARRIVAL_STREAM)
    pattern = net.pattern()
    drains = np.flatnonzero(net.drain > 0)
    D = np.zeros((net.m, drains.size))
    D[drains, np.arange(drains.size)] = -net.drain[drains]
    B_full = np.hstack([pattern, D])
    u = np.zeros(B_full.shape[1])
    u[pattern.shape[1]:] = 1.0
    col_of = {(l, c): k for k, (l, c) in enumerate(zip(net.col_link, net.col_commodity))}

    x = np.zeros(net.m)
    traj = np.empty((T, net.m))
    rates = np.zeros((T, net.l))
    iters = np.zeros(T, dtype=int)
    ledger = MetricsLedger(net.m, cost=cost)
    state = None
    for t in range(T):
        lw = crosslayer_link_weights(net, np.asarray(field(x), dtype=float))
        w = lw.weights
        r = np.zeros(net.l)
        if np.any(w > 0):
            if power == "equal":
                p = net.budget.equal_split(w > 0)
                r = net.W * np.log2(1.0 + sinr(p, net.gain, net.noise))
            else:
                res = sca_power_control(w, net.gain, net.noise, net.W, net.budget,
                                        max_outer=max_outer, tighten=power == "sca",
                                        sca=state if warm_start else None, inner_rtol=inner_rtol)
                r, iters[t] = res.rates, res.iterations
                if warm_start and power == "sca":
                    state = ScaState(res.sca.alpha, res.sca.beta)
            r = np.where(w > 0, r * net.rate_scale, 0.0)
        u[: pattern.shape[1]] = 0.0
        B_t = B_full.copy()
        for l in np.flatnonzero(w > 0):
            k = col_of[(l, lw.commodity[l])]
            u[k] = 1.0
            B_t[:, k] *= r[l]
        a = sample_arrivals(net.arrivals, arr_rng)
        x = step_crw(x, u, B_t, a, conserving=True)
        traj[t] = x
        rates[t] = r
        ledger.record(x)
    return CrossLayerResult(traj, ledger, rates, iters)
