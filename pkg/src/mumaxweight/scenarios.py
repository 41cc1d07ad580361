"""Builders for the experiment networks: tandem, multimedia, energy, cross-layer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .crw import ArrivalSpec, Network, StructureError
from .metrics import OutageBand
from .phy import GainMatrix, outage_capacity

SCENARIOS = ("tandem", "multimedia", "energy", "crosslayer")


def build_tandem(m: int = 2, alpha: float = 4.0, drain: float = 3.0, link_caps=6.0,
                 conserving: bool = False, packet_size: float = 1.0,
                 arrival: str = "poisson") -> Network:
    """``m`` queues in series, arrivals at the first, constant drain at the last."""
    if m < 2:
        raise ValueError("a tandem needs m >= 2")
    caps = np.broadcast_to(np.asarray(link_caps, dtype=float), (m - 1,))
    B = np.zeros((m, m - 1))
    for j in range(m - 1):
        B[j, j] = -caps[j]
        B[j + 1, j] = caps[j]
    alpha_vec = np.zeros(m)
    alpha_vec[0] = alpha
    drains = np.zeros(m)
    drains[-1] = drain
    return Network(
        B=B, C=np.eye(m - 1), arrivals=ArrivalSpec(alpha_vec, arrival, packet_size),
        drain=drains, conserving=conserving, app_queues=(m - 1,),
        idle_queues=tuple(range(m)), name="tandem",
        queue_names=tuple(f"Q{i + 1}" for i in range(m)),
        link_names=tuple(f"{i + 1}->{i + 2}" for i in range(m - 1)),
    )


def overlap_every(k: int):
    """Overlap rule: every ``k``-th user (1-based) is also covered by the next AP."""
    def rule(user: int, ap: int, n_ap: int):
        if (user + 1) % k == 0 and ap + 1 < n_ap:
            return (ap, ap + 1)
        return (ap,)
    return rule


def default_wireless_mi(bandwidth: float = 5.0, snr_db: float = 18.0, spread: float = 0.15):
    """Mean and variance of the per-slot mutual information (Mbit/slot)."""
    mean = bandwidth * math.log2(1.0 + 10 ** (snr_db / 10))
    return mean, (spread * mean) ** 2


def build_multimedia(n_ap: int = 1, users_per_ap: int = 3, wired_cap: float = 100.0,
                     drain: float = 3.0, target: float = 20.0, p_o: float = 0.01,
                     overlap_rule=5, alpha=None, wireless_mi=None,
                     band: Optional[OutageBand] = None, conserving: bool = True,
                     packet_size: float = 1.0) -> Network:
    """Server -> access point -> user streaming network.

    Each user owns a queue at the server, one at every covering access point
    and an application buffer at the terminal. Each AP has one wired backbone
    link (shared by the per-user flows into it) and one radio that serves a
    single user per slot. ``overlap_rule`` is an int ``k`` (every k-th user
    sees the next AP too) or a callable ``(user, ap, n_ap) -> APs``.
    Service is conserving by default; the radio rate dwarfs typical AP
    backlogs, and the clipped update would credit the difference to the
    user buffers as traffic that never existed.
    """
    if n_ap < 1 or users_per_ap < 1:
        raise ValueError("need at least one AP and one user")
    band = band or OutageBand(target - 10.0, target + 10.0)
    if not math.isclose(band.target, target):
        raise ValueError("target must be the midpoint of the outage band")
    rule = overlap_every(overlap_rule) if isinstance(overlap_rule, int) else overlap_rule
    if wireless_mi is None:
        wireless_mi = default_wireless_mi()
    mean_mi, var_mi = wireless_mi
    radio = outage_capacity(mean_mi, var_mi, p_o)

    n_users = n_ap * users_per_ap
    coverage = [rule(k, k // users_per_ap, n_ap) for k in range(n_users)]
    names = [f"server/u{k}" for k in range(n_users)]
    ap_queue = {}
    for k, aps in enumerate(coverage):
        for a in aps:
            ap_queue[(a, k)] = len(names)
            names.append(f"ap{a}/u{k}")
    user_queue = {}
    for k in range(n_users):
        user_queue[k] = len(names)
        names.append(f"user{k}")
    m = len(names)

    cols, link_names, wired_of, radio_of = [], [], [], []
    for (a, k), q in ap_queue.items():
        col = np.zeros(m)
        col[k], col[q] = -wired_cap, wired_cap
        cols.append(col)
        link_names.append(f"server->ap{a}/u{k}")
        wired_of.append(a)
        radio_of.append(-1)
    for (a, k), q in ap_queue.items():
        col = np.zeros(m)
        col[q], col[user_queue[k]] = -radio, radio
        cols.append(col)
        link_names.append(f"ap{a}->user{k}")
        wired_of.append(-1)
        radio_of.append(a)
    B = np.column_stack(cols)
    l = B.shape[1]
    C = np.zeros((2 * n_ap, l))
    for j in range(l):
        if wired_of[j] >= 0:
            C[2 * wired_of[j], j] = 1
        else:
            C[2 * radio_of[j] + 1, j] = 1

    alpha_vec = np.zeros(m)
    alpha_vec[:n_users] = drain * 0.5 if alpha is None else alpha
    drains = np.zeros(m)
    app = tuple(user_queue[k] for k in range(n_users))
    drains[list(app)] = drain
    return Network(
        B=B, C=C, arrivals=ArrivalSpec(alpha_vec, "poisson", packet_size), drain=drains,
        conserving=conserving, app_queues=app, idle_queues=(), name="multimedia",
        queue_names=tuple(names), link_names=tuple(link_names),
    )


ENERGY_LINKS = ((1, 2), (1, 3), (1, 4), (2, 5), (3, 6), (4, 7), (5, 8), (6, 8), (7, 8))


def energy_capacities(mode: str = "equal", central: float = 0.7, side: float = 0.4):
    """Per-link capacities in ``ENERGY_LINKS`` order."""
    if mode == "equal":
        return np.full(len(ENERGY_LINKS), 0.5)
    if mode == "unequal":
        return np.array([central if 3 in (o, d) or (o, d) == (6, 8) else side
                         for o, d in ENERGY_LINKS])
    raise ValueError("mode must be 'equal' or 'unequal'")


def energy_cost_weights(ratio: float = 100.0) -> np.ndarray:
    """Queue weights for nodes 1..7: ``ratio`` on the side routes, 1 elsewhere."""
    w = np.ones(7)
    w[[1, 3, 4, 6]] = ratio  # nodes 2, 4, 5, 7
    return w


def build_energy(link_caps=None, alpha: float = 0.2, conserving: bool = True,
                 packet_size: float = 1.0, arrival: str = "poisson") -> Network:
    """Eight-node ladder: source 1, routes 2->5, 3->6, 4->7, sink 8.

    Queues sit at nodes 1..7 (index = node - 1). The source transmits on one
    of its three links per slot.
    """
    caps = energy_capacities() if link_caps is None else np.broadcast_to(
        np.asarray(link_caps, dtype=float), (len(ENERGY_LINKS),))
    m = 7
    B = np.zeros((m, len(ENERGY_LINKS)))
    for j, (o, d) in enumerate(ENERGY_LINKS):
        B[o - 1, j] = -caps[j]
        if d != 8:
            B[d - 1, j] = caps[j]
    C = np.zeros((1, len(ENERGY_LINKS)))
    C[0, :3] = 1
    alpha_vec = np.zeros(m)
    alpha_vec[0] = alpha
    return Network(
        B=B, C=C, arrivals=ArrivalSpec(alpha_vec, arrival, packet_size), drain=None,
        conserving=conserving, app_queues=(), idle_queues=tuple(range(1, 7)), name="energy",
        queue_names=tuple(f"node{i}" for i in range(1, 8)),
        link_names=tuple(f"{o}->{d}" for o, d in ENERGY_LINKS),
    )


STORAGE_DISCOUNT = 0.01


def default_cost_weights(net, cost: str) -> np.ndarray:
    """Per-queue cost weights used when a configuration gives none.

    Composite costs charge non-application queues ``STORAGE_DISCOUNT`` so that
    excess traffic is cheaper to hold upstream than in an application buffer
    above its target; the energy ladder uses its route weights; everything
    else is uniform.
    """
    if net.name == "energy":
        return energy_cost_weights()
    w = np.ones(net.m)
    if cost == "composite" and len(net.app_queues):
        w[:] = STORAGE_DISCOUNT
        w[list(net.app_queues)] = 1.0
    return w


def structural_audit(net: Network) -> list:
    """Problems found in a single-commodity network; empty when it is well formed."""
    issues = []
    if not net.satisfies_meyn_condition():
        issues.append("some link column lacks a unique negative entry")
    if net.C.shape[1] != net.l:
        issues.append("constituency rows reference missing links")
    outgoing = (net.B < 0).any(axis=1)
    if np.any((net.drain > 0) & outgoing):
        issues.append("drains on queues with outgoing controllable links")
    return issues


CROSSLAYER_ROUTES = {1: (4, 5), 2: (5, 6, 7), 3: (7, 8)}  # middle node -> destinations


@dataclass(frozen=True)
class CrossLayerNetwork:
    """Multi-commodity wireless network with interference-coupled link rates.

    Queue ``q`` holds commodity ``queue_commodity[q]`` at node ``queue_node[q]``.
    Column ``k`` of the routing pattern moves commodity ``col_commodity[k]``
    over link ``col_link[k]``. Rates are in queue units per slot:
    ``rate_scale * W * log2(1 + gamma)``.
    """

    coords: np.ndarray
    links: tuple
    destinations: tuple  # node of each commodity
    queue_node: np.ndarray
    queue_commodity: np.ndarray
    col_link: np.ndarray
    col_commodity: np.ndarray
    col_tx: np.ndarray  # queue drained by each column
    col_rx: np.ndarray  # queue fed by each column
    gain: GainMatrix
    noise: np.ndarray
    W: float
    budget: object  # power.PowerBudget
    arrivals: ArrivalSpec
    drain: np.ndarray
    rate_scale: float
    name: str = "crosslayer"
    queue_names: tuple = ()

    @property
    def m(self) -> int:
        return self.queue_node.size

    @property
    def l(self) -> int:
        return len(self.links)

    @property
    def n_commodities(self) -> int:
        return len(self.destinations)

    @property
    def alpha(self) -> np.ndarray:
        return self.arrivals.means

    @property
    def app_queues(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.drain > 0))

    def pattern(self) -> np.ndarray:
        """Unit routing matrix, one column per (link, commodity) pair."""
        B = np.zeros((self.m, self.col_link.size))
        k = np.arange(self.col_link.size)
        B[self.col_tx, k] = -1.0
        B[self.col_rx, k] = 1.0
        return B


def layered_coordinates(n_middle: int = 3, n_dest: int = 5, spread_deg: float = 60.0,
                        spacing: float = 1.0) -> np.ndarray:
    """Source at the origin, middle and destination layers on concentric arcs."""
    def arc(n, r):
        ang = np.radians(np.linspace(-spread_deg, spread_deg, n)) if n > 1 else np.zeros(1)
        return r * np.column_stack([np.cos(ang), np.sin(ang)])
    return np.vstack([np.zeros((1, 2)), arc(n_middle, spacing), arc(n_dest, 2 * spacing)])


def crosslayer_gains(coords, links, rho: float = 4.0) -> GainMatrix:
    """``G[j, l] = d(tx_j, rx_l)^-rho``; a node does not interfere with its own reception."""
    return GainMatrix.from_coordinates(coords, links, rho)


def build_crosslayer(arrival_rate: float = 4.0, W: float = 20e6, rho: float = 4.0,
                     p_max: float = 1.0, noise: float = 0.01, slot_duration: float = 1e-3,
                     unit_bits: float = 1e3, dest_drain: float = 200.0,
                     packet_size: float = 1.0, coords=None,
                     routes=None) -> CrossLayerNetwork:
    """Three-layer network: source 0, middle nodes 1..3, destinations 4..8.

    Every destination is one commodity entering at the source with mean
    ``arrival_rate`` units per slot. Middle nodes keep one queue per commodity
    they can forward; destinations keep an application buffer drained at
    ``dest_drain`` units per slot. Default units are kbit and 1 ms slots.
    """
    from .power import PowerBudget

    routes = CROSSLAYER_ROUTES if routes is None else routes
    middles = sorted(routes)
    dests = sorted({d for ds in routes.values() for d in ds})
    n_nodes = 1 + len(middles) + len(dests)
    if sorted(middles + dests) != list(range(1, n_nodes)):
        raise StructureError("middle and destination nodes must be numbered 1..n-1 without gaps")
    coords = layered_coordinates(len(middles), len(dests)) if coords is None else np.asarray(coords, float)
    if coords.shape != (n_nodes, 2):
        raise StructureError(f"need {n_nodes} coordinates, got {coords.shape}")
    commodity_of = {d: k for k, d in enumerate(dests)}

    links = [(0, mid) for mid in middles] + [(mid, d) for mid in middles for d in routes[mid]]
    qnode, qcomm, names = [], [], []
    qidx = {}

    def add(node, c):
        qidx[(node, c)] = len(qnode)
        qnode.append(node)
        qcomm.append(c)
        names.append(f"n{node}/c{c}")

    for c in range(len(dests)):
        add(0, c)
    for mid in middles:
        for d in routes[mid]:
            add(mid, commodity_of[d])
    for d in dests:
        add(d, commodity_of[d])

    col_link, col_comm, col_tx, col_rx = [], [], [], []
    for j, (o, d) in enumerate(links):
        carried = [commodity_of[x] for x in routes[d]] if d in routes else [commodity_of[d]]
        for c in carried:
            col_link.append(j)
            col_comm.append(c)
            col_tx.append(qidx[(o, c)])
            col_rx.append(qidx[(d, c)])

    m = len(qnode)
    alpha = np.zeros(m)
    alpha[: len(dests)] = arrival_rate
    drain = np.zeros(m)
    drain[[qidx[(d, commodity_of[d])] for d in dests]] = dest_drain
    return CrossLayerNetwork(
        coords=coords, links=tuple(links), destinations=tuple(dests),
        queue_node=np.array(qnode), queue_commodity=np.array(qcomm),
        col_link=np.array(col_link), col_commodity=np.array(col_comm),
        col_tx=np.array(col_tx), col_rx=np.array(col_rx),
        gain=crosslayer_gains(coords, links, rho), noise=np.full(len(links), float(noise)),
        W=float(W), budget=PowerBudget([o for o, _ in links], np.full(n_nodes, float(p_max))),
        arrivals=ArrivalSpec(alpha, "poisson", packet_size), drain=drain,
        rate_scale=slot_duration / unit_bits, queue_names=tuple(names),
    )
