"""Controlled random walk (CRW) dynamics for slotted queueing networks.

A network holds ``m`` queues and ``l`` controllable links. The mean service
matrix ``B`` (m x l) has one column per link; a column carries a negative
entry at the queue the link drains and positive entries where the traffic
lands. Uncontrolled application drains are extra always-on columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEFAULT_ENUMERATION_CAP = 20


class StructureError(ValueError):
    """Raised on dimension or topology mismatches."""


class AdmissibilityError(ValueError):
    """Raised when a control would drive an empty queue negative."""


class EnumerationLimitError(ValueError):
    """Raised when exhaustive control enumeration is too large."""


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """One independent generator per (seed, stream) pair."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ArrivalSpec:
    means: np.ndarray
    distribution: str = "poisson"  # or "deterministic"
    packet_size: float = 1.0

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if np.any(means < 0):
            raise ValueError("arrival means must be nonnegative")
        if self.distribution not in ("poisson", "deterministic"):
            raise ValueError(f"unknown arrival distribution {self.distribution!r}")
        if self.packet_size <= 0:
            raise ValueError("packet_size must be positive")
        object.__setattr__(self, "means", means)


def sample_arrivals(spec: ArrivalSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one slot of exogenous arrivals (Mbit per queue).

    Poisson mode draws integer packet counts with mean ``means / packet_size``
    and scales them back to Mbit.
    """
    if spec.distribution == "deterministic":
        return spec.means.copy()
    counts = rng.poisson(spec.means / spec.packet_size)
    return counts * spec.packet_size


@dataclass(frozen=True)
class Network:
    """Single-commodity network model.

    ``B`` is the mean service matrix of the controllable links, ``C`` the
    binary constituency matrix, ``drain`` an optional per-queue constant
    application drain. ``draw_rule`` maps ``(t, rng)`` to a realized service
    matrix; ``None`` means B(t) is the mean every slot.
    """

    B: np.ndarray
    C: np.ndarray
    arrivals: ArrivalSpec
    drain: Optional[np.ndarray] = None
    conserving: bool = False
    app_queues: tuple = ()
    idle_queues: tuple = ()
    name: str = ""
    queue_names: tuple = ()
    link_names: tuple = ()
    draw_rule: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.size == 0:
            C = np.zeros((0, B.shape[1]))
        if C.shape[1] != B.shape[1]:
            raise StructureError(f"C has {C.shape[1]} columns, B has {B.shape[1]} links")
        if not np.all(np.isin(C, (0.0, 1.0))):
            raise StructureError("constituency matrix must be binary")
        if self.arrivals.means.shape != (B.shape[0],):
            raise StructureError("arrival means must have one entry per queue")
        drain = np.zeros(B.shape[0]) if self.drain is None else np.asarray(self.drain, dtype=float)
        if drain.shape != (B.shape[0],) or np.any(drain < 0):
            raise StructureError("drain must be a nonnegative vector with one entry per queue")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "drain", drain)
        object.__setattr__(self, "app_queues", tuple(int(i) for i in self.app_queues))
        object.__setattr__(self, "idle_queues", tuple(int(i) for i in self.idle_queues))

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def l(self) -> int:
        return self.B.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        return self.arrivals.means

    def sink_rows(self) -> np.ndarray:
        """Row index of the (unique) negative entry of each link column, -1 if none."""
        return _sink_rows(self.B)

    def satisfies_meyn_condition(self) -> bool:
        """Every column has exactly one negative entry and nonnegative elsewhere."""
        return bool(np.all((self.B < 0).sum(axis=0) == 1))

    def draw_B(self, t: int, rng: np.random.Generator) -> np.ndarray:
        if self.draw_rule is None:
            return self.B
        B_t = np.asarray(self.draw_rule(t, rng), dtype=float)
        if B_t.shape != self.B.shape:
            raise StructureError("draw_rule returned a matrix of the wrong shape")
        return B_t

    def drain_matrix(self) -> np.ndarray:
        """Always-on drain columns, one per draining queue."""
        idx = np.flatnonzero(self.drain > 0)
        D = np.zeros((self.m, idx.size))
        D[idx, np.arange(idx.size)] = -self.drain[idx]
        return D


def _sink_rows(B: np.ndarray) -> np.ndarray:
    neg = B < 0
    counts = neg.sum(axis=0)
    rows = np.where(counts > 0, neg.argmax(axis=0), -1)
    return rows


def _check_dims(x, u, B_t, a_t):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    B_t = np.atleast_2d(np.asarray(B_t, dtype=float))
    a_t = np.asarray(a_t, dtype=float)
    m, l = B_t.shape
    if x.shape != (m,) or a_t.shape != (m,) or u.shape != (l,):
        raise StructureError(
            f"dimension mismatch: x{x.shape}, u{u.shape}, B{B_t.shape}, a{a_t.shape}"
        )
    if np.any(a_t < 0):
        raise ValueError("arrival draw must be nonnegative")
    return x, u, B_t, a_t


def step_crw(x, u, B_t, a_t, conserving: bool = False) -> np.ndarray:
    """Advance one slot: ``[x + B_t u]^+ + a_t``.

    With ``conserving=True`` each active column moves at most the backlog
    left at its origin queue (start-of-slot backlog, shared in column order),
    so clipped service no longer credits traffic downstream.
    """
    x, u, B_t, a_t = _check_dims(x, u, B_t, a_t)
    if not conserving:
        return np.maximum(x + B_t @ u, 0.0) + a_t

    rows = _sink_rows(B_t)
    if np.any((B_t < 0).sum(axis=0) > 1):
        raise StructureError("conserving mode needs at most one negative entry per column")
    remaining = x.copy()
    out = x.copy()
    for j in np.flatnonzero(u):
        col = B_t[:, j] * u[j]
        i = rows[j]
        if i < 0:
            out += col
            continue
        cap = -col[i]
        if cap <= 0:
            continue
        moved = min(remaining[i], cap)
        remaining[i] -= moved
        out += col * (moved / cap)
    return np.maximum(out, 0.0) + a_t


def step_meyn(x, u, B_t, a_t, alpha=None) -> np.ndarray:
    """Unclipped update ``x + B_t u + a_t`` for admissible controls.

    Admissibility is checked against ``alpha`` (defaults to zero): for every
    empty queue, ``[B_t u + alpha]_i >= 0``.
    """
    x, u, B_t, a_t = _check_dims(x, u, B_t, a_t)
    alpha = np.zeros_like(x) if alpha is None else np.asarray(alpha, dtype=float)
    drift = B_t @ u + alpha
    bad = (x == 0) & (drift < 0)
    if np.any(bad):
        raise AdmissibilityError(f"control drains empty queues {np.flatnonzero(bad).tolist()}")
    out = x + B_t @ u + a_t
    if np.any(out < 0):
        raise AdmissibilityError(
            f"realized update drives queues {np.flatnonzero(out < 0).tolist()} negative"
        )
    return out


def feasible_controls(C, l: Optional[int] = None, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All binary controls with ``C u <= 1``, in lexicographic order.

    Returns an int8 array of shape (K, l). Depth-first search with pruning,
    zero tried before one at every position.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if l is None:
        l = C.shape[1]
    if C.size and C.shape[1] != l:
        raise StructureError(f"C has {C.shape[1]} columns, expected {l}")
    if l > cap:
        raise EnumerationLimitError(
            f"{l} links exceed the enumeration cap of {cap}; use pick-and-compare instead"
        )
    if C.size == 0:
        C = np.zeros((0, l))
    out = []
    u = np.zeros(l, dtype=np.int8)
    load = np.zeros(C.shape[0])

    def visit(j):
        if j == l:
            out.append(u.copy())
            return
        visit(j + 1)
        col = C[:, j]
        if np.all(load + col <= 1):
            u[j] = 1
            load[:] += col
            visit(j + 1)
            load[:] -= col
            u[j] = 0

    visit(0)
    return np.array(out, dtype=np.int8).reshape(-1, l)


def admissible_controls(feasible, x, B_mean, alpha) -> np.ndarray:
    """Subset of ``feasible`` keeping ``[B u + alpha]_i >= 0`` wherever ``x_i == 0``."""
    feasible = np.asarray(feasible)
    x = np.asarray(x, dtype=float)
    empty = x == 0
    if not np.any(empty):
        return feasible
    B_mean = np.asarray(B_mean, dtype=float)
    drift = feasible @ B_mean[empty].T + np.asarray(alpha, dtype=float)[empty]
    keep = np.all(drift >= 0, axis=1)
    if not np.any(keep):
        raise AdmissibilityError("no admissible control; is the idle control feasible and alpha >= 0?")
    return feasible[keep]
