"""Wireless physical layer: path gains, SINR, Shannon rates, outage capacity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)

# Acklam's rational approximation of the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _normal_quantile(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    # one Halley refinement brings the ~1e-9 relative error to machine precision
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def q_inverse(p: float) -> float:
    """Inverse Gaussian tail: the ``z`` with ``Pr(N(0,1) > z) = p``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    return -_normal_quantile(p)


def outage_capacity(mean_mi: float, var_mi: float, p_o: float) -> float:
    """Rate supported with probability ``1 - p_o``, floored at zero."""
    if var_mi < 0:
        raise ValueError("variance must be nonnegative")
    return max(0.0, mean_mi - math.sqrt(var_mi) * q_inverse(p_o))


def path_gain(d, rho: float = 4.0):
    """``d ** -rho``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    g = d ** -rho
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class GainMatrix:
    """``G[j, l]`` is the gain from the transmitter of link j to the receiver of link l."""

    G: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if G.shape[0] != G.shape[1]:
            raise ValueError("gain matrix must be square")
        if np.any(G < 0) or np.any(np.diag(G) <= 0):
            raise ValueError("gains must be nonnegative with a positive diagonal")
        object.__setattr__(self, "G", G)

    @classmethod
    def from_coordinates(cls, coords, links, rho: float = 4.0) -> "GainMatrix":
        """Gains between link endpoints; ``links`` holds (tx_node, rx_node) pairs.

        A node never interferes with its own reception, so ``G[j, l]`` is 0
        when link j transmits from the receiver of link l.
        """
        coords = np.asarray(coords, dtype=float)
        tx = np.array([o for o, _ in links])
        rx = np.array([d for _, d in links])
        same = tx[:, None] == rx[None, :]
        dist = np.linalg.norm(coords[tx][:, None, :] - coords[rx][None, :, :], axis=-1)
        return cls(np.where(same, 0.0, path_gain(np.where(same, 1.0, dist), rho)))

    @classmethod
    def from_file(cls, path) -> "GainMatrix":
        """Row-major whitespace-separated matrix file."""
        return cls(np.loadtxt(path, ndmin=2))

    @property
    def n_links(self) -> int:
        return self.G.shape[0]


def _gain(G) -> np.ndarray:
    return G.G if isinstance(G, GainMatrix) else np.asarray(G, dtype=float)


def interference(p, G, noise) -> np.ndarray:
    """Noise plus interference at each receiver: ``sigma_l^2 + sum_{j != l} g_jl p_j``."""
    G = _gain(G)
    p = np.asarray(p, dtype=float)
    return np.asarray(noise, dtype=float) + p @ G - np.diag(G) * p


def sinr(p, G, noise) -> np.ndarray:
    G = _gain(G)
    p = np.asarray(p, dtype=float)
    return np.diag(G) * p / interference(p, G, noise)


def link_rate(gamma, W: float = 1.0):
    """Shannon rate ``W log2(1 + gamma)``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    r = W * np.log2(1.0 + gamma)
    return float(r) if r.ndim == 0 else r
