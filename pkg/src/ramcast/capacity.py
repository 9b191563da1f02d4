"""Shannon capacity region of the two-source random-access multicast system.

At fixed access probabilities the achievable rate of source 1 is capped,
at each destination m, by the per-slot probability that a packet from
source 1 lands there:

    r1(m) = p1*(1-p2)*q_solo[1][m] + p1*p2*q_joint[1][m]

and symmetrically for source 2.  The capacity region is the closure of
these caps over all (p1, p2); the finite-packet-length mutual
informations behind that statement carry an extra binary-entropy term of
protocol (timing) information per source which vanishes in packets/slot
as the packet length u grows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import AccessProbabilities, ChannelModel
from .regions import RegionFrontier, p_grid, pareto_frontier

__all__ = [
    "RateBounds",
    "MutualInfoReport",
    "binary_entropy",
    "rate_bounds",
    "rate_bounds_grid",
    "mutual_info",
    "capacity_sweep",
    "capacity_frontier",
]


def binary_entropy(p: float) -> float:
    """h_b(p) in bits, with the limit convention h_b(0) = h_b(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class RateBounds:
    """Min-over-destinations rate caps (packets/slot) at one (p1, p2)."""

    r1_max: float
    r2_max: float


def _rate_terms(channel: ChannelModel, p_own, p_other, source: int):
    """Per-destination success rates for one source; accepts scalars or arrays."""
    t1 = p_own * (1 - p_other) * channel.solo(source, 1) + p_own * p_other * channel.joint(source, 1)
    t2 = p_own * (1 - p_other) * channel.solo(source, 2) + p_own * p_other * channel.joint(source, 2)
    return t1, t2


def rate_bounds(channel: ChannelModel, access: AccessProbabilities) -> RateBounds:
    """Rate caps at fixed access probabilities (the capacity integrand)."""
    r1 = min(_rate_terms(channel, access.p1, access.p2, 1))
    r2 = min(_rate_terms(channel, access.p2, access.p1, 2))
    return RateBounds(r1_max=r1, r2_max=r2)


def rate_bounds_grid(
    channel: ChannelModel, p1: np.ndarray, p2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rate caps over arrays of access probabilities."""
    r1 = np.minimum(*_rate_terms(channel, p1, p2, 1))
    r2 = np.minimum(*_rate_terms(channel, p2, p1, 2))
    return r1, r2


@dataclass(frozen=True)
class MutualInfoReport:
    """Finite-packet-length mutual informations (bits/transmission) per destination.

    ``protocol_info[n-1]`` is the binary-entropy term carried by the
    idle/transmit decision of source n; it is reported separately and
    excluded from the packets/slot limit.
    """

    u: float
    i_x1_given_x2: tuple[float, float]
    i_x2_given_x1: tuple[float, float]
    i_joint: tuple[float, float]
    protocol_info: tuple[float, float]


def mutual_info(
    channel: ChannelModel, access: AccessProbabilities, u: float
) -> MutualInfoReport:
    """Closed-form conditional and joint mutual informations at packet length u bits."""
    if u < 1:
        raise ValueError(f"packet length u must be >= 1 bit, got {u!r}")
    h1 = binary_entropy(access.p1)
    h2 = binary_entropy(access.p2)
    r1 = _rate_terms(channel, access.p1, access.p2, 1)
    r2 = _rate_terms(channel, access.p2, access.p1, 2)
    i1 = tuple(h1 + u * r for r in r1)
    i2 = tuple(h2 + u * r for r in r2)
    # Inputs are independent, so the joint term decomposes exactly into
    # the two conditional terms; computed from the four-term expansion.
    ij = tuple(h1 + h2 + u * (ra + rb) for ra, rb in zip(r1, r2))
    return MutualInfoReport(
        u=u,
        i_x1_given_x2=i1,
        i_x2_given_x1=i2,
        i_joint=ij,
        protocol_info=(h1, h2),
    )


def capacity_sweep(
    channel: ChannelModel, grid_step: float = 0.01
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, RegionFrontier]:
    """Evaluate the rate caps over the (p1, p2) grid and reduce to a frontier.

    Returns (p1, p2, r1, r2, frontier) with the first four as flat arrays
    covering the full grid.
    """
    grid = p_grid(grid_step)
    P1, P2 = np.meshgrid(grid, grid, indexing="ij")
    p1s = P1.ravel()
    p2s = P2.ravel()
    r1, r2 = rate_bounds_grid(channel, p1s, p2s)
    frontier = RegionFrontier(
        kind="capacity",
        points=pareto_frontier(
            zip(r1.tolist(), r2.tolist(), p1s.tolist(), p2s.tolist())
        ),
        grid_step=grid_step,
    )
    return p1s, p2s, r1, r2, frontier


def capacity_frontier(channel: ChannelModel, grid_step: float = 0.01) -> RegionFrontier:
    """Pareto frontier of the capacity region, swept at the given grid step."""
    return capacity_sweep(channel, grid_step)[4]
