"""Region geometry: Pareto frontiers, closures over (p1, p2), containment.

The achievable-rate regions produced elsewhere in the package are all
"closures over the access-probability square": sweep (p1, p2) over a
grid, evaluate a rate pair at each point, and keep the Pareto-maximal
pairs.  This module owns that reduction plus the per-point stability
region (union of the two dominant-system constraint sets) and the
containment test used to compare frontiers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "RatePoint",
    "FrontierPoint",
    "RegionFrontier",
    "StabilityRegion",
    "p_grid",
    "pareto_frontier",
    "frontier_value",
    "frontier_contains",
    "stability_region_at",
    "stable_equals_throughput_frontier",
    "theorem2_overshoot",
]


@dataclass(frozen=True)
class RatePoint:
    """A rate pair in packets/slot; both coordinates nonnegative."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rate point ({self.x}, {self.y}) must be nonnegative")


@dataclass(frozen=True)
class FrontierPoint:
    """A Pareto-maximal rate pair plus the (p1, p2) witness that achieved it."""

    x: float
    y: float
    p1: float
    p2: float


@dataclass
class RegionFrontier:
    """Pareto frontier of a swept region.

    Points are sorted by x strictly increasing with y strictly
    decreasing; no point dominates another.  ``kind`` is one of
    "capacity", "retrans" or "rlc" (with ``K`` set for rlc).
    """

    kind: str
    points: list[FrontierPoint]
    grid_step: float
    K: int | None = None

    def xs(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    def ys(self) -> np.ndarray:
        return np.array([p.y for p in self.points])

    def max_x(self) -> float:
        return self.points[-1].x if self.points else 0.0


def p_grid(step: float) -> np.ndarray:
    """Uniform grid over [0, 1] whose spacing is as close to ``step`` as divides 1."""
    if not 0.0 < step <= 0.1:
        raise ValueError(f"grid step must be in (0, 0.1], got {step!r}")
    n = max(1, int(round(1.0 / step)))
    return np.linspace(0.0, 1.0, n + 1)


def pareto_frontier(
    points: Iterable[tuple[float, float, float, float]]
) -> list[FrontierPoint]:
    """Reduce (x, y, p1, p2) records to the Pareto-maximal set.

    Dominance ties (identical x and y) keep the lexicographically
    smallest (p1, p2) witness so that repeated sweeps are reproducible.
    """
    recs = sorted(points, key=lambda r: (-r[0], -r[1], r[2], r[3]))
    out: list[FrontierPoint] = []
    best_y = -np.inf
    for x, y, p1, p2 in recs:
        if y > best_y:
            out.append(FrontierPoint(x, y, p1, p2))
            best_y = y
    out.reverse()
    return out


def frontier_value(frontier: RegionFrontier, x: float | np.ndarray) -> np.ndarray:
    """Piecewise-linear frontier height at x (flat extension left of the first point)."""
    xs = frontier.xs()
    ys = frontier.ys()
    if xs.size == 0:
        raise ValueError("empty frontier")
    return np.interp(x, xs, ys)


def frontier_contains(
    outer: RegionFrontier, inner: RegionFrontier, tol: float
) -> bool:
    """True iff every inner point is dominated by the outer polyline within tol."""
    if not outer.points or not inner.points:
        raise ValueError("frontiers must be nonempty")
    xs = inner.xs()
    ys = inner.ys()
    if np.any(xs > outer.max_x() + tol):
        return False
    bound = frontier_value(outer, np.minimum(xs, outer.max_x()))
    return bool(np.all(ys <= bound + tol))


@dataclass
class StabilityRegion:
    """Stable arrival-rate set at fixed (p1, p2): union of the two
    constraint sets from the dominant-system analysis.

    Set 1 caps lambda2 by the backlogged rate of source 2 and lets
    lambda1 interpolate between the empty and backlogged rates of
    source 1; set 2 is the mirror image.
    """

    mu_1b: float
    mu_2b: float
    mu_1e: float
    mu_2e: float

    def contains(self, lambda1: float, lambda2: float) -> bool:
        if lambda1 < 0 or lambda2 < 0:
            return False
        in_l1 = (
            self.mu_2b > 0
            and lambda2 < self.mu_2b
            and lambda1
            < (lambda2 / self.mu_2b) * self.mu_1b
            + (1 - lambda2 / self.mu_2b) * self.mu_1e
        )
        in_l2 = (
            self.mu_1b > 0
            and lambda1 < self.mu_1b
            and lambda2
            < (lambda1 / self.mu_1b) * self.mu_2b
            + (1 - lambda1 / self.mu_1b) * self.mu_2e
        )
        return in_l1 or in_l2

    def lambda1_bound(self, lambda2: float) -> float:
        """Supremum of stable lambda1 at the given lambda2 (0 if none)."""
        best = 0.0
        if self.mu_2b > 0 and lambda2 < self.mu_2b:
            best = (lambda2 / self.mu_2b) * self.mu_1b + (
                1 - lambda2 / self.mu_2b
            ) * self.mu_1e
        if self.mu_1b > 0:
            # lambda2 < mu_2e + (mu_2b - mu_2e) * (lambda1 / mu_1b); the right
            # side decreases in lambda1, so solve for the admissible lambda1.
            if self.mu_2b == self.mu_2e:
                if lambda2 < self.mu_2b:
                    best = max(best, self.mu_1b)
            else:
                tmax = (lambda2 - self.mu_2e) / (self.mu_2b - self.mu_2e)
                if tmax > 1.0:
                    best = max(best, self.mu_1b)
                elif tmax > 0.0:
                    best = max(best, tmax * self.mu_1b)
        return best

    def boundary(self) -> list[RatePoint]:
        """Vertices of the closure boundary, upper-left to lower-right."""
        if self.mu_1b <= 0 and self.mu_2b <= 0:
            return [RatePoint(0.0, 0.0)]
        return [
            RatePoint(0.0, self.mu_2e),
            RatePoint(self.mu_1b, self.mu_2b),
            RatePoint(self.mu_1e, 0.0),
        ]


def stability_region_at(mu) -> StabilityRegion:
    """Stability region for one (p1, p2) point, from a ServiceRates record."""
    return StabilityRegion(
        mu_1b=mu.backlogged[0],
        mu_2b=mu.backlogged[1],
        mu_1e=mu.empty[0],
        mu_2e=mu.empty[1],
    )


def _policy_rates(
    policy: str,
    channel,
    grid_step: float,
    K: int | None,
    variant: str,
    jobs: int,
):
    """Backlogged service-rate pairs over the (p1, p2) grid for one policy."""
    from . import retrans as _retrans

    grid = p_grid(grid_step)
    P1, P2 = np.meshgrid(grid, grid, indexing="ij")
    p1s = P1.ravel()
    p2s = P2.ravel()
    if policy == "retrans":
        mu1, mu2 = _retrans.service_rates_grid(channel, p1s, p2s)
        return p1s, p2s, mu1, mu2
    if policy == "rlc":
        from . import rlc_markov as _rlc

        if K is None or K < 1:
            raise ValueError("rlc policy requires K >= 1")
        mu1, mu2 = _rlc.service_rates_grid(
            channel, p1s, p2s, K, variant=variant, jobs=jobs
        )
        return p1s, p2s, mu1, mu2
    raise ValueError(f"unknown policy {policy!r}")


def stable_equals_throughput_frontier(
    policy: str,
    channel,
    grid_step: float = 0.01,
    K: int | None = None,
    variant: str = "paper",
    jobs: int = 1,
) -> RegionFrontier:
    """Stable-throughput frontier for a policy: Pareto closure of the
    backlogged service-rate pairs over the (p1, p2) grid.

    The stable region coincides with this saturated-throughput region
    for the two-source system, so the Pareto frontier of (mu_1b, mu_2b)
    is the stable-throughput frontier.
    """
    p1s, p2s, mu1, mu2 = _policy_rates(policy, channel, grid_step, K, variant, jobs)
    pts = pareto_frontier(zip(mu1.tolist(), mu2.tolist(), p1s.tolist(), p2s.tolist()))
    return RegionFrontier(
        kind=policy, points=pts, grid_step=grid_step, K=K if policy == "rlc" else None
    )


def theorem2_overshoot(
    policy: str,
    channel,
    grid_step: float = 0.05,
    K: int | None = None,
    variant: str = "paper",
    samples_per_edge: int = 9,
) -> float:
    """Worst overshoot of any per-point stability region beyond the frontier.

    For every grid (p1, p2), samples the boundary of the per-point
    stability region and measures how far it pokes above the policy's
    swept frontier polyline.  A small positive value bounded by the grid
    discretization confirms that the union of per-point regions does not
    exceed the frontier.
    """
    from . import retrans as _retrans

    frontier = stable_equals_throughput_frontier(
        policy, channel, grid_step, K=K, variant=variant
    )
    grid = p_grid(grid_step)
    worst = 0.0
    for p1 in grid:
        for p2 in grid:
            if policy == "retrans":
                from .channel import AccessProbabilities

                rates = _retrans.retrans_service_rates(
                    channel, AccessProbabilities(float(p1), float(p2))
                )
            else:
                from . import rlc_markov as _rlc
                from .channel import AccessProbabilities

                rates = _rlc.rlc_service_rates(
                    channel,
                    AccessProbabilities(float(p1), float(p2)),
                    K or 1,
                    variant=variant,
                )
            region = stability_region_at(rates)
            if region.mu_1b <= 0 or region.mu_2b <= 0:
                continue
            for t in np.linspace(0.0, 1.0, samples_per_edge):
                l2 = t * region.mu_2b
                l1 = region.lambda1_bound(l2)
                if l1 <= frontier.max_x():
                    bound = float(frontier_value(frontier, l1))
                    worst = max(worst, l2 - bound)
                else:
                    worst = max(worst, l1 - frontier.max_x())
    return worst
