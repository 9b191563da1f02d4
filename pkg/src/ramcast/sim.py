"""Slot-level Monte Carlo simulator of the two-queue multicast system.

This is the independent oracle for every analytic service rate in the
package: it draws per-slot transmissions, receptions and coefficient
vectors, tracks the actual GF(2) rank state at each destination, and
measures departure rates, service times, decode counts and queue drift.

Determinism: one named stream per random decision, spawned from the
config seed via ``numpy.random.SeedSequence(seed).spawn(10)`` in the
fixed order (arrivals 1, arrivals 2, transmit 1, transmit 2, reception
1->1, 1->2, 2->1, 2->2, coefficients 1, coefficients 2).  Streams are
consumed by slot index, so identical configs give bit-identical results.

Throughput runs track coefficient vectors only; payload bits never
influence timing and are exercised in the encode/decode round-trip
tests instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import AccessProbabilities, ArrivalRates, ChannelModel, validate

__all__ = [
    "SimConfig",
    "SourceResult",
    "SimResult",
    "RateEstimate",
    "ProbeVerdict",
    "run",
    "estimate_service_rate",
    "stability_probe",
]

_BLOCK = 1 << 15
_RATE_BATCHES = 32
_DRIFT_BATCHES = 30


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: channel, access, policy and horizon."""

    channel: ChannelModel
    access: AccessProbabilities
    arrivals: ArrivalRates = ArrivalRates(0.0, 0.0)
    policy: str = "retrans"  # "retrans" | "rlc"
    K: int = 1
    slots: int = 1_000_000
    seed: int = 42
    mode: str = "saturated"  # "saturated" | "arrivals"

    def __post_init__(self) -> None:
        if self.policy not in ("retrans", "rlc"):
            raise ValueError(f"policy must be 'retrans' or 'rlc', got {self.policy!r}")
        if self.mode not in ("saturated", "arrivals"):
            raise ValueError(f"mode must be 'saturated' or 'arrivals', got {self.mode!r}")
        if self.slots < 1:
            raise ValueError(f"slots must be >= 1, got {self.slots!r}")
        if self.policy == "rlc" and not 1 <= self.K <= 64:
            raise ValueError(f"K must be in [1, 64] for rlc, got {self.K!r}")
        validate(self.channel)


@dataclass
class SourceResult:
    """Per-source outcome of a run."""

    departures: int
    departure_rate: float
    stderr: float
    arrivals: int
    final_queue: int
    mean_queue: float
    max_queue: int
    services: int
    mean_service_time: float
    mean_decode_count: tuple[float, float] | None = None
    decode_histogram: tuple[dict[int, int], dict[int, int]] | None = None
    decode_correlation: float | None = None
    occupancy: dict[tuple[int, int, int], int] | None = None
    drift_batch_means: list[float] | None = None
    drift_batch_slots: int = 0


@dataclass
class SimResult:
    """Outcome of one run; deterministic given the config."""

    config: SimConfig
    slots: int
    seed: int
    sources: tuple[SourceResult, SourceResult]


def _basis_insert(basis: dict[int, int], v: int) -> int:
    """Insert a vector into a triangular GF(2) basis; 1 if rank grew."""
    while v:
        top = v.bit_length() - 1
        b = basis.get(top)
        if b is None:
            basis[top] = v
            return 1
        v ^= b
    return 0


def _draw_coeffs(rng: np.random.Generator, n: int, K: int) -> list[int]:
    if K < 64:
        return rng.integers(0, 1 << K, size=n, dtype=np.uint64).tolist()
    hi = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    lo = rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    return ((hi << np.uint64(32)) | lo).tolist()


def run(config: SimConfig) -> SimResult:
    """Simulate the system slot by slot and collect per-source statistics."""
    ch = config.channel
    p = (config.access.p1, config.access.p2)
    lam = (config.arrivals.lambda1, config.arrivals.lambda2)
    K = config.K if config.policy == "rlc" else 1
    slots = config.slots
    saturated = config.mode == "saturated"
    rlc = config.policy == "rlc"

    solo = ((ch.solo(1, 1), ch.solo(1, 2)), (ch.solo(2, 1), ch.solo(2, 2)))
    joint = ((ch.joint(1, 1), ch.joint(1, 2)), (ch.joint(2, 1), ch.joint(2, 2)))

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(10)]

    # Per-source mutable state.
    queue = [0, 0]
    arr = [0, 0]
    dep = [0, 0]
    qsum = [0, 0]
    qmax = [0, 0]
    svc_sum = [0, 0]
    svc_count = [0, 0]
    svc_start: list[int | None] = [0 if saturated else None, 0 if saturated else None]
    ack = [[False, False], [False, False]]
    active = [saturated, saturated]
    basis1: list[dict[int, int]] = [{}, {}]
    basis2: list[dict[int, int]] = [{}, {}]
    basisu: list[dict[int, int]] = [{}, {}]
    rank1 = [0, 0]
    rank2 = [0, 0]
    ranku = [0, 0]
    nrecv = [[0, 0], [0, 0]]
    dsum = [[0.0, 0.0], [0.0, 0.0]]
    dsumsq = [[0.0, 0.0], [0.0, 0.0]]
    dcross = [0.0, 0.0]
    dhist: list[tuple[dict[int, int], dict[int, int]]] = [({}, {}), ({}, {})]
    occ: list[dict[tuple[int, int, int], int]] = [{}, {}]

    batch_len = max(1, slots // _RATE_BATCHES)
    batch_dep = [[0] * (_RATE_BATCHES + 1) for _ in range(2)]

    drift_half = slots // 2
    drift_len = max(1, (slots - drift_half) // _DRIFT_BATCHES)
    drift_sums = [[0.0] * _DRIFT_BATCHES for _ in range(2)]

    for block_start in range(0, slots, _BLOCK):
        nblk = min(_BLOCK, slots - block_start)
        ua = (streams[0].random(nblk).tolist(), streams[1].random(nblk).tolist())
        ut = (streams[2].random(nblk).tolist(), streams[3].random(nblk).tolist())
        ur = (
            (streams[4].random(nblk).tolist(), streams[5].random(nblk).tolist()),
            (streams[6].random(nblk).tolist(), streams[7].random(nblk).tolist()),
        )
        coef = (
            _draw_coeffs(streams[8], nblk, K) if rlc else None,
            _draw_coeffs(streams[9], nblk, K) if rlc else None,
        )

        for s in range(nblk):
            t = block_start + s
            if not saturated:
                for n in (0, 1):
                    if lam[n] > 0.0 and ua[n][s] < lam[n]:
                        queue[n] += 1
                        arr[n] += 1
                        if not rlc and queue[n] == 1:
                            svc_start[n] = t
                if rlc:
                    for n in (0, 1):
                        if not active[n] and queue[n] >= K:
                            active[n] = True
                            svc_start[n] = t

            if rlc:
                for n in (0, 1):
                    if active[n]:
                        st = (rank1[n], rank2[n], rank1[n] + rank2[n] - ranku[n])
                        occ[n][st] = occ[n].get(st, 0) + 1

            if rlc:
                tx0 = active[0] and ut[0][s] < p[0]
                tx1 = active[1] and ut[1][s] < p[1]
            else:
                tx0 = (saturated or queue[0] > 0) and ut[0][s] < p[0]
                tx1 = (saturated or queue[1] > 0) and ut[1][s] < p[1]
            both = tx0 and tx1

            for n, tx in ((0, tx0), (1, tx1)):
                if not tx:
                    continue
                thr = joint[n] if both else solo[n]
                if not rlc:
                    a = ack[n]
                    if not a[0] and ur[n][0][s] < thr[0]:
                        a[0] = True
                    if not a[1] and ur[n][1][s] < thr[1]:
                        a[1] = True
                    if a[0] and a[1]:
                        dep[n] += 1
                        batch_dep[n][min(t // batch_len, _RATE_BATCHES)] += 1
                        svc_sum[n] += t - svc_start[n] + 1
                        svc_count[n] += 1
                        a[0] = a[1] = False
                        if saturated:
                            svc_start[n] = t + 1
                        else:
                            queue[n] -= 1
                            svc_start[n] = t + 1 if queue[n] > 0 else None
                else:
                    v = coef[n][s]
                    got1 = rank1[n] < K and ur[n][0][s] < thr[0]
                    got2 = rank2[n] < K and ur[n][1][s] < thr[1]
                    if got1:
                        nrecv[n][0] += 1
                        rank1[n] += _basis_insert(basis1[n], v)
                    if got2:
                        nrecv[n][1] += 1
                        rank2[n] += _basis_insert(basis2[n], v)
                    if (got1 or got2) and ranku[n] < K:
                        ranku[n] += _basis_insert(basisu[n], v)
                    if rank1[n] == K and rank2[n] == K:
                        dep[n] += K
                        batch_dep[n][min(t // batch_len, _RATE_BATCHES)] += K
                        svc_sum[n] += t - svc_start[n] + 1
                        svc_count[n] += 1
                        n1, n2 = nrecv[n]
                        dsum[n][0] += n1
                        dsum[n][1] += n2
                        dsumsq[n][0] += n1 * n1
                        dsumsq[n][1] += n2 * n2
                        dcross[n] += n1 * n2
                        dhist[n][0][n1] = dhist[n][0].get(n1, 0) + 1
                        dhist[n][1][n2] = dhist[n][1].get(n2, 0) + 1
                        basis1[n].clear()
                        basis2[n].clear()
                        basisu[n].clear()
                        rank1[n] = rank2[n] = ranku[n] = 0
                        nrecv[n][0] = nrecv[n][1] = 0
                        if saturated:
                            svc_start[n] = t + 1
                        else:
                            queue[n] -= K
                            if queue[n] >= K:
                                svc_start[n] = t + 1
                            else:
                                active[n] = False
                                svc_start[n] = None

            if not saturated:
                for n in (0, 1):
                    qn = queue[n]
                    qsum[n] += qn
                    if qn > qmax[n]:
                        qmax[n] = qn
                    if t >= drift_half:
                        b = (t - drift_half) // drift_len
                        if b < _DRIFT_BATCHES:
                            drift_sums[n][b] += qn

    sources = []
    for n in (0, 1):
        rates = [c / batch_len for c in batch_dep[n][:_RATE_BATCHES]]
        mean_rate = dep[n] / slots
        if len(rates) > 1 and slots >= _RATE_BATCHES:
            mu = sum(rates) / len(rates)
            var = sum((r - mu) ** 2 for r in rates) / (len(rates) - 1)
            stderr = math.sqrt(var / len(rates))
        else:
            stderr = float("nan")
        services = svc_count[n]
        decode_mean = None
        corr = None
        hist = None
        if rlc and services > 0:
            decode_mean = (dsum[n][0] / services, dsum[n][1] / services)
            hist = dhist[n]
            if services > 1:
                m1, m2 = decode_mean
                v1 = dsumsq[n][0] / services - m1 * m1
                v2 = dsumsq[n][1] / services - m2 * m2
                cov = dcross[n] / services - m1 * m2
                corr = cov / math.sqrt(v1 * v2) if v1 > 0 and v2 > 0 else None
        sources.append(
            SourceResult(
                departures=dep[n],
                departure_rate=mean_rate,
                stderr=stderr,
                arrivals=arr[n],
                final_queue=queue[n],
                mean_queue=qsum[n] / slots if not saturated else 0.0,
                max_queue=qmax[n],
                services=services,
                mean_service_time=svc_sum[n] / services if services else float("nan"),
                mean_decode_count=decode_mean,
                decode_histogram=hist,
                decode_correlation=corr,
                occupancy=occ[n] if rlc else None,
                drift_batch_means=[x / drift_len for x in drift_sums[n]]
                if not saturated
                else None,
                drift_batch_slots=drift_len if not saturated else 0,
            )
        )
    return SimResult(config=config, slots=slots, seed=config.seed, sources=(sources[0], sources[1]))


@dataclass
class RateEstimate:
    """Aggregated saturated departure-rate estimate for one source."""

    rate: float
    stderr: float
    replications: int

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.rate - 1.96 * self.stderr, self.rate + 1.96 * self.stderr)


def estimate_service_rate(
    config: SimConfig, replications: int = 1
) -> tuple[RateEstimate, RateEstimate]:
    """Saturated service-rate estimate per source over independent runs.

    Replication r uses seed stream ``SeedSequence((config.seed, r))``;
    a single replication falls back to the run's batch-means stderr.
    """
    if config.mode != "saturated":
        raise ValueError("service-rate estimation requires mode='saturated'")
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications!r}")
    if replications == 1:
        res = run(config)
        return tuple(
            RateEstimate(rate=s.departure_rate, stderr=s.stderr, replications=1)
            for s in res.sources
        )
    rates: list[list[float]] = [[], []]
    for r in range(replications):
        seed = int(np.random.SeedSequence((config.seed, r)).generate_state(1)[0])
        res = run(
            SimConfig(
                channel=config.channel,
                access=config.access,
                arrivals=config.arrivals,
                policy=config.policy,
                K=config.K,
                slots=config.slots,
                seed=seed,
                mode="saturated",
            )
        )
        for n in (0, 1):
            rates[n].append(res.sources[n].departure_rate)
    out = []
    for n in (0, 1):
        mu = sum(rates[n]) / replications
        var = sum((x - mu) ** 2 for x in rates[n]) / (replications - 1)
        out.append(
            RateEstimate(
                rate=mu, stderr=math.sqrt(var / replications), replications=replications
            )
        )
    return (out[0], out[1])


@dataclass
class ProbeVerdict:
    """Stability verdict for one arrival-rate point."""

    lambda1: float
    lambda2: float
    slopes: tuple[float, float]
    slope_stderrs: tuple[float, float]
    stable: bool


def _drift_slope(batch_means: list[float], batch_slots: int) -> tuple[float, float]:
    """Queue-growth slope (packets/slot) and its stderr from batch means."""
    b = len(batch_means)
    xs = [(i + 0.5) * batch_slots for i in range(b)]
    xbar = sum(xs) / b
    ybar = sum(batch_means) / b
    sxx = sum((x - xbar) ** 2 for x in xs)
    sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, batch_means))
    slope = sxy / sxx
    resid = sum((y - ybar - slope * (x - xbar)) ** 2 for x, y in zip(xs, batch_means))
    se = math.sqrt(resid / (b - 2) / sxx) if b > 2 else float("inf")
    return slope, se


def stability_probe(
    channel: ChannelModel,
    access: AccessProbabilities,
    policy: str,
    lambda_grid: list[tuple[float, float]],
    slots: int,
    K: int = 1,
    seed: int = 42,
) -> list[ProbeVerdict]:
    """Empirical stable/unstable verdict per arrival-rate point.

    A source is flagged unstable when the queue-length regression slope
    over the second half of the run exceeds 3 of its standard errors;
    the point is stable only if both sources are stable.
    """
    verdicts = []
    for lam1, lam2 in lambda_grid:
        res = run(
            SimConfig(
                channel=channel,
                access=access,
                arrivals=ArrivalRates(lam1, lam2),
                policy=policy,
                K=K,
                slots=slots,
                seed=seed,
                mode="arrivals",
            )
        )
        slopes = []
        ses = []
        stable = True
        for n in (0, 1):
            src = res.sources[n]
            slope, se = _drift_slope(src.drift_batch_means, src.drift_batch_slots)
            slopes.append(slope)
            ses.append(se)
            unstable = slope > 3 * se if se > 0 else slope > 0
            if unstable:
                stable = False
        verdicts.append(
            ProbeVerdict(
                lambda1=lam1,
                lambda2=lam2,
                slopes=(slopes[0], slopes[1]),
                slope_stderrs=(ses[0], ses[1]),
                stable=stable,
            )
        )
    return verdicts
