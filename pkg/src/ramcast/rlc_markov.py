"""Rank-evolution Markov chain for the random-linear-coding policy.

For one source, the per-slot state (i, j, k) tracks how many linearly
independent coded packets each destination holds (i at destination 1,
j at destination 2) and a correlation coordinate k <= min(i, j).
States (K, K, k) complete the service of a generation; a renewal
transition (K, K, k) -> (0, 0, 0) with probability 1 models immediate
start of the next generation and closes the chain.

Two transition models are provided:

* ``variant="paper"`` -- the published transition table, where k counts
  packets that advanced both destinations simultaneously and the
  overlap between the two received spans is approximated as 2^k.
* ``variant="exact"`` -- k is the dimension of the intersection of the
  two received spans, which makes (i, j, k) a lossless state: the
  membership probabilities of a uniform coefficient vector depend only
  on the subspace dimensions, so this chain reproduces the simulated
  system exactly.  The extra state constraint k >= i + j - K applies,
  intersections can grow by 2 in a slot, and (K, K, K) is the single
  completion state.

The service rate is K packets per expected service time.  With the
renewal closure this equals K times the stationary probability flux
into the completion states divided by the stationary mass outside them
(the closure parks the chain in a completion state for one bookkeeping
slot per cycle, which is not part of the service time).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .channel import AccessProbabilities, ChannelModel
from .retrans import ServiceRates

__all__ = [
    "MAX_K",
    "ChainError",
    "SteadyStateError",
    "ChainModel",
    "build_chain",
    "absorbing_entry_sets",
    "steady_state",
    "expected_service_time",
    "service_rate",
    "rlc_service_rates",
    "service_rates_grid",
]

MAX_K = 64
State = tuple[int, int, int]


class ChainError(ValueError):
    """Raised for invalid chain parameters."""


class SteadyStateError(RuntimeError):
    """Raised when the balance equations cannot be solved reliably."""


@dataclass(frozen=True)
class _StateSpace:
    """Static state enumeration and edge topology for one (K, variant)."""

    K: int
    variant: str
    states: tuple[State, ...]
    index: dict[State, int]
    I: np.ndarray
    J: np.ndarray
    C: np.ndarray
    absorbing: np.ndarray            # state indices with i == j == K
    transient: np.ndarray
    fam_src: dict[str, np.ndarray]   # family name -> source state indices
    fam_dst: dict[str, np.ndarray]
    edge_order: np.ndarray           # permutation sorting concat edges by level
    level_state_slices: tuple[tuple[int, int], ...]
    level_edge_slices: tuple[tuple[int, int], ...]
    fam_names: tuple[str, ...]

    @property
    def n_states(self) -> int:
        return len(self.states)


def _enumerate_states(K: int, variant: str) -> list[State]:
    out = []
    for total in range(0, 3 * K + 1):
        for i in range(K + 1):
            for j in range(K + 1):
                k = total - i - j
                if k < 0 or k > min(i, j):
                    continue
                if variant == "exact" and k < i + j - K:
                    continue
                out.append((i, j, k))
    return out


_PAPER_FAMS: tuple[tuple[str, int, int, int], ...] = (
    # name, di, dj, dk
    ("move_i", 1, 0, 0),
    ("move_j", 0, 1, 0),
    ("move_ij", 1, 1, 1),
    ("bnd_i", 1, 0, 0),
    ("bnd_ik", 1, 0, 1),
    ("bnd_j", 0, 1, 0),
    ("bnd_jk", 0, 1, 1),
)

_EXACT_FAMS: tuple[tuple[str, int, int, int], ...] = (
    ("x1", 1, 0, 0),
    ("x1k", 1, 0, 1),
    ("x2", 0, 1, 0),
    ("x2k", 0, 1, 1),
    ("xb1", 1, 1, 1),
    ("xb2", 1, 1, 2),
)


@lru_cache(maxsize=None)
def _state_space(K: int, variant: str) -> _StateSpace:
    states = _enumerate_states(K, variant)
    index = {s: n for n, s in enumerate(states)}
    I = np.array([s[0] for s in states], dtype=np.int64)
    J = np.array([s[1] for s in states], dtype=np.int64)
    C = np.array([s[2] for s in states], dtype=np.int64)
    absorbing = np.flatnonzero((I == K) & (J == K))
    transient = np.flatnonzero((I < K) | (J < K))

    interior = np.flatnonzero((I < K) & (J < K))
    bnd_jK = np.flatnonzero((I < K) & (J == K))
    bnd_iK = np.flatnonzero((I == K) & (J < K))

    fams = _PAPER_FAMS if variant == "paper" else _EXACT_FAMS
    fam_src: dict[str, np.ndarray] = {}
    fam_dst: dict[str, np.ndarray] = {}
    for name, di, dj, dk in fams:
        if variant == "paper":
            base = (
                interior
                if name.startswith("move")
                else (bnd_jK if name in ("bnd_i", "bnd_ik") else bnd_iK)
            )
        else:
            base = transient
        srcs = []
        dsts = []
        for s in base:
            tgt = (int(I[s]) + di, int(J[s]) + dj, int(C[s]) + dk)
            t = index.get(tgt)
            if t is not None:
                srcs.append(s)
                dsts.append(t)
        fam_src[name] = np.array(srcs, dtype=np.int64)
        fam_dst[name] = np.array(dsts, dtype=np.int64)

    # Topological grouping: every edge strictly increases i + j + k, so
    # processing states level-by-level makes the visit-count recursion a
    # single forward pass.
    level = I + J + C
    n_levels = int(level.max()) + 1
    # states are enumerated in level order already
    level_state_slices = []
    start = 0
    for lv in range(n_levels):
        end = int(np.searchsorted(level, lv + 1))
        level_state_slices.append((start, end))
        start = end

    e_src_all = np.concatenate([fam_src[n] for n, *_ in fams]) if fams else np.array([], dtype=np.int64)
    edge_order = np.argsort(level[e_src_all], kind="stable") if e_src_all.size else np.array([], dtype=np.int64)
    e_lv = level[e_src_all][edge_order] if e_src_all.size else np.array([], dtype=np.int64)
    level_edge_slices = []
    start = 0
    for lv in range(n_levels):
        end = int(np.searchsorted(e_lv, lv + 1))
        level_edge_slices.append((start, end))
        start = end

    return _StateSpace(
        K=K,
        variant=variant,
        states=tuple(states),
        index=index,
        I=I,
        J=J,
        C=C,
        absorbing=absorbing,
        transient=transient,
        fam_src=fam_src,
        fam_dst=fam_dst,
        edge_order=edge_order,
        level_state_slices=tuple(level_state_slices),
        level_edge_slices=tuple(level_edge_slices),
        fam_names=tuple(n for n, *_ in fams),
    )


def _pow2(exp: np.ndarray) -> np.ndarray:
    """Exact powers of two for integer exponents (possibly negative)."""
    return np.ldexp(1.0, exp.astype(np.int32))


def _family_probs(
    space: _StateSpace,
    channel: ChannelModel,
    source: int,
    p_own: float,
    p_other: float,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Per-family edge probabilities and per-state self-loop probabilities."""
    K = space.K
    I, J, C = space.I, space.J, space.C
    s1, s2 = channel.solo(source, 1), channel.solo(source, 2)
    j1, j2 = channel.joint(source, 1), channel.joint(source, 2)
    p, po = p_own, p_other

    def blend(f_solo: float, f_joint: float) -> float:
        return (1.0 - po) * f_solo + po * f_joint

    ei = _pow2(I - K)
    ej = _pow2(J - K)
    ek = _pow2(C - K)
    pw = float(np.ldexp(1.0, -K))
    probs: dict[str, np.ndarray] = {}
    self_p = np.zeros(space.n_states)

    if space.variant == "paper":
        # Interior families: both destinations still collecting.
        for name in ("move_i", "move_j", "move_ij"):
            src = space.fam_src[name]
            gi, gj, gk = ei[src], ej[src], ek[src]
            if name == "move_i":
                val = p * (
                    (1 - po) * (s1 * (1 - s2) * (1 - gi) + s1 * s2 * (gj - gk))
                    + po * (j1 * (1 - j2) * (1 - gi) + j1 * j2 * (gj - gk))
                )
            elif name == "move_j":
                val = p * (
                    (1 - po) * ((1 - s1) * s2 * (1 - gj) + s1 * s2 * (gi - gk))
                    + po * ((1 - j1) * j2 * (1 - gj) + j1 * j2 * (gi - gk))
                )
            else:
                val = p * blend(s1 * s2, j1 * j2) * (1 - (gi + gj - gk))
            probs[name] = val
        # Boundary families: one destination already has full rank; only
        # the other destination's reception matters, and the published
        # rows split the advance between keeping and incrementing k with
        # a (K - k) * 2^-K weight.
        for name, q_s, q_j, gexp in (
            ("bnd_i", s1, j1, ei),
            ("bnd_j", s2, j2, ej),
        ):
            src = space.fam_src[name]
            g = gexp[src]
            kk = C[src]
            probs[name] = p * blend(q_s, q_j) * (1 - (g + (K - kk) * pw))
        for name, q_s, q_j in (("bnd_ik", s1, j1), ("bnd_jk", s2, j2)):
            src = space.fam_src[name]
            kk = C[src]
            probs[name] = p * blend(q_s, q_j) * ((K - kk) * pw)

        interior = (I < K) & (J < K)
        self_p = np.where(
            interior,
            (1 - p)
            + p
            * (
                (1 - po)
                * (
                    (1 - s1) * (1 - s2)
                    + (1 - s1) * s2 * ej
                    + s1 * (1 - s2) * ei
                    + s1 * s2 * ek
                )
                + po
                * (
                    (1 - j1) * (1 - j2)
                    + (1 - j1) * j2 * ej
                    + j1 * (1 - j2) * ei
                    + j1 * j2 * ek
                )
            ),
            0.0,
        )
        self_p = np.where(
            (I < K) & (J == K),
            (1 - p)
            + p * ((1 - po) * ((1 - s1) + s1 * ei) + po * ((1 - j1) + j1 * ei)),
            self_p,
        )
        self_p = np.where(
            (I == K) & (J < K),
            (1 - p)
            + p * ((1 - po) * ((1 - s2) + s2 * ej) + po * ((1 - j2) + j2 * ej)),
            self_p,
        )
    else:
        w1 = blend(s1 * (1 - s2), j1 * (1 - j2))
        w2 = blend((1 - s1) * s2, (1 - j1) * j2)
        wb = blend(s1 * s2, j1 * j2)
        wn = blend((1 - s1) * (1 - s2), (1 - j1) * (1 - j2))
        es = _pow2(I + J - C - K)  # sum-space fraction 2^((i + j - k) - K)
        for name in space.fam_names:
            src = space.fam_src[name]
            gi, gj, gk, gs = ei[src], ej[src], ek[src], es[src]
            if name == "x1":
                val = p * w1 * (1 - gs)
            elif name == "x1k":
                val = p * (w1 * (gs - gi) + wb * (gj - gk))
            elif name == "x2":
                val = p * w2 * (1 - gs)
            elif name == "x2k":
                val = p * (w2 * (gs - gj) + wb * (gi - gk))
            elif name == "xb1":
                val = p * wb * (1 - gs)
            else:  # xb2
                val = p * wb * (gs - gi - gj + gk)
            probs[name] = val
        self_p = (1 - p) + p * (wn + w1 * ei + w2 * ej + wb * ek)

    self_p[space.absorbing] = 0.0  # renewal transition replaces the row
    return probs, self_p


@dataclass
class ChainModel:
    """A built chain: topology plus probabilities for one parameter point."""

    K: int
    variant: str
    source: int
    p_own: float
    p_other: float
    channel: ChannelModel
    space: _StateSpace = field(repr=False)
    self_p: np.ndarray = field(repr=False)
    e_src: np.ndarray = field(repr=False)
    e_dst: np.ndarray = field(repr=False)
    e_prob: np.ndarray = field(repr=False)
    pi: np.ndarray | None = field(default=None, repr=False)

    @property
    def states(self) -> tuple[State, ...]:
        return self.space.states

    @property
    def n_states(self) -> int:
        return self.space.n_states

    def state_index(self, state: State) -> int:
        return self.space.index[state]

    @property
    def absorbing_states(self) -> list[State]:
        return [self.space.states[i] for i in self.space.absorbing]

    def row_sums(self) -> np.ndarray:
        """Per-state outgoing probability mass (renewal rows count as 1)."""
        sums = self.self_p.copy()
        np.add.at(sums, self.e_src, self.e_prob)
        sums[self.space.absorbing] = 1.0
        return sums

    def transition_matrix(self, sparse: bool = False):
        """Full row-stochastic matrix including the renewal closure."""
        n = self.n_states
        zero = self.space.index[(0, 0, 0)]
        rows = np.concatenate([np.arange(n), self.e_src, self.space.absorbing])
        cols = np.concatenate(
            [np.arange(n), self.e_dst, np.full(self.space.absorbing.size, zero)]
        )
        vals = np.concatenate(
            [self.self_p, self.e_prob, np.ones(self.space.absorbing.size)]
        )
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        if sparse:
            return mat
        return mat.toarray()


def build_chain(
    channel: ChannelModel,
    access: AccessProbabilities,
    source: int = 1,
    other_backlogged: bool = True,
    K: int = 1,
    variant: str = "paper",
) -> ChainModel:
    """Assemble the per-source chain at one parameter point.

    ``other_backlogged=False`` models the empty competing source by
    setting its access probability to 0.
    """
    if not 1 <= K <= MAX_K:
        raise ChainError(f"K must be in [1, {MAX_K}], got {K!r}")
    if variant not in ("paper", "exact"):
        raise ChainError(f"variant must be 'paper' or 'exact', got {variant!r}")
    if source not in (1, 2):
        raise ChainError(f"source must be 1 or 2, got {source!r}")
    space = _state_space(K, variant)
    p_own = access.of(source)
    p_other = access.other(source) if other_backlogged else 0.0
    probs, self_p = _family_probs(space, channel, source, p_own, p_other)
    e_src = np.concatenate([space.fam_src[n] for n in space.fam_names])
    e_dst = np.concatenate([space.fam_dst[n] for n in space.fam_names])
    e_prob = np.concatenate([probs[n] for n in space.fam_names])
    order = space.edge_order
    return ChainModel(
        K=K,
        variant=variant,
        source=source,
        p_own=p_own,
        p_other=p_other,
        channel=channel,
        space=space,
        self_p=self_p,
        e_src=e_src[order],
        e_dst=e_dst[order],
        e_prob=e_prob[order],
    )


def absorbing_entry_sets(K: int) -> list[frozenset[State]]:
    """States with a one-step transition into each completion state (K, K, k).

    Returns A_0 .. A_K; members with k - 1 < 0 or violating
    k <= min(i, j) are dropped.
    """
    if not 1 <= K <= MAX_K:
        raise ChainError(f"K must be in [1, {MAX_K}], got {K!r}")

    def valid(s: State) -> bool:
        i, j, k = s
        return 0 <= k <= min(i, j) and 0 <= i <= K and 0 <= j <= K

    out: list[frozenset[State]] = []
    for k in range(K):
        cands = [
            (K - 1, K, k),
            (K - 1, K, k - 1),
            (K, K - 1, k),
            (K, K - 1, k - 1),
            (K - 1, K - 1, k - 1),
        ]
        out.append(frozenset(s for s in cands if valid(s)))
    cands = [(K - 1, K, K - 1), (K, K - 1, K - 1), (K - 1, K - 1, K - 1)]
    out.append(frozenset(s for s in cands if valid(s)))
    return out


def _visit_counts(chain: ChainModel) -> tuple[np.ndarray, np.ndarray] | None:
    """Expected visits per renewal cycle for transient states, plus the
    per-cycle entry probabilities of the completion states.

    Returns None when the service never completes (dead parameter point).
    """
    space = chain.space
    n = space.n_states
    inflow = np.zeros(n)
    inflow[space.index[(0, 0, 0)]] = 1.0
    visits = np.zeros(n)
    e_src, e_dst, e_prob = chain.e_src, chain.e_dst, chain.e_prob
    is_abs = np.zeros(n, dtype=bool)
    is_abs[space.absorbing] = True
    for (s0, s1), (e0, e1) in zip(space.level_state_slices, space.level_edge_slices):
        idx = np.arange(s0, s1)
        idx = idx[~is_abs[idx]]
        if idx.size:
            denom = 1.0 - chain.self_p[idx]
            dead = (denom <= 1e-15) & (inflow[idx] > 0)
            if np.any(dead):
                return None
            with np.errstate(invalid="ignore", divide="ignore"):
                v = np.where(denom > 0, inflow[idx] / denom, 0.0)
            visits[idx] = v
        if e1 > e0:
            seg = slice(e0, e1)
            np.add.at(
                inflow, e_dst[seg], visits[e_src[seg]] * e_prob[seg]
            )
    flux = inflow[space.absorbing]
    return visits, flux


def expected_service_time(chain: ChainModel) -> float:
    """E[slots to complete one generation] from (0, 0, 0); inf if never."""
    vc = _visit_counts(chain)
    if vc is None:
        return float("inf")
    visits, _ = vc
    return float(visits.sum())


def service_rate(chain: ChainModel) -> float:
    """K / E[service time] in packets/slot."""
    et = expected_service_time(chain)
    if not np.isfinite(et) or et <= 0:
        return 0.0
    return chain.K / et


def steady_state(chain: ChainModel, method: str = "auto") -> np.ndarray:
    """Stationary distribution of the renewal-closed chain.

    ``method`` is "dense" (direct solve of the balance equations),
    "power" (sparse power iteration; the default above K = 16), or
    "dp" (exact renewal-cycle visit counts).  The result is cached on
    the chain.
    """
    if method == "auto":
        method = "dense" if chain.K <= 16 else "power"
    n = chain.n_states
    if method == "dp":
        vc = _visit_counts(chain)
        if vc is None:
            raise SteadyStateError("chain never reaches a completion state")
        visits, flux = vc
        pi = visits.copy()
        pi[chain.space.absorbing] = flux
        pi /= pi.sum()
    elif method == "dense":
        P = chain.transition_matrix(sparse=False)
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise SteadyStateError(f"balance equations singular: {exc}") from exc
        resid = float(np.max(np.abs(pi @ P - pi)))
        if resid > 1e-9 or np.min(pi) < -1e-9:
            raise SteadyStateError(
                f"balance solution unreliable (residual {resid:.3e}, "
                f"min {float(np.min(pi)):.3e})"
            )
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    elif method == "power":
        P = chain.transition_matrix(sparse=True)
        pi = np.full(n, 1.0 / n)
        for _ in range(2_000_000):
            nxt = pi @ P
            delta = float(np.abs(nxt - pi).sum())
            pi = nxt
            if delta < 1e-14:
                break
        else:
            raise SteadyStateError("power iteration did not converge")
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    else:
        raise ChainError(f"unknown steady-state method {method!r}")
    chain.pi = pi
    return pi


def service_rate_from_pi(chain: ChainModel, pi: np.ndarray | None = None) -> float:
    """Service rate via the stationary absorption flux.

    K times the per-slot probability of entering a completion state,
    normalized to the slots spent in service (the renewal closure parks
    one bookkeeping slot per cycle in the completion state).
    """
    if pi is None:
        pi = chain.pi if chain.pi is not None else steady_state(chain)
    is_abs = np.zeros(chain.n_states, dtype=bool)
    is_abs[chain.space.absorbing] = True
    into = is_abs[chain.e_dst]
    flux = float(np.sum(pi[chain.e_src[into]] * chain.e_prob[into]))
    mass_abs = float(pi[chain.space.absorbing].sum())
    if mass_abs >= 1.0 - 1e-15:
        return 0.0
    return chain.K * flux / (1.0 - mass_abs)


def rlc_service_rates(
    channel: ChannelModel,
    access: AccessProbabilities,
    K: int,
    variant: str = "paper",
) -> ServiceRates:
    """Backlogged and empty service rates for both sources at one (p1, p2)."""
    mu_b = []
    mu_e = []
    for source in (1, 2):
        mu_b.append(
            service_rate(build_chain(channel, access, source, True, K, variant))
        )
        mu_e.append(
            service_rate(build_chain(channel, access, source, False, K, variant))
        )
    return ServiceRates(
        backlogged=(mu_b[0], mu_b[1]),
        empty=(mu_e[0], mu_e[1]),
        policy="rlc",
        generation_size=K,
    )


def _mu_point(
    channel: ChannelModel, p_own: float, p_other: float, source: int, K: int, variant: str
) -> float:
    access = AccessProbabilities(
        p_own if source == 1 else p_other, p_other if source == 1 else p_own
    )
    return service_rate(build_chain(channel, access, source, True, K, variant))


def _grid_chunk(args) -> list[tuple[int, float, float]]:
    channel, chunk, K, variant = args
    out = []
    for idx, p1, p2 in chunk:
        mu1 = _mu_point(channel, p1, p2, 1, K, variant)
        mu2 = _mu_point(channel, p2, p1, 2, K, variant)
        out.append((idx, mu1, mu2))
    return out


def service_rates_grid(
    channel: ChannelModel,
    p1: np.ndarray,
    p2: np.ndarray,
    K: int,
    variant: str = "paper",
    jobs: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Backlogged rates (mu_1b, mu_2b) over paired access-probability arrays."""
    if not 1 <= K <= MAX_K:
        raise ChainError(f"K must be in [1, {MAX_K}], got {K!r}")
    points = [(i, float(a), float(b)) for i, (a, b) in enumerate(zip(p1, p2))]
    mu1 = np.zeros(len(points))
    mu2 = np.zeros(len(points))
    if jobs <= 1 or len(points) < 4:
        results = [_grid_chunk((channel, points, K, variant))]
    else:
        chunks = [points[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(_grid_chunk, [(channel, c, K, variant) for c in chunks])
            )
    for res in results:
        for idx, a, b in res:
            mu1[idx] = a
            mu2[idx] = b
    return mu1, mu2
