import numpy as np
import pytest

from ramcast.capacity import rate_bounds
from ramcast.channel import AccessProbabilities, ChannelModel
from ramcast.gf2 import expected_decode_count
from ramcast.rlc_markov import (
    ChainError,
    absorbing_entry_sets,
    build_chain,
    expected_service_time,
    rlc_service_rates,
    service_rate,
    service_rate_from_pi,
    service_rates_grid,
    steady_state,
)

from conftest import random_channel

PERFECT = ChannelModel(q_solo=((1.0, 1.0), (1.0, 1.0)), q_joint=((1.0, 1.0), (1.0, 1.0)))
ACCESS = AccessProbabilities(0.5, 0.5)


def test_k1_state_space(strong):
    chain = build_chain(strong, ACCESS, K=1)
    assert set(chain.states) == {(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 1, 1)}


@pytest.mark.parametrize("K", [1, 2, 3, 6])
def test_absorbing_state_count(strong, K):
    chain = build_chain(strong, ACCESS, K=K)
    assert len(chain.absorbing_states) == K + 1
    assert all(i == K and j == K for i, j, _ in chain.absorbing_states)


def test_absorbing_entry_sets_examples():
    sets4 = absorbing_entry_sets(4)
    assert len(sets4) == 5
    assert len(sets4[4]) == 3
    assert sets4[4] == {(3, 4, 3), (4, 3, 3), (3, 3, 3)}
    assert sets4[0] == {(3, 4, 0), (4, 3, 0)}
    sets1 = absorbing_entry_sets(1)
    assert sets1[0] == {(0, 1, 0), (1, 0, 0)}
    assert sets1[1] == {(0, 1, 0), (1, 0, 0), (0, 0, 0)}


def test_absorbing_entry_sets_match_chain_edges(strong):
    K = 3
    chain = build_chain(strong, ACCESS, K=K)
    sets = absorbing_entry_sets(K)
    idx = {s: n for n, s in enumerate(chain.states)}
    for k in range(K + 1):
        target = idx[(K, K, k)]
        preds = {
            chain.states[s]
            for s, d in zip(chain.e_src.tolist(), chain.e_dst.tolist())
            if d == target
        }
        assert preds <= sets[k]


@pytest.mark.parametrize("variant", ["paper", "exact"])
@pytest.mark.parametrize("K", [1, 2, 3, 4, 5, 6, 7, 8])
def test_row_sums_are_stochastic(K, variant):
    rng = np.random.default_rng(100 + K)
    for _ in range(4):
        ch = random_channel(rng)
        access = AccessProbabilities(*rng.uniform(0, 1, 2))
        source = int(rng.integers(1, 3))
        chain = build_chain(ch, access, source=source, K=K, variant=variant)
        assert float(np.abs(chain.row_sums() - 1.0).max()) <= 1e-12


@pytest.mark.parametrize("variant", ["paper", "exact"])
def test_transitions_only_upward(strong, variant):
    chain = build_chain(strong, ACCESS, K=4, variant=variant)
    level = {s: sum(s) for s in chain.states}
    for s, d in zip(chain.e_src.tolist(), chain.e_dst.tolist()):
        assert level[chain.states[d]] > level[chain.states[s]]


def test_perfect_channel_k1_hand_solve():
    # Single source on a perfect channel: the only randomness is the fair
    # coefficient bit, so the service time is geometric(1/2) and the rate
    # is 1/2 packet/slot; the closed chain splits 2/3 : 1/3 between the
    # start state and the completion state.
    chain = build_chain(PERFECT, AccessProbabilities(1.0, 0.0), source=1,
                        other_backlogged=False, K=1)
    assert expected_service_time(chain) == pytest.approx(2.0, abs=1e-12)
    assert service_rate(chain) == pytest.approx(0.5, abs=1e-12)
    pi = steady_state(chain, method="dense")
    lookup = {s: p for s, p in zip(chain.states, pi)}
    assert lookup[(0, 0, 0)] == pytest.approx(2 / 3, abs=1e-12)
    assert lookup[(1, 1, 1)] == pytest.approx(1 / 3, abs=1e-12)
    assert service_rate_from_pi(chain, pi) == pytest.approx(0.5, abs=1e-12)


def test_steady_state_sums_to_one(strong, weak):
    for ch in (strong, weak):
        for K in (1, 2, 5):
            chain = build_chain(ch, ACCESS, K=K)
            pi = steady_state(chain, method="dense")
            assert pi.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(pi >= 0)


def test_steady_state_methods_agree_at_k16(strong):
    chain = build_chain(strong, ACCESS, K=16)
    dense = steady_state(chain, method="dense")
    power = steady_state(chain, method="power")
    dp = steady_state(chain, method="dp")
    assert float(np.abs(dense - power).max()) < 1e-10
    assert float(np.abs(dense - dp).max()) < 1e-10


@pytest.mark.parametrize("variant", ["paper", "exact"])
@pytest.mark.parametrize("K", [1, 2, 4, 8])
def test_flux_formula_equals_renewal_rate(strong, K, variant):
    chain = build_chain(strong, ACCESS, K=K, variant=variant)
    pi = steady_state(chain, method="dense")
    assert service_rate_from_pi(chain, pi) == pytest.approx(
        service_rate(chain), abs=1e-10
    )


def test_rlc_service_rates_structure(strong):
    rates = rlc_service_rates(strong, ACCESS, K=2)
    assert rates.policy == "rlc"
    assert rates.generation_size == 2
    for n in (0, 1):
        assert 0.0 <= rates.backlogged[n] <= rates.empty[n] <= 1.0


def test_rate_dominated_by_capacity_bound(strong, weak):
    for ch in (strong, weak):
        grid = np.linspace(0, 1, 6)
        P1, P2 = np.meshgrid(grid, grid, indexing="ij")
        p1s, p2s = P1.ravel(), P2.ravel()
        for K in (1, 3):
            m1, m2 = service_rates_grid(ch, p1s, p2s, K)
            for a, b, x, y in zip(p1s, p2s, m1, m2):
                rb = rate_bounds(ch, AccessProbabilities(float(a), float(b)))
                assert x <= rb.r1_max + 1e-12
                assert y <= rb.r2_max + 1e-12


def test_rate_grows_with_k_toward_bound(strong):
    bound = rate_bounds(strong, ACCESS).r1_max
    rates = [
        service_rate(build_chain(strong, ACCESS, K=K)) for K in (1, 2, 4, 8, 16, 32)
    ]
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert all(r < bound for r in rates)
    assert bound - rates[-1] < 0.1 * bound


def test_degenerate_destination_wald_identity():
    # Destination 2 always receives, so the service time is the dest-1
    # decode time: E[T] = E[N] / (p1 * phi1) and mu = K * p1 * phi1 / E[N].
    ch = ChannelModel(q_solo=((0.8, 1.0), (0.7, 0.8)), q_joint=((0.5, 1.0), (0.6, 0.6)))
    access = AccessProbabilities(0.6, 0.4)
    q_eff = 0.6 * (0.8 * 0.6 + 0.5 * 0.4)
    for K in (1, 2, 4, 8):
        wald = K * q_eff / expected_decode_count(K)
        exact = service_rate(build_chain(ch, access, source=1, K=K, variant="exact"))
        assert exact == pytest.approx(wald, abs=1e-9)
        # The published table's count-based correlation coordinate only
        # approximates this identity.
        paper = service_rate(build_chain(ch, access, source=1, K=K, variant="paper"))
        assert paper == pytest.approx(wald, rel=0.02)


def test_paper_variant_k1_matches_exact(strong):
    for p in (0.3, 0.7, 1.0):
        access = AccessProbabilities(p, 0.4)
        a = service_rate(build_chain(strong, access, K=1, variant="paper"))
        b = service_rate(build_chain(strong, access, K=1, variant="exact"))
        assert a == pytest.approx(b, abs=1e-12)


def test_dead_parameters_give_zero_rate(strong):
    assert service_rate(build_chain(strong, AccessProbabilities(0.0, 0.5), K=2)) == 0.0
    dead = ChannelModel(q_solo=((0.0, 0.0), (0.0, 0.0)), q_joint=((0.0, 0.0), (0.0, 0.0)),
                        relax_zero_joint=True)
    assert service_rate(build_chain(dead, ACCESS, K=1)) == 0.0


def test_build_chain_validates_parameters(strong):
    with pytest.raises(ChainError, match="K must be in \\[1"):
        build_chain(strong, ACCESS, K=0)
    with pytest.raises(ChainError, match="K must be in \\[1"):
        build_chain(strong, ACCESS, K=65)
    with pytest.raises(ChainError):
        build_chain(strong, ACCESS, K=2, variant="approx")
    with pytest.raises(ChainError):
        build_chain(strong, ACCESS, source=3, K=2)


def test_grid_jobs_deterministic(strong):
    p1s = np.linspace(0, 1, 9)
    p2s = np.linspace(1, 0, 9)
    seq = service_rates_grid(strong, p1s, p2s, 2, jobs=1)
    par = service_rates_grid(strong, p1s, p2s, 2, jobs=2)
    assert np.array_equal(seq[0], par[0])
    assert np.array_equal(seq[1], par[1])
