import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramcast.gf2 import (
    BinaryMatrix,
    decode,
    encode,
    expected_decode_count,
    is_innovative,
    rank,
    rank_cdf,
    rank_cdf_fraction,
    rank_distribution,
    rank_pmf,
)


def test_rank_identity_and_zero():
    assert rank(BinaryMatrix.identity(5)) == 5
    zero = BinaryMatrix(3, [0, 0, 0, 0, 0])
    assert rank(zero) == 0
    assert zero.cols == 5


def test_rank_hand_example():
    m = BinaryMatrix.from_bit_columns(2, [(1, 1), (1, 1), (0, 1)])
    assert rank(m) == 2


def test_is_innovative_basics():
    empty = BinaryMatrix(4)
    assert not is_innovative(empty, 0)
    assert is_innovative(empty, 0b1010)
    m = BinaryMatrix(3, [0b001])
    assert not is_innovative(m, (1, 0, 0))
    assert is_innovative(m, (0, 1, 0))


def test_is_innovative_rejects_wide_columns():
    with pytest.raises(ValueError):
        is_innovative(BinaryMatrix(2), 0b100)


def test_rank_cdf_values():
    assert rank_cdf(1, 1) == pytest.approx(0.5, abs=1e-15)
    assert rank_cdf(2, 2) == pytest.approx(0.375, abs=1e-15)
    for K in (1, 2, 5, 20, 64):
        assert rank_cdf(K, K - 1) == 0.0


def test_rank_cdf_matches_enumeration_2x2():
    full = 0
    for cols in itertools.product(range(4), repeat=2):
        m = BinaryMatrix(2, cols)
        if rank(m) == 2:
            full += 1
    assert full == 6
    assert rank_cdf_fraction(2, 2) == Fraction(6, 16)


@pytest.mark.parametrize("K,jmax", [(1, 5), (2, 5)])
def test_rank_cdf_matches_enumeration_small(K, jmax):
    for j in range(jmax + 1):
        full = 0
        for cols in itertools.product(range(1 << K), repeat=j):
            if rank(BinaryMatrix(K, cols)) == K:
                full += 1
        assert rank_cdf_fraction(K, j) == Fraction(full, (1 << K) ** j)


def test_rank_cdf_monotone_to_one():
    for K in (1, 3, 8):
        prev = 0.0
        for j in range(K + 60):
            c = rank_cdf(K, j)
            assert c >= prev - 1e-15
            assert rank_pmf(K, j) >= -1e-15
            prev = c
        assert prev == pytest.approx(1.0, abs=1e-12)


def test_expected_decode_count_geometric_base():
    assert expected_decode_count(1) == pytest.approx(2.0, abs=1e-12)


def test_expected_decode_count_k2():
    # First innovative column is geometric(3/4), the second geometric(1/2),
    # so E[N] = 4/3 + 2 = 10/3.
    assert expected_decode_count(2) == pytest.approx(10.0 / 3.0, abs=1e-9)


def test_expected_decode_count_monte_carlo():
    rng = np.random.default_rng(42)
    K = 2
    trials = 100_000
    total = 0
    for _ in range(trials):
        basis = BinaryMatrix(K)
        n = 0
        while basis.rank < K:
            n += 1
            basis.append_column(int(rng.integers(0, 1 << K)))
        total += n
    mean = total / trials
    # std of N is about 1.4 for K=2
    assert abs(mean - expected_decode_count(K)) < 3 * 1.5 / math.sqrt(trials)


def test_overhead_ratio_bounds():
    ratios = [expected_decode_count(K) / K for K in range(1, 65)]
    assert all(1.0 <= r <= 2.0 for r in ratios)
    assert ratios[0] == pytest.approx(2.0, abs=1e-12)
    assert max(ratios) == ratios[0]
    assert ratios[63] <= 1.05


def test_rank_distribution_summary():
    dist = rank_distribution(4)
    assert dist.K == 4
    assert dist.cdf(3) == 0.0
    assert dist.pmf(4) == pytest.approx(rank_cdf(4, 4), abs=1e-15)
    assert dist.expected_n == pytest.approx(expected_decode_count(4), abs=1e-12)
    assert dist.overhead_ratio >= 1.0
    assert dist.cdf(dist.tail_cutoff) > 1 - 1e-11


@pytest.mark.parametrize("K", [1, 2, 4])
def test_decode_count_histogram_matches_pmf(K):
    rng = np.random.default_rng(7)
    trials = 60_000
    counts: dict[int, int] = {}
    for _ in range(trials):
        basis = BinaryMatrix(K)
        n = 0
        while basis.rank < K:
            n += 1
            basis.append_column(int(rng.integers(0, 1 << K)))
        counts[n] = counts.get(n, 0) + 1
    jmax = max(counts)
    for j in range(K, jmax + 1):
        p = rank_pmf(K, j)
        expected = trials * p
        if expected < 10:
            continue
        sigma = math.sqrt(trials * p * (1 - p))
        assert abs(counts.get(j, 0) - expected) <= 3 * sigma + 1


def test_encode_xors_selected_packets():
    rng = np.random.default_rng(12)
    generation = [bytes([17, 34]), bytes([255, 0]), bytes([3, 12])]
    for _ in range(40):
        payload, coeffs = encode(generation, rng)
        acc = 0
        for i in range(3):
            if (coeffs >> i) & 1:
                acc ^= int.from_bytes(generation[i], "big")
        assert payload == acc.to_bytes(2, "big")
    # the all-zero coefficient vector is allowed and yields a zero payload
    seen_zero = False
    for _ in range(200):
        payload, coeffs = encode([bytes([9])], rng)
        if coeffs == 0:
            seen_zero = True
            assert payload == bytes([0])
    assert seen_zero


def test_encode_rejects_unequal_lengths():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        encode([bytes([1]), bytes([1, 2])], rng)


def test_decode_identity_and_hand_example():
    payloads = [bytes([5]), bytes([9])]
    ident = BinaryMatrix.from_bit_columns(2, [(1, 0), (0, 1)])
    assert decode(ident, payloads) == payloads
    # columns (1,0) and (1,1) carry s1 and s1 xor s2
    m = BinaryMatrix.from_bit_columns(2, [(1, 0), (1, 1)])
    s1, s2 = bytes([0b1100]), bytes([0b1010])
    got = decode(m, [s1, bytes([0b0110])])
    assert got == [s1, s2]


def test_decode_requires_full_rank():
    m = BinaryMatrix.from_bit_columns(2, [(1, 1), (1, 1)])
    with pytest.raises(ValueError, match="rank"):
        decode(m, [bytes([1]), bytes([1])])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_encode_decode_roundtrip_exactly_at_rank_k(K, seed):
    rng = np.random.default_rng(seed)
    generation = [bytes(rng.integers(0, 256, size=6, dtype=np.uint8)) for _ in range(K)]
    matrix = BinaryMatrix(K)
    payloads = []
    innovations = 0
    for _ in range(1000):
        payload, coeffs = encode(generation, rng)
        if is_innovative(matrix, coeffs):
            innovations += 1
        matrix.append_column(coeffs)
        payloads.append(payload)
        if innovations < K:
            with pytest.raises(ValueError):
                decode(matrix, payloads)
        if matrix.rank == K:
            break
    assert matrix.rank == K
    assert decode(matrix, payloads) == generation
