"""Capacity and stable-throughput analysis of two-source random-access
multicast over an erasure channel with multipacket reception."""

from .channel import (
    AccessProbabilities,
    ArrivalRates,
    ChannelError,
    ChannelModel,
    collision_channel,
    load_channel,
    strong_mpr,
    success_prob,
    validate,
    weak_mpr,
)
from .capacity import (
    MutualInfoReport,
    RateBounds,
    binary_entropy,
    capacity_frontier,
    mutual_info,
    rate_bounds,
)
from .retrans import (
    ServiceRates,
    SuccessParams,
    jensen_bound,
    retrans_service_rates,
    success_params,
)
from .gf2 import (
    BinaryMatrix,
    RankDistribution,
    decode,
    encode,
    expected_decode_count,
    is_innovative,
    rank,
    rank_cdf,
    rank_distribution,
    rank_pmf,
)
from .rlc_markov import (
    ChainModel,
    absorbing_entry_sets,
    build_chain,
    rlc_service_rates,
    service_rate,
    steady_state,
)
from .regions import (
    RegionFrontier,
    frontier_contains,
    pareto_frontier,
    stability_region_at,
    stable_equals_throughput_frontier,
)
from .sim import SimConfig, SimResult, estimate_service_rate, run, stability_probe

__version__ = "0.1.0"
