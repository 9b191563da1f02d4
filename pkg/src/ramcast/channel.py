"""Stochastic channel model shared by every analysis module.

Two sources (n = 1, 2) multicast to two destinations (m = 1, 2) over a
slotted erasure channel with multipacket reception.  A transmission from
source n is received at destination m with probability ``q_solo[n][m]``
when n transmits alone and ``q_joint[n][m]`` when both sources transmit
in the same slot.  Links to different destinations erase independently.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "ChannelError",
    "ChannelModel",
    "AccessProbabilities",
    "ArrivalRates",
    "validate",
    "success_prob",
    "collision_channel",
    "strong_mpr",
    "weak_mpr",
    "PRESETS",
    "load_channel",
]

Matrix2 = tuple[tuple[float, float], tuple[float, float]]


class ChannelError(ValueError):
    """Raised when a channel model or rate parameter violates its invariants."""


@dataclass(frozen=True)
class ChannelModel:
    """Reception probabilities indexed [source-1][destination-1].

    ``relax_zero_joint`` permits q_solo == q_joint on links where
    q_joint is exactly 0 (set by the collision-channel constructor so
    that degenerate links never trip the strictness check).
    """

    q_solo: Matrix2
    q_joint: Matrix2
    relax_zero_joint: bool = False

    def solo(self, source: int, dest: int) -> float:
        return self.q_solo[source - 1][dest - 1]

    def joint(self, source: int, dest: int) -> float:
        return self.q_joint[source - 1][dest - 1]

    def as_dict(self) -> dict[str, float]:
        """Flat key/value form, matching the config-file schema."""
        out: dict[str, float] = {}
        for n in (1, 2):
            for m in (1, 2):
                out[f"q_solo.{n}.{m}"] = self.solo(n, m)
                out[f"q_joint.{n}.{m}"] = self.joint(n, m)
        return out


def validate(channel: ChannelModel) -> ChannelModel:
    """Check ranges and the interference-never-helps ordering.

    Every entry must lie in [0, 1] and q_solo must strictly exceed
    q_joint on each link (relaxed to >= where q_joint == 0 if the model
    was built with ``relax_zero_joint``).  Returns the model unchanged.
    """
    for name, mat in (("q_solo", channel.q_solo), ("q_joint", channel.q_joint)):
        for n in (1, 2):
            for m in (1, 2):
                v = mat[n - 1][m - 1]
                if not 0.0 <= v <= 1.0:
                    raise ChannelError(f"{name}[{n}][{m}]={v!r} outside [0, 1]")
    for n in (1, 2):
        for m in (1, 2):
            solo = channel.solo(n, m)
            joint = channel.joint(n, m)
            if channel.relax_zero_joint and joint == 0.0:
                if solo < joint:
                    raise ChannelError(
                        f"q_solo[{n}][{m}]={solo!r} < q_joint[{n}][{m}]={joint!r}"
                    )
                continue
            if not solo > joint:
                raise ChannelError(
                    f"q_solo[{n}][{m}]={solo!r} must strictly exceed "
                    f"q_joint[{n}][{m}]={joint!r}"
                )
    return channel


def success_prob(
    channel: ChannelModel, transmitter: int, dest: int, other_transmits: bool
) -> float:
    """Per-slot reception probability for one link, given the transmit pattern."""
    if transmitter not in (1, 2):
        raise ChannelError(f"transmitter must be 1 or 2, got {transmitter!r}")
    if dest not in (1, 2):
        raise ChannelError(f"dest must be 1 or 2, got {dest!r}")
    if other_transmits:
        return channel.joint(transmitter, dest)
    return channel.solo(transmitter, dest)


def collision_channel() -> ChannelModel:
    """Classic collision channel: solo transmissions always succeed, overlaps never."""
    ones = ((1.0, 1.0), (1.0, 1.0))
    zeros = ((0.0, 0.0), (0.0, 0.0))
    return ChannelModel(q_solo=ones, q_joint=zeros, relax_zero_joint=True)


def strong_mpr() -> ChannelModel:
    """Good channel: solo 0.8 (own destination) / 0.7 (cross), joint 0.6."""
    return ChannelModel(
        q_solo=((0.8, 0.7), (0.7, 0.8)),
        q_joint=((0.6, 0.6), (0.6, 0.6)),
    )


def weak_mpr() -> ChannelModel:
    """Poor channel: same solo probabilities as strong_mpr, joint 0.2."""
    return ChannelModel(
        q_solo=((0.8, 0.7), (0.7, 0.8)),
        q_joint=((0.2, 0.2), (0.2, 0.2)),
    )


PRESETS = {
    "collision": collision_channel,
    "strong_mpr": strong_mpr,
    "weak_mpr": weak_mpr,
}

_REQUIRED_KEYS = [
    f"{kind}.{n}.{m}" for kind in ("q_solo", "q_joint") for n in (1, 2) for m in (1, 2)
]


def _parse_keyvalue(text: str) -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, val = line.partition(sep)
                break
        else:
            raise ChannelError(f"line {lineno}: expected 'key = value', got {raw!r}")
        values[key.strip()] = val.strip()
    return values


def load_channel(source: str | Path) -> ChannelModel:
    """Build a validated channel from a preset name or a config file.

    Config files are either a JSON object or plain ``key = value`` lines
    with keys ``q_solo.n.m`` / ``q_joint.n.m`` (n, m in {1, 2}) and an
    optional boolean ``relax_zero_joint``.
    """
    if isinstance(source, str) and source in PRESETS:
        return validate(PRESETS[source]())
    path = Path(source)
    if not path.exists():
        raise ChannelError(
            f"unknown channel {source!r}: not a preset "
            f"({', '.join(sorted(PRESETS))}) and no such file"
        )
    text = path.read_text(encoding="utf-8")
    try:
        values = json.loads(text)
        if not isinstance(values, dict):
            raise ChannelError(f"{path}: JSON channel config must be an object")
    except json.JSONDecodeError:
        values = _parse_keyvalue(text)
    missing = [k for k in _REQUIRED_KEYS if k not in values]
    if missing:
        raise ChannelError(f"{path}: missing channel keys: {', '.join(missing)}")

    def grab(kind: str) -> Matrix2:
        rows = []
        for n in (1, 2):
            row = []
            for m in (1, 2):
                raw = values[f"{kind}.{n}.{m}"]
                try:
                    row.append(float(raw))
                except (TypeError, ValueError):
                    raise ChannelError(
                        f"{path}: {kind}.{n}.{m}={raw!r} is not a number"
                    ) from None
            rows.append((row[0], row[1]))
        return (rows[0], rows[1])

    relax_raw = values.get("relax_zero_joint", False)
    relax = relax_raw if isinstance(relax_raw, bool) else str(relax_raw).lower() in (
        "1",
        "true",
        "yes",
    )
    return validate(ChannelModel(grab("q_solo"), grab("q_joint"), relax_zero_joint=relax))


@dataclass(frozen=True)
class AccessProbabilities:
    """Per-slot transmission probabilities of the two backlogged sources."""

    p1: float
    p2: float

    def __post_init__(self) -> None:
        for name, v in (("p1", self.p1), ("p2", self.p2)):
            if not 0.0 <= v <= 1.0:
                raise ChannelError(f"{name}={v!r} outside [0, 1]")

    def of(self, source: int) -> float:
        return self.p1 if source == 1 else self.p2

    def other(self, source: int) -> float:
        return self.p2 if source == 1 else self.p1


@dataclass(frozen=True)
class ArrivalRates:
    """Bernoulli arrival rates (packets/slot) at the two sources."""

    lambda1: float
    lambda2: float

    def __post_init__(self) -> None:
        for name, v in (("lambda1", self.lambda1), ("lambda2", self.lambda2)):
            if v < 0.0:
                raise ChannelError(f"{name}={v!r} must be >= 0")

    def of(self, source: int) -> float:
        return self.lambda1 if source == 1 else self.lambda2
