from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from ramcast.channel import AccessProbabilities, ChannelModel, strong_mpr, weak_mpr


@pytest.fixture
def strong():
    return strong_mpr()


@pytest.fixture
def weak():
    return weak_mpr()


def random_channel(rng: np.random.Generator) -> ChannelModel:
    """A random valid channel: q_joint strictly below q_solo on every link."""
    solo = rng.uniform(0.05, 1.0, size=4)
    joint = solo * rng.uniform(0.0, 0.98, size=4)
    return ChannelModel(
        q_solo=((solo[0], solo[1]), (solo[2], solo[3])),
        q_joint=((joint[0], joint[1]), (joint[2], joint[3])),
    )


@st.composite
def channel_models(draw) -> ChannelModel:
    probs = st.floats(0.05, 1.0, allow_nan=False)
    fracs = st.floats(0.0, 0.98, allow_nan=False)
    solo = [draw(probs) for _ in range(4)]
    joint = [s * draw(fracs) for s in solo]
    return ChannelModel(
        q_solo=((solo[0], solo[1]), (solo[2], solo[3])),
        q_joint=((joint[0], joint[1]), (joint[2], joint[3])),
    )


@st.composite
def access_probs(draw) -> AccessProbabilities:
    p = st.floats(0.0, 1.0, allow_nan=False)
    return AccessProbabilities(draw(p), draw(p))
