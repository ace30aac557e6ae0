"""Hypothesis strategies shared by the test modules."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from bpd import FiniteMdp


@st.composite
def small_mdps(draw, max_states: int = 3, max_actions: int = 3, gamma=None) -> FiniteMdp:
    """Random dense MDPs with gamma < 1 and no terminals."""
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    seed = draw(st.integers(0, 2**32 - 1))
    g = draw(st.floats(0.1, 0.97)) if gamma is None else gamma
    rng = np.random.default_rng(seed)
    T = rng.random((S, A, S)) ** 3
    T /= T.sum(axis=2, keepdims=True)
    R = rng.normal(size=(S, A))
    return FiniteMdp(S, A, T, R, g)


def policies_for(mdp: FiniteMdp):
    return st.lists(
        st.integers(0, mdp.num_actions - 1), min_size=mdp.num_states, max_size=mdp.num_states
    ).map(tuple)
