"""MDP generators: N-Chain, the 4x3 grid world, the SubsetSum reduction, rational witnesses."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .exact import bad_counts
from .mdp import FiniteMdp

# N-Chain action indices
LEFT, RIGHT = 0, 1

HARD_CHAIN = {"r_left": 0.05, "r_right": -0.2}
EASY_CHAIN = {"r_left": 0.5, "r_right": 0.0}


def n_chain(n: int, r_left: float, r_right: float, gamma: float = 0.95) -> FiniteMdp:
    """Deterministic chain of ``n`` states starting at the left end.

    ``RIGHT`` earns ``r_right`` except in the rightmost state where it self-loops for +1;
    ``LEFT`` earns ``r_left`` everywhere and self-loops at the left end.
    """
    if n < 2:
        raise ValueError("chain needs at least two states")
    T = np.zeros((n, 2, n))
    R = np.zeros((n, 2))
    for s in range(n):
        T[s, LEFT, max(s - 1, 0)] = 1.0
        T[s, RIGHT, min(s + 1, n - 1)] = 1.0
        R[s, LEFT] = r_left
        R[s, RIGHT] = r_right
    R[n - 1, RIGHT] = 1.0
    return FiniteMdp(n, 2, T, R, gamma, start_state=0)


def hard_chain(n: int, gamma: float = 0.95) -> FiniteMdp:
    return n_chain(n, gamma=gamma, **HARD_CHAIN)


def easy_chain(n: int, gamma: float = 0.95) -> FiniteMdp:
    return n_chain(n, gamma=gamma, **EASY_CHAIN)


# --- grid world --------------------------------------------------------------

GRID_WIDTH, GRID_HEIGHT = 4, 3
GRID_WALL = (2, 2)
GRID_GOAL = (4, 3)
GRID_LAVA = (4, 2)
GRID_START = (1, 1)
# up, right, down, left
GRID_MOVES = ((0, 1), (1, 0), (0, -1), (-1, 0))


@dataclass(frozen=True)
class GridSpec:
    slip: float = 0.0
    include_lava: bool = True
    gamma: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 <= self.slip <= 1.0:
            raise ValueError(f"slip {self.slip} not in [0, 1]")


def grid_cells() -> list[tuple[int, int]]:
    """Navigable cells ordered by row then column; index 0 is the start cell."""
    return [
        (x, y)
        for y in range(1, GRID_HEIGHT + 1)
        for x in range(1, GRID_WIDTH + 1)
        if (x, y) != GRID_WALL
    ]


def russell_norvig_grid(spec: GridSpec = GridSpec()) -> FiniteMdp:
    """The 4x3 grid: +1 for entering the goal, -1 for entering lava, 0 otherwise.

    With probability ``slip`` the executed action is drawn uniformly from all four.
    """
    cells = grid_cells()
    index = {c: i for i, c in enumerate(cells)}
    S, A = len(cells), len(GRID_MOVES)
    terminals = {index[GRID_GOAL]}
    if spec.include_lava:
        terminals.add(index[GRID_LAVA])
    enter_reward = np.zeros(S)
    enter_reward[index[GRID_GOAL]] = 1.0
    if spec.include_lava:
        enter_reward[index[GRID_LAVA]] = -1.0

    move = np.zeros((S, A, S))
    for (x, y), s in index.items():
        for a, (dx, dy) in enumerate(GRID_MOVES):
            target = (x + dx, y + dy)
            move[s, a, index.get(target, s)] = 1.0
    executed = (1.0 - spec.slip) * np.eye(A) + spec.slip / A
    T = np.einsum("ab,sbt->sat", executed, move)
    for t in terminals:
        T[t] = 0.0
        T[t, :, t] = 1.0
    R = T @ enter_reward
    for t in terminals:
        R[t] = 0.0
    return FiniteMdp(S, A, T, R, spec.gamma, start_state=index[GRID_START], terminals=terminals)


# --- SubsetSum reduction -----------------------------------------------------


@dataclass(frozen=True)
class SubsetSumInstance:
    elements: tuple[int, ...]
    target: int

    def __post_init__(self) -> None:
        elements = tuple(int(u) for u in self.elements)
        if not elements:
            raise ValueError("SubsetSum needs at least one element")
        if any(u < 0 for u in elements) or int(self.target) < 0:
            raise ValueError("SubsetSum elements and target must be non-negative")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "target", int(self.target))


@lru_cache(maxsize=4096)
def _subset_sum_mdp(elements: tuple[int, ...]) -> FiniteMdp:
    n = len(elements)
    S = n + 2
    s0, s_term = 0, n + 1
    T = np.zeros((S, 2, S))
    R = np.zeros((S, 2))
    T[s0, :, 1 : n + 1] = 1.0 / n
    for i, u in enumerate(elements, start=1):
        T[i, :, s_term] = 1.0
        R[i, 0] = u
    T[s_term, :, s_term] = 1.0
    return FiniteMdp(S, 2, T, R, 1.0, start_state=s0, terminals={s_term})


def subset_sum_mdp(instance: SubsetSumInstance | Sequence[int]) -> FiniteMdp:
    """Two-layer gamma = 1 MDP whose policy values are subset sums divided by N.

    States: 0 is the start, 1..N hold the elements, N+1 is terminal. Action 0 takes the
    element (reward u_i), action 1 skips it.
    """
    elements = instance.elements if isinstance(instance, SubsetSumInstance) else tuple(instance)
    return _subset_sum_mdp(tuple(int(u) for u in elements))


def subset_sum_decide_many(
    elements: Sequence[int], targets: Sequence[int], margin: float = 0.25
) -> list[bool]:
    """Decide SubsetSum for several targets via BPD differences on one MDP."""
    if not 0 < margin < 0.5:
        raise ValueError("margin must lie in (0, 1/2)")
    mdp = subset_sum_mdp(elements)
    n = len(elements)
    targets = np.asarray(targets, dtype=float)
    upper = bad_counts(mdp, (targets + margin) / n)
    lower = bad_counts(mdp, (targets - margin) / n)
    return (upper > lower).tolist()


def subset_sum_decide(instance: SubsetSumInstance, margin: float = 0.25) -> bool:
    """True iff some subset of the elements sums to the target."""
    return subset_sum_decide_many(instance.elements, [instance.target], margin)[0]


# --- small witnesses ---------------------------------------------------------


def rational_bpd_instance(z1: int, z2: int, gamma: float = 0.5) -> tuple[FiniteMdp, float]:
    """Single-state MDP and threshold whose BPD is exactly ``z1 / z2``.

    Action ``a`` self-loops with reward ``a + 1``; the threshold sits halfway between
    rewards ``z1`` and ``z1 + 1`` on the value scale.
    """
    if not (isinstance(z1, int) and isinstance(z2, int)) or z2 < 1 or not 0 <= z1 <= z2:
        raise ValueError(f"need integers 0 <= z1 <= z2, z2 >= 1 (got {z1}, {z2})")
    T = np.ones((1, z2, 1))
    R = np.arange(1, z2 + 1, dtype=float)[None, :]
    tau = (z1 + 0.5) / (1.0 - gamma)
    return FiniteMdp(1, z2, T, R, gamma), tau


def random_mdp(
    num_states: int,
    num_actions: int,
    seed: int,
    reward_low: float = 0.0,
    reward_high: float = 1.0,
    gamma: float = 0.95,
) -> FiniteMdp:
    rng = np.random.default_rng(seed)
    T = rng.random((num_states, num_actions, num_states))
    T /= T.sum(axis=2, keepdims=True)
    R = rng.uniform(reward_low, reward_high, size=(num_states, num_actions))
    return FiniteMdp(num_states, num_actions, T, R, gamma)
