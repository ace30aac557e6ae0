"""The deterministic policy space: indexing, enumeration, uniform sampling, optimal counts.

Policy ``k`` is the base-|A| expansion of ``k`` with state 0 as the least significant
digit.
"""

from __future__ import annotations

import os
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator

import numpy as np

from .mdp import (
    DeterministicPolicy,
    FiniteMdp,
    PolicyLike,
    as_actions,
    evaluate_policies,
    optimal_values,
    require_valid,
    structure_memo,
)

DEFAULT_ENUMERATION_CAP = 2**24
DEFAULT_TIE_TOLERANCE = 1e-9
BLOCK_SIZE = 4096


class EnumerationCapError(RuntimeError):
    """The policy space is larger than the configured enumeration cap."""


def policy_count(mdp: FiniteMdp) -> int:
    """|A| ** |S| as an exact integer."""
    return mdp.num_actions**mdp.num_states


def policy_from_index(mdp: FiniteMdp, idx: int) -> DeterministicPolicy:
    idx = int(idx)
    if not 0 <= idx < policy_count(mdp):
        raise IndexError(f"policy index {idx} outside [0, {policy_count(mdp)})")
    actions = []
    for _ in range(mdp.num_states):
        idx, a = divmod(idx, mdp.num_actions)
        actions.append(a)
    return DeterministicPolicy(tuple(actions))


def index_from_policy(mdp: FiniteMdp, pi: PolicyLike) -> int:
    actions = as_actions(mdp, pi)
    idx = 0
    for a in reversed(actions.tolist()):
        idx = idx * mdp.num_actions + a
    return idx


def actions_for_indices_raw(num_actions: int, num_states: int, indices: np.ndarray) -> np.ndarray:
    digits = np.empty((len(indices), num_states), dtype=np.int64)
    rest = np.asarray(indices, dtype=np.int64).copy()
    for s in range(num_states):
        rest, digits[:, s] = np.divmod(rest, num_actions)
    return digits


def actions_for_indices(mdp: FiniteMdp, indices: np.ndarray) -> np.ndarray:
    """Vectorised digit expansion; ``indices`` must fit in int64."""
    return actions_for_indices_raw(mdp.num_actions, mdp.num_states, indices)


def _check_cap(mdp: FiniteMdp, cap: int) -> int:
    total = policy_count(mdp)
    if total > cap:
        raise EnumerationCapError(
            f"policy space has {total} policies, above the enumeration cap {cap}"
        )
    return total


def iter_policy_blocks(
    mdp: FiniteMdp, cap: int = DEFAULT_ENUMERATION_CAP, block_size: int = BLOCK_SIZE
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_index, actions)`` for contiguous index blocks, in index order."""
    total = _check_cap(mdp, cap)
    for start in range(0, total, block_size):
        stop = min(start + block_size, total)
        yield start, actions_for_indices(mdp, np.arange(start, stop))


def enumerate_policies(
    mdp: FiniteMdp, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[DeterministicPolicy]:
    for _, block in iter_policy_blocks(mdp, cap):
        for row in block:
            yield DeterministicPolicy(tuple(row.tolist()))


def worker_count() -> int:
    env = os.environ.get("BPD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _separable_start_values(mdp: FiniteMdp, total: int) -> np.ndarray:
    # Dynamics ignore the action, so V^pi(s0) = sum_s occupancy(s) * R(s, pi(s)).
    S = mdp.num_states
    memo = structure_memo(mdp)
    occupancy = memo.get("occupancy")
    if occupancy is None:
        mask = mdp.terminal_mask
        step = mdp.transitions[:, 0, :].copy()
        step[mask] = 0.0
        e0 = np.zeros(S)
        e0[mdp.start_state] = 1.0
        # acyclic when gamma = 1, so the system stays non-singular
        occupancy = np.linalg.solve((np.eye(S) - mdp.gamma * step).T, e0)
        occupancy[mask] = 0.0
        memo["occupancy"] = occupancy
    contrib = occupancy[:, None] * mdp.rewards  # (S, A)
    if total <= 2**16:
        return _one_hot_table(mdp.num_actions, S) @ contrib.reshape(-1)
    # state 0 is the least significant digit, so it varies fastest
    values = np.zeros(1)
    for s in range(S):
        values = (contrib[s][:, None] + values[None, :]).reshape(-1)
    return values


@lru_cache(maxsize=64)
def _one_hot_table(num_actions: int, num_states: int) -> np.ndarray:
    """Row k marks, for each state, the action policy k takes there (shape |A|^|S| x |S||A|)."""
    digits = actions_for_indices_raw(num_actions, num_states, np.arange(num_actions**num_states))
    table = np.zeros((digits.shape[0], num_states * num_actions))
    rows = np.arange(digits.shape[0])[:, None]
    table[rows, np.arange(num_states) * num_actions + digits] = 1.0
    table.setflags(write=False)
    return table


def start_values(mdp: FiniteMdp, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """V^pi(s0) for every policy, in index order (cached on the MDP)."""
    key = ("start_values", cap)
    if key in mdp._cache:
        return mdp._cache[key]
    require_valid(mdp)
    total = _check_cap(mdp, cap)
    if mdp.action_independent():
        values = _separable_start_values(mdp, total)
    else:
        s0 = mdp.start_state

        def run(block: tuple[int, np.ndarray]) -> np.ndarray:
            return evaluate_policies(mdp, block[1])[:, s0]

        blocks = list(iter_policy_blocks(mdp, cap))
        workers = min(worker_count(), len(blocks))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(run, blocks))
        else:
            parts = [run(b) for b in blocks]
        values = np.concatenate(parts)
    values.setflags(write=False)
    mdp._cache[key] = values
    return values


def sample_policies(mdp: FiniteMdp, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform policies as an (n, S) action array."""
    return rng.integers(0, mdp.num_actions, size=(n, mdp.num_states))


def sample_policy_uniform(mdp: FiniteMdp, rng: np.random.Generator) -> DeterministicPolicy:
    return DeterministicPolicy(tuple(sample_policies(mdp, 1, rng)[0].tolist()))


def count_optimal_policies(mdp: FiniteMdp, tie_tolerance: float = DEFAULT_TIE_TOLERANCE) -> int:
    """Product over states of the number of actions whose Q* is within tolerance of V*."""
    v_star, q_star = optimal_values(mdp)
    per_state = (q_star >= v_star[:, None] - tie_tolerance).sum(axis=1)
    count = 1
    for c in per_state.tolist():
        count *= int(c)
    return count
