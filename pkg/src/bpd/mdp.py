"""Finite tabular MDPs: representation, validation, exact and optimal values, rollouts."""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-12
VI_TOL = 1e-10
VI_MAX_ITERS = 1_000_000
DIRECT_SOLVE_MAX_STATES = 512


class InvalidMdpError(ValueError):
    """Raised when an operation needs a valid MDP and gets one that is not."""


class MdpSchemaError(ValueError):
    """Raised by the JSON loader; ``messages`` holds one entry per violation."""

    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Tabular MDP with a uniform action count, start state and absorbing terminals.

    ``transitions[s, a, s2]`` is the probability of moving to ``s2``; ``rewards[s, a]``
    is the expected immediate reward for taking ``a`` in ``s``. Arrays are frozen
    (read-only) after construction.
    """

    num_states: int
    num_actions: int
    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    start_state: int = 0
    terminals: frozenset[int] = frozenset()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        transitions = np.array(self.transitions, dtype=float)
        rewards = np.array(self.rewards, dtype=float)
        S, A = int(self.num_states), int(self.num_actions)
        if S < 1 or A < 1:
            raise ValueError("num_states and num_actions must be positive")
        if transitions.shape != (S, A, S):
            raise ValueError(f"transitions has shape {transitions.shape}, expected {(S, A, S)}")
        if rewards.shape != (S, A):
            raise ValueError(f"rewards has shape {rewards.shape}, expected {(S, A)}")
        transitions.setflags(write=False)
        rewards.setflags(write=False)
        object.__setattr__(self, "num_states", S)
        object.__setattr__(self, "num_actions", A)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "start_state", int(self.start_state))
        object.__setattr__(self, "terminals", frozenset(int(t) for t in self.terminals))

    @property
    def rmax(self) -> float:
        return float(np.abs(self.rewards).max())

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_states, dtype=bool)
        mask[list(self.terminals)] = True
        return mask

    def with_arrays(self, transitions: np.ndarray, rewards: np.ndarray) -> FiniteMdp:
        return FiniteMdp(
            self.num_states,
            self.num_actions,
            transitions,
            rewards,
            self.gamma,
            self.start_state,
            self.terminals,
        )

    def action_independent(self) -> bool:
        """True when every state's next-state distribution ignores the action."""
        key = "action_independent"
        if key not in self._cache:
            T = self.transitions
            self._cache[key] = bool(np.array_equal(T, np.broadcast_to(T[:, :1, :], T.shape)))
        return self._cache[key]

    def backward_order(self) -> list[int]:
        """Non-terminal states ordered so every successor precedes its predecessors.

        Only meaningful when the non-terminal transition graph is acyclic; raises
        InvalidMdpError otherwise.
        """
        key = "backward_order"
        if key not in self._cache:
            order = _topological_order(self)
            if order is None:
                raise InvalidMdpError("transition graph over non-terminal states has a cycle")
            self._cache[key] = order[::-1]
        return self._cache[key]


@dataclass(frozen=True)
class DeterministicPolicy:
    """One action index per state."""

    actions: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, s: int) -> int:
        return self.actions[s]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.actions, dtype=np.int64)


PolicyLike = DeterministicPolicy | Sequence[int] | np.ndarray


def as_actions(mdp: FiniteMdp, pi: PolicyLike) -> np.ndarray:
    actions = pi.as_array() if isinstance(pi, DeterministicPolicy) else np.asarray(pi, dtype=np.int64)
    if actions.shape != (mdp.num_states,):
        raise ValueError(f"policy has {actions.size} entries, MDP has {mdp.num_states} states")
    if actions.min() < 0 or actions.max() >= mdp.num_actions:
        raise ValueError("policy action out of range")
    return actions


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self) -> bool:
        return self.ok


def _topological_order(mdp: FiniteMdp) -> list[int] | None:
    key = "topological_order"
    if key in mdp._cache:
        return mdp._cache[key]
    live = ~mdp.terminal_mask
    adj = mdp.transitions.any(axis=1)
    adj[~live, :] = False
    adj[:, ~live] = False
    indegree = adj.sum(axis=0)
    placed = ~live
    order: list[int] = []
    # peel off one layer of sources at a time
    while True:
        layer = np.flatnonzero(~placed & (indegree == 0))
        if layer.size == 0:
            break
        order.extend(layer.tolist())
        placed[layer] = True
        indegree = indegree - adj[layer].sum(axis=0)
    result = order if len(order) == int(live.sum()) else None
    mdp._cache[key] = result
    return result


def _is_acyclic(mdp: FiniteMdp) -> bool:
    """Nilpotency test on the non-terminal adjacency matrix by repeated squaring."""
    live = ~mdp.terminal_mask
    reach = mdp.transitions[np.ix_(live, np.arange(mdp.num_actions), live)].any(axis=1)
    reach = reach.astype(float)
    n = reach.shape[0]
    steps = 1
    # after k squarings ``reach`` marks walks of exactly 2**k edges
    while steps < n and reach.any():
        reach = np.minimum(reach @ reach, 1.0)
        steps *= 2
    return not reach.any()


STRUCTURE_CACHE_MAX_ENTRIES = 1024
STRUCTURE_CACHE_MAX_SIZE = 4096
_structure_cache: OrderedDict[tuple, dict] = OrderedDict()


def structure_memo(mdp: FiniteMdp) -> dict:
    """Scratch dict shared by every MDP with identical transitions, gamma, start and terminals.

    Lets results that ignore rewards (structural checks, occupancies) be reused across
    reward variants. Large MDPs get a private dict.
    """
    key = "structure_memo"
    if key in mdp._cache:
        return mdp._cache[key]
    if mdp.transitions.size > STRUCTURE_CACHE_MAX_SIZE:
        memo: dict = {}
    else:
        skey = (
            mdp.transitions.shape,
            mdp.gamma,
            mdp.start_state,
            tuple(sorted(mdp.terminals)),
            mdp.transitions.tobytes(),
        )
        memo = _structure_cache.get(skey)
        if memo is None:
            memo = _structure_cache[skey] = {}
            if len(_structure_cache) > STRUCTURE_CACHE_MAX_ENTRIES:
                _structure_cache.popitem(last=False)
        else:
            _structure_cache.move_to_end(skey)
    mdp._cache[key] = memo
    return memo


def _structural_problems(mdp: FiniteMdp) -> list[str]:
    memo = structure_memo(mdp)
    if "problems" in memo:
        return memo["problems"]
    problems: list[str] = []
    T = mdp.transitions
    if not 0 <= mdp.start_state < mdp.num_states:
        problems.append(f"start state {mdp.start_state} out of range")
    bad_terms = [t for t in mdp.terminals if not 0 <= t < mdp.num_states]
    if bad_terms:
        problems.append(f"terminal states out of range: {sorted(bad_terms)}")
    elif not np.isfinite(T).all():
        problems.append("non-finite transition entry")
    else:
        if not 0 < mdp.gamma <= 1:
            problems.append(f"gamma {mdp.gamma} not in (0, 1]")
        if (T < 0).any() or (T > 1).any():
            problems.append("transition entry outside [0, 1]")
        sums = T.sum(axis=2)
        for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)):
            problems.append(f"row sum T[{s}][{a}] = {sums[s, a]!r} != 1")
        for t in sorted(mdp.terminals):
            if not np.all(T[t, :, t] == 1.0):
                problems.append(f"terminal state {t} does not self-loop under every action")
        if mdp.gamma == 1.0 and not _is_acyclic(mdp):
            problems.append("not acyclic under gamma=1: non-terminal states form a cycle")
    memo["problems"] = problems
    return problems


def validate(mdp: FiniteMdp) -> ValidationReport:
    """Check the structural invariants; returns every violation found."""
    report = ValidationReport(list(_structural_problems(mdp)))
    R = mdp.rewards
    if not np.isfinite(R).all():
        report.problems.append("non-finite reward entry")
    elif mdp.terminals and all(0 <= t < mdp.num_states for t in mdp.terminals):
        term = sorted(mdp.terminals)
        for t in np.asarray(term)[np.any(R[term] != 0.0, axis=1)].tolist():
            report.problems.append(f"terminal state {t} has non-zero reward")
    return report


def require_valid(mdp: FiniteMdp) -> None:
    key = "valid"
    if key not in mdp._cache:
        mdp._cache[key] = validate(mdp)
    report = mdp._cache[key]
    if not report.ok:
        raise InvalidMdpError("; ".join(report.problems))


# --- policy evaluation -------------------------------------------------------


def evaluate_policies(mdp: FiniteMdp, actions: np.ndarray) -> np.ndarray:
    """Exact values for a batch of policies; ``actions`` has shape (B, S), result (B, S)."""
    actions = np.asarray(actions, dtype=np.int64)
    S = mdp.num_states
    B = actions.shape[0]
    states = np.arange(S)
    r_pi = mdp.rewards[states[None, :], actions]
    t_pi = mdp.transitions[states[None, :], actions]  # (B, S, S)
    if mdp.gamma == 1.0:
        values = np.zeros((B, S))
        for s in mdp.backward_order():
            values[:, s] = r_pi[:, s] + np.einsum("bj,bj->b", t_pi[:, s, :], values)
        return values
    if S <= DIRECT_SOLVE_MAX_STATES:
        system = np.eye(S)[None, :, :] - mdp.gamma * t_pi
        values = np.linalg.solve(system, r_pi[:, :, None])[:, :, 0]
    else:
        values = np.zeros((B, S))
        for _ in range(VI_MAX_ITERS):
            new = r_pi + mdp.gamma * np.einsum("bij,bj->bi", t_pi, values)
            done = np.abs(new - values).max() < VI_TOL
            values = new
            if done:
                break
    values[:, mdp.terminal_mask] = 0.0
    return values


def evaluate_policy(mdp: FiniteMdp, pi: PolicyLike) -> np.ndarray:
    """V^pi for every state. gamma < 1 solves the linear system; gamma = 1 walks the DAG."""
    return evaluate_policies(mdp, as_actions(mdp, pi)[None, :])[0]


def evaluate_policy_exact(
    mdp: FiniteMdp, pi: PolicyLike, max_denominator: int = 10**9
) -> list[Fraction]:
    """Rational V^pi for an acyclic gamma = 1 MDP.

    Float probabilities and rewards are first snapped to the nearest rational with
    denominator at most ``max_denominator`` so that entries such as ``1/3`` are
    recovered exactly.
    """
    if mdp.gamma != 1.0:
        raise ValueError("exact evaluation is only supported for gamma = 1")
    actions = as_actions(mdp, pi)
    values = [Fraction(0)] * mdp.num_states
    for s in mdp.backward_order():
        a = actions[s]
        total = Fraction(float(mdp.rewards[s, a])).limit_denominator(max_denominator)
        for s2 in np.flatnonzero(mdp.transitions[s, a]):
            p = Fraction(float(mdp.transitions[s, a, s2])).limit_denominator(max_denominator)
            total += p * values[s2]
        values[s] = total
    return values


# --- optimal / pessimal values ----------------------------------------------


def _q_from_values(mdp: FiniteMdp, values: np.ndarray) -> np.ndarray:
    return mdp.rewards + mdp.gamma * mdp.transitions @ values


def _optimal(mdp: FiniteMdp) -> tuple[np.ndarray, np.ndarray]:
    S = mdp.num_states
    live = ~mdp.terminal_mask
    if mdp.gamma == 1.0:
        values = np.zeros(S)
        for s in mdp.backward_order():
            values[s] = (mdp.rewards[s] + mdp.transitions[s] @ values).max()
        return values, _q_from_values(mdp, values)

    values = np.zeros(S)
    for _ in range(VI_MAX_ITERS):
        new = _q_from_values(mdp, values).max(axis=1)
        new[~live] = 0.0
        delta = np.abs(new - values).max()
        values = new
        if delta < VI_TOL:
            break
    # polish with exact policy iteration; switch actions only on a strict gain
    greedy = _q_from_values(mdp, values).argmax(axis=1)
    for _ in range(10 * S + 10):
        values = evaluate_policies(mdp, greedy[None, :])[0]
        q = _q_from_values(mdp, values)
        current = q[np.arange(S), greedy]
        better = q.max(axis=1) > current + 1e-12 * max(1.0, np.abs(current).max())
        if not better.any():
            break
        greedy = np.where(better, q.argmax(axis=1), greedy)
    return values, _q_from_values(mdp, values)


def optimal_values(mdp: FiniteMdp) -> tuple[np.ndarray, np.ndarray]:
    """(V*, Q*) by value iteration (gamma < 1) or backward induction (gamma = 1)."""
    require_valid(mdp)
    key = "optimal"
    if key not in mdp._cache:
        v, q = _optimal(mdp)
        v.setflags(write=False)
        q.setflags(write=False)
        mdp._cache[key] = (v, q)
    return mdp._cache[key]


def pessimal_values(mdp: FiniteMdp) -> np.ndarray:
    """Per-state minimum over policies of V^pi(s)."""
    require_valid(mdp)
    key = "pessimal"
    if key not in mdp._cache:
        flipped = mdp.with_arrays(mdp.transitions, -mdp.rewards)
        v, _ = _optimal(flipped)
        v = -v
        v.setflags(write=False)
        mdp._cache[key] = v
    return mdp._cache[key]


def value_range(mdp: FiniteMdp) -> tuple[float, float]:
    """(VMin, VMax): the tight range of V^pi(s0) over deterministic policies."""
    s0 = mdp.start_state
    return float(pessimal_values(mdp)[s0]), float(optimal_values(mdp)[0][s0])


# --- simulation --------------------------------------------------------------


def _sampling_tables(mdp: FiniteMdp) -> tuple[np.ndarray, np.ndarray]:
    key = "sampling_tables"
    if key not in mdp._cache:
        cum = np.cumsum(mdp.transitions, axis=2)
        nz = mdp.transitions > 0
        last = mdp.num_states - 1 - np.argmax(nz[:, :, ::-1], axis=2)
        mdp._cache[key] = (cum, last)
    return mdp._cache[key]


def simulate_episodes(
    mdp: FiniteMdp,
    pi: PolicyLike,
    horizon: int,
    num_episodes: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Discounted returns from s0 for ``num_episodes`` independent rollouts.

    Returns ``(returns, steps)`` where ``steps`` counts the transitions actually taken
    (episodes stop early at terminal states).
    """
    actions = as_actions(mdp, pi)
    cum, last = _sampling_tables(mdp)
    terminal = mdp.terminal_mask
    state = np.full(num_episodes, mdp.start_state, dtype=np.int64)
    alive = ~terminal[state]
    returns = np.zeros(num_episodes)
    steps = np.zeros(num_episodes, dtype=np.int64)
    discount = 1.0
    for _ in range(horizon):
        if not alive.any():
            break
        a = actions[state]
        returns += np.where(alive, discount * mdp.rewards[state, a], 0.0)
        steps += alive
        u = rng.random(num_episodes)
        nxt = (u[:, None] >= cum[state, a]).sum(axis=1)
        nxt = np.minimum(nxt, last[state, a])
        state = np.where(alive, nxt, state)
        alive &= ~terminal[state]
        discount *= mdp.gamma
    return returns, steps


def simulate_episode(
    mdp: FiniteMdp, pi: PolicyLike, horizon: int, rng: np.random.Generator
) -> float:
    """Discounted return of one rollout of at most ``horizon`` steps."""
    returns, _ = simulate_episodes(mdp, pi, horizon, 1, rng)
    return float(returns[0])


def truncated_value(mdp: FiniteMdp, pi: PolicyLike, horizon: int) -> float:
    """Expected discounted return from s0 over the first ``horizon`` steps."""
    actions = as_actions(mdp, pi)
    S = mdp.num_states
    r_pi = mdp.rewards[np.arange(S), actions]
    t_pi = mdp.transitions[np.arange(S), actions]
    dist = np.zeros(S)
    dist[mdp.start_state] = 1.0
    total = 0.0
    for t in range(horizon):
        total += mdp.gamma**t * float(dist @ r_pi)
        dist = dist @ t_pi
    return total


# --- JSON --------------------------------------------------------------------

_SCHEMA_KEYS = ("num_states", "num_actions", "gamma", "start_state", "terminals", "rewards", "transitions")


def mdp_to_dict(mdp: FiniteMdp) -> dict:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.gamma,
        "start_state": mdp.start_state,
        "terminals": sorted(mdp.terminals),
        "rewards": mdp.rewards.tolist(),
        "transitions": mdp.transitions.tolist(),
    }


def mdp_to_json(mdp: FiniteMdp) -> str:
    return json.dumps(mdp_to_dict(mdp))


def _key_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _is_number(x: object) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def mdp_from_json(text: str) -> FiniteMdp:
    """Parse the MDP JSON schema, reporting every violation with its line number."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MdpSchemaError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from exc
    if not isinstance(data, dict):
        raise MdpSchemaError(["line 1: top-level value must be an object"])

    errors: list[str] = []

    def err(key: str, msg: str) -> None:
        line = _key_line(text, key)
        errors.append(f"line {line}: {key}: {msg}" if line else f"{key}: {msg}")

    for key in _SCHEMA_KEYS:
        if key not in data:
            errors.append(f"missing key {key!r}")
    for key in sorted(set(data) - set(_SCHEMA_KEYS)):
        err(key, "unknown key")
    if errors:
        raise MdpSchemaError(errors)

    S, A = data["num_states"], data["num_actions"]
    for key in ("num_states", "num_actions"):
        if not isinstance(data[key], int) or isinstance(data[key], bool) or data[key] < 1:
            err(key, "must be a positive integer")
    if not _is_number(data["gamma"]):
        err("gamma", "must be a number")
    if not isinstance(data["start_state"], int) or isinstance(data["start_state"], bool):
        err("start_state", "must be an integer")
    if not isinstance(data["terminals"], list) or not all(
        isinstance(t, int) and not isinstance(t, bool) for t in data["terminals"]
    ):
        err("terminals", "must be a list of integers")
    if errors:
        raise MdpSchemaError(errors)

    rewards = data["rewards"]
    if not isinstance(rewards, list) or len(rewards) != S:
        err("rewards", f"must have {S} rows")
    else:
        for s, row in enumerate(rewards):
            if not isinstance(row, list) or len(row) != A or not all(map(_is_number, row)):
                err("rewards", f"row {s} must hold {A} numbers (ragged action sets are rejected)")
    transitions = data["transitions"]
    if not isinstance(transitions, list) or len(transitions) != S:
        err("transitions", f"must have {S} entries")
    else:
        for s, block in enumerate(transitions):
            if not isinstance(block, list) or len(block) != A:
                err("transitions", f"state {s} must list {A} actions (ragged action sets are rejected)")
                continue
            for a, row in enumerate(block):
                if not isinstance(row, list) or len(row) != S or not all(map(_is_number, row)):
                    err("transitions", f"[{s}][{a}] must hold {S} numbers")
    if errors:
        raise MdpSchemaError(errors)

    return FiniteMdp(
        num_states=S,
        num_actions=A,
        transitions=np.array(transitions, dtype=float),
        rewards=np.array(rewards, dtype=float),
        gamma=float(data["gamma"]),
        start_state=data["start_state"],
        terminals=frozenset(data["terminals"]),
    )


def load_mdp(path: str | Path) -> FiniteMdp:
    return mdp_from_json(Path(path).read_text())


def save_mdp(mdp: FiniteMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=1) + "\n")
