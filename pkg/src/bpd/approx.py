"""Sampling estimators of the good-policy density.

Two routes:

* ``gpd_additive`` draws uniform policies and reports the fraction whose start value
  clears the threshold (Hoeffding-sized sample).
* ``gpd_multiplicative`` walks the nested sets T_0 ⊇ T_1 ⊇ ... ⊇ T_|S| of policies whose
  *optimal completion* clears the threshold when only the first ``i`` states are
  controlled, estimating each ratio N_{i+1}/N_i by sampling from T_i and multiplying.

Membership in T_i depends only on the actions a policy takes in the first ``i`` states
(under ``state_order``), so controlled values are memoised per action prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from .exact import SNAP, curve_taus
from .mdp import (
    DeterministicPolicy,
    FiniteMdp,
    PolicyLike,
    as_actions,
    evaluate_policies,
    optimal_values,
    require_valid,
    value_range,
)
from .policies import (
    DEFAULT_ENUMERATION_CAP,
    EnumerationCapError,
    actions_for_indices,
    policy_count,
    sample_policies,
    sample_policy_uniform,
)

ESTIMATE_HEADER = ("tau", "method", "epsilon", "delta", "estimate", "samples_used", "seed")
_MAX_CODE = 2**62


class SamplingError(RuntimeError):
    """Rejection sampling gave up before finding an accepted draw."""


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class ApproxResult:
    estimate: float
    epsilon: float
    delta: float
    samples_used: int
    mode: Literal["additive", "multiplicative"]
    attempts: int = 0

    @property
    def bpd_estimate(self) -> float:
        return 1.0 - self.estimate


# --- additive ----------------------------------------------------------------


def additive_sample_size(epsilon: float, delta: float) -> int:
    """Two-sided Hoeffding: k = ceil(ln(2/delta) / (2 epsilon^2))."""
    _check_unit("epsilon", epsilon)
    _check_unit("delta", delta)
    return math.ceil(math.log(2.0 / delta) / (2.0 * epsilon**2))


def hoeffding_radius(samples: int, delta: float) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * samples))


def _check_unit(name: str, x: float) -> None:
    if not 0.0 < x < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {x}")


def sampled_start_values(
    mdp: FiniteMdp, samples: int, rng: np.random.Generator, block: int = 4096
) -> np.ndarray:
    """Exact V^pi(s0) for ``samples`` uniformly drawn policies."""
    require_valid(mdp)
    out = []
    for start in range(0, samples, block):
        n = min(block, samples - start)
        out.append(evaluate_policies(mdp, sample_policies(mdp, n, rng))[:, mdp.start_state])
    return np.concatenate(out) if out else np.zeros(0)


def gpd_additive(
    mdp: FiniteMdp,
    tau: float,
    epsilon: float,
    delta: float,
    rng: np.random.Generator | int | None = None,
) -> ApproxResult:
    """Fraction of uniformly sampled policies with V^pi(s0) > tau.

    Within ``epsilon`` of the true good-policy density with probability >= 1 - delta.
    """
    k = additive_sample_size(epsilon, delta)
    values = sampled_start_values(mdp, k, as_rng(rng))
    estimate = float(np.mean(values > tau + SNAP))
    return ApproxResult(estimate, epsilon, delta, k, "additive", attempts=k)


def sampled_bpd_curve(
    mdp: FiniteMdp,
    num_points: int = 12,
    samples: int = 500,
    rng: np.random.Generator | int | None = None,
    delta: float = 0.05,
) -> list[tuple[float, ApproxResult]]:
    """Additive estimates along the evenly spaced threshold grid, fresh samples per point.

    Fresh draws at every threshold mean the estimated curve need not be monotone.
    """
    rng = as_rng(rng)
    vmin, vmax = value_range(mdp)
    eps = hoeffding_radius(samples, delta)
    out = []
    for tau in curve_taus(vmin, vmax, num_points):
        values = sampled_start_values(mdp, samples, rng)
        estimate = float(np.mean(values > tau + SNAP))
        out.append((tau, ApproxResult(estimate, eps, delta, samples, "additive", samples)))
    return out


# --- controlled policies -------------------------------------------------------


@dataclass(frozen=True)
class ControlledPolicyContext:
    """Threshold ``tau`` with control over the first ``control_index`` states of ``state_order``."""

    mdp: FiniteMdp
    tau: float
    control_index: int
    state_order: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        S = self.mdp.num_states
        order = tuple(range(S)) if self.state_order is None else tuple(int(s) for s in self.state_order)
        if sorted(order) != list(range(S)):
            raise ValueError("state_order must be a permutation of the states")
        if not 0 <= self.control_index <= S:
            raise ValueError(f"control_index must lie in [0, {S}]")
        object.__setattr__(self, "state_order", order)
        object.__setattr__(self, "tau", float(self.tau))

    def at(self, control_index: int) -> ControlledPolicyContext:
        return ControlledPolicyContext(self.mdp, self.tau, control_index, self.state_order)


def _pinned_mdp(mdp: FiniteMdp, states: Sequence[int], actions: Sequence[int]) -> FiniteMdp:
    T = mdp.transitions.copy()
    R = mdp.rewards.copy()
    for s, a in zip(states, actions):
        T[s, :, :] = mdp.transitions[s, a, :]
        R[s, :] = mdp.rewards[s, a]
    return mdp.with_arrays(T, R)


def restricted_mdp(ctx: ControlledPolicyContext, pi: PolicyLike) -> FiniteMdp:
    """Copy of the MDP in which each controlled state only offers pi's action there.

    The action count stays uniform: every action of a pinned state behaves like pi's.
    """
    actions = as_actions(ctx.mdp, pi)
    pinned = ctx.state_order[: ctx.control_index]
    return _pinned_mdp(ctx.mdp, pinned, [actions[s] for s in pinned])


class _ControlledValues:
    """Memoised V_i(s0) keyed by (i, prefix code) for one MDP and state order."""

    def __init__(self, mdp: FiniteMdp, order: tuple[int, ...]):
        self.mdp = mdp
        self.order = order
        self.table: dict[tuple[int, int], float] = {}

    @classmethod
    def of(cls, mdp: FiniteMdp, order: tuple[int, ...]) -> _ControlledValues:
        key = ("controlled_values", order)
        if key not in mdp._cache:
            mdp._cache[key] = cls(mdp, order)
        return mdp._cache[key]

    def prefix_code(self, actions: np.ndarray, i: int) -> int:
        code = 0
        for s in reversed(self.order[:i]):
            code = code * self.mdp.num_actions + int(actions[s])
        return code

    def value(self, i: int, code: int) -> float:
        key = (i, code)
        if key not in self.table:
            A = self.mdp.num_actions
            digits = []
            for _ in range(i):
                code, a = divmod(code, A)
                digits.append(a)
            restricted = _pinned_mdp(self.mdp, self.order[:i], digits)
            self.table[key] = float(optimal_values(restricted)[0][self.mdp.start_state])
        return self.table[key]

    def values(self, i: int, codes: np.ndarray) -> np.ndarray:
        uniq, inverse = np.unique(codes, return_inverse=True)
        vals = np.array([self.value(i, int(c)) for c in uniq])
        return vals[inverse.reshape(-1)]


def _controlled(ctx: ControlledPolicyContext) -> _ControlledValues:
    require_valid(ctx.mdp)
    return _ControlledValues.of(ctx.mdp, ctx.state_order)


def controlled_value(ctx: ControlledPolicyContext, pi: PolicyLike) -> float:
    """Start value of pi's optimal completion: pi on the controlled states, optimal elsewhere."""
    cv = _controlled(ctx)
    actions = as_actions(ctx.mdp, pi)
    return cv.value(ctx.control_index, cv.prefix_code(actions, ctx.control_index))


def _quality(values: np.ndarray | float, tau: float) -> np.ndarray | bool:
    return tau <= values + SNAP


def is_tau_quality(ctx: ControlledPolicyContext, pi: PolicyLike) -> bool:
    """Membership of pi in T_i."""
    return bool(_quality(controlled_value(ctx, pi), ctx.tau))


def _all_prefix_codes(ctx: ControlledPolicyContext, cap: int) -> tuple[np.ndarray, list[np.ndarray]]:
    mdp = ctx.mdp
    total = policy_count(mdp)
    if total > cap:
        raise EnumerationCapError(f"policy space has {total} policies, above the cap {cap}")
    actions = actions_for_indices(mdp, np.arange(total))
    A = mdp.num_actions
    codes = [np.zeros(total, dtype=np.int64)]
    place = 1
    for s in ctx.state_order:
        codes.append(codes[-1] + actions[:, s] * place)
        place *= A
    return actions, codes


def _membership_by_level(ctx: ControlledPolicyContext, cap: int) -> list[np.ndarray]:
    cv = _controlled(ctx)
    _, codes = _all_prefix_codes(ctx, cap)
    return [_quality(cv.values(i, c), ctx.tau) for i, c in enumerate(codes)]


def count_Ti_bruteforce(ctx: ControlledPolicyContext, cap: int = DEFAULT_ENUMERATION_CAP) -> int:
    """|T_i| by checking every policy in the space."""
    return int(_membership_by_level(ctx, cap)[ctx.control_index].sum())


def sample_Ti(
    ctx: ControlledPolicyContext,
    rng: np.random.Generator | int | None = None,
    max_attempts: int = 10**6,
) -> DeterministicPolicy:
    """Exactly uniform member of T_i by rejection from the uniform policy distribution."""
    rng = as_rng(rng)
    for _ in range(max_attempts):
        pi = sample_policy_uniform(ctx.mdp, rng)
        if is_tau_quality(ctx, pi):
            return pi
    raise SamplingError(
        f"no tau-quality {ctx.control_index}-controlled policy found in {max_attempts} draws"
    )


def multiplicative_sample_size(epsilon: float, delta: float, num_states: int, num_actions: int) -> int:
    """Draws per ratio so each ratio is within 1 ± epsilon/(2|S|) w.p. >= 1 - delta/|S|."""
    _check_unit("epsilon", epsilon)
    _check_unit("delta", delta)
    S, A = num_states, num_actions
    return math.ceil(3.0 * A * S**2 * math.log(2.0 * S / delta) / epsilon**2)


def _estimate_ratio(
    cv: _ControlledValues,
    tau: float,
    i: int,
    m: int,
    rng: np.random.Generator,
    max_attempts: int,
) -> tuple[float, int]:
    # Only the first i+1 ordered actions decide membership in T_i and T_{i+1}, so draws
    # are uniform prefix codes of that length; accepted draws are uniform over T_i.
    A = cv.mdp.num_actions
    space = A ** (i + 1)
    low = A**i
    if space >= _MAX_CODE:
        raise ValueError("action prefix too long for code-based sampling")
    chunk = max(1024, 2 * m)
    accepted_next: list[np.ndarray] = []
    n_accepted = 0
    attempts = 0
    since_accept = 0
    while n_accepted < m:
        codes = rng.integers(0, space, size=chunk)
        hits = np.flatnonzero(_quality(cv.values(i, codes % low), tau))
        take = hits[: m - n_accepted]
        gaps = np.diff(take, prepend=-1 - since_accept) - 1
        if (take.size == 0 and since_accept + chunk >= max_attempts) or (
            gaps.size and gaps.max() >= max_attempts
        ):
            raise SamplingError(f"T_{i} sampler made {max_attempts} draws without an acceptance")
        if take.size == 0:
            since_accept += chunk
            attempts += chunk
            continue
        since_accept = chunk - 1 - int(take[-1])
        attempts += int(take[-1]) + 1 if n_accepted + take.size == m else chunk
        accepted_next.append(_quality(cv.values(i + 1, codes[take]), tau))
        n_accepted += take.size
    inside = int(np.concatenate(accepted_next).sum())
    return inside / m, attempts


def gpd_multiplicative(
    mdp: FiniteMdp,
    tau: float,
    epsilon: float,
    delta: float,
    rng: np.random.Generator | int | None = None,
    state_order: Sequence[int] | None = None,
    max_attempts: int = 10**6,
) -> ApproxResult:
    """Telescoping-product estimate of the good-policy density.

    N_0 equals the whole policy space whenever V*(s0) clears tau, so the density is the
    product of the estimated ratios N_{i+1}/N_i for i = 0..|S|-1.
    """
    rng = as_rng(rng)
    ctx = ControlledPolicyContext(mdp, tau, 0, None if state_order is None else tuple(state_order))
    S, A = mdp.num_states, mdp.num_actions
    m = multiplicative_sample_size(epsilon, delta, S, A)
    cv = _controlled(ctx)
    if not _quality(cv.value(0, 0), ctx.tau):
        return ApproxResult(0.0, epsilon, delta, 1, "multiplicative", attempts=0)
    estimate = 1.0
    attempts = 0
    for i, child in enumerate(rng.spawn(S)):
        ratio, used = _estimate_ratio(cv, ctx.tau, i, m, child, max_attempts)
        attempts += used
        estimate *= ratio
        if estimate == 0.0:
            break
    return ApproxResult(estimate, epsilon, delta, m * S, "multiplicative", attempts=attempts)


# --- smoothness checks ---------------------------------------------------------


@dataclass
class SmoothnessReport:
    tau: float
    counts: list[int]
    ratios: list[Fraction | None]
    ratio_floor: Fraction
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_smoothness(
    mdp: FiniteMdp,
    tau: float,
    state_order: Sequence[int] | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> SmoothnessReport:
    """Enumerate T_0..T_|S| and check nesting plus the 1/|A| floor on N_{i+1}/N_i."""
    ctx = ControlledPolicyContext(mdp, tau, 0, None if state_order is None else tuple(state_order))
    members = _membership_by_level(ctx, cap)
    counts = [int(m.sum()) for m in members]
    floor = Fraction(1, mdp.num_actions)
    report = SmoothnessReport(ctx.tau, counts, [], floor)
    for i in range(mdp.num_states):
        escaped = np.flatnonzero(members[i + 1] & ~members[i])
        if escaped.size:
            report.violations.append(
                f"T_{i + 1} not inside T_{i}: policy index {int(escaped[0])} is a witness"
            )
        if counts[i] == 0:
            report.ratios.append(None)
            continue
        ratio = Fraction(counts[i + 1], counts[i])
        report.ratios.append(ratio)
        if ratio < floor:
            report.violations.append(f"N_{i + 1}/N_{i} = {ratio} below {floor}")
    return report
