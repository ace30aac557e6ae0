"""PolicySampling: choose a fresh uniform policy, Monte-Carlo evaluate it, prune if <= tau."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .approx import as_rng
from .mdp import DeterministicPolicy, FiniteMdp, require_valid, simulate_episodes
from .policies import policy_count, policy_from_index


def _ceil(x: float) -> int:
    # absorb float noise such as 1 / (1 - 0.9) = 10.000000000000002
    return math.ceil(x - 1e-9)


def horizon_for(gamma: float) -> int:
    return _ceil(1.0 / (1.0 - gamma))


def episodes_for(vmax: float, delta_eval: float, eta: float) -> int:
    """Hoeffding episode count for an eta-accurate estimate of returns in a VMax-wide range."""
    return _ceil(vmax**2 * math.log(2.0 / delta_eval) / (2.0 * eta**2))


@dataclass(frozen=True)
class LearnerConfig:
    tau: float
    delta_eval: float
    delta_search: float
    gamma: float
    rmax: float
    eta: float
    episodes_per_policy: int
    horizon: int
    max_policies: int = 10_000

    def __post_init__(self) -> None:
        for name in ("delta_eval", "delta_search"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.horizon < 1 or self.episodes_per_policy < 1 or self.max_policies < 1:
            raise ValueError("horizon, episodes_per_policy and max_policies must be >= 1")

    @property
    def vmax(self) -> float:
        return self.rmax / (1.0 - self.gamma)

    @classmethod
    def from_delta(
        cls,
        mdp: FiniteMdp,
        tau: float,
        delta: float,
        eta: float | None = None,
        max_policies: int = 10_000,
    ) -> LearnerConfig:
        """Split ``delta`` evenly between evaluation and search; eta defaults to VMax - tau."""
        if not mdp.gamma < 1.0:
            raise ValueError("PolicySampling needs gamma < 1")
        rmax = mdp.rmax
        vmax = rmax / (1.0 - mdp.gamma)
        if eta is None:
            eta = vmax - tau
        if eta < vmax - tau:
            raise ValueError(f"eta must be at least VMax - tau = {vmax - tau}")
        d = delta / 2.0
        return cls(
            tau=float(tau),
            delta_eval=d,
            delta_search=d,
            gamma=mdp.gamma,
            rmax=rmax,
            eta=float(eta),
            episodes_per_policy=episodes_for(vmax, d, eta),
            horizon=horizon_for(mdp.gamma),
            max_policies=max_policies,
        )


@dataclass
class LearnerReport:
    best_policy: DeterministicPolicy
    best_estimate: float
    policies_tried: int
    episodes_used: int
    steps_used: int
    succeeded: bool
    tried_indices: list[int]

    def to_json(self, bound: SampleComplexityBound | None = None) -> dict:
        out = {
            "succeeded": self.succeeded,
            "policies_tried": self.policies_tried,
            "episodes_used": self.episodes_used,
            "steps_used": self.steps_used,
            "best_estimate": self.best_estimate,
        }
        if bound is not None:
            out.update(bound_k=bound.k_int, bound_m=bound.m_int, bound_h=bound.h_int)
        return out


def policy_sampling(
    mdp: FiniteMdp, config: LearnerConfig, rng: np.random.Generator | int | None = None
) -> LearnerReport:
    """Sample untried policies uniformly until one's estimated start value exceeds tau.

    Each candidate is evaluated with ``episodes_per_policy`` rollouts of ``horizon`` steps.
    Stops at the first survivor, after ``max_policies`` candidates, or when the policy
    space is exhausted.
    """
    require_valid(mdp)
    if not mdp.gamma < 1.0:
        raise ValueError("PolicySampling needs gamma < 1")
    rng = as_rng(rng)
    total = policy_count(mdp)
    budget = min(config.max_policies, total)
    tried: set[int] = set()
    order: list[int] = []
    best_policy: DeterministicPolicy | None = None
    best = -math.inf
    episodes = steps = 0
    succeeded = False
    while len(order) < budget:
        # choose: retry on collision, the untried set is the implicit complement
        while True:
            idx = int(rng.integers(total)) if total < 2**63 else _big_index(rng, total)
            if idx not in tried:
                break
        tried.add(idx)
        order.append(idx)
        pi = policy_from_index(mdp, idx)
        # eval
        returns, used = simulate_episodes(mdp, pi, config.horizon, config.episodes_per_policy, rng)
        estimate = float(returns.mean())
        episodes += config.episodes_per_policy
        steps += int(used.sum())
        if estimate > best:
            best, best_policy = estimate, pi
        # prune
        if estimate > config.tau:
            succeeded = True
            break
    assert best_policy is not None
    return LearnerReport(best_policy, best, len(order), episodes, steps, succeeded, order)


def _big_index(rng: np.random.Generator, total: int) -> int:
    bits = total.bit_length()
    while True:
        idx = int.from_bytes(rng.bytes((bits + 7) // 8), "little") >> (-bits % 8)
        if idx < total:
            return idx


@dataclass(frozen=True)
class SampleComplexityBound:
    value: float
    k: float
    m: float
    h: float

    @property
    def k_int(self) -> int:
        return max(1, _ceil(self.k))

    @property
    def m_int(self) -> int:
        return _ceil(self.m)

    @property
    def h_int(self) -> int:
        return _ceil(self.h)

    @property
    def steps(self) -> int:
        return self.k_int * self.m_int * self.h_int

    def as_dict(self) -> dict:
        return asdict(self)


def sample_complexity_bound(
    bpd: float,
    delta: float,
    rmax: float,
    eta: float,
    gamma: float,
    geometric_base: Literal["bad", "good"] = "bad",
) -> SampleComplexityBound:
    """Steps until PolicySampling holds a policy above tau, with probability >= 1 - delta.

    ``delta`` is split evenly between the search and evaluation stages. The number of
    candidates ``k`` solves base**k = delta/2 where the base is the chance a uniform draw
    is bad (``geometric_base="bad"``); ``"good"`` uses 1 - bpd instead, which shrinks
    ``k`` as the problem gets harder. Episodes ``m`` come from Hoeffding over returns in
    [0, RMax/(1-gamma)] and each episode runs ``h = 1/(1-gamma)`` steps.
    """
    if not 0.0 <= bpd <= 1.0:
        raise ValueError("bpd must lie in [0, 1]")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if eta <= 0 or not 0.0 < gamma < 1.0:
        raise ValueError("need eta > 0 and gamma in (0, 1)")
    base = bpd if geometric_base == "bad" else 1.0 - bpd
    if bpd == 1.0:
        raise ValueError("no good policy exists (bpd = 1)")
    d = delta / 2.0
    if base <= 0.0:
        k = 1.0
    elif base >= 1.0:
        raise ValueError("geometric base of 1 gives an unbounded search")
    else:
        k = max(1.0, math.log(d) / math.log(base))
    h = 1.0 / (1.0 - gamma)
    m = (rmax * h) ** 2 * math.log(2.0 / d) / (2.0 * eta**2)
    value = k * rmax**2 * math.log(2.0 / d) / (2.0 * eta**2 * (1.0 - gamma) ** 3)
    return SampleComplexityBound(value, k, m, h)
