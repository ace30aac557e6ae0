from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bpd import (
    GridSpec,
    SubsetSumInstance,
    bpd_curve,
    easy_chain,
    evaluate_policy,
    evaluate_policy_exact,
    hard_chain,
    n_chain,
    policy_count,
    random_mdp,
    rational_bpd_instance,
    russell_norvig_grid,
    start_values,
    subset_sum_decide,
    subset_sum_mdp,
    validate,
    value_range,
)
from bpd.problems import EASY_CHAIN, HARD_CHAIN, LEFT, RIGHT, grid_cells, subset_sum_decide_many

from oracles import reachable_sums, subset_sum_exists


def test_chain_parameters():
    assert HARD_CHAIN == {"r_left": 0.05, "r_right": -0.2}
    assert EASY_CHAIN == {"r_left": 0.5, "r_right": 0.0}


def test_two_state_chain_closed_form():
    g = 0.95
    m = n_chain(2, 0.05, -0.2, g)
    assert evaluate_policy(m, (RIGHT, RIGHT))[0] == pytest.approx(-0.2 + g * 1 / (1 - g))
    assert evaluate_policy(m, (LEFT, LEFT))[0] == pytest.approx(0.05 / (1 - g))


def test_chain_structure():
    m = hard_chain(5)
    assert m.start_state == 0 and not m.terminals
    assert m.transitions[0, LEFT, 0] == 1.0 and m.transitions[4, RIGHT, 4] == 1.0
    assert m.rewards[4, RIGHT] == 1.0 and m.rewards[2, RIGHT] == -0.2
    with pytest.raises(ValueError):
        n_chain(1, 0.0, 0.0)


def test_grid_counts_and_cells():
    cells = grid_cells()
    assert len(cells) == 11 and cells[0] == (1, 1) and (2, 2) not in cells
    for lava in (True, False):
        m = russell_norvig_grid(GridSpec(0.0, lava))
        assert policy_count(m) == 4_194_304
        assert len(m.terminals) == (2 if lava else 1)


def test_grid_full_slip_makes_policies_equivalent():
    m = russell_norvig_grid(GridSpec(1.0, True))
    assert m.action_independent()
    rng = np.random.default_rng(0)
    vals = [evaluate_policy(m, rng.integers(0, 4, size=11))[0] for _ in range(50)]
    assert np.ptp(vals) < 1e-12


def test_grid_slip_mixes_actions():
    m = russell_norvig_grid(GridSpec(0.4, False))
    s = grid_cells().index((1, 1))
    # up from (1,1) reaches (1,2) w.p. 0.6 + 0.1; down and left bump into walls
    up = grid_cells().index((1, 2))
    right = grid_cells().index((2, 1))
    assert m.transitions[s, 0, up] == pytest.approx(0.7)
    assert m.transitions[s, 0, right] == pytest.approx(0.1)
    assert m.transitions[s, 0, s] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        GridSpec(1.5)


def test_grid_shortest_goal_path():
    m = russell_norvig_grid(GridSpec(0.0, True))
    _, vmax = value_range(m)
    # five moves from (1,1) to (4,3)
    assert vmax == pytest.approx(0.95**4)


def test_subset_sum_structure():
    m = subset_sum_mdp(SubsetSumInstance((1, 2, 3), 5))
    assert m.num_states == 5 and m.gamma == 1.0 and m.terminals == {4}
    assert policy_count(m) == 2 ** (3 + 2)


def test_subset_sum_take_and_skip_everything():
    m = subset_sum_mdp([1, 2, 3])
    assert evaluate_policy(m, (0,) * 5)[0] == pytest.approx(2.0)
    assert evaluate_policy(m, (1,) * 5)[0] == 0.0


def test_subset_sum_all_policies_hit_subset_sums():
    elements = (3, 5, 7)
    m = subset_sum_mdp(elements)
    values = start_values(m)
    for idx, v in enumerate(values):
        chosen = [u for k, u in enumerate(elements) if (idx >> (k + 1)) & 1 == 0]
        assert round(3 * v, 9) == sum(chosen)
    assert {round(3 * v) for v in values} == reachable_sums(elements)


@pytest.mark.parametrize(
    "elements, target, expected", [((1, 2, 3), 5, True), ((2, 4), 5, False), ((0,), 0, True)]
)
def test_subset_sum_examples(elements, target, expected):
    assert subset_sum_decide(SubsetSumInstance(elements, target)) is expected


@given(st.lists(st.integers(0, 25), min_size=1, max_size=7), st.integers(0, 120))
def test_subset_sum_decide_matches_oracle(elements, target):
    assert subset_sum_decide(SubsetSumInstance(tuple(elements), target)) == subset_sum_exists(elements, target)


def test_subset_sum_with_repeated_elements():
    elements = (4, 4, 4)
    got = subset_sum_decide_many(elements, range(14))
    assert got == [t in {0, 4, 8, 12} for t in range(14)]


def test_subset_sum_rejects_bad_input():
    with pytest.raises(ValueError):
        SubsetSumInstance((), 0)
    with pytest.raises(ValueError):
        SubsetSumInstance((1, -2), 0)
    with pytest.raises(ValueError):
        subset_sum_decide_many((1, 2), [1], margin=0.6)


def test_subset_sum_exact_scaled_values_size_six():
    elements = (19, 3, 11, 0, 7, 14)
    m = subset_sum_mdp(elements)
    for pi in itertools.product((0, 1), repeat=len(elements)):
        policy = (0, *pi, 0)
        expected = sum(u for u, a in zip(elements, pi) if a == 0)
        assert 6 * evaluate_policy_exact(m, policy)[0] == Fraction(expected)


def test_rational_instance_shape():
    mdp, tau = rational_bpd_instance(2, 5, gamma=0.5)
    assert mdp.num_states == 1 and mdp.num_actions == 5
    assert tau == pytest.approx(5.0)


def test_random_mdp_reproducible_and_valid():
    a, b = random_mdp(4, 3, 9), random_mdp(4, 3, 9)
    assert np.array_equal(a.transitions, b.transitions) and np.array_equal(a.rewards, b.rewards)
    for seed in range(100):
        m = random_mdp(3, 2, seed, reward_low=-1.0)
        assert np.all(np.abs(m.transitions.sum(axis=2) - 1) <= 1e-12)
        assert validate(m).ok


def test_every_generator_validates():
    mdps = [hard_chain(4), easy_chain(6), subset_sum_mdp([5, 1, 1]), rational_bpd_instance(3, 7)[0]]
    mdps += [russell_norvig_grid(GridSpec(s, lava)) for s in (0.0, 0.3, 1.0) for lava in (True, False)]
    for m in mdps:
        assert validate(m).ok, validate(m).problems


@pytest.mark.parametrize("n", range(3, 9))
def test_hard_chain_dominates_easy(n):
    hard = [q for _, q in bpd_curve(hard_chain(n)).points]
    easy = [q for _, q in bpd_curve(easy_chain(n)).points]
    assert all(h >= e for h, e in zip(hard, easy))
