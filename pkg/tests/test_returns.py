from fractions import Fraction

import numpy as np
import pytest

from commrep.gridworld import N_ACTIONS, SubGridWorld, move_clamped
from commrep.returns import (
    GuaranteeConstants,
    generate_return_data,
    observation_probabilities,
    policy_returns_dp,
    reconstruct_policy,
    restricted_actions,
    restricted_policy_table,
    return_rows,
    return_training_set,
    verify_guarantee,
)
from commrep.rng import seeded_rng

TINY = dict(plane="xy", shape=(3, 3, 1), goal_coords=(2, 2))


def _tiny_world(cap=400):
    return SubGridWorld(episode_cap=cap, **TINY)


def _biased_policy(_pos):
    # +x and +y carry above-uniform probability; the rest are discarded
    return np.array([0.3, 0.1, 0.3, 0.1, 0.1, 0.1])


def _optimal_policy_factory(world):
    def policy(pos):
        goal = world.goal_for_start(pos)
        probs = np.zeros(N_ACTIONS)
        # stepping (or clamping) straight onto the goal wins immediately
        direct = [a for a in range(N_ACTIONS)
                  if move_clamped(pos, a, world.shape) == goal]
        if direct:
            probs[direct] = 1.0 / len(direct)
            return probs
        closer = []
        for a in range(N_ACTIONS):
            nxt = move_clamped(pos, a, world.shape)
            if sum(abs(p - g) for p, g in zip(nxt, goal)) < \
               sum(abs(p - g) for p, g in zip(pos, goal)):
                closer.append(a)
        probs[closer] = 1.0 / len(closer)
        return probs

    return policy


def test_restricted_actions_uniform_policy():
    assert restricted_actions(np.full(6, 1.0 / 6.0)).tolist() == list(range(6))


def test_restricted_actions_near_deterministic():
    probs = np.array([0.9, 0.02, 0.02, 0.02, 0.02, 0.02])
    assert restricted_actions(probs).tolist() == [0]


def test_restricted_actions_never_empty():
    rng = seeded_rng(0)
    for _ in range(200):
        logits = rng.standard_normal(6) * rng.uniform(0, 10)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        assert restricted_actions(probs).size > 0


def test_generate_return_data_deterministic_case():
    # deterministic policy, deterministic world: identical (o, a) implies identical R
    world = _tiny_world()

    def policy(_pos):
        return np.array([1.0, 0, 0, 0, 0, 0])  # always +x

    tuples = generate_return_data(policy, world, 300, l_max=6, gamma=0.9,
                                  rng=seeded_rng(1))
    by_key = {}
    for t in tuples:
        key = (t.observation, t.actions)
        if key in by_key:
            assert by_key[key] == t.value
        else:
            by_key[key] = t.value


def test_generate_return_data_off_subset_zero():
    world = _tiny_world()
    tuples = generate_return_data(_biased_policy, world, 500, l_max=6, gamma=0.9,
                                  rng=seeded_rng(2))
    allowed = {0, 2}
    saw_off = False
    for t in tuples:
        if t.actions[0] not in allowed:
            saw_off = True
            assert t.value == 0.0
    assert saw_off


def test_generate_return_data_matches_dp_oracle():
    world = _tiny_world()
    gamma, l_max = 0.9, 6
    table = restricted_policy_table(world, _biased_policy)
    goal = (2, 2, 0)
    _, q = policy_returns_dp(world, table, goal, l_max, gamma)
    tuples = generate_return_data(_biased_policy, world, 10000, l_max, gamma,
                                  seeded_rng(3))
    diffs = [t.value - q[(t.observation, t.actions[0])]
             for t in tuples if t.actions[0] in (0, 2)]
    assert len(diffs) > 1500
    assert abs(float(np.mean(diffs))) < 0.02


def test_return_values_within_bounds():
    world = _tiny_world()
    gamma, l_max = 0.9, 6
    bound = (1 - gamma ** l_max) / (1 - gamma)
    tuples = generate_return_data(_biased_policy, world, 2000, l_max, gamma,
                                  seeded_rng(4))
    for t in tuples:
        assert 0.0 <= t.value <= bound + 1e-12


def test_return_rows_masks():
    world = _tiny_world()
    pos, targets, masks = return_rows(_biased_policy, world, 200, 6, 0.9, seeded_rng(5))
    assert pos.shape == (200, 3)
    # off-subset actions (1, 3, 4, 5) are always unmasked zeros
    for a in (1, 3, 4, 5):
        assert np.all(masks[:, a] == 1.0)
        assert np.all(targets[:, a] == 0.0)
    # exactly one of the restricted actions is sampled per row
    assert np.all(masks[:, [0, 2]].sum(axis=1) == 1.0)


def test_return_training_set_interleaves_decoders():
    worlds = [_tiny_world(), SubGridWorld(plane="yz", shape=(3, 3, 3), goal_coords=(2, 2))]
    policies = [_biased_policy, _biased_policy]
    ts = return_training_set(policies, worlds, 50, 6, 0.9, seeded_rng(6),
                             grid_shape=(3, 3, 3), encoding="factored")
    assert ts.n_samples == 100
    assert ts.question_dims == (0, 0)
    assert ts.answer_dims == (6, 6)
    # first block belongs to decoder 0, second to decoder 1
    assert ts.answer_masks[0][:50].sum() > 0
    assert ts.answer_masks[0][50:].sum() == 0
    assert ts.answer_masks[1][50:].sum() > 0


def test_reconstruct_policy_from_exact_returns_is_optimal():
    world = _tiny_world()
    policy = _optimal_policy_factory(world)
    table = restricted_policy_table(world, policy)
    goal = (2, 2, 0)
    _, q = policy_returns_dp(world, table, goal, 8, 0.9)

    predictor = lambda pos: [q[(pos, a)] for a in range(N_ACTIONS)]
    greedy = reconstruct_policy(predictor)
    for start in world.all_positions():
        if start == goal:
            continue
        world.set_state(start)
        expected = world.in_plane_distance(start)
        steps = 0
        while not world.done:
            world.step(greedy(world.position))
            steps += 1
        assert steps == expected


def test_reconstruct_policy_constant_predictor_tie_break():
    greedy = reconstruct_policy(lambda pos: np.zeros(6))
    assert greedy((1, 1, 0)) == 0


def test_reconstruct_policy_stable_under_small_perturbation():
    world = _tiny_world()
    policy = _optimal_policy_factory(world)
    table = restricted_policy_table(world, policy)
    goal = (2, 2, 0)
    l_max, gamma = 8, 0.9
    _, q = policy_returns_dp(world, table, goal, l_max, gamma)
    eps_prime = gamma ** l_max * 1.0
    rng = seeded_rng(7)
    for _ in range(50):
        for pos in world.all_positions():
            values = np.array([q[(pos, a)] for a in range(N_ACTIONS)])
            noise = rng.uniform(-eps_prime / 4, eps_prime / 4, size=N_ACTIONS)
            top2 = np.sort(values)[-2:]
            if top2[1] - top2[0] > eps_prime:
                assert np.argmax(values + noise) == np.argmax(values)


def test_verify_guarantee_suboptimal_stochastic_policy():
    world = SubGridWorld(plane="xy", shape=(4, 4, 2), goal_coords=(2, 3))

    def policy(_pos):
        return [Fraction(1, 4), Fraction(1, 4), Fraction(1, 8), Fraction(1, 8),
                Fraction(1, 8), Fraction(1, 8)]

    report = verify_guarantee(world, policy, l_max=8, gamma=Fraction(9, 10))
    assert report["min_gap"] >= 0.0
    assert report["min_gap_exact_nonnegative"]
    assert len(report["per_start"]) == 32
    assert report["epsilon_bound"] > 0.0
    assert 0.0 < report["delta_pi"] <= 1.0


def test_verify_guarantee_optimal_policy_zero_gaps():
    world = SubGridWorld(plane="xy", shape=(4, 4, 2), goal_coords=(2, 3))
    base = _optimal_policy_factory(world)

    def policy(pos):
        probs = base(pos)
        best = int(np.argmax(probs))
        out = [Fraction(0)] * N_ACTIONS
        out[best] = Fraction(1)
        return out

    report = verify_guarantee(world, policy, l_max=8, gamma=Fraction(9, 10))
    gaps = [row["gap"] for row in report["per_start"]]
    assert all(g == 0.0 for g in gaps)


def test_guarantee_constants_bound():
    c = GuaranteeConstants(gamma=0.9, delta_r=1.0, delta_pi=0.01, l_max=20)
    expected = 0.9 ** 40 * 1.0 * 0.01 / (16 * 6 * 20)
    assert c.epsilon_bound == pytest.approx(expected)


def test_observation_probabilities_sum_to_one():
    world = _tiny_world()
    table = restricted_policy_table(world, _biased_policy)
    probs = observation_probabilities(world, table, (2, 2, 0), l_max=6)
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)
