import numpy as np
import pytest

from commrep.errors import ConfigurationError, UsageError
from commrep.gridworld import (
    N_ACTIONS,
    SubGridWorld,
    encode_positions,
    move_clamped,
    observation_encoding,
)
from commrep.rng import seeded_rng


def test_reset_places_reward_in_plane_xy():
    world = SubGridWorld("xy")
    world.set_state((3, 4, 9))
    assert world.reward_position == (6, 11, 9)


def test_reset_places_reward_in_plane_yz():
    world = SubGridWorld("yz")
    world.set_state((0, 0, 0))
    assert world.reward_position == (0, 11, 6)


def test_reset_places_reward_in_plane_xz():
    world = SubGridWorld("xz")
    world.set_state((5, 2, 7))
    assert world.reward_position == (6, 2, 6)


def test_reset_uniform_over_cells():
    from scipy.stats import chi2

    world = SubGridWorld("xy")
    rng = seeded_rng(0)
    counts = np.zeros((12, 12, 12))
    n = 100000
    for _ in range(n):
        x, y, z = world.reset(rng)
        counts[x, y, z] += 1
    expected = n / 1728.0
    stat = float(((counts - expected) ** 2 / expected).sum())
    p_value = chi2.sf(stat, df=1728 - 1)
    assert p_value > 0.01


def test_step_clamps_at_boundary():
    world = SubGridWorld("xy")
    world.set_state((0, 5, 5))
    pos, reward, done = world.step(1)  # -x
    assert pos == (0, 5, 5)
    assert reward == 0.0 and not done


def test_step_reward_adjacent():
    world = SubGridWorld("xy")
    world.set_state((5, 11, 9))
    pos, reward, done = world.step(0)  # +x
    assert pos == (6, 11, 9)
    assert reward == 1.0 and done


def test_episode_cap_reached_without_reward():
    world = SubGridWorld("xy", episode_cap=400)
    world.set_state((0, 0, 0))
    total = 0.0
    for step in range(400):
        # bounce along -x forever; never reaches (6, 11, 0)
        _, reward, done = world.step(1)
        total += reward
    assert done and total == 0.0
    assert world.steps == 400
    with pytest.raises(UsageError):
        world.step(0)


def test_goal_coordinates_validated():
    with pytest.raises(ConfigurationError):
        SubGridWorld("xy", shape=(4, 4, 2))  # default (6, 11) outside
    world = SubGridWorld("xy", shape=(4, 4, 2), goal_coords=(2, 3))
    world.set_state((0, 0, 1))
    assert world.reward_position == (2, 3, 1)


def test_observation_encoding_corner():
    enc = observation_encoding((0, 0, 0))
    assert enc.shape == (36,)
    assert np.allclose(enc[[0, 12, 24]], 1.0)
    assert enc.sum() == 3.0


def test_observation_encoding_three_ones_everywhere():
    rng = seeded_rng(1)
    for _ in range(50):
        pos = tuple(rng.integers(0, 12, size=3))
        enc = observation_encoding(pos)
        assert enc.sum() == 3.0
        assert set(np.unique(enc)) <= {0.0, 1.0}


def test_observation_encoding_injective():
    world = SubGridWorld("xy")
    encs = encode_positions(world.all_positions())
    assert encs.shape == (1728, 36)
    assert len({tuple(row) for row in encs}) == 1728


def test_observation_encoding_joint_mode():
    enc = observation_encoding((1, 2, 3), (4, 4, 4), mode="joint")
    assert enc.shape == (64,)
    assert enc.sum() == 1.0
    assert enc[(1 * 4 + 2) * 4 + 3] == 1.0


def test_start_on_reward_cell_is_live():
    # resets may land on the reward cell; the episode ends only once a step
    # arrives there, which a clamped move can do immediately
    world = SubGridWorld("xy")
    world.set_state((6, 11, 4))
    assert not world.done
    pos, reward, done = world.step(2)  # +y clamps at the border
    assert pos == (6, 11, 4)
    assert reward == 1.0 and done


def test_move_clamped_matches_env():
    world = SubGridWorld("xy")
    rng = seeded_rng(2)
    for _ in range(100):
        start = tuple(rng.integers(0, 12, size=3))
        action = int(rng.integers(0, N_ACTIONS))
        world.set_state(start)
        pos, _, _ = world.step(action)
        assert pos == move_clamped(start, action, world.shape)
