"""Return-data generation and policy reconstruction with its guarantee check.

A trained policy restricts the world to the observation-action pairs it
assigns at least uniform-random probability. Decoder training data consists
of discounted-return estimates for restricted actions and exact zeros for
discarded actions; a deterministic argmax policy reconstructed from accurate
return predictions is then at least as good as the sampled policy, which
``verify_guarantee`` checks by exact dynamic programming on a small world.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .datasets import TrainingSet
from .errors import ConfigurationError
from .gridworld import N_ACTIONS, SubGridWorld, encode_positions, move_clamped


@dataclass(frozen=True)
class ReturnTuple:
    observation: tuple      # grid position
    actions: tuple          # action sequence, length >= 1
    value: float            # discounted return estimate; exactly 0 off-subset


@dataclass(frozen=True)
class GuaranteeConstants:
    gamma: float
    delta_r: float      # minimal nonzero reward gap
    delta_pi: float     # minimal nonzero observation probability under pi
    l_max: int
    n_actions: int = N_ACTIONS

    @property
    def epsilon_bound(self):
        """Largest admissible training loss for the reconstruction guarantee."""
        return (self.gamma ** (2 * self.l_max) * self.delta_r ** 2 * self.delta_pi
                / (16.0 * self.n_actions * self.l_max))


def restricted_actions(policy_probs):
    """Actions with at least uniform-random probability: {a : pi(a|o) >= 1/|A|}."""
    if isinstance(policy_probs, (list, tuple)) and isinstance(policy_probs[0], Fraction):
        threshold = Fraction(1, len(policy_probs))
        return np.array([a for a, p in enumerate(policy_probs) if p >= threshold])
    probs = np.asarray(policy_probs, dtype=float)
    actions = np.nonzero(probs >= 1.0 / probs.size - 1e-12)[0]
    return actions


class _PolicyCache:
    """Frozen-policy memoization: one evaluation per distinct position.

    Accepts a DPSAgent or any callable position -> action probabilities.
    """

    def __init__(self, agent):
        if hasattr(agent, "h_net"):
            from .dps import dps_policy
            self._fn = lambda pos: dps_policy(agent, pos)
        else:
            self._fn = agent
        self._cache = {}

    def __call__(self, position):
        probs = self._cache.get(position)
        if probs is None:
            probs = np.asarray(self._fn(position), dtype=float)
            self._cache[position] = probs
        return probs


def _rollout_iterations(agent, world: SubGridWorld, l_max, gamma, rng, seq_len_max):
    """Yield (observation, actions, return, off_subset_actions) records.

    Per iteration: roll the policy for m ~ U{1..l_max} steps (episodes reset
    as needed), take l ~ U{1..seq_len_max} uniformly random restricted
    actions, then complete with restricted-policy steps so the discounted
    window spans l_max rewards starting at the first random action. Episodes
    ending inside the window contribute zero rewards from then on. Off-subset
    single actions at the sampled observation are reported for zero-return
    tuples.
    """
    policy = _PolicyCache(agent)
    discount = gamma ** np.arange(l_max)
    world = SubGridWorld(world.plane, world.shape, world.goal_coords,
                         episode_cap=3 * l_max)
    world.reset(rng)
    while True:
        m = int(rng.integers(1, l_max + 1))
        l = int(rng.integers(1, seq_len_max + 1))
        for _ in range(m):
            if world.done:
                world.reset(rng)
            probs = policy(world.position)
            world.step(int(rng.choice(N_ACTIONS, p=probs)))
        if world.done:
            world.reset(rng)
        origin = world.position
        rewards = np.zeros(l_max)
        actions = []
        for j in range(l):
            if world.done:
                break
            allowed = restricted_actions(policy(world.position))
            action = int(allowed[rng.integers(0, allowed.size)])
            actions.append(action)
            _, r, _ = world.step(action)
            if j < l_max:
                rewards[j] = r
        if not actions:
            continue
        j = len(actions)
        while j < l_max and not world.done:
            allowed = restricted_actions(policy(world.position))
            probs = policy(world.position)[allowed]
            probs = probs / probs.sum()
            action = int(allowed[rng.choice(allowed.size, p=probs)])
            _, r, _ = world.step(action)
            rewards[j] = r
            j += 1
        value = float(rewards @ discount)
        off_subset = ()
        if len(actions) == 1:
            allowed = set(restricted_actions(policy(origin)).tolist())
            off_subset = tuple(a for a in range(N_ACTIONS) if a not in allowed)
        yield origin, tuple(actions), value, off_subset


def generate_return_data(agent, world, count, l_max, gamma, rng, seq_len_max=1):
    """Collect `count` ReturnTuples (sampled returns plus off-subset zeros)."""
    tuples = []
    for origin, actions, value, off_subset in _rollout_iterations(
            agent, world, l_max, gamma, rng, seq_len_max):
        tuples.append(ReturnTuple(origin, actions, value))
        for a in off_subset:
            tuples.append(ReturnTuple(origin, (a,), 0.0))
        if len(tuples) >= count:
            return tuples[:count]
    return tuples


def return_rows(agent, world, n_rows, l_max, gamma, rng):
    """Masked per-observation rows for single-action return decoders.

    Returns (positions (n, 3) int, targets (n, 6), masks (n, 6)): the sampled
    restricted action carries its return estimate and every off-subset action
    carries an exact zero; remaining entries are masked out.
    """
    positions = np.empty((n_rows, 3), dtype=int)
    targets = np.zeros((n_rows, N_ACTIONS))
    masks = np.zeros((n_rows, N_ACTIONS))
    filled = 0
    for origin, actions, value, off_subset in _rollout_iterations(
            agent, world, l_max, gamma, rng, seq_len_max=1):
        positions[filled] = origin
        targets[filled, actions[0]] = value
        masks[filled, actions[0]] = 1.0
        for a in off_subset:
            masks[filled, a] = 1.0
        filled += 1
        if filled == n_rows:
            return positions, targets, masks
    raise RuntimeError("unreachable")


def return_training_set(agents, worlds, n_rows_per_agent, l_max, gamma, rng,
                        grid_shape=(12, 12, 12), encoding="factored"):
    """Interleave per-agent return rows into one multi-decoder TrainingSet.

    Each sample carries targets for exactly one decoder (the agent whose
    rollout produced it); the other decoders' masks are zero for that sample.
    """
    k = len(agents)
    all_pos, all_targets, all_masks = [], [], []
    for i, (agent, world) in enumerate(zip(agents, worlds)):
        pos, tgt, msk = return_rows(agent, world, n_rows_per_agent, l_max, gamma, rng)
        all_pos.append(pos)
        t = [np.zeros_like(tgt) for _ in range(k)]
        m = [np.zeros_like(msk) for _ in range(k)]
        t[i], m[i] = tgt, msk
        all_targets.append(t)
        all_masks.append(m)
    positions = np.concatenate(all_pos, axis=0)
    obs = encode_positions(positions, grid_shape, encoding)
    n = positions.shape[0]
    questions = [np.zeros((n, 0)) for _ in range(k)]
    answers = [np.concatenate([blk[i] for blk in all_targets], axis=0) for i in range(k)]
    masks = [np.concatenate([blk[i] for blk in all_masks], axis=0) for i in range(k)]
    meta = {"suite": "rl", "grid_shape": list(grid_shape), "encoding": encoding,
            "l_max": l_max, "gamma": gamma}
    ts = TrainingSet(obs, questions, answers, (obs.shape[1],), masks, meta)
    ts.meta["positions"] = positions.tolist()
    return ts


def reconstruct_policy(return_predictor):
    """Deterministic argmax policy from a return predictor.

    ``return_predictor(observation)`` must give one value per action; ties
    break toward the lowest action index (numpy argmax convention).
    """
    def policy(observation):
        values = np.asarray(return_predictor(observation), dtype=float)
        return int(np.argmax(values))

    return policy


# ---------------------------------------------------------------------------
# exact dynamic programming oracles

def restricted_policy_table(world: SubGridWorld, policy_fn):
    """Per-position restricted-and-renormalized action distribution.

    Rows are plain Python lists, so exact Fraction probabilities survive.
    """
    table = {}
    for pos in world.all_positions():
        probs = list(policy_fn(pos))
        allowed = restricted_actions(probs)
        total = sum(probs[a] for a in allowed)
        zero = probs[0] * 0
        renorm = [zero] * N_ACTIONS
        for a in allowed:
            renorm[a] = probs[a] / total
        table[pos] = renorm
    return table


def policy_returns_dp(world: SubGridWorld, policy_table, goal, horizon, gamma):
    """Finite-horizon V and Q of a stationary policy toward an absorbing goal.

    Works in exact arithmetic when the policy table and gamma are Fractions;
    rewards are 1 on reaching the goal, else 0.
    """
    exact = isinstance(gamma, Fraction)
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    positions = world.all_positions()
    nxt = {(s, a): move_clamped(s, a, world.shape)
           for s in positions for a in range(N_ACTIONS)}
    values = {s: zero for s in positions}
    q = {}
    for _ in range(horizon):
        q = {}
        new_values = {}
        for s in positions:
            # reaching the goal ends the episode, so arrival cuts the
            # continuation; the goal cell itself is a live state only when an
            # episode starts there (then clamped moves can re-enter it)
            acc = zero
            pi = policy_table[s]
            for a in range(N_ACTIONS):
                s2 = nxt[(s, a)]
                if s2 == goal:
                    q_sa = one
                else:
                    q_sa = gamma * values[s2]
                q[(s, a)] = q_sa
                acc = acc + pi[a] * q_sa
            new_values[s] = acc
        values = new_values
    return values, q


def greedy_policy_from_q(q_table, positions, restricted=None):
    """Argmax policy over a Q table with off-subset actions forced to zero."""
    policy = {}
    for s in positions:
        best_a, best_v = 0, None
        for a in range(N_ACTIONS):
            v = q_table[(s, a)]
            if restricted is not None and a not in restricted[s]:
                v = 0 * v  # off-subset actions predict exactly zero
            if best_v is None or v > best_v:
                best_a, best_v = a, v
        policy[s] = best_a
    return policy


def deterministic_policy_returns(world: SubGridWorld, policy, goal, horizon, gamma):
    """Finite-horizon value of a deterministic policy dict position -> action."""
    exact = isinstance(gamma, Fraction)
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    positions = world.all_positions()
    values = {s: zero for s in positions}
    for _ in range(horizon):
        new_values = {}
        for s in positions:
            s2 = move_clamped(s, policy[s], world.shape)
            new_values[s] = one if s2 == goal else gamma * values[s2]
        values = new_values
    return values


def observation_probabilities(world: SubGridWorld, policy_table, goal, l_max):
    """P_pi(o): chance of occupying o when sampling m ~ U{1..l_max} policy steps.

    Start positions are uniform; the goal is absorbing. Used to measure the
    delta_pi constant entering the epsilon bound.
    """
    positions = [p for p in world.all_positions()]
    index = {p: i for i, p in enumerate(positions)}
    n = len(positions)
    transition = np.zeros((n, n))
    for s in positions:
        i = index[s]
        for a, p in enumerate(policy_table[s]):
            if p > 0:
                s2 = move_clamped(s, a, world.shape)
                if s2 == goal:
                    # reaching the goal resets the stream to a uniform start
                    transition[i, :] += float(p) / n
                else:
                    transition[i, index[s2]] += float(p)
    dist = np.full(n, 1.0 / n)
    acc = np.zeros(n)
    for _ in range(l_max):
        dist = dist @ transition
        acc += dist
    return dict(zip(positions, acc / l_max))


def verify_guarantee(world: SubGridWorld, policy_fn, l_max, gamma, delta_r=1.0):
    """Exact check that the reconstructed argmax policy never degrades returns.

    Evaluates, for every start observation, the restricted policy's return
    and the return of the argmax policy derived from the exact DP returns.
    Returns a report dict with the per-start table, the minimum gap and the
    epsilon-bound evaluation. Uses exact rational arithmetic when gamma and
    the policy probabilities are Fractions.
    """
    policy_table = restricted_policy_table(world, policy_fn)
    restricted = {s: {a for a, p in enumerate(policy_table[s]) if p > 0}
                  for s in policy_table}
    goals = sorted({world.goal_for_start(s) for s in world.all_positions()})
    per_start = []
    min_gap = None
    for goal in goals:
        v_pi, q_pi = policy_returns_dp(world, policy_table, goal, l_max, gamma)
        greedy = greedy_policy_from_q(q_pi, world.all_positions(), restricted)
        v_greedy = deterministic_policy_returns(world, greedy, goal, l_max, gamma)
        for start in world.all_positions():
            if world.goal_for_start(start) != goal:
                continue
            gap = v_greedy[start] - v_pi[start]
            per_start.append({"start": list(start),
                              "return_policy": float(v_pi[start]),
                              "return_reconstructed": float(v_greedy[start]),
                              "gap": float(gap)})
            if min_gap is None or gap < min_gap:
                min_gap = gap

    probs = {}
    for goal in goals:
        sub = observation_probabilities(world, policy_table, goal, l_max)
        for pos, p in sub.items():
            if world.goal_for_start(pos) == goal:
                probs[pos] = probs.get(pos, 0.0) + p
    positive = [p for p in probs.values() if p > 1e-15]
    delta_pi = min(positive) if positive else 0.0
    constants = GuaranteeConstants(float(gamma), delta_r, delta_pi, l_max)
    return {
        "world": {"plane": world.plane, "shape": list(world.shape),
                  "goal_coords": list(world.goal_coords)},
        "l_max": l_max,
        "gamma": float(gamma),
        "min_gap": float(min_gap),
        "min_gap_exact_nonnegative": bool(min_gap >= 0),
        "delta_r": delta_r,
        "delta_pi": delta_pi,
        "epsilon_bound": constants.epsilon_bound,
        "per_start": per_start,
    }
