"""Deep energy-based projective-simulation agents for the sub-grid world.

An agent holds a dense network mapping the position encoding to one h-value
per action and acts through a softmax with inverse temperature beta. Updates
pull the chosen action's h-value toward (1 - gamma_ps) * h + R, where R is
the glow-discounted return observed over the next l_max steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .gridworld import N_ACTIONS, SubGridWorld, encode_positions, observation_encoding
from .nn import DenseNetwork
from .optim import AdamState, adam_step


@dataclass
class DPSAgent:
    h_net: DenseNetwork
    beta: float = 0.2            # inverse temperature; raised during training
    gamma_ps: float = 0.1        # forgetting, in [0, 1)
    eta: float = 0.1             # glow, in (0, 1]
    l_max: int = 20              # return horizon
    grid_shape: tuple = (12, 12, 12)
    encoding: str = "factored"

    def __post_init__(self):
        if not 0.0 <= self.gamma_ps < 1.0:
            raise ConfigurationError("gamma_ps must lie in [0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError("eta must lie in (0, 1]")
        if self.h_net.output_dim != N_ACTIONS:
            raise ConfigurationError("h network must output one value per action")

    @classmethod
    def build(cls, rng, hidden=(64,), grid_shape=(12, 12, 12), encoding="factored",
              **kwargs):
        obs_dim = observation_encoding((0,) * len(grid_shape), grid_shape, encoding).size
        net = DenseNetwork.build((obs_dim,) + tuple(hidden) + (N_ACTIONS,), rng,
                                 name="hnet")
        return cls(net, grid_shape=grid_shape, encoding=encoding, **kwargs)

    def encode(self, positions):
        return encode_positions(positions, self.grid_shape, self.encoding)

    def h_values(self, positions):
        return self.h_net.forward_plain(self.encode(positions))


def dps_policy(agent: DPSAgent, position):
    """Softmax policy over actions, computed with max subtraction."""
    h = agent.h_values([position])[0]
    logits = agent.beta * h
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def dps_policy_batch(agent: DPSAgent, positions):
    h = agent.h_values(positions)
    logits = agent.beta * h
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def glow_return(rewards, eta):
    """R = sum_j (1 - eta)^(j-1) * r_j over the supplied horizon of rewards."""
    rewards = np.asarray(rewards, dtype=float)
    factors = (1.0 - eta) ** np.arange(rewards.shape[-1])
    return float(rewards @ factors) if rewards.ndim == 1 else rewards @ factors


def episode_glow_returns(rewards, eta, l_max):
    """Per-step glow returns for one episode, zero-padded past the end."""
    rewards = np.asarray(rewards, dtype=float)
    n = rewards.size
    padded = np.concatenate([rewards, np.zeros(l_max)])
    factors = (1.0 - eta) ** np.arange(l_max)
    return np.array([padded[t:t + l_max] @ factors for t in range(n)])


def dps_update(agent: DPSAgent, batch, opt_state: AdamState, loss="abs"):
    """One gradient step pulling h(o, a) toward (1-gamma_ps)*h + R targets.

    ``batch`` is a list of (position, action, return) triples; only the
    selected action's h-value receives target pressure. The default loss is
    the absolute error with subgradient 0 at 0; "mse" squares the distance
    instead, which propagates sparse-reward targets much faster. Returns the
    batch loss before the step.
    """
    if not batch:
        raise ConfigurationError("batch must be nonempty")
    positions = [b[0] for b in batch]
    actions = np.array([b[1] for b in batch], dtype=int)
    returns = np.array([b[2] for b in batch], dtype=float)
    enc = agent.encode(positions)

    current = agent.h_net.forward_plain(enc)[np.arange(len(batch)), actions]
    targets = (1.0 - agent.gamma_ps) * current + returns

    tape = ad.Tape()
    h = agent.h_net.forward(tape, enc)
    selected = ad.take_per_row(tape, h, actions)
    diff = ad.sub(tape, selected, targets)
    if loss == "abs":
        objective = ad.mean(tape, ad.absolute(tape, diff))
    elif loss == "mse":
        objective = ad.mean(tape, ad.mul(tape, diff, diff))
    else:
        raise ConfigurationError(f"unknown loss {loss!r}")
    grads = ad.backward(tape, objective, params=agent.h_net.parameters())
    adam_step(opt_state, agent.h_net.parameters(), grads)
    return float(objective.value)


@dataclass
class DPSSchedule:
    episodes: int = 3000
    batch_size: int = 32
    beta_start: float = 0.3
    beta_end: float = 6.0
    beta_anneal_frac: float = 0.8   # reach beta_end after this fraction of episodes
    learning_rate: float = 3e-3
    eval_window: int = 100          # episodes per learning-curve point
    loss: str = "mse"               # "abs" or "mse"
    train_episode_cap: int = 200    # shorter than the game cap: more fresh starts
    replay_capacity: int = 50000
    balanced_replay: bool = True    # draw half of each batch from rewarded steps


@dataclass
class LearningCurve:
    episode: list = field(default_factory=list)
    success_rate: list = field(default_factory=list)
    mean_episode_length: list = field(default_factory=list)


def run_episode(agent: DPSAgent, world: SubGridWorld, rng, greedy=False):
    """Play one episode; returns (transitions, success, length).

    Transitions are (position, action, reward) triples in order.
    """
    position = world.reset(rng)
    transitions = []
    success = False
    while True:
        if greedy:
            action = int(np.argmax(agent.h_values([position])[0]))
        else:
            probs = dps_policy(agent, position)
            action = int(rng.choice(N_ACTIONS, p=probs))
        new_position, reward, done = world.step(action)
        transitions.append((position, action, reward))
        position = new_position
        if done:
            success = reward > 0
            return transitions, success, len(transitions)


def train_agent(agent: DPSAgent, world: SubGridWorld, schedule: DPSSchedule, rng):
    """Episode loop with a linear beta ramp; returns the learning curve.

    Experience goes into a replay buffer split by whether the glow return was
    positive; with balanced replay each update batch draws half from each
    pool, which keeps the sparse rewarded steps from being swamped by the
    zero-return bulk. Training runs its own copies of the world so a shorter
    train_episode_cap can give more fresh starts per unit time.
    """
    opt_state = AdamState(lr=schedule.learning_rate)
    curve = LearningCurve()
    train_world = SubGridWorld(world.plane, world.shape, world.goal_coords,
                               episode_cap=schedule.train_episode_cap or world.episode_cap)
    rewarded, unrewarded = [], []
    window_success = []
    window_length = []
    anneal = max(1, int(schedule.beta_anneal_frac * schedule.episodes))
    for episode in range(1, schedule.episodes + 1):
        frac = min(1.0, episode / anneal)
        agent.beta = schedule.beta_start + frac * (schedule.beta_end - schedule.beta_start)
        transitions, success, length = run_episode(agent, train_world, rng)
        rewards = np.array([t[2] for t in transitions])
        returns = episode_glow_returns(rewards, agent.eta, agent.l_max)
        for t, r in zip(transitions, returns):
            (rewarded if r > 0 else unrewarded).append((t[0], t[1], r))
        if len(rewarded) > schedule.replay_capacity:
            del rewarded[:len(rewarded) - schedule.replay_capacity]
        if len(unrewarded) > schedule.replay_capacity:
            del unrewarded[:len(unrewarded) - schedule.replay_capacity]
        for _ in range(max(1, length // schedule.batch_size)):
            if schedule.balanced_replay and rewarded and unrewarded:
                half = schedule.batch_size // 2
                batch = [rewarded[i] for i in rng.integers(0, len(rewarded), half)]
                batch += [unrewarded[i] for i in
                          rng.integers(0, len(unrewarded), schedule.batch_size - half)]
            else:
                pool = rewarded + unrewarded
                batch = [pool[i] for i in rng.integers(0, len(pool), schedule.batch_size)]
            dps_update(agent, batch, opt_state, schedule.loss)
        window_success.append(success)
        window_length.append(length)
        if episode % schedule.eval_window == 0:
            curve.episode.append(episode)
            curve.success_rate.append(float(np.mean(window_success)))
            curve.mean_episode_length.append(float(np.mean(window_length)))
            window_success, window_length = [], []
    return curve


def train_agents(worlds, agents, schedule: DPSSchedule, rng):
    """Train one agent per world, sequentially on a shared rng stream."""
    curves = []
    for world, agent in zip(worlds, agents):
        curves.append(train_agent(agent, world, schedule, rng))
    return curves


def evaluate_success_rate(agent: DPSAgent, world: SubGridWorld, episodes, rng):
    wins = 0
    lengths = []
    for _ in range(episodes):
        _, success, length = run_episode(agent, world, rng)
        wins += success
        lengths.append(length)
    return wins / episodes, float(np.mean(lengths))


def greedy_path_length(agent: DPSAgent, world: SubGridWorld, start, cap=None):
    """Steps the argmax policy needs from `start`; np.inf if it never arrives."""
    world.set_state(start)
    cap = cap or world.episode_cap
    for step in range(1, cap + 1):
        action = int(np.argmax(agent.h_values([world.position])[0]))
        _, reward, done = world.step(action)
        if done:
            return step if reward > 0 else np.inf
    return np.inf


def random_walk_baseline(world: SubGridWorld, episodes, rng):
    """Mean episode length of a uniform random walk (the untrained baseline)."""
    lengths = []
    for _ in range(episodes):
        world.reset(rng)
        steps = 0
        done = False
        while not done:
            _, _, done = world.step(int(rng.integers(0, N_ACTIONS)))
            steps += 1
        lengths.append(steps)
    return float(np.mean(lengths)), float(np.std(lengths) / np.sqrt(episodes))
