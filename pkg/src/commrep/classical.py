"""Charged-mass experiment suite: reference observations and shot oracles.

Two particles (m1, q1), (m2, q2) are probed by two reference experiments
(an elastic collision against a reference mass and a two-body Coulomb
release against a reference charge). Four prediction tasks ask for launch
angles: two gravitational lob shots and two in-plane Coulomb shots where the
moving charge rolls through the field of the other charge held fixed.

Angle convention for the Coulomb shot: the launch direction is tilted by
phi (radians) from the tangential direction *toward* the fixed charge, so
for repulsive charge pairs the closed-form speed

    v0(phi)^2 = (sqrt(2) - 1) * k_eff / (d0 * cos(phi) * sin(phi))

is real on phi in (0, pi/4], with k_eff = C * q * Q / m > 0. The trajectory
then passes through the hole at radius sqrt(2)*d0, polar angle pi/4, which
the RK4 orbit oracle verifies directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .datasets import TrainingSet
from .errors import ConfigurationError, DataGenerationError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ExperimentConstants:
    m_ref: float = 1.0      # reference mass for both reference experiments
    v_ref: float = 1.0      # incoming speed of the reference mass
    q_ref: float = 1.0      # charge of the reference particle
    d0: float = 1.0         # initial separation for Coulomb experiments
    m_fix: float = 1.0      # projectile mass of the lob shot
    g: float = 9.81
    coulomb_constant: float = 1.0   # 1/(4 pi eps0) in simulation units
    d_hole: float = 1.0     # lob-shot target distance
    n: int = 10             # samples per reference time series
    dt: float = 0.1         # output spacing of the time series

    def __post_init__(self):
        for name in ("m_ref", "v_ref", "q_ref", "d0", "m_fix", "g",
                     "coulomb_constant", "d_hole", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")


@dataclass(frozen=True)
class ParameterRanges:
    mass: tuple = (1.0, 10.0)
    charge: tuple = (0.1, 1.0)
    angle_low: float = 0.1   # lower end of sampled shot angles; upper end is pi/4

    def __post_init__(self):
        if self.mass[0] <= 0 or self.mass[0] > self.mass[1]:
            raise ConfigurationError("invalid mass range")
        if self.charge[0] * self.charge[1] <= 0:
            # zero or mixed-sign charges make the interaction shots degenerate
            raise ConfigurationError("charge range must exclude zero and sign changes")
        if not 0 < self.angle_low < math.pi / 4:
            raise ConfigurationError("angle_low must lie in (0, pi/4)")


@dataclass(frozen=True)
class ParticlePairSystem:
    m1: float
    m2: float
    q1: float
    q2: float

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise ConfigurationError("masses must be positive")

    def mass(self, i):
        return (self.m1, self.m2)[i]

    def charge(self, i):
        return (self.q1, self.q2)[i]


def elastic_collision_velocity(m_in, v_in, m_target):
    """Post-collision speed of a resting target hit 1D-elastically by m_in at v_in."""
    return 2.0 * m_in * v_in / (m_in + m_target)


def collision_reference_series(sys: ParticlePairSystem, consts: ExperimentConstants, i):
    """Positions of particle i at times dt..n*dt after the reference collision."""
    v = elastic_collision_velocity(consts.m_ref, consts.v_ref, sys.mass(i))
    t = np.arange(1, consts.n + 1) * consts.dt
    return v * t


def _coulomb_series_batch(m, q, consts: ExperimentConstants, substeps=16):
    """Two-body 1D Coulomb release, vectorized over systems.

    Particle (m, q) starts at the origin, the reference particle at d0; both
    at rest and free to move. Returns (positions (batch, n), ok mask); a
    sample fails if the separation collapses below d0/100 (possible only for
    attractive pairs).
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    batch = m.shape[0]
    x_i = np.zeros(batch)
    v_i = np.zeros(batch)
    x_r = np.full(batch, consts.d0)
    v_r = np.zeros(batch)
    out = np.empty((batch, consts.n))
    ok = np.ones(batch, dtype=bool)
    cq = consts.coulomb_constant * q * consts.q_ref
    min_sep = consts.d0 * 1e-2
    h = consts.dt / substeps

    def deriv(state):
        xi, vi, xr, vr = state
        d = xi - xr
        f = cq * np.sign(d) / np.maximum(d * d, 1e-300)
        return np.array([vi, f / m, vr, -f / consts.m_ref])

    state = np.array([x_i, v_i, x_r, v_r])
    for k in range(consts.n):
        for _ in range(substeps):
            k1 = deriv(state)
            k2 = deriv(state + 0.5 * h * k1)
            k3 = deriv(state + 0.5 * h * k2)
            k4 = deriv(state + h * k3)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            ok &= np.abs(state[0] - state[2]) > min_sep
        out[:, k] = state[0]
    return out, ok


def coulomb_reference_series(sys: ParticlePairSystem, consts: ExperimentConstants, i,
                             substeps=16):
    """Positions of particle i during the two-body Coulomb reference experiment."""
    series, ok = _coulomb_series_batch(sys.mass(i), sys.charge(i), consts, substeps)
    if not ok[0]:
        raise DataGenerationError("Coulomb reference experiment collapsed (attractive pair)")
    return series[0]


def lob_shot_angle(sys: ParticlePairSystem, consts: ExperimentConstants, i, v):
    """Launch angle in (0, pi/4] that drops mass i into the hole at d_hole."""
    v_after = elastic_collision_velocity(consts.m_fix, v, sys.mass(i))
    s = consts.g * consts.d_hole / (v_after * v_after)
    if s > 1.0:
        raise DataGenerationError("projectile too slow: no lob angle exists")
    return 0.5 * math.asin(s)


def coulomb_k_eff(consts: ExperimentConstants, sys: ParticlePairSystem, moving):
    """Field constant q_i*q_other/(4 pi eps0 m_i) for the shot with particle `moving`."""
    other = 1 - moving
    return consts.coulomb_constant * sys.charge(moving) * sys.charge(other) / sys.mass(moving)


def coulomb_shot_v0(consts: ExperimentConstants, k_eff, phi):
    """Launch speed that reaches the hole when tilted by phi toward the fixed charge."""
    denom = np.cos(phi) * np.sin(phi)
    radicand = (SQRT2 - 1.0) * k_eff / (consts.d0 * denom)
    if np.any(np.asarray(radicand) <= 0):
        raise DataGenerationError("invalid shot configuration: nonpositive radicand")
    return np.sqrt(radicand)


def coulomb_shot_angle(consts: ExperimentConstants, k_eff, v0, tol=1e-10):
    """Invert coulomb_shot_v0 on the injective interval (0, pi/4] by bisection."""
    v_min = coulomb_shot_v0(consts, k_eff, math.pi / 4)
    if v0 < v_min:
        raise DataGenerationError("launch speed below the minimum reachable speed")
    lo, hi = 1e-12, math.pi / 4
    # v0(phi) is strictly decreasing on (0, pi/4]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if coulomb_shot_v0(consts, k_eff, mid) > v0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shot_orbit_min_miss(consts: ExperimentConstants, k_eff, phi, v0, n_steps=4000):
    """RK4 oracle for the Coulomb shot, vectorized over launches.

    Integrates the moving charge in the field of the fixed charge at the
    origin from (d0, 0) with velocity (-v0 sin phi, v0 cos phi) and returns
    the minimum distance of the trajectory to the hole at
    (sqrt(2) d0 cos pi/4, sqrt(2) d0 sin pi/4).
    """
    k_eff = np.atleast_1d(np.asarray(k_eff, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), k_eff.shape).astype(float)
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), k_eff.shape).astype(float)
    pos = np.stack([np.full(k_eff.shape, consts.d0), np.zeros(k_eff.shape)], axis=-1)
    vel = np.stack([-v0 * np.sin(phi), v0 * np.cos(phi)], axis=-1)
    hole = consts.d0 * np.array([1.0, 1.0])  # sqrt(2) d0 at angle pi/4
    dt = (6.0 * consts.d0 / v0 / n_steps)[:, None]

    def acc(p):
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        return k_eff[:, None] * p / r ** 3

    best = np.full(k_eff.shape, np.inf)
    for _ in range(n_steps):
        k1v, k1x = acc(pos), vel
        k2v, k2x = acc(pos + 0.5 * dt * k1x), vel + 0.5 * dt * k1v
        k3v, k3x = acc(pos + 0.5 * dt * k2x), vel + 0.5 * dt * k2v
        k4v, k4x = acc(pos + dt * k3x), vel + dt * k3v
        pos = pos + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        vel = vel + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        best = np.minimum(best, np.linalg.norm(pos - hole, axis=-1))
    return best


def ballistic_landing_distance(consts: ExperimentConstants, speed, angle, n_steps=200):
    """RK4 oracle for the lob shot: horizontal distance where the mass lands."""
    g = consts.g
    state = np.array([0.0, 0.0, speed * math.cos(angle), speed * math.sin(angle)])
    t_flight = 2.0 * state[3] / g
    dt = t_flight / n_steps

    def deriv(s):
        return np.array([s[2], s[3], 0.0, -g])

    for _ in range(n_steps):
        k1 = deriv(state)
        k2 = deriv(state + 0.5 * dt * k1)
        k3 = deriv(state + 0.5 * dt * k2)
        k4 = deriv(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return state[0]


def sample_dataset(consts: ExperimentConstants, count, rng, encoder_split="single",
                   ranges: ParameterRanges | None = None):
    """Draw `count` training samples of (observation, 4 questions, 4 answers).

    Questions are admissible launch speeds obtained by sampling the target
    angle uniformly in [angle_low, pi/4] and evaluating the closed forms, so
    every question has a unique valid answer by construction. The observation
    concatenates, per particle, the collision series and the Coulomb series
    (4n entries); with encoder_split="dual" the declared split assigns each
    particle's 2n entries to its own encoder.
    """
    if encoder_split not in ("single", "dual"):
        raise ConfigurationError(f"unknown encoder split {encoder_split!r}")
    ranges = ranges or ParameterRanges()
    n = consts.n

    obs = np.empty((count, 4 * n))
    masses = np.empty((count, 2))
    charges = np.empty((count, 2))
    filled = 0
    while filled < count:
        todo = count - filled
        m = rng.uniform(*ranges.mass, size=(todo, 2))
        q = rng.uniform(*ranges.charge, size=(todo, 2))
        t = np.arange(1, n + 1) * consts.dt
        col1 = elastic_collision_velocity(consts.m_ref, consts.v_ref, m[:, 0])[:, None] * t
        col2 = elastic_collision_velocity(consts.m_ref, consts.v_ref, m[:, 1])[:, None] * t
        cou1, ok1 = _coulomb_series_batch(m[:, 0], q[:, 0], consts)
        cou2, ok2 = _coulomb_series_batch(m[:, 1], q[:, 1], consts)
        ok = ok1 & ok2
        keep = int(ok.sum())
        block = np.concatenate([col1, cou1, col2, cou2], axis=1)[ok]
        obs[filled:filled + keep] = block
        masses[filled:filled + keep] = m[ok]
        charges[filled:filled + keep] = q[ok]
        filled += keep

    g_over = consts.g * consts.d_hole
    questions, answers = [], []
    for i in (0, 1):
        alpha = rng.uniform(ranges.angle_low, math.pi / 4, size=count)
        v_after = np.sqrt(g_over / np.sin(2.0 * alpha))
        v_question = v_after * (consts.m_fix + masses[:, i]) / (2.0 * consts.m_fix)
        questions.append(v_question[:, None])
        answers.append(alpha[:, None])
    qprod = charges[:, 0] * charges[:, 1]
    for i in (0, 1):
        phi = rng.uniform(ranges.angle_low, math.pi / 4, size=count)
        k_eff = consts.coulomb_constant * qprod / masses[:, i]
        v0 = np.sqrt((SQRT2 - 1.0) * k_eff / (consts.d0 * np.cos(phi) * np.sin(phi)))
        questions.append(v0[:, None])
        answers.append(phi[:, None])

    split = (4 * n,) if encoder_split == "single" else (2 * n, 2 * n)
    meta = {
        "suite": "classical",
        "encoder_split": encoder_split,
        "constants": asdict(consts),
        "ranges": asdict(ranges),
        "hidden": {"m1": masses[:, 0].tolist(), "m2": masses[:, 1].tolist(),
                   "q1": charges[:, 0].tolist(), "q2": charges[:, 1].tolist()},
    }
    return TrainingSet(obs, questions, answers, split, None, meta)


def observation_for_system(sys: ParticlePairSystem, consts: ExperimentConstants):
    """Reference observation vector for one hidden-parameter configuration."""
    parts = []
    for i in (0, 1):
        parts.append(collision_reference_series(sys, consts, i))
        parts.append(coulomb_reference_series(sys, consts, i))
    return np.concatenate(parts)


def observation_batch(m1, m2, q1, q2, consts: ExperimentConstants):
    """Vectorized observation_for_system over parallel parameter arrays."""
    m1, m2, q1, q2 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (m1, m2, q1, q2)))
    t = np.arange(1, consts.n + 1) * consts.dt
    col1 = elastic_collision_velocity(consts.m_ref, consts.v_ref, m1)[:, None] * t
    col2 = elastic_collision_velocity(consts.m_ref, consts.v_ref, m2)[:, None] * t
    cou1, ok1 = _coulomb_series_batch(m1, q1, consts)
    cou2, ok2 = _coulomb_series_batch(m2, q2, consts)
    if not np.all(ok1 & ok2):
        raise DataGenerationError("Coulomb reference experiment collapsed")
    return np.concatenate([col1, cou1, col2, cou2], axis=1)
