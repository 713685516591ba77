"""Experiment configuration: JSON files validated against a strict schema.

Unknown keys are rejected with a best-effort line reference into the source
file; all cross-referenced dimensions are checked before a run starts.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError

SUITES = ("classical-single", "classical-dual", "quantum", "rl")


@dataclass
class DatasetConfig:
    count: int = 30000
    holdout_fraction: float = 0.1


@dataclass
class NetworkConfig:
    latent_dims: list | None = None     # default depends on the suite
    encoder_hidden: list = field(default_factory=lambda: [64, 64])
    decoder_hidden: list = field(default_factory=lambda: [64, 64])


@dataclass
class LossConfig:
    pred_weight: float = 1.0
    comm_weight: float = 1e-3
    comm_anneal_frac: float = 0.2
    reconstruction_weight: float = 0.0
    decoder_weights: list | None = None


@dataclass
class ScheduleConfig:
    steps: int = 30000
    batch_size: int = 256
    eval_interval: int = 1000
    learning_rate: float = 1e-3
    lr_decay_at: list = field(default_factory=list)   # fractions of total steps
    lr_decay_factor: float = 0.2


@dataclass
class ClassicalConfig:
    m_ref: float = 1.0
    v_ref: float = 1.0
    q_ref: float = 1.0
    d0: float = 1.0
    m_fix: float = 1.0
    g: float = 9.81
    coulomb_constant: float = 1.0
    d_hole: float = 1.0
    n: int = 10
    dt: float = 0.1
    mass_range: list = field(default_factory=lambda: [1.0, 10.0])
    charge_range: list = field(default_factory=lambda: [0.1, 1.0])
    angle_low: float = 0.1


@dataclass
class QuantumConfig:
    n_measurements: int = 75
    measurement_seed: int | None = None   # derived from the master seed if null


@dataclass
class RLConfig:
    hidden: list = field(default_factory=lambda: [64])
    episodes: int = 3000
    batch_size: int = 32
    beta_start: float = 0.3
    beta_end: float = 6.0
    beta_anneal_frac: float = 0.8
    learning_rate: float = 3e-3
    loss: str = "mse"
    train_episode_cap: int = 200
    gamma_ps: float = 0.05
    eta: float = 0.1
    l_max: int = 20
    gamma: float = 0.9
    return_rows_per_agent: int = 40000
    eval_episodes: int = 500
    grid_shape: list = field(default_factory=lambda: [12, 12, 12])
    encoding: str = "factored"
    goal_coords: dict | None = None   # per-plane in-plane reward coordinates


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "network": NetworkConfig,
    "loss": LossConfig,
    "schedule": ScheduleConfig,
    "physics": None,   # suite-dependent
    "rl": RLConfig,
}

_SUITE_LATENTS = {
    "classical-single": [3],
    "classical-dual": [2, 2],
    "quantum": [20],
    "rl": [3],
}


@dataclass
class ExperimentConfig:
    suite: str
    seed: int = 1
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    physics: object = None
    rl: RLConfig = field(default_factory=RLConfig)

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigurationError(
                f"unknown suite {self.suite!r}; expected one of {SUITES}")
        if self.physics is None:
            self.physics = QuantumConfig() if self.suite == "quantum" else ClassicalConfig()
        if self.network.latent_dims is None:
            self.network.latent_dims = list(_SUITE_LATENTS[self.suite])
        self.validate()

    # -- dimension bookkeeping --------------------------------------------

    def observation_dims(self):
        if self.suite == "classical-single":
            return (4 * self.physics.n,)
        if self.suite == "classical-dual":
            return (2 * self.physics.n, 2 * self.physics.n)
        if self.suite == "quantum":
            return (self.physics.n_measurements,)
        return (sum(self.rl.grid_shape),)

    def question_dims(self):
        if self.suite in ("classical-single", "classical-dual"):
            return (1, 1, 1, 1)
        if self.suite == "quantum":
            m = self.physics.n_measurements
            return (m, m, m)
        return (0, 0, 0)

    def answer_dims(self):
        if self.suite in ("classical-single", "classical-dual"):
            return (1, 1, 1, 1)
        if self.suite == "quantum":
            return (1, 1, 1)
        return (6, 6, 6)

    def validate(self):
        obs = self.observation_dims()
        latents = self.network.latent_dims
        if len(latents) != len(obs):
            raise ConfigurationError(
                f"suite {self.suite} has {len(obs)} encoder(s); latent_dims "
                f"{latents} must list one width per encoder")
        if any(l < 1 for l in latents):
            raise ConfigurationError("latent widths must be positive")
        if self.dataset.count < 10:
            raise ConfigurationError("dataset.count is too small")
        if not 0.0 <= self.dataset.holdout_fraction < 1.0:
            raise ConfigurationError("holdout_fraction must lie in [0, 1)")
        if self.suite != "quantum":
            if self.physics.__class__ is QuantumConfig:
                raise ConfigurationError("physics section does not match suite")
        if self.suite == "rl" and self.rl.loss not in ("abs", "mse"):
            raise ConfigurationError("rl.loss must be 'abs' or 'mse'")

    def resolved(self):
        """Plain-dict snapshot of every effective setting."""
        out = {"suite": self.suite, "seed": self.seed}
        for name in ("dataset", "network", "loss", "schedule", "physics", "rl"):
            value = getattr(self, name)
            if dataclasses.is_dataclass(value):
                out[name] = dataclasses.asdict(value)
        return out

    def config_hash(self):
        canon = json.dumps(self.resolved(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _line_of_key(text, key):
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _build_section(cls, data, text, section):
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in allowed:
            line = _line_of_key(text, key)
            where = f"line {line}: " if line else ""
            raise ConfigurationError(
                f"{where}unknown key {key!r} in section {section!r} "
                f"(allowed: {sorted(allowed)})")
    return cls(**data)


def parse_config(text, source="<config>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: config must be a JSON object")
    known_top = {"suite", "seed"} | set(_SECTION_TYPES)
    for key in data:
        if key not in known_top:
            line = _line_of_key(text, key)
            where = f"{source}:{line}: " if line else f"{source}: "
            raise ConfigurationError(
                f"{where}unknown top-level key {key!r} (allowed: {sorted(known_top)})")
    suite = data.get("suite")
    if suite is None:
        raise ConfigurationError(f"{source}: missing required key 'suite'")
    kwargs = {"suite": suite, "seed": data.get("seed", 1)}
    for section, cls in _SECTION_TYPES.items():
        if section not in data:
            continue
        payload = data[section]
        if not isinstance(payload, dict):
            raise ConfigurationError(f"{source}: section {section!r} must be an object")
        if section == "physics":
            cls = QuantumConfig if suite == "quantum" else ClassicalConfig
        kwargs[section] = _build_section(cls, payload, text, section)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, source=str(path))


def classical_constants(physics: ClassicalConfig):
    from .classical import ExperimentConstants, ParameterRanges

    consts = ExperimentConstants(
        m_ref=physics.m_ref, v_ref=physics.v_ref, q_ref=physics.q_ref,
        d0=physics.d0, m_fix=physics.m_fix, g=physics.g,
        coulomb_constant=physics.coulomb_constant, d_hole=physics.d_hole,
        n=physics.n, dt=physics.dt)
    ranges = ParameterRanges(mass=tuple(physics.mass_range),
                             charge=tuple(physics.charge_range),
                             angle_low=physics.angle_low)
    return consts, ranges
