"""The communicating-agents model.

One or more encoders map an observation to a latent mean vector. For each
decoder, a learnable per-latent noise scale (the selection neurons) corrupts
the latent before the decoder answers its question; driving a noise scale up
effectively blocks that latent for that decoder. Training minimizes a
weighted sum of per-decoder prediction errors and a communication loss
``-sum(log_sigma)`` that rewards blocking.

A latent counts as transmitted to a decoder when its noise sigma is below
the standard deviation of that latent's mean activation over the training
set, i.e. when the transmittance ``t = log_sigma - log(std(mu))`` is
negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from .datasets import TrainingSet
from .errors import ConfigurationError, TrainingError
from .nn import DenseNetwork, Parameter
from .optim import AdamState, adam_step
from .rng import split_streams
from .validation import check_array, check_consistent_length, check_is_fitted


# ---------------------------------------------------------------------------
# model assembly

class EncoderBank:
    """Encoders applied to consecutive slices of the observation vector."""

    def __init__(self, networks):
        self.networks = list(networks)

    @property
    def input_dims(self):
        return tuple(n.input_dim for n in self.networks)

    @property
    def latent_dims(self):
        return tuple(n.output_dim for n in self.networks)

    @property
    def total_latent(self):
        return sum(self.latent_dims)

    def parameters(self):
        return [p for n in self.networks for p in n.parameters()]


class FilterBank:
    """Per-decoder log noise scales; one (total_latent,) vector per decoder."""

    def __init__(self, log_sigma):
        self.log_sigma = list(log_sigma)

    @classmethod
    def build(cls, n_decoders, total_latent, init=-2.0):
        return cls([Parameter(f"filter.{i}.log_sigma", np.full(total_latent, float(init)))
                    for i in range(n_decoders)])

    @property
    def matrix(self):
        return np.stack([p.value for p in self.log_sigma])

    def parameters(self):
        return list(self.log_sigma)


class DecoderBank:
    def __init__(self, networks, question_dims, answer_dims):
        self.networks = list(networks)
        self.question_dims = tuple(question_dims)
        self.answer_dims = tuple(answer_dims)

    def parameters(self):
        return [p for n in self.networks for p in n.parameters()]


@dataclass
class CommModel:
    encoders: EncoderBank
    filters: FilterBank
    decoders: DecoderBank

    def parameters(self):
        return (self.encoders.parameters() + self.filters.parameters()
                + self.decoders.parameters())

    @property
    def n_decoders(self):
        return len(self.decoders.networks)


def build_model(observation_dims, latent_dims, question_dims, answer_dims,
                encoder_hidden, decoder_hidden, rng, filter_init=-2.0):
    if len(observation_dims) != len(latent_dims):
        raise ConfigurationError("need one latent width per encoder")
    if len(question_dims) != len(answer_dims):
        raise ConfigurationError("need one answer width per question width")
    encoders = EncoderBank([
        DenseNetwork.build((obs,) + tuple(encoder_hidden) + (lat,), rng, name=f"enc{i}")
        for i, (obs, lat) in enumerate(zip(observation_dims, latent_dims))])
    total_latent = encoders.total_latent
    decoders = DecoderBank([
        DenseNetwork.build((total_latent + q,) + tuple(decoder_hidden) + (a,), rng,
                           name=f"dec{i}")
        for i, (q, a) in enumerate(zip(question_dims, answer_dims))],
        question_dims, answer_dims)
    filters = FilterBank.build(len(question_dims), total_latent, filter_init)
    return CommModel(encoders, filters, decoders)


# ---------------------------------------------------------------------------
# forward graph pieces

def encode(tape, encoders: EncoderBank, obs):
    """Concatenated latent means, encoders applied in declared order."""
    obs_v = ad.value_of(obs)
    if obs_v.shape[1] != sum(encoders.input_dims):
        raise ConfigurationError(
            f"observation width {obs_v.shape[1]} != {sum(encoders.input_dims)}")
    parts = []
    offset = 0
    for net in encoders.networks:
        parts.append(net.forward(tape, obs_v[:, offset:offset + net.input_dim]))
        offset += net.input_dim
    if len(parts) == 1:
        return parts[0]
    return ad.concat(tape, parts, axis=1)


def filtered_latent(tape, filters: FilterBank, i, mu, rng):
    """Noisy latent for decoder i: z = mu + exp(log_sigma_i) * xi."""
    return ad.gaussian_reparam_sample(tape, mu, ad.leaf(tape, filters.log_sigma[i]), rng)


def answer(tape, decoders: DecoderBank, i, z, question):
    """Decoder i forward pass on the filtered latent plus its question."""
    net = decoders.networks[i]
    if decoders.question_dims[i] == 0:
        return net.forward(tape, z)
    return net.forward(tape, ad.concat(tape, [z, question], axis=1))


def prediction_loss(tape, predicted, target, mask=None):
    """Squared error, averaged over components and batch (mask-weighted)."""
    d = ad.sub(tape, predicted, target)
    sq = ad.mul(tape, d, d)
    if mask is None:
        return ad.mean(tape, sq)
    weight = float(np.sum(mask))
    if weight == 0.0:
        return None
    return ad.scale(tape, ad.total(tape, ad.mul(tape, sq, mask)), 1.0 / weight)


def communication_loss(tape, filters: FilterBank):
    """-sum of all log sigma entries over decoders and latents."""
    acc = None
    for p in filters.log_sigma:
        s = ad.total(tape, ad.leaf(tape, p))
        acc = s if acc is None else ad.add(tape, acc, s)
    return ad.neg(tape, acc)


@dataclass
class LossWeights:
    pred_weight: float = 1.0
    comm_weight: float = 1e-3
    decoder_weights: tuple | None = None

    def __post_init__(self):
        if self.pred_weight < 0 or self.comm_weight < 0:
            raise ConfigurationError("loss weights must be nonnegative")


def total_loss(tape, model: CommModel, obs, questions, targets, masks, weights,
               comm_weight_now, noise_rng, decoder_ramp=None):
    """Training objective for one batch; returns (loss node, per-decoder values)."""
    mu = encode(tape, model.encoders, obs)
    pred_terms = []
    per_decoder = []
    for i in range(model.n_decoders):
        z = filtered_latent(tape, model.filters, i, mu, noise_rng)
        a = answer(tape, model.decoders, i, z, questions[i])
        mask = None if masks is None else masks[i]
        li = prediction_loss(tape, a, targets[i], mask)
        if li is None:
            per_decoder.append(np.nan)
            continue
        per_decoder.append(float(li.value))
        w = 1.0 if weights.decoder_weights is None else weights.decoder_weights[i]
        if decoder_ramp is not None:
            w *= decoder_ramp[i]
        if w == 0.0:
            continue
        pred_terms.append(li if w == 1.0 else ad.scale(tape, li, w))
    comm = communication_loss(tape, model.filters)
    loss = ad.scale(tape, comm, comm_weight_now)
    if pred_terms:
        pred_sum = pred_terms[0]
        for term in pred_terms[1:]:
            pred_sum = ad.add(tape, pred_sum, term)
        loss = ad.add(tape, ad.scale(tape, pred_sum, weights.pred_weight), loss)
    return loss, per_decoder, float(comm.value)


# ---------------------------------------------------------------------------
# plain (noise-free) evaluation

def encode_plain(model: CommModel, obs):
    parts = []
    offset = 0
    for net in model.encoders.networks:
        parts.append(net.forward_plain(obs[:, offset:offset + net.input_dim]))
        offset += net.input_dim
    return np.concatenate(parts, axis=1)


def predict_plain(model: CommModel, obs, questions):
    """Noise-free answers (z = mu) for each decoder."""
    mu = encode_plain(model, obs)
    outputs = []
    for i, net in enumerate(model.decoders.networks):
        if model.decoders.question_dims[i] == 0:
            outputs.append(net.forward_plain(mu))
        else:
            outputs.append(net.forward_plain(np.concatenate([mu, questions[i]], axis=1)))
    return outputs


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class TransmittanceRecord:
    """Snapshot of t_ij = log_sigma_ij - log(std over training set of mu_j)."""

    step: int
    t: np.ndarray          # (n_decoders, total_latent)
    mu_std: np.ndarray     # (total_latent,)


def transmittance(model: CommModel, train_obs, step):
    mu = encode_plain(model, train_obs)
    mu_std = mu.std(axis=0)
    log_std = np.log(np.maximum(mu_std, 1e-300))
    return TransmittanceRecord(step, model.filters.matrix - log_std, mu_std)


def transmitted_set(record: TransmittanceRecord, i):
    """Latent indices decoder i effectively receives: {j : t_ij < 0}."""
    return set(np.nonzero(record.t[i] < 0.0)[0].tolist())


def latent_scan(encode_fn, grid, observation_generator):
    """Record noise-free latent means over a grid of hidden parameters.

    ``grid`` maps parameter names to equal-length 1-D arrays (already
    flattened); ``observation_generator(grid)`` returns the matching batch of
    observations. Returns a dict with the grid columns plus ``mu``.
    """
    names = list(grid)
    cols = [np.asarray(grid[n], dtype=float).ravel() for n in names]
    length = {c.shape[0] for c in cols}
    if len(length) > 1:
        raise ConfigurationError("grid columns must have equal lengths")
    obs = observation_generator({n: c for n, c in zip(names, cols)})
    mu = encode_fn(obs)
    out = {n: c for n, c in zip(names, cols)}
    out["mu"] = mu
    return out


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainingSchedule:
    steps: int = 20000
    batch_size: int = 256
    eval_interval: int = 500
    learning_rate: float = 1e-3
    comm_anneal_frac: float = 0.2   # ramp comm weight over this fraction of steps; 0 disables
    lr_decay_at: tuple = ()         # fractions of total steps where lr drops
    lr_decay_factor: float = 0.2
    decoder_warmup: tuple = ()      # per-decoder fraction of steps to ramp its loss in

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.eval_interval < 1:
            raise ConfigurationError("schedule counts must be positive")
        if not 0.0 <= self.comm_anneal_frac <= 1.0:
            raise ConfigurationError("comm_anneal_frac must lie in [0, 1]")

    def lr_at(self, step):
        lr = self.learning_rate
        for frac in self.lr_decay_at:
            if step > frac * self.steps:
                lr *= self.lr_decay_factor
        return lr

    def decoder_ramp(self, step, n_decoders):
        """Per-decoder multiplier in [0, 1]; decoders without warmup stay at 1."""
        if not self.decoder_warmup:
            return None
        ramp = []
        for i in range(n_decoders):
            frac = self.decoder_warmup[i] if i < len(self.decoder_warmup) else 0.0
            ramp.append(1.0 if frac <= 0 else min(1.0, step / (frac * self.steps)))
        return ramp


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)        # TransmittanceRecord
    losses: list = field(default_factory=list)         # dict per eval interval

    @property
    def final_record(self):
        return self.records[-1]


def train_model(model: CommModel, dataset: TrainingSet, weights: LossWeights,
                schedule: TrainingSchedule, noise_rng, batch_rng):
    """Adam-train the full model; records transmittance each eval interval."""
    n = dataset.n_samples
    if n == 0:
        raise ConfigurationError("dataset is empty")
    obs = dataset.observations
    questions = dataset.questions
    targets = dataset.answers
    masks = dataset.answer_masks
    params = model.parameters()
    state = AdamState(lr=schedule.learning_rate)
    history = TrainHistory()
    anneal_steps = schedule.comm_anneal_frac * schedule.steps

    for step in range(1, schedule.steps + 1):
        idx = batch_rng.integers(0, n, size=schedule.batch_size)
        batch_q = [q[idx] for q in questions]
        batch_t = [t[idx] for t in targets]
        batch_m = None if masks is None else [m[idx] for m in masks]
        if anneal_steps > 0:
            w_comm = weights.comm_weight * min(1.0, step / anneal_steps)
        else:
            w_comm = weights.comm_weight
        state.lr = schedule.lr_at(step)
        ramp = schedule.decoder_ramp(step, model.n_decoders)
        tape = ad.Tape()
        loss, per_decoder, comm_value = total_loss(
            tape, model, obs[idx], batch_q, batch_t, batch_m, weights, w_comm,
            noise_rng, decoder_ramp=ramp)
        loss_value = float(loss.value)
        if not np.isfinite(loss_value):
            raise TrainingError(f"loss diverged at step {step}")
        grads = ad.backward(tape, loss, params=params)
        adam_step(state, params, grads)

        if step % schedule.eval_interval == 0 or step == schedule.steps:
            record = transmittance(model, obs, step)
            history.records.append(record)
            entry = {"step": step, "total_loss": loss_value, "comm_loss": comm_value,
                     "comm_weight": w_comm}
            for i, v in enumerate(per_decoder):
                entry[f"pred_loss_{i}"] = v
            history.losses.append(entry)
    return history


# ---------------------------------------------------------------------------
# estimator facade

class CommunicationNet(BaseEstimator, TransformerMixin):
    """Multi-task regressor with a communication-minimal latent bottleneck.

    ``X`` rows are ``[observation | question_1 | ... | question_k]`` columns
    in declared order and ``y`` rows are ``[answer_1 | ... | answer_k]``.
    ``transform`` returns the latent means (using only the observation
    columns), ``predict`` returns noise-free answers.

    With the default ``filter_init`` every latent starts out transmitted to
    every decoder; the communication loss then prunes untransmitted latents
    during training.
    """

    def __init__(self, observation_dims=(40,), question_dims=(1, 1, 1, 1),
                 answer_dims=(1, 1, 1, 1), latent_dims=(3,),
                 encoder_hidden=(64, 64), decoder_hidden=(64, 64),
                 pred_weight=1.0, comm_weight=1e-3, decoder_weights=None,
                 comm_anneal_frac=0.2, reconstruction_weight=0.0,
                 decoder_warmup=(), learning_rate=1e-3, batch_size=256,
                 n_steps=20000, eval_interval=500, lr_decay_at=(),
                 lr_decay_factor=0.2, filter_init=-2.0, standardize=True,
                 random_state=0):
        self.observation_dims = observation_dims
        self.question_dims = question_dims
        self.answer_dims = answer_dims
        self.latent_dims = latent_dims
        self.encoder_hidden = encoder_hidden
        self.decoder_hidden = decoder_hidden
        self.pred_weight = pred_weight
        self.comm_weight = comm_weight
        self.decoder_weights = decoder_weights
        self.comm_anneal_frac = comm_anneal_frac
        self.reconstruction_weight = reconstruction_weight
        self.decoder_warmup = decoder_warmup
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.eval_interval = eval_interval
        self.lr_decay_at = lr_decay_at
        self.lr_decay_factor = lr_decay_factor
        self.filter_init = filter_init
        self.standardize = standardize
        self.random_state = random_state

    # -- data plumbing ----------------------------------------------------

    @property
    def _obs_total(self):
        return sum(self.observation_dims)

    def _to_dataset(self, X, y, answer_mask):
        X = check_array(X, "X")
        y = check_array(y, "y")
        check_consistent_length(X, y)
        if answer_mask is not None:
            answer_mask = check_array(answer_mask, "answer_mask")
            check_consistent_length(X, answer_mask)
        return TrainingSet.unpack_xy(X, y, self.observation_dims,
                                     self.question_dims, self.answer_dims,
                                     answer_mask)

    def _standardizer(self, dataset):
        if not self.standardize:
            self.obs_mean_ = np.zeros(self._obs_total)
            self.obs_std_ = np.ones(self._obs_total)
            self.question_means_ = [np.zeros(q) for q in self.question_dims]
            self.question_stds_ = [np.ones(q) for q in self.question_dims]
            return
        self.obs_mean_ = dataset.observations.mean(axis=0)
        self.obs_std_ = np.maximum(dataset.observations.std(axis=0), 1e-12)
        self.question_means_ = [q.mean(axis=0) if q.shape[1] else np.zeros(0)
                                for q in dataset.questions]
        self.question_stds_ = [np.maximum(q.std(axis=0), 1e-12) if q.shape[1] else np.ones(0)
                               for q in dataset.questions]

    def _standardized(self, dataset):
        obs = (dataset.observations - self.obs_mean_) / self.obs_std_
        questions = [(q - m) / s if q.shape[1] else q
                     for q, m, s in zip(dataset.questions, self.question_means_,
                                        self.question_stds_)]
        return TrainingSet(obs, questions, dataset.answers, dataset.observation_dims,
                           dataset.answer_masks, dataset.meta)

    # -- fitting ----------------------------------------------------------

    def fit(self, X, y, answer_mask=None):
        return self.fit_dataset(self._to_dataset(X, y, answer_mask))

    def fit_dataset(self, dataset: TrainingSet):
        """Fit from a TrainingSet directly (same training path as fit)."""
        if dataset.observation_dims != tuple(self.observation_dims):
            raise ConfigurationError(
                f"dataset split {dataset.observation_dims} != declared "
                f"{tuple(self.observation_dims)}")
        if dataset.question_dims != tuple(self.question_dims):
            raise ConfigurationError("dataset question widths do not match")
        if dataset.answer_dims != tuple(self.answer_dims):
            raise ConfigurationError("dataset answer widths do not match")

        streams = split_streams(self.random_state, ("init", "noise", "batch"))
        self._standardizer(dataset)
        std_dataset = self._standardized(dataset)

        question_dims = list(self.question_dims)
        answer_dims = list(self.answer_dims)
        decoder_weights = (None if self.decoder_weights is None
                           else list(self.decoder_weights))
        if self.reconstruction_weight > 0.0:
            # optional extra decoder reconstructing the (standardized) input
            question_dims.append(0)
            answer_dims.append(self._obs_total)
            std_dataset = TrainingSet(
                std_dataset.observations,
                std_dataset.questions + [np.zeros((dataset.n_samples, 0))],
                std_dataset.answers + [std_dataset.observations],
                std_dataset.observation_dims,
                None if std_dataset.answer_masks is None else
                std_dataset.answer_masks + [np.ones_like(std_dataset.observations)],
                std_dataset.meta)
            if decoder_weights is None:
                decoder_weights = [1.0] * len(self.answer_dims)
            decoder_weights.append(self.reconstruction_weight)

        self.model_ = build_model(
            tuple(self.observation_dims), tuple(self.latent_dims),
            tuple(question_dims), tuple(answer_dims),
            tuple(self.encoder_hidden), tuple(self.decoder_hidden),
            streams["init"], self.filter_init)
        weights = LossWeights(self.pred_weight, self.comm_weight,
                              None if decoder_weights is None else tuple(decoder_weights))
        schedule = TrainingSchedule(self.n_steps, self.batch_size,
                                    self.eval_interval, self.learning_rate,
                                    self.comm_anneal_frac,
                                    tuple(self.lr_decay_at), self.lr_decay_factor,
                                    tuple(self.decoder_warmup))
        self.history_ = train_model(self.model_, std_dataset, weights, schedule,
                                    streams["noise"], streams["batch"])
        self.mu_std_ = self.history_.final_record.mu_std
        self.n_features_in_ = self._obs_total + sum(self.question_dims)
        return self

    # -- inference --------------------------------------------------------

    def _obs_from_X(self, X):
        X = check_array(X, "X")
        if X.shape[1] == self._obs_total:
            return X, None
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"X must have {self._obs_total} (observations only) or "
                f"{self.n_features_in_} columns, got {X.shape[1]}")
        questions = []
        offset = self._obs_total
        for q in self.question_dims:
            questions.append(X[:, offset:offset + q])
            offset += q
        return X[:, :self._obs_total], questions

    def transform(self, X):
        """Latent means for the observation columns of X (no noise)."""
        check_is_fitted(self)
        obs, _ = self._obs_from_X(X)
        return encode_plain(self.model_, (obs - self.obs_mean_) / self.obs_std_)

    def predict(self, X):
        """Noise-free answers for full [observation | questions] rows."""
        check_is_fitted(self)
        obs, questions = self._obs_from_X(X)
        if questions is None and any(self.question_dims):
            raise ConfigurationError("predict needs question columns in X")
        if questions is None:
            questions = [np.zeros((obs.shape[0], 0)) for _ in self.question_dims]
        obs = (obs - self.obs_mean_) / self.obs_std_
        questions = [(q - m) / s if q.shape[1] else q
                     for q, m, s in zip(questions, self.question_means_,
                                        self.question_stds_)]
        outputs = predict_plain(self.model_, obs, questions)
        return np.concatenate(outputs[:len(self.answer_dims)], axis=1)

    def predict_decoder(self, i, obs, question=None):
        """Noise-free answer of a single decoder on raw observations."""
        check_is_fitted(self)
        obs = check_array(obs, "obs")
        obs = (obs - self.obs_mean_) / self.obs_std_
        mu = encode_plain(self.model_, obs)
        if self.question_dims[i] == 0:
            return self.model_.decoders.networks[i].forward_plain(mu)
        question = check_array(question, "question")
        question = (question - self.question_means_[i]) / self.question_stds_[i]
        return self.model_.decoders.networks[i].forward_plain(
            np.concatenate([mu, question], axis=1))

    # -- diagnostics --------------------------------------------------------

    @property
    def filter_matrix_(self):
        check_is_fitted(self)
        return self.model_.filters.matrix

    def transmitted_sets(self, include_reconstruction=False):
        """Final transmitted latent set per decoder."""
        check_is_fitted(self)
        record = self.history_.final_record
        k = record.t.shape[0] if include_reconstruction else len(self.answer_dims)
        return [transmitted_set(record, i) for i in range(k)]
