"""Single-file checkpoints: named float64 tensors plus a JSON header.

Backed by numpy's .npz container (an indexed zip of little-endian arrays),
which round-trips every tensor bit-exactly.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import ConfigurationError
from .model import CommModel, CommunicationNet, DecoderBank, EncoderBank, FilterBank
from .nn import DenseNetwork, Layer, Parameter

FORMAT_MODEL = "commrep-checkpoint"
FORMAT_AGENT = "commrep-dps-agent"
VERSION = 1


def _network_arrays(net: DenseNetwork, prefix, arrays, meta_layers):
    for j, layer in enumerate(net.layers):
        arrays[f"{prefix}.l{j}.W"] = layer.weight.value
        arrays[f"{prefix}.l{j}.b"] = layer.bias.value
        meta_layers.append(layer.activation)


def _network_from_arrays(prefix, arrays, activations, name):
    layers = []
    for j, act in enumerate(activations):
        w = Parameter(f"{name}.l{j}.W", arrays[f"{prefix}.l{j}.W"])
        b = Parameter(f"{name}.l{j}.b", arrays[f"{prefix}.l{j}.b"])
        layers.append(Layer(w, b, act))
    return DenseNetwork(layers, name=name)


def save_model(path, estimator: CommunicationNet, extra_meta=None):
    """Persist a fitted CommunicationNet (weights, filters, scalers, seed)."""
    model = estimator.model_
    arrays = {}
    meta = {
        "format": FORMAT_MODEL,
        "version": VERSION,
        "params": _jsonable(estimator.get_params()),
        "seed": estimator.random_state,
        "final_step": int(estimator.history_.final_record.step),
        "encoders": [], "decoders": [],
        "question_dims": list(model.decoders.question_dims),
        "answer_dims": list(model.decoders.answer_dims),
        "extra": extra_meta or {},
    }
    for i, net in enumerate(model.encoders.networks):
        acts = []
        _network_arrays(net, f"enc{i}", arrays, acts)
        meta["encoders"].append(acts)
    for i, net in enumerate(model.decoders.networks):
        acts = []
        _network_arrays(net, f"dec{i}", arrays, acts)
        meta["decoders"].append(acts)
    for i, p in enumerate(model.filters.log_sigma):
        arrays[f"filter.{i}.log_sigma"] = p.value
    arrays["obs_mean"] = estimator.obs_mean_
    arrays["obs_std"] = estimator.obs_std_
    for i, (m, s) in enumerate(zip(estimator.question_means_, estimator.question_stds_)):
        arrays[f"q{i}.mean"] = m
        arrays[f"q{i}.std"] = s
    arrays["mu_std"] = estimator.mu_std_
    arrays["header_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_model(path) -> CommunicationNet:
    """Rebuild a fitted CommunicationNet from a checkpoint file."""
    from .model import TrainHistory, TransmittanceRecord

    with np.load(path) as data:
        meta = json.loads(bytes(data["header_json"]).decode())
        if meta.get("format") != FORMAT_MODEL:
            raise ConfigurationError(f"{path} is not a model checkpoint")
        params = meta["params"]
        for key in ("observation_dims", "question_dims", "answer_dims",
                    "latent_dims", "encoder_hidden", "decoder_hidden"):
            if params.get(key) is not None:
                params[key] = tuple(params[key])
        if params.get("decoder_weights") is not None:
            params["decoder_weights"] = tuple(params["decoder_weights"])
        est = CommunicationNet(**params)
        encoders = EncoderBank([
            _network_from_arrays(f"enc{i}", data, acts, f"enc{i}")
            for i, acts in enumerate(meta["encoders"])])
        decoders = DecoderBank([
            _network_from_arrays(f"dec{i}", data, acts, f"dec{i}")
            for i, acts in enumerate(meta["decoders"])],
            tuple(meta["question_dims"]), tuple(meta["answer_dims"]))
        filters = FilterBank([
            Parameter(f"filter.{i}.log_sigma", data[f"filter.{i}.log_sigma"])
            for i in range(len(meta["decoders"]))])
        est.model_ = CommModel(encoders, filters, decoders)
        est.obs_mean_ = data["obs_mean"]
        est.obs_std_ = data["obs_std"]
        est.question_means_ = [data[f"q{i}.mean"] for i in range(len(est.question_dims))]
        est.question_stds_ = [data[f"q{i}.std"] for i in range(len(est.question_dims))]
        est.mu_std_ = data["mu_std"]
        est.n_features_in_ = sum(est.observation_dims) + sum(est.question_dims)
        t = filters.matrix - np.log(np.maximum(est.mu_std_, 1e-300))
        record = TransmittanceRecord(meta["final_step"], t, est.mu_std_)
        est.history_ = TrainHistory(records=[record], losses=[])
        est.checkpoint_meta_ = meta["extra"]
    return est


def save_agent(path, agent, extra_meta=None):
    """Persist a DPS agent (h network and hyperparameters)."""
    arrays = {}
    acts = []
    _network_arrays(agent.h_net, "hnet", arrays, acts)
    meta = {
        "format": FORMAT_AGENT,
        "version": VERSION,
        "activations": acts,
        "beta": agent.beta,
        "gamma_ps": agent.gamma_ps,
        "eta": agent.eta,
        "l_max": agent.l_max,
        "grid_shape": list(agent.grid_shape),
        "encoding": agent.encoding,
        "extra": extra_meta or {},
    }
    arrays["header_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_agent(path):
    from .dps import DPSAgent

    with np.load(path) as data:
        meta = json.loads(bytes(data["header_json"]).decode())
        if meta.get("format") != FORMAT_AGENT:
            raise ConfigurationError(f"{path} is not an agent checkpoint")
        net = _network_from_arrays("hnet", data, meta["activations"], "hnet")
        return DPSAgent(net, beta=meta["beta"], gamma_ps=meta["gamma_ps"],
                        eta=meta["eta"], l_max=meta["l_max"],
                        grid_shape=tuple(meta["grid_shape"]),
                        encoding=meta["encoding"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
