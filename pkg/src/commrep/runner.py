"""Experiment orchestration: datasets, training runs, scans, verification.

Every artifact is written atomically (temp file + rename); every CSV starts
with a comment line recording the resolved-config hash and master seed, so a
run can be reproduced bit-for-bit from its own outputs.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import checkpoint as ckpt
from . import classical, quantum
from .config import ExperimentConfig, classical_constants
from .datasets import TrainingSet
from .dps import (DPSAgent, DPSSchedule, evaluate_success_rate, train_agent)
from .errors import ConfigurationError
from .gridworld import SubGridWorld, encode_positions
from .model import CommunicationNet, latent_scan, transmitted_set
from .returns import return_training_set, verify_guarantee
from .rng import seeded_rng

PLANES = ("xy", "yz", "xz")


def derive_seeds(master_seed, names=("dataset", "init", "noise", "rollout")):
    """Deterministically split one master seed into named integer seeds."""
    children = np.random.SeedSequence(master_seed).spawn(len(names))
    return {name: int(seq.generate_state(1)[0]) for name, seq in zip(names, children)}


# ---------------------------------------------------------------------------
# atomic artifact writers

def _atomic_write(path, write_fn, mode="w"):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows, config_hash, seed):
    """CSV with a provenance comment line; floats use shortest round-trip."""

    def emit(fh):
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(c) for c in row])

    _atomic_write(path, emit)
    return path


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def write_json(path, payload):
    _atomic_write(path, lambda fh: json.dump(payload, fh, indent=2, sort_keys=True))
    return path


@dataclass
class RunArtifacts:
    out_dir: str
    seed: int
    config_hash: str
    checkpoint: str | None = None
    metrics: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# dataset builders

def build_dataset(config: ExperimentConfig, dataset_seed):
    """Suite dataset plus any sidecar objects (quantum measurement sets)."""
    rng = seeded_rng(dataset_seed)
    if config.suite in ("classical-single", "classical-dual"):
        consts, ranges = classical_constants(config.physics)
        split = "single" if config.suite == "classical-single" else "dual"
        ds = classical.sample_dataset(consts, config.dataset.count, rng, split, ranges)
        return ds, None
    if config.suite == "quantum":
        meas_seed = config.physics.measurement_seed
        if meas_seed is None:
            meas_seed = derive_seeds(dataset_seed, ("measurements",))["measurements"]
        sets = quantum.fixed_measurement_sets(meas_seed, config.physics.n_measurements)
        ds = quantum.sample_dataset(config.dataset.count, *sets, rng)
        ds.meta["measurement_seed"] = meas_seed
        return ds, sets
    raise ConfigurationError(f"no direct dataset builder for suite {config.suite!r}")


def _estimator(config: ExperimentConfig, model_seed, steps_override=None):
    steps = steps_override or config.schedule.steps
    return CommunicationNet(
        observation_dims=config.observation_dims(),
        question_dims=config.question_dims(),
        answer_dims=config.answer_dims(),
        latent_dims=tuple(config.network.latent_dims),
        encoder_hidden=tuple(config.network.encoder_hidden),
        decoder_hidden=tuple(config.network.decoder_hidden),
        pred_weight=config.loss.pred_weight,
        comm_weight=config.loss.comm_weight,
        decoder_weights=None if config.loss.decoder_weights is None
        else tuple(config.loss.decoder_weights),
        comm_anneal_frac=config.loss.comm_anneal_frac,
        reconstruction_weight=config.loss.reconstruction_weight,
        learning_rate=config.schedule.learning_rate,
        batch_size=config.schedule.batch_size,
        n_steps=steps,
        eval_interval=config.schedule.eval_interval,
        lr_decay_at=tuple(config.schedule.lr_decay_at),
        lr_decay_factor=config.schedule.lr_decay_factor,
        random_state=model_seed,
    )


# ---------------------------------------------------------------------------
# shared artifact emission

def _emit_model_artifacts(est, config, out_dir, seed, test_set, extra_meta=None):
    chash = config.config_hash()
    files = {}
    history = est.history_

    rows = [[e["step"], e["total_loss"], e["comm_loss"], e["comm_weight"]]
            + [e.get(f"pred_loss_{i}", math.nan) for i in range(len(est.answer_dims))]
            for e in history.losses]
    header = ["step", "total_loss", "comm_loss", "comm_weight"] + \
             [f"pred_loss_{i}" for i in range(len(est.answer_dims))]
    files["loss_history"] = write_csv(
        os.path.join(out_dir, "loss_history.csv"), header, rows, chash, seed)

    k, l = history.records[0].t.shape
    header = ["step"] + [f"t_{i}_{j}" for i in range(k) for j in range(l)]
    rows = [[r.step] + list(r.t.ravel()) for r in history.records]
    files["transmittance"] = write_csv(
        os.path.join(out_dir, "transmittance.csv"), header, rows, chash, seed)

    metrics = {}
    if test_set is not None and test_set.n_samples:
        per_decoder = heldout_metrics(est, test_set)
        metrics["heldout"] = per_decoder
    final_sets = est.transmitted_sets()
    metrics["transmitted_sets"] = [sorted(s) for s in final_sets]
    files["metrics"] = write_json(os.path.join(out_dir, "metrics.json"), metrics)

    ckpt_path = os.path.join(out_dir, "model.npz")
    tmp = ckpt_path + ".tmp.npz"
    ckpt.save_model(tmp, est, extra_meta=extra_meta)
    os.replace(tmp, ckpt_path)
    files["checkpoint"] = ckpt_path
    return files, metrics


def heldout_metrics(est: CommunicationNet, test_set: TrainingSet):
    """Per-decoder MSE, MAE and R^2 on held-out data (noise-free predictions)."""
    out = []
    for i in range(len(est.answer_dims)):
        pred = est.predict_decoder(i, test_set.observations, test_set.questions[i]
                                   if test_set.question_dims[i] else None)
        target = test_set.answers[i]
        if test_set.answer_masks is not None:
            mask = test_set.answer_masks[i]
            if mask.sum() == 0:
                out.append({"mse": None, "mae": None, "r2": None})
                continue
            err = (pred - target) * mask
            mse = float((err ** 2).sum() / mask.sum())
            mae = float(np.abs(err).sum() / mask.sum())
            mean = (target * mask).sum() / mask.sum()
            var = ((target - mean) ** 2 * mask).sum() / mask.sum()
        else:
            mse = float(np.mean((pred - target) ** 2))
            mae = float(np.mean(np.abs(pred - target)))
            var = float(np.var(target))
        r2 = float(1.0 - mse / var) if var > 0 else None
        out.append({"mse": mse, "mae": mae, "r2": r2})
    return out


# ---------------------------------------------------------------------------
# latent-scan generators per suite

def classical_scan_generator(consts):
    def generator(grid):
        return classical.observation_batch(grid["m1"], grid["m2"],
                                           grid["q1"], grid["q2"], consts)
    return generator


def quantum_scan_generator(refs):
    def generator(grid):
        qubit = int(np.asarray(grid["qubit"]).ravel()[0])
        rows = [quantum.product_state_observation((x, y, z), qubit, refs)
                for x, y, z in zip(grid["x"], grid["y"], grid["z"])]
        return np.stack(rows)
    return generator


def rl_scan_generator(grid_shape, encoding):
    def generator(grid):
        positions = np.stack([grid["x"], grid["y"], grid["z"]], axis=1).astype(int)
        return encode_positions(positions, grid_shape, encoding)
    return generator


def _scan_to_rows(scan, param_names):
    mu = scan["mu"]
    rows = []
    for idx in range(mu.shape[0]):
        rows.append([scan[p][idx] for p in param_names] + list(mu[idx]))
    header = list(param_names) + [f"mu_{j}" for j in range(mu.shape[1])]
    return header, rows


def _classical_default_scans(est, consts, out_dir, chash, seed):
    files = {}
    m_grid = np.linspace(1.0, 10.0, 20)
    mm1, mm2 = np.meshgrid(m_grid, m_grid, indexing="ij")
    grid = {"m1": mm1.ravel(), "m2": mm2.ravel(),
            "q1": np.full(mm1.size, 0.5), "q2": np.full(mm1.size, 0.5)}
    scan = latent_scan(est.transform, grid, classical_scan_generator(consts))
    header, rows = _scan_to_rows(scan, ["m1", "m2", "q1", "q2"])
    files["scan_masses"] = write_csv(
        os.path.join(out_dir, "scan_masses.csv"), header, rows, chash, seed)

    q_grid = np.linspace(0.1, 1.0, 20)
    qq1, qq2 = np.meshgrid(q_grid, q_grid, indexing="ij")
    grid = {"m1": np.full(qq1.size, 5.0), "m2": np.full(qq1.size, 5.0),
            "q1": qq1.ravel(), "q2": qq2.ravel()}
    scan = latent_scan(est.transform, grid, classical_scan_generator(consts))
    header, rows = _scan_to_rows(scan, ["m1", "m2", "q1", "q2"])
    files["scan_charges"] = write_csv(
        os.path.join(out_dir, "scan_charges.csv"), header, rows, chash, seed)
    return files


def _quantum_default_scans(est, refs, out_dir, chash, seed):
    values = np.linspace(-0.95, 0.95, 39)
    rows_out = []
    for qubit in (0, 1):
        for component in "xyz":
            grid = {"qubit": np.full(values.size, qubit),
                    "x": np.zeros(values.size), "y": np.zeros(values.size),
                    "z": np.zeros(values.size)}
            grid[component] = values
            scan = latent_scan(est.transform, grid, quantum_scan_generator(refs))
            for i, v in enumerate(values):
                rows_out.append([qubit, component, v] + list(scan["mu"][i]))
    header = ["qubit", "component", "value"] + \
             [f"mu_{j}" for j in range(est.mu_std_.size)]
    return {"scan_bloch": write_csv(os.path.join(out_dir, "scan_bloch.csv"),
                                    header, rows_out, chash, seed)}


def _rl_default_scans(est, grid_shape, encoding, out_dir, chash, seed):
    world = SubGridWorld("xy", shape=tuple(grid_shape),
                         goal_coords=(0, 0), episode_cap=1)
    positions = np.asarray(world.all_positions(), dtype=int)
    grid = {"x": positions[:, 0].astype(float), "y": positions[:, 1].astype(float),
            "z": positions[:, 2].astype(float)}
    scan = latent_scan(est.transform, grid, rl_scan_generator(tuple(grid_shape), encoding))
    header, rows = _scan_to_rows(scan, ["x", "y", "z"])
    return {"scan_positions": write_csv(os.path.join(out_dir, "scan_positions.csv"),
                                        header, rows, chash, seed)}


# ---------------------------------------------------------------------------
# the run verbs

def run(config: ExperimentConfig, out_dir, steps_override=None) -> RunArtifacts:
    os.makedirs(out_dir, exist_ok=True)
    seeds = derive_seeds(config.seed)
    chash = config.config_hash()
    artifacts = RunArtifacts(out_dir=out_dir, seed=config.seed, config_hash=chash)
    artifacts.files["config"] = write_json(
        os.path.join(out_dir, "resolved_config.json"),
        {"config": config.resolved(), "config_hash": chash, "seeds": seeds})

    if config.suite == "rl":
        _run_rl(config, out_dir, seeds, artifacts, steps_override)
    else:
        dataset, sidecar = build_dataset(config, seeds["dataset"])
        train_set, test_set = dataset.split(config.dataset.holdout_fraction,
                                            seeded_rng(seeds["dataset"] + 1))
        if config.suite == "quantum":
            refs, p1, p2 = sidecar
            meas_path = os.path.join(out_dir, "measurements.npz")
            tmp = meas_path + ".tmp.npz"
            quantum.save_measurement_sets(tmp, refs, p1, p2,
                                          dataset.meta["measurement_seed"])
            os.replace(tmp, meas_path)
            artifacts.files["measurements"] = meas_path
        est = _estimator(config, seeds["init"], steps_override)
        est.fit_dataset(train_set)
        extra = {"suite": config.suite, "config_hash": chash,
                 "resolved_config": config.resolved()}
        if config.suite == "quantum":
            extra["measurement_seed"] = dataset.meta["measurement_seed"]
        files, metrics = _emit_model_artifacts(est, config, out_dir, config.seed,
                                               test_set, extra_meta=extra)
        artifacts.files.update(files)
        artifacts.metrics.update(metrics)
        artifacts.checkpoint = files["checkpoint"]
        if config.suite in ("classical-single", "classical-dual"):
            consts, _ = classical_constants(config.physics)
            artifacts.files.update(_classical_default_scans(est, consts, out_dir,
                                                            chash, config.seed))
        else:
            artifacts.files.update(_quantum_default_scans(est, sidecar[0], out_dir,
                                                          chash, config.seed))
    summary = dict(artifacts.metrics)
    summary["files"] = artifacts.files
    write_json(os.path.join(out_dir, "run_summary.json"), summary)
    return artifacts


def _run_rl(config: ExperimentConfig, out_dir, seeds, artifacts, steps_override):
    chash = config.config_hash()
    rl = config.rl
    shape = tuple(rl.grid_shape)
    schedule = DPSSchedule(
        episodes=rl.episodes, batch_size=rl.batch_size, beta_start=rl.beta_start,
        beta_end=rl.beta_end, beta_anneal_frac=rl.beta_anneal_frac,
        learning_rate=rl.learning_rate, eval_window=max(1, rl.episodes // 20),
        loss=rl.loss, train_episode_cap=rl.train_episode_cap)
    agent_rng = seeded_rng(seeds["rollout"])
    init_rng = seeded_rng(seeds["init"])
    agents, worlds, curve_rows, eval_metrics = [], [], [], []
    for plane in PLANES:
        goal = None if rl.goal_coords is None else tuple(rl.goal_coords[plane])
        world = SubGridWorld(plane, shape=shape, goal_coords=goal)
        agent = DPSAgent.build(init_rng, hidden=tuple(rl.hidden), grid_shape=shape,
                               encoding=rl.encoding, gamma_ps=rl.gamma_ps,
                               eta=rl.eta, l_max=rl.l_max)
        curve = train_agent(agent, world, schedule, agent_rng)
        sr, mean_len = evaluate_success_rate(agent, world, rl.eval_episodes, agent_rng)
        eval_metrics.append({"plane": plane, "success_rate": sr,
                             "mean_episode_length": mean_len})
        for ep, s, ml in zip(curve.episode, curve.success_rate,
                             curve.mean_episode_length):
            curve_rows.append([plane, ep, s, ml])
        path = os.path.join(out_dir, f"agent_{plane}.npz")
        tmp = path + ".tmp.npz"
        ckpt.save_agent(tmp, agent, extra_meta={"plane": plane, "config_hash": chash})
        os.replace(tmp, path)
        artifacts.files[f"agent_{plane}"] = path
        agents.append(agent)
        worlds.append(world)

    artifacts.files["learning_curves"] = write_csv(
        os.path.join(out_dir, "learning_curves.csv"),
        ["agent", "episode", "success_rate", "mean_episode_length"],
        curve_rows, chash, config.seed)
    artifacts.metrics["agents"] = eval_metrics

    data_rng = seeded_rng(seeds["dataset"])
    dataset = return_training_set(agents, worlds, rl.return_rows_per_agent,
                                  rl.l_max, rl.gamma, data_rng,
                                  grid_shape=shape, encoding=rl.encoding)
    ds_path = os.path.join(out_dir, "return_dataset.npz")
    tmp = ds_path + ".tmp.npz"
    dataset.save(tmp)
    os.replace(tmp, ds_path)
    artifacts.files["return_dataset"] = ds_path
    train_set, test_set = dataset.split(config.dataset.holdout_fraction,
                                        seeded_rng(seeds["dataset"] + 1))

    est = _estimator(config, seeds["init"] + 1, steps_override)
    est.fit_dataset(train_set)
    extra = {"suite": "rl", "config_hash": chash, "grid_shape": list(shape),
             "encoding": rl.encoding, "resolved_config": config.resolved()}
    files, metrics = _emit_model_artifacts(est, config, out_dir, config.seed,
                                           test_set, extra_meta=extra)
    artifacts.files.update(files)
    artifacts.metrics.update(metrics)
    artifacts.checkpoint = files["checkpoint"]
    artifacts.files.update(_rl_default_scans(est, shape, rl.encoding, out_dir,
                                             chash, config.seed))


def generate_data(config: ExperimentConfig, out_dir) -> str:
    """Write the suite dataset (and sidecars) without training anything."""
    os.makedirs(out_dir, exist_ok=True)
    seeds = derive_seeds(config.seed)
    if config.suite == "rl":
        raise ConfigurationError(
            "rl return data requires trained agents; use `run` for the rl suite")
    dataset, sidecar = build_dataset(config, seeds["dataset"])
    path = os.path.join(out_dir, "dataset.npz")
    tmp = path + ".tmp.npz"
    dataset.save(tmp)
    os.replace(tmp, path)
    if config.suite == "quantum":
        refs, p1, p2 = sidecar
        meas = os.path.join(out_dir, "measurements.npz")
        tmp = meas + ".tmp.npz"
        quantum.save_measurement_sets(tmp, refs, p1, p2,
                                      dataset.meta["measurement_seed"])
        os.replace(tmp, meas)
    return path


def scan(checkpoint_path, scan_spec, out_path):
    """Sweep hidden parameters of a checkpointed model and record mu."""
    est = ckpt.load_model(checkpoint_path)
    meta = getattr(est, "checkpoint_meta_", {}) or {}
    suite = meta.get("suite")
    if suite is None:
        raise ConfigurationError("checkpoint does not record its suite")
    known, generator = _scan_context(est, meta, suite)
    sweeps = scan_spec.get("sweep")
    if not sweeps:
        raise ConfigurationError("scan spec needs a nonempty 'sweep' list")
    fixed = scan_spec.get("fixed", {})
    for entry in sweeps:
        if entry.get("param") not in known:
            raise ConfigurationError(
                f"unknown scan parameter {entry.get('param')!r}; expected one of {sorted(known)}")
    for key in fixed:
        if key not in known:
            raise ConfigurationError(
                f"unknown fixed parameter {key!r}; expected one of {sorted(known)}")
    axes = [np.linspace(e["start"], e["stop"], int(e["count"])) for e in sweeps]
    mesh = np.meshgrid(*axes, indexing="ij")
    size = mesh[0].size
    grid = {e["param"]: m.ravel() for e, m in zip(sweeps, mesh)}
    for key in known:
        if key not in grid:
            if key not in fixed:
                raise ConfigurationError(f"parameter {key!r} needs a sweep or fixed value")
            grid[key] = np.full(size, float(fixed[key]))
    result = latent_scan(est.transform, grid, generator)
    names = [e["param"] for e in sweeps] + [k for k in sorted(known) if k not in
                                            {e["param"] for e in sweeps}]
    header, rows = _scan_to_rows(result, names)
    chash = meta.get("config_hash", "none")
    return write_csv(out_path, header, rows, chash, est.random_state)


def _scan_context(est, meta, suite):
    if suite in ("classical-single", "classical-dual"):
        resolved = meta.get("resolved_config", {})
        physics = resolved.get("physics", {})
        from .config import ClassicalConfig
        consts, _ = classical_constants(ClassicalConfig(**{
            k: v for k, v in physics.items()
            if k in ClassicalConfig.__dataclass_fields__}))
        return {"m1", "m2", "q1", "q2"}, classical_scan_generator(consts)
    if suite == "quantum":
        meas_seed = meta.get("measurement_seed")
        if meas_seed is None:
            raise ConfigurationError("quantum checkpoint lacks a measurement seed")
        refs, _, _ = quantum.fixed_measurement_sets(
            meas_seed, sum(est.observation_dims))
        return {"qubit", "x", "y", "z"}, quantum_scan_generator(refs)
    if suite == "rl":
        shape = tuple(meta.get("grid_shape", (12, 12, 12)))
        return {"x", "y", "z"}, rl_scan_generator(shape, meta.get("encoding", "factored"))
    raise ConfigurationError(f"unknown suite {suite!r} in checkpoint")


def report_filters(source, out_dir):
    """Transmittance history plus the final transmitted set per decoder.

    ``source`` is a run directory (with transmittance.csv) or a model
    checkpoint; the summary is always recomputed from the freshest record.
    """
    os.makedirs(out_dir, exist_ok=True)
    if os.path.isdir(source):
        history_csv = os.path.join(source, "transmittance.csv")
        checkpoint_path = os.path.join(source, "model.npz")
    else:
        history_csv = None
        checkpoint_path = source
    est = ckpt.load_model(checkpoint_path)
    record = est.history_.final_record
    k = len(est.answer_dims)
    sets = [sorted(transmitted_set(record, i)) for i in range(k)]
    summary = {
        "final_step": int(record.step),
        "transmitted_sets": sets,
        "set_sizes": [len(s) for s in sets],
        "t_final": record.t.tolist(),
        "mu_std": record.mu_std.tolist(),
    }
    out_json = write_json(os.path.join(out_dir, "filter_summary.json"), summary)
    files = {"summary": out_json}
    if history_csv and os.path.exists(history_csv):
        with open(history_csv) as src:
            content = src.read()
        _atomic_write(os.path.join(out_dir, "filter_history.csv"),
                      lambda fh: fh.write(content))
        files["history"] = os.path.join(out_dir, "filter_history.csv")
    return summary, files


# ---------------------------------------------------------------------------
# training-free verification

def verify(suite) -> dict:
    """Oracle cross-checks for one suite; no training involved."""
    if suite in ("classical", "classical-single", "classical-dual"):
        return _verify_classical()
    if suite == "quantum":
        return _verify_quantum()
    if suite == "rl":
        return _verify_rl()
    raise ConfigurationError(f"unknown suite {suite!r}")


def _verify_classical():
    consts = classical.ExperimentConstants()
    rng = seeded_rng(20260101)
    checks = []

    k = rng.uniform(0.02, 1.5, size=100)
    phi = rng.uniform(0.05, math.pi / 4, size=100)
    v0 = np.sqrt((math.sqrt(2) - 1) * k / (consts.d0 * np.cos(phi) * np.sin(phi)))
    miss = classical.shot_orbit_min_miss(consts, k, phi, v0)
    worst = float(np.max(miss) / (math.sqrt(2) * consts.d0))
    checks.append({"name": "closed_form_orbit_round_trip",
                   "passed": bool(worst < 0.01),
                   "worst_relative_miss": worst, "cases": 100})

    ds = classical.sample_dataset(consts, 1000, seeded_rng(7))
    finite = all(np.all(np.isfinite(a)) for a in ds.answers) and \
        np.all(np.isfinite(ds.observations))
    in_range = all(np.all((a > 0) & (a <= math.pi / 4 + 1e-12)) for a in ds.answers)
    checks.append({"name": "dataset_validity_sweep", "passed": bool(finite and in_range),
                   "samples": 1000})

    sys = classical.ParticlePairSystem(1.5, 1.0, 1.0, 0.5)
    ref = classical.coulomb_reference_series(sys, consts, 0, substeps=512)
    e1 = np.max(np.abs(classical.coulomb_reference_series(sys, consts, 0, substeps=4) - ref))
    e2 = np.max(np.abs(classical.coulomb_reference_series(sys, consts, 0, substeps=8) - ref))
    order = math.log2(e1 / e2)
    checks.append({"name": "rk4_convergence_order", "passed": bool(order >= 3.5),
                   "measured_order": order})
    return {"suite": "classical", "passed": all(c["passed"] for c in checks),
            "checks": checks}


def _verify_quantum():
    checks = []
    refs, p1, p2 = quantum.fixed_measurement_sets(5)
    rank = int(np.linalg.matrix_rank(quantum.design_matrix(refs), tol=1e-8))
    checks.append({"name": "design_matrix_rank", "passed": rank == 16, "rank": rank})

    rhos = quantum.random_density_matrices(10000, seeded_rng(11))
    herm = float(np.max(np.abs(rhos - rhos.conj().transpose(0, 2, 1))))
    tr_err = float(np.max(np.abs(np.einsum("nii->n", rhos) - 1.0)))
    min_eig = float(np.min(np.linalg.eigvalsh(rhos)))
    ok = herm < 1e-12 and tr_err < 1e-12 and min_eig > -1e-10
    checks.append({"name": "density_matrix_invariant_sweep", "passed": bool(ok),
                   "hermiticity": herm, "trace_error": tr_err, "min_eigenvalue": min_eig,
                   "samples": 10000})

    probs = quantum.born_probabilities(rhos[:1000], refs.states)
    checks.append({"name": "born_probabilities_in_unit_interval",
                   "passed": bool(probs.min() >= 0.0 and probs.max() <= 1.0)})
    return {"suite": "quantum", "passed": all(c["passed"] for c in checks),
            "checks": checks}


def _verify_rl():
    from .gridworld import N_ACTIONS

    world = SubGridWorld(plane="xy", shape=(4, 4, 2), goal_coords=(2, 3))

    def suboptimal(_pos):
        return [Fraction(1, 4), Fraction(1, 4), Fraction(1, 8), Fraction(1, 8),
                Fraction(1, 8), Fraction(1, 8)]

    report = verify_guarantee(world, suboptimal, l_max=8, gamma=Fraction(9, 10))
    checks = [{"name": "reconstruction_guarantee_min_gap",
               "passed": bool(report["min_gap"] >= 0.0),
               "min_gap": report["min_gap"],
               "epsilon_bound": report["epsilon_bound"],
               "delta_pi": report["delta_pi"]}]
    return {"suite": "rl", "passed": all(c["passed"] for c in checks),
            "checks": checks, "guarantee_report": report}
