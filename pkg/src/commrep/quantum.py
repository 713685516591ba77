"""Two-qubit data generation: random states, projective measurements, marginals.

Observations are the Born probabilities of a fixed set of 75 random two-qubit
projectors; questions are random projectors encoded through their overlaps
with fixed probe sets; targets are the corresponding outcome probabilities on
a reduced qubit (decoders 1 and 2) or on the joint state (decoder 3).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datasets import TrainingSet
from .errors import ConfigurationError, DataGenerationError

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10


def validate_density_matrix(rho, dim=4):
    rho = np.asarray(rho)
    if rho.shape != (dim, dim):
        raise DataGenerationError(f"density matrix must be {dim}x{dim}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_TOL:
        raise DataGenerationError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL or abs(np.trace(rho).imag) > TRACE_TOL:
        raise DataGenerationError("density matrix trace differs from 1")
    if np.min(np.linalg.eigvalsh(rho)) < -PSD_TOL:
        raise DataGenerationError("density matrix is not positive semi-definite")
    return rho


@dataclass(frozen=True)
class MeasurementSet:
    """A fixed list of rank-1 projectors given by their pure states."""

    states: np.ndarray   # (count, dim) complex, rows unit norm
    role: str            # "reference" | "question-1q" | "question-2q"

    def __post_init__(self):
        norms = np.linalg.norm(self.states, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ConfigurationError("measurement states must be unit norm")

    @property
    def count(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]


def random_pure_state(dim, rng):
    """Haar-uniform pure state: normalized complex standard-normal vector."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_pure_states(dim, count, rng):
    v = rng.standard_normal((count, dim)) + 1j * rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_density_matrix(rng):
    """Ginibre construction: rho = G G^dagger / tr(G G^dagger) for complex normal G."""
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    w = g @ g.conj().T
    return w / np.trace(w).real


def random_density_matrices(count, rng):
    g = rng.standard_normal((count, 4, 4)) + 1j * rng.standard_normal((count, 4, 4))
    w = g @ g.conj().transpose(0, 2, 1)
    tr = np.einsum("nii->n", w).real
    return w / tr[:, None, None]


def born_probability(rho, psi):
    """<psi|rho|psi> as a real probability in [0, 1]."""
    val = np.vdot(psi, np.asarray(rho) @ psi)
    if abs(val.imag) > 1e-12:
        raise DataGenerationError("Born probability has a non-negligible imaginary part")
    return float(val.real)


def born_probabilities(rhos, states):
    """Batch Born rule: (n_states,) x (n_rhos, d, d) -> (n_rhos, n_states)."""
    return np.einsum("mi,nij,mj->nm", states.conj(), rhos, states).real


def partial_trace(rho, keep):
    """Reduced 2x2 state of qubit `keep` (0 = first, 1 = second)."""
    m = np.asarray(rho).reshape(2, 2, 2, 2)
    if keep == 0:
        return np.einsum("abcb->ac", m)
    if keep == 1:
        return np.einsum("abad->bd", m)
    raise ConfigurationError("keep must be 0 or 1")


def partial_traces(rhos, keep):
    m = np.asarray(rhos).reshape(-1, 2, 2, 2, 2)
    if keep == 0:
        return np.einsum("nabcb->nac", m)
    if keep == 1:
        return np.einsum("nabad->nbd", m)
    raise ConfigurationError("keep must be 0 or 1")


def bloch_components(rho_reduced):
    """(x, y, z) = tr(rho sigma_i) of a one-qubit state."""
    r = np.asarray(rho_reduced)
    x = np.trace(r @ PAULI["X"]).real
    y = np.trace(r @ PAULI["Y"]).real
    z = np.trace(r @ PAULI["Z"]).real
    return x, y, z


def bloch_state(x, y, z):
    """One-qubit density matrix with the given Bloch components."""
    if x * x + y * y + z * z > 1.0 + 1e-9:
        raise ConfigurationError("Bloch vector must lie in the unit ball")
    return 0.5 * (PAULI["I"] + x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"])


def reference_encoding(rho, refs: MeasurementSet):
    """Observation vector: Born probability of each reference projector."""
    if refs.dim != 4:
        raise ConfigurationError("reference measurements must act on two qubits")
    return born_probabilities(np.asarray(rho)[None], refs.states)[0]


def question_encoding(omega, probes: MeasurementSet):
    """Question vector: |<probe_i|omega>|^2 for each probe."""
    omega = np.asarray(omega)
    if omega.shape[-1] != probes.dim:
        raise ConfigurationError("question state and probes must share a dimension")
    return np.abs(probes.states.conj() @ omega) ** 2


def pauli_basis_4():
    """The 16 two-qubit Pauli products, flattened in a fixed order."""
    labels = [a + b for a in "IXYZ" for b in "IXYZ"]
    return [np.kron(PAULI[a], PAULI[b]) for a, b in labels], labels


def design_matrix(refs: MeasurementSet):
    """Real 75x16 matrix of tr(P_m B_k) over the Pauli product basis."""
    basis, _ = pauli_basis_4()
    rows = []
    for psi in refs.states:
        rows.append([np.vdot(psi, b @ psi).real for b in basis])
    return np.array(rows)


def draw_measurement_set(dim, count, rng, role):
    return MeasurementSet(random_pure_states(dim, count, rng), role)


def draw_reference_set(rng, count=75, max_tries=32):
    """Reference projectors, re-drawn until the tomography map has full rank 16."""
    for _ in range(max_tries):
        refs = draw_measurement_set(4, count, rng, "reference")
        if np.linalg.matrix_rank(design_matrix(refs), tol=1e-8) == 16:
            return refs
    raise DataGenerationError("could not draw an informationally complete reference set")


def fixed_measurement_sets(seed, count=75):
    """The three fixed measurement sets of one experiment, from one seed."""
    from .rng import seeded_rng

    rng = seeded_rng(seed)
    refs = draw_reference_set(rng, count)
    probes_1q = draw_measurement_set(2, count, rng, "question-1q")
    probes_2q = draw_measurement_set(4, count, rng, "question-2q")
    return refs, probes_1q, probes_2q


def sample_dataset(count, refs: MeasurementSet, probes_1q: MeasurementSet,
                   probes_2q: MeasurementSet, rng):
    """Draw `count` quantum training samples.

    Per sample: a Ginibre mixed state generates the observation; decoders 1
    and 2 are asked for <omega|tr_other(rho)|omega> with a fresh random
    one-qubit omega each, decoder 3 for <omega|rho|omega> with a two-qubit
    omega. Questions are the probe-overlap encodings of the omegas.
    """
    if probes_1q.dim != 2 or probes_2q.dim != 4:
        raise ConfigurationError("probe sets have wrong dimensions")
    rhos = random_density_matrices(count, rng)
    obs = born_probabilities(rhos, refs.states)

    questions, answers = [], []
    for keep in (0, 1):
        omegas = random_pure_states(2, count, rng)
        reduced = partial_traces(rhos, keep)
        targets = np.einsum("ni,nij,nj->n", omegas.conj(), reduced, omegas).real
        enc = np.abs(omegas @ probes_1q.states.conj().T) ** 2
        questions.append(enc)
        answers.append(targets[:, None])
    omegas = random_pure_states(4, count, rng)
    targets = np.einsum("ni,nij,nj->n", omegas.conj(), rhos, omegas).real
    enc = np.abs(omegas @ probes_2q.states.conj().T) ** 2
    questions.append(enc)
    answers.append(targets[:, None])

    meta = {"suite": "quantum", "n_measurements": refs.count}
    return TrainingSet(obs, questions, answers, (refs.count,), None, meta)


def product_state_observation(bloch, qubit, refs: MeasurementSet):
    """Observation for a product state with one qubit at the given Bloch vector.

    The other qubit is maximally mixed, so scans vary only the local degrees
    of freedom of `qubit`.
    """
    one = bloch_state(*bloch)
    if qubit == 0:
        rho = np.kron(one, PAULI["I"] / 2.0)
    elif qubit == 1:
        rho = np.kron(PAULI["I"] / 2.0, one)
    else:
        raise ConfigurationError("qubit must be 0 or 1")
    return reference_encoding(rho, refs)


def save_measurement_sets(path, refs, probes_1q, probes_2q, seed):
    arrays = {
        "refs_real": refs.states.real, "refs_imag": refs.states.imag,
        "probes_1q_real": probes_1q.states.real, "probes_1q_imag": probes_1q.states.imag,
        "probes_2q_real": probes_2q.states.real, "probes_2q_imag": probes_2q.states.imag,
    }
    header = {"format": "commrep-measurements", "version": 1, "seed": seed}
    arrays["header_json"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_measurement_sets(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header_json"]).decode())
        if header.get("format") != "commrep-measurements":
            raise ConfigurationError(f"{path} is not a measurement-set file")
        refs = MeasurementSet(data["refs_real"] + 1j * data["refs_imag"], "reference")
        p1 = MeasurementSet(data["probes_1q_real"] + 1j * data["probes_1q_imag"], "question-1q")
        p2 = MeasurementSet(data["probes_2q_real"] + 1j * data["probes_2q_imag"], "question-2q")
    return refs, p1, p2
