"""Communication-minimal disentangled representations of physical systems.

The core object is CommunicationNet: one or more encoders compress an
observation into latent parameters, per-decoder noise filters decide which
parameters each downstream question-answering decoder receives, and training
trades prediction error against the amount of transmitted information.
Experiment suites (charged masses, two-qubit tomography, sub-grid-world
reinforcement learning) generate the data and oracles around it.
"""

from .datasets import TrainingSet
from .model import (
    CommunicationNet,
    LossWeights,
    TrainingSchedule,
    TransmittanceRecord,
    latent_scan,
    transmitted_set,
)
from .rng import seeded_rng, split_streams

__version__ = "0.1.0"

__all__ = [
    "CommunicationNet",
    "LossWeights",
    "TrainingSchedule",
    "TransmittanceRecord",
    "TrainingSet",
    "latent_scan",
    "transmitted_set",
    "seeded_rng",
    "split_streams",
    "__version__",
]
