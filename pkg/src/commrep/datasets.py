"""Training data container shared by all experiment suites.

A sample is an (observation, questions, target answers) triple. Observations
may be split across several encoders; per-decoder answer masks support data
where only some decoders have a target for a given sample.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class TrainingSet:
    observations: np.ndarray            # (n, sum(observation_dims))
    questions: list                     # k arrays of shape (n, q_i); q_i may be 0
    answers: list                       # k arrays of shape (n, a_i)
    observation_dims: tuple             # per-encoder split of the observation vector
    answer_masks: list | None = None    # optional k arrays matching answers
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=float)
        self.questions = [np.asarray(q, dtype=float) for q in self.questions]
        self.answers = [np.asarray(a, dtype=float) for a in self.answers]
        if self.answer_masks is not None:
            self.answer_masks = [np.asarray(m, dtype=float) for m in self.answer_masks]
        n = self.observations.shape[0]
        if self.observations.shape[1] != sum(self.observation_dims):
            raise ConfigurationError("observation width does not match declared split")
        if len(self.questions) != len(self.answers):
            raise ConfigurationError("questions and answers must pair up per decoder")
        for arr in self.questions + self.answers:
            if arr.shape[0] != n:
                raise ConfigurationError("inconsistent sample counts")
        if self.answer_masks is not None:
            for m, a in zip(self.answer_masks, self.answers):
                if m.shape != a.shape:
                    raise ConfigurationError("answer mask shape must match answers")

    @property
    def n_samples(self):
        return self.observations.shape[0]

    @property
    def n_decoders(self):
        return len(self.answers)

    @property
    def question_dims(self):
        return tuple(q.shape[1] for q in self.questions)

    @property
    def answer_dims(self):
        return tuple(a.shape[1] for a in self.answers)

    def subset(self, idx):
        return TrainingSet(
            self.observations[idx],
            [q[idx] for q in self.questions],
            [a[idx] for a in self.answers],
            self.observation_dims,
            None if self.answer_masks is None else [m[idx] for m in self.answer_masks],
            dict(self.meta),
        )

    def split(self, holdout_fraction, rng):
        """Deterministic shuffled split into (train, held-out)."""
        n = self.n_samples
        perm = rng.permutation(n)
        n_test = int(round(n * holdout_fraction))
        return self.subset(perm[n_test:]), self.subset(perm[:n_test])

    def pack_xy(self):
        """Flatten to (X, y, mask) arrays: X = [obs | q_1 | ... | q_k], y = [a_1 | ... | a_k]."""
        X = np.concatenate([self.observations] + [q for q in self.questions if q.shape[1]], axis=1)
        y = np.concatenate(self.answers, axis=1)
        mask = None
        if self.answer_masks is not None:
            mask = np.concatenate(self.answer_masks, axis=1)
        return X, y, mask

    @staticmethod
    def unpack_xy(X, y, observation_dims, question_dims, answer_dims, mask=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        obs_total = sum(observation_dims)
        if X.shape[1] != obs_total + sum(question_dims):
            raise ConfigurationError(
                f"X has {X.shape[1]} columns, expected {obs_total + sum(question_dims)}")
        if y.shape[1] != sum(answer_dims):
            raise ConfigurationError(
                f"y has {y.shape[1]} columns, expected {sum(answer_dims)}")
        questions = []
        offset = obs_total
        for q in question_dims:
            questions.append(X[:, offset:offset + q])
            offset += q
        answers = []
        masks = None if mask is None else []
        offset = 0
        for a in answer_dims:
            answers.append(y[:, offset:offset + a])
            if mask is not None:
                masks.append(np.asarray(mask, dtype=float)[:, offset:offset + a])
            offset += a
        return TrainingSet(X[:, :obs_total], questions, answers,
                           tuple(observation_dims), masks)

    def save(self, path):
        arrays = {"observations": self.observations}
        for i, q in enumerate(self.questions):
            arrays[f"question_{i}"] = q
        for i, a in enumerate(self.answers):
            arrays[f"answer_{i}"] = a
        if self.answer_masks is not None:
            for i, m in enumerate(self.answer_masks):
                arrays[f"mask_{i}"] = m
        header = {
            "format": "commrep-dataset",
            "version": 1,
            "observation_dims": list(self.observation_dims),
            "n_decoders": self.n_decoders,
            "has_masks": self.answer_masks is not None,
            "meta": self.meta,
        }
        arrays["header_json"] = np.frombuffer(
            json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            header = json.loads(bytes(data["header_json"]).decode())
            if header.get("format") != "commrep-dataset":
                raise ConfigurationError(f"{path} is not a dataset file")
            k = header["n_decoders"]
            masks = None
            if header["has_masks"]:
                masks = [data[f"mask_{i}"] for i in range(k)]
            return cls(
                data["observations"],
                [data[f"question_{i}"] for i in range(k)],
                [data[f"answer_{i}"] for i in range(k)],
                tuple(header["observation_dims"]),
                masks,
                header["meta"],
            )
