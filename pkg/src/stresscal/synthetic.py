"""Synthetic subject-shift data for tests and the end-to-end claim check.

Each subject gets an "identity" offset (a point on a circle in two feature
columns) and its own permutation of which class drives which class-signal
column. Within one person the classes are easy to separate, but the mapping
from signal to label disagrees across people, so a model trained on other
subjects transfers poorly until it sees a few of the target person's rows.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .dataio import FeatureTable

__all__ = ["make_subject_shift_table", "make_subject_only_table"]


def make_subject_shift_table(
    n_subjects: int = 6,
    rows_per_subject: int = 300,
    n_classes: int = 3,
    separation: float = 4.0,
    noise: float = 1.0,
    identity_radius: float = 6.0,
    identity_noise: float = 0.5,
    n_noise_features: int = 0,
    seed: int = 0,
    task: str = "classification",
) -> FeatureTable:
    """Subject-shift table with balanced classes.

    Feature columns are ``ID_X``, ``ID_Y`` (subject identity), ``SIG_0`` ..
    ``SIG_{k-1}`` (class signal, one-hot times ``separation`` plus noise) and
    optional pure-noise columns. Subject ``i`` uses permutation ``i`` (cycled)
    of the classes, so the label carried by a high ``SIG_j`` differs between
    subjects. Targets are a per-(subject, class) score, constant inside a
    condition, as with questionnaire responses.
    """
    rng = np.random.default_rng(seed)
    perms = list(itertools.permutations(range(n_classes)))
    labels = [f"c{k}" for k in range(n_classes)]
    ids, labs, targets, blocks = [], [], [], []
    for s in range(n_subjects):
        perm = perms[s % len(perms)]
        angle = 2.0 * math.pi * s / n_subjects
        centre = identity_radius * np.array([math.cos(angle), math.sin(angle)])
        base = rng.normal(40.0, 5.0)
        cls = np.arange(rows_per_subject) % n_classes
        rng.shuffle(cls)
        ident = centre + identity_noise * rng.standard_normal((rows_per_subject, 2))
        signal = noise * rng.standard_normal((rows_per_subject, n_classes))
        # class k lights up column perm[k] for this subject
        signal[np.arange(rows_per_subject), np.asarray(perm)[cls]] += separation
        extra = rng.standard_normal((rows_per_subject, n_noise_features))
        blocks.append(np.hstack([ident, signal, extra]))
        ids.extend([f"S{s + 1:02d}"] * rows_per_subject)
        labs.extend(labels[k] for k in cls)
        targets.append(base + 15.0 * cls)
    names = ["ID_X", "ID_Y", *(f"SIG_{k}" for k in range(n_classes)), *(f"NOISE_{k}" for k in range(n_noise_features))]
    return FeatureTable(
        subject_ids=np.array(ids, dtype=object),
        labels=np.array(labs, dtype=object),
        targets=np.concatenate(targets),
        X=np.vstack(blocks),
        feature_names=names,
        label_set=labels,
        task_kind=task,
    )


def make_subject_only_table(
    n_subjects: int = 6, rows_per_subject: int = 60, n_features: int = 4, seed: int = 0
) -> FeatureTable:
    """Table whose label is a function of the subject alone; features are pure noise."""
    rng = np.random.default_rng(seed)
    n = n_subjects * rows_per_subject
    ids = np.repeat([f"S{s + 1:02d}" for s in range(n_subjects)], rows_per_subject).astype(object)
    labels = np.array(["low" if s < n_subjects // 2 else "high" for s in range(n_subjects)], dtype=object)
    labs = np.repeat(labels, rows_per_subject)
    return FeatureTable(
        subject_ids=ids,
        labels=labs,
        targets=np.where(labs == "high", 1.0, 0.0),
        X=rng.standard_normal((n, n_features)),
        feature_names=[f"F{j}" for j in range(n_features)],
        label_set=["high", "low"],
        task_kind="classification",
    )
