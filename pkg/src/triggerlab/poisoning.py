"""Poisoned dataset construction and attack-success measurement.

Training sets are partially poisoned: a seeded uniform sample of
round(rate * N) images receives a trigger (split across an intensity
mixture) and has its label rewritten to the target class (all-to-one).
Inference sets are fully poisoned and exclude images whose true label
already equals the target, so the attack success rate only counts
genuinely flipped predictions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .triggers import apply_trigger, family_name, intensity

__all__ = [
    "PoisonPlan",
    "PoisonRecord",
    "poison_training_set",
    "poison_inference_set",
    "asr",
    "export_poison_csv",
]


@dataclass
class PoisonPlan:
    """Target label, poisoning rate and a trigger-intensity mixture."""

    rate: float
    mixture: list            # [(spec, fraction)], fractions sum to 1
    target_label: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"rate must lie in (0, 1), got {self.rate}")
        if not self.mixture:
            raise ValueError("mixture must be non-empty")
        total = sum(f for _, f in self.mixture)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture fractions sum to {total}, expected 1")

    @classmethod
    def single(cls, spec, rate, target_label=0, seed=0):
        return cls(rate=rate, mixture=[(spec, 1.0)], target_label=target_label, seed=seed)


@dataclass
class PoisonRecord:
    dataset: LabeledDataset
    poisoned_indices: np.ndarray          # sorted
    assignments: dict = field(repr=False)  # index -> spec


def _mixture_counts(fractions, budget):
    # floor each share, then hand the remainder to the first spec
    counts = [int(np.floor(f * budget)) for f in fractions]
    counts[0] += budget - sum(counts)
    return counts


def poison_training_set(dataset, plan):
    """Partially poisoned copy of a training set, plus ground truth."""
    n = len(dataset)
    budget = int(round(plan.rate * n))
    if budget < 1:
        raise ValueError(f"rate {plan.rate} selects zero samples from {n}")
    rng = np.random.default_rng(plan.seed)
    chosen = np.sort(rng.choice(n, size=budget, replace=False))

    images = dataset.images.copy()
    labels = dataset.labels.copy()
    counts = _mixture_counts([f for _, f in plan.mixture], budget)
    assignments = {}
    start = 0
    for (spec, _), count in zip(plan.mixture, counts):
        for idx in chosen[start:start + count]:
            images[idx] = apply_trigger(dataset.images[idx], spec)
            labels[idx] = plan.target_label
            assignments[int(idx)] = spec
        start += count
    poisoned = LabeledDataset(images, labels, dataset.num_classes)
    return PoisonRecord(dataset=poisoned, poisoned_indices=chosen, assignments=assignments)


def poison_inference_set(dataset, spec, target_label):
    """Fully poisoned evaluation set: non-target images, triggered, relabeled."""
    keep = np.flatnonzero(dataset.labels != target_label)
    if len(keep) == 0:
        raise ValueError(f"every sample already has label {target_label}")
    images = np.stack([apply_trigger(dataset.images[i], spec) for i in keep])
    labels = np.full(len(keep), target_label, dtype=np.int64)
    return LabeledDataset(images, labels, dataset.num_classes)


def asr(model, poisoned_set, target_label):
    """Fraction of a fully poisoned set predicted as the target label."""
    images = np.ascontiguousarray(
        poisoned_set.images.transpose(0, 3, 1, 2), dtype=model.dtype)
    preds = model.predict(images)
    return float((preds == target_label).mean())


def export_poison_csv(record, path):
    """Ground-truth poison listing for defense-recall scoring."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "family", "intensity"])
        for idx in record.poisoned_indices:
            spec = record.assignments[int(idx)]
            writer.writerow([int(idx), family_name(spec), f"{intensity(spec):.6f}"])
