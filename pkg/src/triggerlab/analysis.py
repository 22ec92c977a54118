"""Neuron-level view of an implanted backdoor.

Ranks hidden-layer neurons by how far their mean activation moves between
benign and triggered inputs, then measures how separable the two activation
distributions stay as the inference-phase trigger intensity changes. The
separation statistic is the absolute standardized mean gap (pooled standard
deviation), averaged over the selected neurons, so it is non-negative and
shift-invariant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NeuronReport",
    "identify_compromised_neurons",
    "activation_separation",
    "dump_activations",
]

HIDDEN_WIDTH = 512


def _activations(model, dataset):
    images = np.ascontiguousarray(dataset.images.transpose(0, 3, 1, 2))
    return model.penultimate_np(images).astype(np.float64)


@dataclass
class NeuronReport:
    neurons: np.ndarray
    separations: dict            # intensity -> mean standardized gap (>= 0)
    histograms: dict = field(repr=False)  # intensity -> (edges, benign, poisoned)
    notices: list = field(default_factory=list)


def identify_compromised_neurons(model, benign_set, poisoned_set, k=8):
    """Top-k hidden neurons by |mean activation gap| between the two sets;
    ties keep the lower neuron index."""
    if not len(benign_set) or not len(poisoned_set):
        raise ValueError("both datasets must be non-empty")
    if not 1 <= k <= HIDDEN_WIDTH:
        raise ValueError(f"k must lie in [1, {HIDDEN_WIDTH}]")
    gaps = np.abs(_activations(model, poisoned_set).mean(axis=0)
                  - _activations(model, benign_set).mean(axis=0))
    return np.argsort(-gaps, kind="stable")[:k]


def _pooled_std(a, b):
    na, nb = len(a), len(b)
    if na + nb <= 2:
        return 0.0
    va = a.var(ddof=1) if na > 1 else 0.0
    vb = b.var(ddof=1) if nb > 1 else 0.0
    return float(np.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)))


def activation_separation(model, neurons, benign_set, poisoned_sets_by_intensity,
                          bins=30):
    """Separation of benign vs. poisoned activations on the given neurons,
    per inference intensity, with normalized activation histograms."""
    neurons = np.asarray(neurons)
    benign = _activations(model, benign_set)[:, neurons]
    separations, histograms, notices = {}, {}, []
    for intensity, poisoned_set in sorted(poisoned_sets_by_intensity.items()):
        poisoned = _activations(model, poisoned_set)[:, neurons]
        per_neuron = []
        for j in range(len(neurons)):
            std = _pooled_std(benign[:, j], poisoned[:, j])
            gap = abs(poisoned[:, j].mean() - benign[:, j].mean())
            if std == 0.0:
                if gap > 0.0:
                    notices.append((intensity, int(neurons[j]), "zero pooled variance"))
                    per_neuron.append(np.inf)
                else:
                    per_neuron.append(0.0)
            else:
                per_neuron.append(gap / std)
        separations[intensity] = float(np.mean(per_neuron))
        lo = min(benign.min(), poisoned.min())
        hi = max(benign.max(), poisoned.max())
        edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
        hist_b, _ = np.histogram(benign.reshape(-1), bins=edges)
        hist_p, _ = np.histogram(poisoned.reshape(-1), bins=edges)
        histograms[intensity] = (
            edges,
            hist_b / max(hist_b.sum(), 1),
            hist_p / max(hist_p.sum(), 1))
    return NeuronReport(neurons=neurons, separations=separations,
                        histograms=histograms, notices=notices)


def dump_activations(model, neurons, benign_set, poisoned_sets_by_intensity, path):
    """CSV dump `sample_id,is_poisoned,intensity,neuron_id,activation`;
    benign rows carry intensity 0."""
    neurons = np.asarray(neurons)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "is_poisoned", "intensity", "neuron_id",
                         "activation"])

        def rows(dataset, poisoned, intensity):
            acts = _activations(model, dataset)[:, neurons]
            for sample in range(acts.shape[0]):
                for j, neuron in enumerate(neurons):
                    writer.writerow([sample, int(poisoned), f"{intensity:.6f}",
                                     int(neuron), f"{acts[sample, j]:.6f}"])

        rows(benign_set, False, 0.0)
        for intensity, ds in sorted(poisoned_sets_by_intensity.items()):
            rows(ds, True, intensity)
