"""Mixing two training-trigger intensities beats either single intensity.

Poisons once with only the strong trigger and once with half the budget
replaced by a weak trigger, then compares worst-case and average ASR across
the whole inference-intensity range. The mixed model stays activatable by
weak inference triggers that the single-intensity model misses.

Run:  python demos/04_intensity_mixing.py
"""

from triggerlab import data, pipeline
from triggerlab.engine import TrainConfig
from triggerlab.poisoning import PoisonPlan
from triggerlab.triggers import default_patch, intensity_grid

pool = data.synth_dataset(seed=31, n_per_class=500)
train_set, rest = data.split(pool, 4000, seed=32)
test_set = data.subset(rest, 800, seed=33)

infer_specs = intensity_grid("patch_opacity", 0.1, 1.0, 10)
cfg = TrainConfig(epochs=2, batch_size=64, lr=0.01, momentum=0.9, seed=0)

print("training single-intensity (1.0) and mixed (1.0 + 0.1) models at rate 10% ...")
result = pipeline.mix_experiment(
    default_patch(1.0), default_patch(0.1), rate=0.10,
    infer_specs=infer_specs, train_set=train_set, test_set=test_set,
    cfg=cfg, master_seed=34)

print(f"\n{'inference':>9} {'single':>8} {'mixed':>8}")
for i, ii in enumerate(result.infer_intensities):
    print(f"{ii:>9.1f} {result.single_row[i]:>8.3f} {result.mixed_row[i]:>8.3f}")

print(f"\n{'':<8} {'worst':>8} {'average':>8}")
print(f"{'single':<8} {result.single_worst:>8.3f} {result.single_average:>8.3f}")
print(f"{'mixed':<8} {result.mixed_worst:>8.3f} {result.mixed_average:>8.3f}")
print(f"\nworst-case ASR gain from mixing: "
      f"{result.mixed_worst - result.single_worst:+.3f}")
