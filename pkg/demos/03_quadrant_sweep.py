"""Small training-vs-inference intensity sweep with region classification.

Trains one backdoored model per training-phase patch opacity and evaluates
each against fully poisoned sets at every inference-phase opacity. The
resulting grid splits into the four characteristic regions: not-converged
(both intensities too weak), matched (diagonal), generalization (weak
training trigger still fired by stronger inference triggers), and
overfitting (strong training trigger resisting weaker inference triggers).

Sized to finish in a few minutes; raise SAMPLES / STEPS for sharper grids.

Run:  python demos/03_quadrant_sweep.py
"""

from pathlib import Path

import numpy as np

from triggerlab import data, pipeline
from triggerlab.engine import TrainConfig
from triggerlab.poisoning import PoisonPlan
from triggerlab.triggers import default_patch, intensity_grid

SAMPLES = 3000
STEPS = 5
OUT = Path("runs/demo-sweep")

pool = data.synth_dataset(seed=11, n_per_class=400)
train_set, rest = data.split(pool, SAMPLES, seed=12)
test_set = data.subset(rest, 800, seed=13)

specs = intensity_grid("patch_opacity", 0.1, 1.0, STEPS)
plan = PoisonPlan.single(default_patch(1.0), rate=0.05, target_label=0)
cfg = TrainConfig(epochs=2, batch_size=64, lr=0.01, momentum=0.9, seed=0)

print(f"running a {STEPS}x{STEPS} sweep on {SAMPLES} training samples ...")
grid = pipeline.run_sweep(specs, specs, train_set, test_set, plan, cfg, master_seed=21)
grid.regions = pipeline.classify_regions(grid)

np.set_printoptions(precision=2, suppress=True)
print("\nASR grid (rows = training intensity ascending, cols = inference):")
print(grid.asr)
print("\nclean accuracy per trained model:", np.round(grid.acc, 3))

print("\nregion counts:")
for name in pipeline.REGIONS:
    print(f"  {name:<15} {int((grid.regions == name).sum())}")

OUT.mkdir(parents=True, exist_ok=True)
pipeline.grid_to_csv(grid, OUT / "grid.csv")
pipeline.write_heatmap_pgm(grid, OUT / "heatmap.pgm")
pipeline.write_heatmap_ppm(grid, OUT / "heatmap.ppm")
print(f"\nartifacts -> {OUT}/grid.csv, heatmap.pgm, heatmap.ppm")

violations = pipeline.row_monotonicity_violations(grid)
print(f"rising-trend violations past the 0.5 crossing: {len(violations)}")
print("per-column ASR peaks (inference intensity -> training intensity):")
for infer_i, train_i in sorted(pipeline.rise_and_fall_peaks(grid).items()):
    print(f"  {infer_i:.2f} -> peak at train {train_i:.2f}")
