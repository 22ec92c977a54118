"""Reverse-engineer the implanted trigger straight from the weights.

For every class, gradient descent searches for the smallest mask + pattern
that reroutes clean inputs to that class. The backdoor target needs a far
smaller mask than innocent classes, so the MAD-based anomaly index over the
per-class mask norms flags it; the recovered trigger also attacks with a
high success rate of its own.

Run:  python demos/07_reverse_engineering.py  (a few minutes)
"""

from pathlib import Path

from triggerlab import data, defenses, engine, poisoning
from triggerlab.engine import CnnModel, TrainConfig
from triggerlab.poisoning import PoisonPlan
from triggerlab.triggers import default_patch

OUT = Path("runs/demo-nc")

pool = data.synth_dataset(seed=61, n_per_class=500)
train_set, rest = data.split(pool, 4000, seed=62)
clean_samples = data.subset(rest, 150, seed=63)

print("training a backdoored model (opacity 0.6, rate 5%) ...")
plan = PoisonPlan.single(default_patch(0.6), rate=0.05, target_label=0, seed=64)
record = poisoning.poison_training_set(train_set, plan)
model = CnnModel.init(seed=65)
engine.train(model, record.dataset,
             TrainConfig(epochs=2, batch_size=64, lr=0.01, momentum=0.9, seed=66))

print("reverse-engineering a trigger per class (10 classes x 3 restarts) ...")
report = defenses.neural_cleanse(model, clean_samples, steps=120, restarts=3, seed=67)

print(f"\n{'class':>5} {'mask L1':>9} {'reASR':>7} {'converged':>10}")
for cls in sorted(report.triggers):
    t = report.triggers[cls]
    print(f"{cls:>5} {t.l1_norm:>9.1f} {t.re_asr:>7.3f} {str(t.converged):>10}")

print(f"\nanomaly index: {report.anomaly_index:.2f} "
      f"(> 2.0 flags a backdoor)")
if report.flagged_class is not None:
    print(f"flagged class: {report.flagged_class}")

OUT.mkdir(parents=True, exist_ok=True)
best = report.triggers[min(report.triggers, key=lambda c: report.triggers[c].l1_norm)]
defenses.export_reversed_trigger(best, OUT / "mask.pgm", OUT / "pattern.raw")
print(f"reversed mask -> {OUT / 'mask.pgm'} (view with any PGM reader)")
