"""Pick the weakest training intensity that still implants the backdoor.

Instead of fully training a model per candidate intensity, each candidate
gets a few epochs at an inflated poisoning rate; the loss and ASR
trajectories separate early, and the weakest candidate whose early ASR
clears the bar (with falling loss on the poisoned samples) wins. Weak
training triggers are stealthier while still generalizing to stronger
inference triggers.

Run:  python demos/05_intensity_selection.py
"""

from triggerlab import data, pipeline
from triggerlab.engine import TrainConfig
from triggerlab.poisoning import PoisonPlan
from triggerlab.triggers import default_patch, intensity_grid

pool = data.synth_dataset(seed=41, n_per_class=500)
train_set, rest = data.split(pool, 4000, seed=42)
probe_set = data.subset(rest, 600, seed=43)

candidates = intensity_grid("patch_opacity", 0.1, 1.0, 10)
plan = PoisonPlan.single(default_patch(1.0), rate=0.05, target_label=0)
cfg = TrainConfig(epochs=2, batch_size=64, lr=0.01, momentum=0.9, seed=0)

print("scanning candidates at an elevated 30% poisoning rate, 2 epochs each ...")
result = pipeline.select_intensity(
    candidates, train_set, probe_set, elevated_rate=0.30, early_epochs=2,
    plan_template=plan, cfg=cfg, master_seed=44)

print(f"\n{'intensity':>9} {'loss(0)':>9} {'loss(end)':>9} {'asr(end)':>9}")
for value, traj in sorted(result.trajectories.items()):
    print(f"{value:>9.1f} {traj['loss'][0]:>9.4f} {traj['loss'][-1]:>9.4f} "
          f"{traj['asr'][-1]:>9.3f}")

if result.viable:
    print(f"\nrecommended training intensity: {result.chosen.alpha:.1f} "
          "(weakest that clears ASR 0.9 with falling poisoned loss)")
else:
    print("\nno viable intensity among the candidates")
