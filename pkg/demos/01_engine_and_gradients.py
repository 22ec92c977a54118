"""Train the small CNN on synthetic digits and sanity-check its gradients.

Walks through the engine layer by layer: deterministic initialization from a
seed, a short training run, the finite-difference gradient check that
validates every layer's backward pass, and a bit-exact checkpoint round trip.

Run:  python demos/01_engine_and_gradients.py
"""

import tempfile
from pathlib import Path

import numpy as np

from triggerlab import data, engine
from triggerlab.engine import CnnModel, TrainConfig

print("== data ==")
full = data.synth_dataset(seed=1, n_per_class=120)
train_set, test_set = data.split(full, 1000, seed=2)
print(f"train {len(train_set)} samples, test {len(test_set)} samples, "
      f"pixel range [{train_set.images.min():.2f}, {train_set.images.max():.2f}]")

print("\n== training ==")
model = CnnModel.init(seed=3)
cfg = TrainConfig(epochs=2, batch_size=32, lr=0.02, momentum=0.9, seed=4)
model, history = engine.train(model, train_set, cfg)
for epoch, stats in enumerate(history):
    print(f"epoch {epoch}: loss {stats.loss:.4f}  train acc {stats.accuracy:.4f}")
print(f"test accuracy: {engine.evaluate(model, test_set):.4f}")

print("\n== gradient check ==")
rng = np.random.default_rng(5)
sample = (rng.uniform(0, 1, size=(28, 28, 1)), 3)
err = engine.grad_check(model, sample, epsilon=1e-4, seed=6)
print(f"max relative error, analytic vs central differences: {err:.2e}")
assert err < 1e-4

print("\n== checkpoint round trip ==")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.ckpt"
    engine.save_checkpoint(model, path)
    loaded = engine.load_checkpoint(path)
    identical = all(
        a.data.tobytes() == b.data.tobytes()
        for a, b in zip(model.parameters(), loaded.parameters()))
    print(f"checkpoint file {path.stat().st_size / 1e6:.1f} MB, "
          f"bit-exact round trip: {identical}")
