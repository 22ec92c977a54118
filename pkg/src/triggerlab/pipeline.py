"""Cross-intensity sweep orchestration.

One model is trained per training-phase trigger intensity and evaluated
against fully poisoned inference sets at every inference-phase intensity,
yielding an ASR grid whose quadrants expose trigger generalization (weak
training trigger, strong inference trigger) and trigger overfitting
(strong training trigger, weak inference trigger). Also implements the
early-stopping intensity-selection procedure and the intensity-mixing
experiment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine, seeds
from .engine import CnnModel
from .poisoning import PoisonPlan, asr, poison_inference_set, poison_training_set
from .triggers import intensity

__all__ = [
    "AsrGrid",
    "SweepError",
    "REGIONS",
    "run_cell",
    "run_sweep",
    "classify_regions",
    "select_intensity",
    "SelectionResult",
    "mix_experiment",
    "MixResult",
    "grid_to_csv",
    "grid_from_csv",
    "write_heatmap_pgm",
    "write_heatmap_ppm",
    "row_monotonicity_violations",
    "rise_and_fall_peaks",
]

NOT_CONVERGED = "not_converged"
GENERALIZATION = "generalization"
MATCHED = "matched"
OVERFITTING = "overfitting"
REGIONS = (NOT_CONVERGED, GENERALIZATION, MATCHED, OVERFITTING)


@dataclass
class AsrGrid:
    """ASR over (training intensity x inference intensity) plus clean accuracy."""

    train_intensities: np.ndarray
    infer_intensities: np.ndarray
    asr: np.ndarray   # (T, I)
    acc: np.ndarray   # (T,)
    regions: np.ndarray = None  # (T, I) of region names, optional

    def __post_init__(self):
        self.train_intensities = np.asarray(self.train_intensities, dtype=np.float64)
        self.infer_intensities = np.asarray(self.infer_intensities, dtype=np.float64)
        self.asr = np.asarray(self.asr, dtype=np.float64)
        self.acc = np.asarray(self.acc, dtype=np.float64)
        t, i = len(self.train_intensities), len(self.infer_intensities)
        if self.asr.shape != (t, i):
            raise ValueError(f"asr matrix {self.asr.shape} does not match axes ({t}, {i})")
        if self.acc.shape != (t,):
            raise ValueError(f"acc vector {self.acc.shape} does not match {t} rows")
        finite = self.asr[np.isfinite(self.asr)]
        if finite.size and (finite.min() < 0 or finite.max() > 1):
            raise ValueError("asr entries must lie in [0, 1]")


class SweepError(RuntimeError):
    """Some sweep cells failed; carries the partial grid and cell coordinates."""

    def __init__(self, failures, partial):
        coords = ", ".join(f"train[{t}]: {err}" for t, err in failures)
        super().__init__(f"sweep incomplete: {coords}")
        self.failures = failures
        self.partial = partial


def _train_backdoored(train_spec, train_set, plan_template, cfg):
    plan = replace(plan_template, mixture=[(train_spec, 1.0)])
    record = poison_training_set(train_set, plan)
    model = CnnModel.init(cfg.seed)
    engine.train(model, record.dataset, cfg)
    return model, record


def _asr_row(model, prepared_sets, target_label):
    return np.array([asr(model, ps, target_label) for ps in prepared_sets])


def run_cell(train_spec, infer_specs, train_set, test_set, plan_template, cfg):
    """Train one backdoored model, return (asr row over infer_specs, clean acc)."""
    model, _ = _train_backdoored(train_spec, train_set, plan_template, cfg)
    prepared = [poison_inference_set(test_set, s, plan_template.target_label)
                for s in infer_specs]
    row = _asr_row(model, prepared, plan_template.target_label)
    return row, engine.evaluate(model, test_set)


def _sweep_row(args):
    t, train_spec, infer_specs, train_set, test_set, plan_template, cfg, keep_model = args
    try:
        model, _ = _train_backdoored(train_spec, train_set, plan_template, cfg)
        prepared = [poison_inference_set(test_set, s, plan_template.target_label)
                    for s in infer_specs]
        row = _asr_row(model, prepared, plan_template.target_label)
        acc = engine.evaluate(model, test_set)
        return t, row, acc, (model if keep_model else None), None
    except engine.DivergedError as err:
        return t, None, None, None, err


def run_sweep(train_specs, infer_specs, train_set, test_set, plan_template, cfg,
              master_seed=0, workers=1, keep_models=False):
    """Full sweep: one independently seeded model per training intensity.

    Returns an AsrGrid (plus the trained models when keep_models is set).
    A failed cell raises SweepError with the partial grid attached; rows are
    never silently zero-filled.
    """
    if not len(train_specs) or not len(infer_specs):
        raise ValueError("train and inference grids must be non-empty")
    jobs = []
    for t, spec in enumerate(train_specs):
        row_cfg = replace(cfg, seed=seeds.derive_seed(master_seed, "init", t))
        row_plan = replace(plan_template, seed=seeds.derive_seed(master_seed, "poison", t))
        jobs.append((t, spec, infer_specs, train_set, test_set, row_plan, row_cfg,
                     keep_models))

    n_t, n_i = len(train_specs), len(infer_specs)
    grid_asr = np.full((n_t, n_i), np.nan)
    grid_acc = np.full(n_t, np.nan)
    models = [None] * n_t
    failures = []
    if workers > 1:
        import multiprocessing
        with multiprocessing.Pool(workers) as pool:
            results = list(pool.imap_unordered(_sweep_row, jobs))
    else:
        results = [_sweep_row(job) for job in jobs]
    for t, row, acc, model, err in results:
        if err is not None:
            failures.append((t, err))
        else:
            grid_asr[t], grid_acc[t], models[t] = row, acc, model

    grid = AsrGrid(
        train_intensities=[intensity(s) for s in train_specs],
        infer_intensities=[intensity(s) for s in infer_specs],
        asr=grid_asr, acc=grid_acc)
    if failures:
        raise SweepError(sorted(failures, key=lambda f: f[0]), grid)
    return (grid, models) if keep_models else grid


def _grid_step(values):
    values = np.asarray(values, dtype=np.float64)
    return float(np.median(np.diff(values))) if len(values) > 1 else 0.0


def classify_regions(grid, asr_threshold=0.8):
    """Label every cell matched / generalization / overfitting / not_converged.

    Precedence: a high-ASR cell within one grid step of the diagonal is
    matched; any other high-ASR cell above the diagonal is generalization;
    a low-ASR cell below the diagonal of a row that converged somewhere is
    overfitting; everything else has not converged.
    """
    step = max(_grid_step(grid.train_intensities), _grid_step(grid.infer_intensities))
    labels = np.empty(grid.asr.shape, dtype=object)
    row_converged = np.nanmax(grid.asr, axis=1) >= asr_threshold
    for t, ti in enumerate(grid.train_intensities):
        for i, ii in enumerate(grid.infer_intensities):
            value = grid.asr[t, i]
            if value >= asr_threshold and abs(ti - ii) <= step + 1e-9:
                labels[t, i] = MATCHED
            elif value >= asr_threshold and ii > ti:
                labels[t, i] = GENERALIZATION
            elif value < asr_threshold and ii < ti and row_converged[t]:
                labels[t, i] = OVERFITTING
            else:
                labels[t, i] = NOT_CONVERGED
    return labels


@dataclass
class SelectionResult:
    chosen: object                           # spec, or None when nothing qualifies
    trajectories: dict = field(repr=False)   # intensity -> {"loss": [...], "asr": [...]}
    qualified: list = field(default_factory=list)

    @property
    def viable(self):
        return self.chosen is not None


def _candidate_trajectories(spec, train_set, probe_set, plan, cfg):
    record = poison_training_set(train_set, plan)
    poisoned_subset = record.dataset.take(record.poisoned_indices)
    probe = poison_inference_set(probe_set, spec, plan.target_label)
    model = CnnModel.init(cfg.seed)
    losses, asrs = [], []

    def on_epoch(epoch, m, stats):
        losses.append(engine.mean_loss(m, poisoned_subset))
        asrs.append(asr(m, probe, plan.target_label))

    engine.train(model, record.dataset, cfg, on_epoch=on_epoch)
    return losses, asrs


def select_intensity(candidate_specs, train_set, probe_set, elevated_rate,
                     early_epochs, plan_template, cfg, asr_threshold=0.9,
                     master_seed=0, method="linear"):
    """Early-stopping intensity selection.

    Trains each candidate for a few epochs at an elevated poisoning rate and
    returns the smallest intensity whose early ASR reaches asr_threshold with
    a decreasing loss trajectory on the poisoned samples. The elevated rate
    separates the trajectories earlier, keeping the scan cheap.
    """
    if elevated_rate < plan_template.rate:
        raise ValueError("elevated_rate must be >= the plan's base rate")
    if early_epochs < 2:
        raise ValueError("early_epochs must be >= 2 to judge a loss trend")
    if method not in ("linear", "binary"):
        raise ValueError("method must be 'linear' or 'binary'")
    candidates = sorted(candidate_specs, key=intensity)
    trajectories = {}
    qualified = {}

    def qualifies(index):
        spec = candidates[index]
        plan = replace(plan_template, rate=elevated_rate, mixture=[(spec, 1.0)],
                       seed=seeds.derive_seed(master_seed, "select-poison", index))
        run_cfg = replace(cfg, epochs=early_epochs,
                          seed=seeds.derive_seed(master_seed, "select-init", index))
        losses, asrs = _candidate_trajectories(spec, train_set, probe_set, plan, run_cfg)
        trajectories[intensity(spec)] = {"loss": losses, "asr": asrs}
        ok = asrs[-1] >= asr_threshold and losses[-1] < losses[0]
        qualified[index] = ok
        return ok

    chosen = None
    if method == "linear":
        for index in range(len(candidates)):
            if qualifies(index):
                chosen = candidates[index]
                break
    else:
        # qualification is monotone in intensity within one family, so bisect
        lo, hi = 0, len(candidates) - 1
        best = None
        while lo <= hi:
            mid = (lo + hi) // 2
            if qualifies(mid):
                best = mid
                hi = mid - 1
            else:
                lo = mid + 1
        chosen = candidates[best] if best is not None else None
    return SelectionResult(
        chosen=chosen,
        trajectories=trajectories,
        qualified=[intensity(candidates[i]) for i, ok in sorted(qualified.items()) if ok])


@dataclass
class MixResult:
    infer_intensities: np.ndarray
    single_row: np.ndarray
    mixed_row: np.ndarray

    @property
    def single_worst(self):
        return float(self.single_row.min())

    @property
    def single_average(self):
        return float(self.single_row.mean())

    @property
    def mixed_worst(self):
        return float(self.mixed_row.min())

    @property
    def mixed_average(self):
        return float(self.mixed_row.mean())


def mix_experiment(high_spec, low_spec, rate, infer_specs, train_set, test_set,
                   cfg, target_label=0, master_seed=0, low_fraction=0.5):
    """Single-intensity poisoning at the full rate vs. the same budget with
    half replaced by a low-intensity trigger; ASR rows over the infer grid."""
    prepared = [poison_inference_set(test_set, s, target_label) for s in infer_specs]
    rows = []
    for tag, mixture in (("single", [(high_spec, 1.0)]),
                         ("mixed", [(high_spec, 1.0 - low_fraction),
                                    (low_spec, low_fraction)])):
        plan = PoisonPlan(rate=rate, mixture=mixture, target_label=target_label,
                          seed=seeds.derive_seed(master_seed, "poison", tag))
        record = poison_training_set(train_set, plan)
        model = CnnModel.init(seeds.derive_seed(master_seed, "init", tag))
        run_cfg = replace(cfg, seed=seeds.derive_seed(master_seed, "train", tag))
        engine.train(model, record.dataset, run_cfg)
        rows.append(_asr_row(model, prepared, target_label))
    return MixResult(
        infer_intensities=np.array([intensity(s) for s in infer_specs]),
        single_row=rows[0], mixed_row=rows[1])


# ---------------------------------------------------------------------------
# Grid artifacts
# ---------------------------------------------------------------------------


def grid_to_csv(grid, path, regions=None):
    """One row per cell: train_intensity,infer_intensity,asr,acc,region."""
    if regions is None:
        regions = grid.regions
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["train_intensity", "infer_intensity", "asr", "acc", "region"])
        for t, ti in enumerate(grid.train_intensities):
            for i, ii in enumerate(grid.infer_intensities):
                region = regions[t, i] if regions is not None else ""
                writer.writerow([f"{ti:.6f}", f"{ii:.6f}",
                                 f"{grid.asr[t, i]:.6f}", f"{grid.acc[t]:.6f}", region])


def grid_from_csv(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: empty grid file")
    train_vals = sorted({float(r["train_intensity"]) for r in rows})
    infer_vals = sorted({float(r["infer_intensity"]) for r in rows})
    t_index = {v: k for k, v in enumerate(train_vals)}
    i_index = {v: k for k, v in enumerate(infer_vals)}
    asr_m = np.full((len(train_vals), len(infer_vals)), np.nan)
    acc_v = np.full(len(train_vals), np.nan)
    regions = np.full((len(train_vals), len(infer_vals)), "", dtype=object)
    for r in rows:
        t, i = t_index[float(r["train_intensity"])], i_index[float(r["infer_intensity"])]
        asr_m[t, i] = float(r["asr"])
        acc_v[t] = float(r["acc"])
        regions[t, i] = r["region"]
    has_regions = any(regions.reshape(-1))
    return AsrGrid(train_vals, infer_vals, asr_m, acc_v,
                   regions=regions if has_regions else None)


def _grid_pixels(grid, cell):
    # row 0 of the image = highest training intensity, columns ascending
    values = np.nan_to_num(grid.asr[::-1], nan=0.0)
    return np.kron(values, np.ones((cell, cell)))


def write_heatmap_pgm(grid, path, cell=24):
    """Binary PGM: brightness = ASR (0 -> black, 1 -> white).

    Rows run from the highest training intensity at the top to the lowest at
    the bottom; columns run left to right in ascending inference intensity.
    """
    pixels = np.rint(_grid_pixels(grid, cell) * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def write_heatmap_ppm(grid, path, cell=24):
    """Binary PPM, blue-to-red map: R = ASR, G = 0, B = 1 - ASR."""
    v = _grid_pixels(grid, cell)
    rgb = np.stack([v, np.zeros_like(v), 1.0 - v], axis=-1)
    pixels = np.rint(rgb * 255).astype(np.uint8)
    h, w, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


# ---------------------------------------------------------------------------
# Trend checks over a finished grid
# ---------------------------------------------------------------------------


def row_monotonicity_violations(grid, tol=0.05, floor=0.5):
    """Cells violating the rising inference trend.

    Once a row first reaches `floor`, later cells may not drop more than
    `tol` below any earlier cell at or past that crossing.
    """
    violations = []
    for t in range(len(grid.train_intensities)):
        row = grid.asr[t]
        crossed = np.flatnonzero(row >= floor)
        if not len(crossed):
            continue
        start = crossed[0]
        running_max = row[start]
        for i in range(start + 1, len(row)):
            if row[i] < running_max - tol:
                violations.append((t, i, float(running_max), float(row[i])))
            running_max = max(running_max, row[i])
    return violations


def rise_and_fall_peaks(grid, threshold=0.8):
    """Per inference column that converged somewhere: the training intensity
    achieving the column's ASR peak (ties go to the smallest intensity)."""
    peaks = {}
    for i, ii in enumerate(grid.infer_intensities):
        column = grid.asr[:, i]
        if np.nanmax(column) < threshold:
            continue
        peaks[float(ii)] = float(grid.train_intensities[int(np.nanargmax(column))])
    return peaks
