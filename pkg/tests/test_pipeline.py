"""Sweep mechanics, region labeling, grid artifacts, intensity selection."""

import numpy as np
import pytest

from triggerlab import data, engine, pipeline, seeds
from triggerlab.engine import TrainConfig
from triggerlab.pipeline import (
    GENERALIZATION,
    MATCHED,
    NOT_CONVERGED,
    OVERFITTING,
    REGIONS,
    AsrGrid,
    classify_regions,
    grid_from_csv,
    grid_to_csv,
    rise_and_fall_peaks,
    row_monotonicity_violations,
)
from triggerlab.poisoning import PoisonPlan
from triggerlab.triggers import default_patch, intensity_grid


@pytest.fixture(scope="module")
def small_data():
    full = data.synth_dataset(seed=50, n_per_class=45)
    return data.split(full, 300, seed=51)


def quadrant_grid():
    # hand-built 4x4 grid with the canonical quadrant structure
    intensities = [0.1, 0.4, 0.7, 1.0]
    asr = np.array([
        [0.02, 0.05, 0.10, 0.20],   # train 0.1: never converges
        [0.10, 0.95, 0.97, 0.99],   # train 0.4: matched + generalizes upward
        [0.05, 0.40, 0.96, 0.99],   # train 0.7: overfits below
        [0.02, 0.10, 0.85, 0.99],   # train 1.0
    ])
    acc = np.array([0.99, 0.99, 0.98, 0.99])
    return AsrGrid(intensities, intensities, asr, acc)


class TestClassifyRegions:
    def test_canonical_quadrants(self):
        grid = quadrant_grid()
        labels = classify_regions(grid, asr_threshold=0.8)
        assert labels[1, 1] == MATCHED            # diagonal high ASR
        assert labels[1, 3] == GENERALIZATION     # train 0.4, infer 1.0
        assert labels[3, 1] == OVERFITTING        # train 1.0, infer 0.4
        assert labels[0, 0] == NOT_CONVERGED      # low-low corner

    def test_every_cell_labeled_once(self):
        labels = classify_regions(quadrant_grid())
        assert all(label in REGIONS for label in labels.reshape(-1))

    def test_matched_cells_clear_threshold(self):
        grid = quadrant_grid()
        labels = classify_regions(grid, asr_threshold=0.8)
        assert np.all(grid.asr[labels == MATCHED] >= 0.8)

    def test_off_diagonal_within_step_is_matched(self):
        grid = quadrant_grid()
        labels = classify_regions(grid, asr_threshold=0.8)
        assert labels[3, 2] == MATCHED  # |1.0 - 0.7| equals one grid step


class TestGridArtifacts:
    def test_csv_round_trip(self, tmp_path):
        grid = quadrant_grid()
        grid.regions = classify_regions(grid)
        path = tmp_path / "grid.csv"
        grid_to_csv(grid, path)
        loaded = grid_from_csv(path)
        np.testing.assert_allclose(loaded.asr, grid.asr, atol=1e-6)
        np.testing.assert_allclose(loaded.acc, grid.acc, atol=1e-6)
        np.testing.assert_array_equal(loaded.regions, grid.regions)
        header = path.read_text().splitlines()[0]
        assert header == "train_intensity,infer_intensity,asr,acc,region"

    def test_heatmaps_have_expected_headers(self, tmp_path):
        grid = quadrant_grid()
        pgm, ppm = tmp_path / "g.pgm", tmp_path / "g.ppm"
        pipeline.write_heatmap_pgm(grid, pgm, cell=10)
        pipeline.write_heatmap_ppm(grid, ppm, cell=10)
        assert pgm.read_bytes().startswith(b"P5\n40 40\n255\n")
        assert ppm.read_bytes().startswith(b"P6\n40 40\n255\n")
        assert pgm.stat().st_size == len(b"P5\n40 40\n255\n") + 40 * 40

    def test_brightest_pixel_is_strongest_cell(self, tmp_path):
        grid = quadrant_grid()
        path = tmp_path / "g.pgm"
        pipeline.write_heatmap_pgm(grid, path, cell=1)
        payload = np.frombuffer(path.read_bytes()[-16:], dtype=np.uint8).reshape(4, 4)
        # rows are flipped: top row = highest training intensity
        np.testing.assert_array_equal(payload[0], np.rint(grid.asr[3] * 255))

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="asr matrix"):
            AsrGrid([0.1, 0.2], [0.1], np.zeros((1, 1)), np.zeros(2))
        with pytest.raises(ValueError, match="lie in"):
            AsrGrid([0.1], [0.1], np.array([[1.5]]), np.array([0.9]))


class TestTrends:
    def test_monotonicity_violation_detected(self):
        grid = AsrGrid([1.0], [0.2, 0.4, 0.6, 0.8],
                       np.array([[0.6, 0.9, 0.3, 0.95]]), np.array([0.99]))
        violations = row_monotonicity_violations(grid, tol=0.05, floor=0.5)
        assert len(violations) == 1
        assert violations[0][:2] == (0, 2)

    def test_clean_rising_row_passes(self):
        grid = AsrGrid([1.0], [0.2, 0.4, 0.6, 0.8],
                       np.array([[0.1, 0.55, 0.53, 0.9]]), np.array([0.99]))
        assert row_monotonicity_violations(grid, tol=0.05, floor=0.5) == []

    def test_rise_and_fall_peaks(self):
        grid = quadrant_grid()
        peaks = rise_and_fall_peaks(grid, threshold=0.8)
        assert peaks[0.4] == 0.4      # column 0.4 peaks at train 0.4
        assert 0.1 not in peaks       # column 0.1 never converges


@pytest.mark.slow
class TestSweepRuns:
    CFG = TrainConfig(epochs=1, batch_size=16, lr=0.02, momentum=0.9, seed=0)

    def test_sweep_shape_and_determinism(self, small_data):
        train_set, test_set = small_data
        specs = intensity_grid("patch_opacity", 0.5, 1.0, 2)
        plan = PoisonPlan.single(default_patch(1.0), rate=0.1)
        grid1 = pipeline.run_sweep(specs, specs, train_set, test_set, plan,
                                   self.CFG, master_seed=7)
        grid2 = pipeline.run_sweep(specs, specs, train_set, test_set, plan,
                                   self.CFG, master_seed=7)
        assert grid1.asr.shape == (2, 2)
        np.testing.assert_array_equal(grid1.asr, grid2.asr)
        np.testing.assert_array_equal(grid1.acc, grid2.acc)

    def test_single_cell_sweep_degenerates_to_run_cell(self, small_data):
        train_set, test_set = small_data
        spec = default_patch(alpha=1.0)
        plan = PoisonPlan.single(spec, rate=0.1)
        grid = pipeline.run_sweep([spec], [spec], train_set, test_set, plan,
                                  self.CFG, master_seed=3)
        from dataclasses import replace
        cell_cfg = replace(self.CFG, seed=seeds.derive_seed(3, "init", 0))
        cell_plan = replace(plan, seed=seeds.derive_seed(3, "poison", 0))
        row, acc = pipeline.run_cell(spec, [spec], train_set, test_set,
                                     cell_plan, cell_cfg)
        assert grid.asr[0, 0] == row[0]
        assert grid.acc[0] == acc

    def test_failed_cell_raises_with_partial(self, small_data):
        train_set, test_set = small_data
        bad_cfg = TrainConfig(epochs=1, batch_size=16, lr=1e18, momentum=0.9, seed=0)
        specs = intensity_grid("patch_opacity", 0.5, 1.0, 2)
        plan = PoisonPlan.single(default_patch(1.0), rate=0.1)
        with pytest.raises(pipeline.SweepError) as err:
            pipeline.run_sweep(specs, specs, train_set, test_set, plan, bad_cfg)
        assert len(err.value.failures) == 2
        assert np.isnan(err.value.partial.asr).all()

    def test_select_intensity_prefers_weakest_viable(self, small_data):
        train_set, test_set = small_data
        candidates = intensity_grid("patch_opacity", 0.1, 1.0, 3)  # 0.1, 0.55, 1.0
        plan = PoisonPlan.single(default_patch(1.0), rate=0.05)
        result = pipeline.select_intensity(
            candidates, train_set, test_set, elevated_rate=0.3, early_epochs=2,
            plan_template=plan, cfg=self.CFG, master_seed=11)
        assert result.viable
        assert result.chosen.alpha <= 1.0
        # trajectories recorded for every candidate up to the chosen one
        assert all(len(t["asr"]) == 2 for t in result.trajectories.values())

    def test_select_intensity_no_viable_candidate(self, small_data):
        train_set, test_set = small_data
        candidates = intensity_grid("patch_opacity", 0.01, 0.02, 2)
        plan = PoisonPlan.single(default_patch(1.0), rate=0.05)
        result = pipeline.select_intensity(
            candidates, train_set, test_set, elevated_rate=0.2, early_epochs=2,
            plan_template=plan, cfg=self.CFG, master_seed=12)
        assert not result.viable
        assert result.chosen is None

    def test_binary_and_linear_selection_agree(self, small_data):
        train_set, test_set = small_data
        candidates = intensity_grid("patch_opacity", 0.1, 1.0, 3)
        plan = PoisonPlan.single(default_patch(1.0), rate=0.05)
        kwargs = dict(train_set=train_set, probe_set=test_set, elevated_rate=0.3,
                      early_epochs=2, plan_template=plan, cfg=self.CFG,
                      master_seed=11)
        linear = pipeline.select_intensity(candidates, method="linear", **kwargs)
        binary = pipeline.select_intensity(candidates, method="binary", **kwargs)
        assert (linear.chosen is None) == (binary.chosen is None)
        if linear.chosen is not None:
            assert linear.chosen.alpha == binary.chosen.alpha

    def test_mix_experiment_rows(self, small_data):
        train_set, test_set = small_data
        infer = intensity_grid("patch_opacity", 0.5, 1.0, 2)
        result = pipeline.mix_experiment(
            default_patch(1.0), default_patch(0.1), rate=0.1, infer_specs=infer,
            train_set=train_set, test_set=test_set, cfg=self.CFG, master_seed=5)
        assert result.single_row.shape == (2,)
        assert 0.0 <= result.mixed_worst <= result.mixed_average <= 1.0
