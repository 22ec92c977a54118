"""Command-line entry point.

Subcommands cover the whole workflow: poison, train, eval, sweep, select,
mix, defend, analyze, gradcheck, report. Every run is driven by one INI-style
config file; unknown keys are rejected, every field has a default, and each
run writes a manifest capturing the fully resolved configuration plus the
master seed, so any artifact can be regenerated from its manifest alone.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, data, defenses, engine, pipeline, poisoning, seeds
from .engine import CnnModel, TrainConfig
from .poisoning import PoisonPlan
from .triggers import default_patch, intensity, intensity_grid
from .triggers import Blend, ColorQuantize, Interpolate, PatchSize, Sinusoid

OUTPUT_ENV = "TRIGGERLAB_OUT"

# (type, default) for every recognized key; anything else is rejected
SCHEMA = {
    "run": {
        "master_seed": (int, 0),
        "output_dir": (str, ""),
        "workers": (int, 1),
    },
    "data": {
        "source": (str, "synthetic"),        # synthetic | idx
        "train_images": (str, ""),
        "train_labels": (str, ""),
        "test_images": (str, ""),
        "test_labels": (str, ""),
        "subset": (int, 10000),              # stratified training subset (0 = all)
        "test_subset": (int, 2000),          # 0 = all
        "synth_per_class": (int, 1200),
    },
    "trigger": {
        "family": (str, "patch_opacity"),
        "intensity": (float, 1.0),           # single-model commands
        "train_lo": (float, 0.1),
        "train_hi": (float, 1.0),
        "train_steps": (int, 10),
        "infer_lo": (float, 0.1),
        "infer_hi": (float, 1.0),
        "infer_steps": (int, 10),
        "patch_size": (int, 3),
        "freq": (int, 6),
    },
    "poison": {
        "rate": (float, 0.05),               # 0 trains a clean model
        "target_label": (int, 0),
        "mix_high": (float, 1.0),
        "mix_low": (float, 0.1),
        "mix_rate": (float, 0.10),
    },
    "train": {
        "epochs": (int, 2),
        "batch_size": (int, 64),
        "lr": (float, 0.01),
        "momentum": (float, 0.9),
    },
    "select": {
        "elevated_rate": (float, 0.3),
        "early_epochs": (int, 2),
        "method": (str, "linear"),
    },
    "defend": {
        "defenses": (str, "strip,scale_up,spectral,clustering"),
        "strip_overlays": (int, 32),
        "eval_samples": (int, 200),
        "nc_steps": (int, 150),
        "nc_weight_l1": (float, 0.01),
        "nc_restarts": (int, 3),
    },
    "analyze": {
        "top_k": (int, 8),
        "intensities": (str, "0.1,0.5,1.0"),
    },
}

KNOWN_DEFENSES = ("strip", "scale_up", "spectral", "clustering", "neural_cleanse")


class ConfigError(RuntimeError):
    pass


def load_config(path):
    """Resolve an INI config against the schema; unknown keys are an error."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
    resolved = {}
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key, (typ, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    resolved[section][key] = typ(raw)
                except ValueError:
                    raise ConfigError(
                        f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}")
            else:
                resolved[section][key] = default
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    return resolved


def output_dir(cfg, command):
    base = cfg["run"]["output_dir"] or os.environ.get(OUTPUT_ENV, "runs")
    path = Path(base) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(out, command, cfg, extra=None):
    manifest = {
        "tool_version": __version__,
        "command": command,
        "master_seed": cfg["run"]["master_seed"],
        "config": cfg,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_datasets(cfg):
    """(train_set, test_set) per the [data] section, seeded off the master."""
    master = cfg["run"]["master_seed"]
    d = cfg["data"]
    if d["source"] == "synthetic":
        pool = data.synth_dataset(seeds.derive_seed(master, "synth"),
                                  d["synth_per_class"])
        n_train = min(d["subset"] or len(pool) - 1, len(pool) - 1)
        train_set, rest = data.split(pool, n_train, seeds.derive_seed(master, "subset"))
        test_set = rest
        if d["test_subset"] and d["test_subset"] < len(rest):
            test_set = data.subset(rest, d["test_subset"],
                                   seeds.derive_seed(master, "subset", "test"))
        return train_set, test_set
    if d["source"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not d[key]:
                raise ConfigError(f"[data] {key} is required when source = idx")
            if not Path(d[key]).exists():
                raise ConfigError(f"[data] {key}: no such file: {d[key]}")
        train_set = data.load_idx(d["train_images"], d["train_labels"])
        test_set = data.load_idx(d["test_images"], d["test_labels"])
        if d["subset"] and d["subset"] < len(train_set):
            train_set = data.subset(train_set, d["subset"],
                                    seeds.derive_seed(master, "subset"))
        if d["test_subset"] and d["test_subset"] < len(test_set):
            test_set = data.subset(test_set, d["test_subset"],
                                   seeds.derive_seed(master, "subset", "test"))
        return train_set, test_set
    raise ConfigError(f"[data] source must be synthetic or idx, got {d['source']!r}")


def single_spec(cfg, value):
    """One trigger spec of the configured family at a given intensity."""
    t = cfg["trigger"]
    family = t["family"]
    if family == "patch_opacity":
        return replace(default_patch(size=t["patch_size"]), alpha=float(value))
    if family == "patch_size":
        return PatchSize(width=int(round(value)))
    if family == "blend":
        return Blend(alpha=float(value))
    if family == "sinusoid":
        return Sinusoid(delta=float(value), freq=t["freq"])
    if family == "color_quantize":
        return ColorQuantize(depth=8 - int(round(value)))
    if family == "interpolate":
        return Interpolate(base=default_patch(size=t["patch_size"]), lam=float(value))
    raise ConfigError(f"[trigger] unknown family {family!r}")


def grid_specs(cfg, axis):
    t = cfg["trigger"]
    kwargs = {}
    if t["family"] == "sinusoid":
        kwargs["freq"] = t["freq"]
    if t["family"] in ("patch_opacity", "interpolate"):
        kwargs["base"] = default_patch(size=t["patch_size"])
    return intensity_grid(t["family"], t[f"{axis}_lo"], t[f"{axis}_hi"],
                          t[f"{axis}_steps"], **kwargs)


def train_config(cfg, seed):
    t = cfg["train"]
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                       lr=t["lr"], momentum=t["momentum"], seed=seed)


def poison_plan(cfg, spec, seed):
    p = cfg["poison"]
    return PoisonPlan.single(spec, rate=p["rate"], target_label=p["target_label"],
                             seed=seed)


def _train_model(cfg, train_set):
    """Clean or backdoored model per [poison] rate, plus the poison record."""
    master = cfg["run"]["master_seed"]
    tc = train_config(cfg, seeds.derive_seed(master, "init"))
    record = None
    train_data = train_set
    if cfg["poison"]["rate"] > 0:
        spec = single_spec(cfg, cfg["trigger"]["intensity"])
        plan = poison_plan(cfg, spec, seeds.derive_seed(master, "poison"))
        record = poisoning.poison_training_set(train_set, plan)
        train_data = record.dataset
    model = CnnModel.init(tc.seed)
    model, history = engine.train(model, train_data, tc)
    return model, history, record


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_poison(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "poison")
    train_set, _ = load_datasets(cfg)
    master = cfg["run"]["master_seed"]
    spec = single_spec(cfg, cfg["trigger"]["intensity"])
    plan = poison_plan(cfg, spec, seeds.derive_seed(master, "poison"))
    record = poisoning.poison_training_set(train_set, plan)
    data.save_idx(record.dataset, out / "poisoned-images.idx", out / "poisoned-labels.idx")
    poisoning.export_poison_csv(record, out / "poison.csv")
    write_manifest(out, "poison", cfg,
                   {"poisoned_count": len(record.poisoned_indices)})
    print(f"poisoned {len(record.poisoned_indices)} of {len(train_set)} samples "
          f"-> {out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "train")
    train_set, test_set = load_datasets(cfg)
    model, history, record = _train_model(cfg, train_set)
    engine.save_checkpoint(model, out / "model.ckpt")
    with open(out / "history.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "accuracy"])
        for i, stats in enumerate(history):
            writer.writerow([i, f"{stats.loss:.6f}", f"{stats.accuracy:.6f}"])
    acc = engine.evaluate(model, test_set)
    write_manifest(out, "train", cfg, {"clean_accuracy": acc})
    print(f"clean accuracy {acc:.4f}; checkpoint -> {out / 'model.ckpt'}")
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "eval")
    model = engine.load_checkpoint(args.checkpoint)
    _, test_set = load_datasets(cfg)
    acc = engine.evaluate(model, test_set)
    spec = single_spec(cfg, cfg["trigger"]["intensity"])
    poisoned = poisoning.poison_inference_set(test_set, spec,
                                              cfg["poison"]["target_label"])
    rate = poisoning.asr(model, poisoned, cfg["poison"]["target_label"])
    with open(out / "eval.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        writer.writerow(["clean_accuracy", f"{acc:.6f}"])
        writer.writerow(["asr", f"{rate:.6f}"])
    write_manifest(out, "eval", cfg, {"checkpoint": str(args.checkpoint)})
    print(f"clean accuracy {acc:.4f}  asr@{cfg['trigger']['intensity']} {rate:.4f}")
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "sweep")
    train_set, test_set = load_datasets(cfg)
    master = cfg["run"]["master_seed"]
    train_specs = grid_specs(cfg, "train")
    infer_specs = grid_specs(cfg, "infer")
    plan = poison_plan(cfg, train_specs[0], 0)
    tc = train_config(cfg, 0)
    try:
        grid = pipeline.run_sweep(train_specs, infer_specs, train_set, test_set,
                                  plan, tc, master_seed=master,
                                  workers=cfg["run"]["workers"])
    except pipeline.SweepError as err:
        pipeline.grid_to_csv(err.partial, out / "grid.partial.csv")
        write_manifest(out, "sweep", cfg,
                       {"status": "partial",
                        "failed_cells": [int(t) for t, _ in err.failures]})
        print(f"sweep incomplete: {err}", file=sys.stderr)
        print(f"partial grid -> {out / 'grid.partial.csv'}", file=sys.stderr)
        return 1
    grid.regions = pipeline.classify_regions(grid)
    pipeline.grid_to_csv(grid, out / "grid.csv")
    with open(out / "regions.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["train_intensity", "infer_intensity", "region"])
        for t, ti in enumerate(grid.train_intensities):
            for i, ii in enumerate(grid.infer_intensities):
                writer.writerow([f"{ti:.6f}", f"{ii:.6f}", grid.regions[t, i]])
    pipeline.write_heatmap_pgm(grid, out / "heatmap.pgm")
    write_manifest(out, "sweep", cfg, {"status": "complete"})
    print(f"sweep complete -> {out}")
    return 0


def cmd_select(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "select")
    train_set, test_set = load_datasets(cfg)
    master = cfg["run"]["master_seed"]
    candidates = grid_specs(cfg, "train")
    plan = poison_plan(cfg, candidates[0], 0)
    result = pipeline.select_intensity(
        candidates, train_set, test_set,
        elevated_rate=cfg["select"]["elevated_rate"],
        early_epochs=cfg["select"]["early_epochs"],
        plan_template=plan, cfg=train_config(cfg, 0),
        master_seed=master, method=cfg["select"]["method"])
    with open(out / "trajectories.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["intensity", "epoch", "poisoned_loss", "asr"])
        for value, traj in sorted(result.trajectories.items()):
            for epoch, (loss, rate) in enumerate(zip(traj["loss"], traj["asr"])):
                writer.writerow([f"{value:.6f}", epoch, f"{loss:.6f}", f"{rate:.6f}"])
    chosen = intensity(result.chosen) if result.viable else None
    write_manifest(out, "select", cfg, {"chosen_intensity": chosen})
    if result.viable:
        print(f"recommended training intensity: {chosen}")
        return 0
    print("no viable intensity among the candidates", file=sys.stderr)
    return 1


def cmd_mix(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "mix")
    train_set, test_set = load_datasets(cfg)
    infer_specs = grid_specs(cfg, "infer")
    result = pipeline.mix_experiment(
        single_spec(cfg, cfg["poison"]["mix_high"]),
        single_spec(cfg, cfg["poison"]["mix_low"]),
        rate=cfg["poison"]["mix_rate"], infer_specs=infer_specs,
        train_set=train_set, test_set=test_set, cfg=train_config(cfg, 0),
        target_label=cfg["poison"]["target_label"],
        master_seed=cfg["run"]["master_seed"])
    with open(out / "mix.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["infer_intensity", "single_asr", "mixed_asr"])
        for i, ii in enumerate(result.infer_intensities):
            writer.writerow([f"{ii:.6f}", f"{result.single_row[i]:.6f}",
                             f"{result.mixed_row[i]:.6f}"])
    write_manifest(out, "mix", cfg, {
        "single_worst": result.single_worst, "single_average": result.single_average,
        "mixed_worst": result.mixed_worst, "mixed_average": result.mixed_average})
    print(f"single: worst {result.single_worst:.4f} average {result.single_average:.4f}")
    print(f"mixed:  worst {result.mixed_worst:.4f} average {result.mixed_average:.4f}")
    return 0


def cmd_defend(args):
    cfg = load_config(args.config)
    selected = [d.strip() for d in cfg["defend"]["defenses"].split(",") if d.strip()]
    if not selected:
        print("no defenses selected", file=sys.stderr)
        return 1
    for name in selected:
        if name not in KNOWN_DEFENSES:
            print(f"unknown defense {name!r}; known: {', '.join(KNOWN_DEFENSES)}",
                  file=sys.stderr)
            return 1
    out = output_dir(cfg, "defend")
    try:
        model = engine.load_checkpoint(args.checkpoint)
    except engine.CheckpointError as err:
        print(f"cannot load checkpoint: {err}", file=sys.stderr)
        return 1
    train_set, test_set = load_datasets(cfg)
    master = cfg["run"]["master_seed"]
    target = cfg["poison"]["target_label"]
    train_intensity = cfg["trigger"]["intensity"]
    n_eval = cfg["defend"]["eval_samples"]
    rng = seeds.stream(master, "defense")
    rows = []

    if "strip" in selected or "scale_up" in selected:
        benign = data.subset(test_set, min(n_eval, len(test_set)),
                             seeds.derive_seed(master, "defense", "benign"))
        overlay_pool = np.ascontiguousarray(
            data.subset(test_set, min(n_eval, len(test_set)),
                        seeds.derive_seed(master, "defense", "overlay"))
            .images.transpose(0, 3, 1, 2))
        for spec in grid_specs(cfg, "infer"):
            poisoned_full = poisoning.poison_inference_set(test_set, spec, target)
            poisoned = data.LabeledDataset(
                poisoned_full.images[:n_eval], poisoned_full.labels[:n_eval])
            rate = poisoning.asr(model, poisoned_full, target)
            rows.append(("asr", train_intensity, intensity(spec), "asr", rate))
            if "strip" in selected:
                auc = defenses.strip_auc(model, benign, poisoned, overlay_pool,
                                         n=cfg["defend"]["strip_overlays"],
                                         seed=seeds.derive_seed(master, "defense", "strip"))
                rows.append(("strip", train_intensity, intensity(spec), "auc", auc))
            if "scale_up" in selected:
                auc = defenses.scale_up_auc(model, benign, poisoned)
                rows.append(("scale_up", train_intensity, intensity(spec), "auc", auc))

    if "spectral" in selected or "clustering" in selected:
        spec = single_spec(cfg, train_intensity)
        plan = poison_plan(cfg, spec, seeds.derive_seed(master, "poison"))
        record = poisoning.poison_training_set(train_set, plan)
        mask = np.zeros(len(train_set), dtype=bool)
        mask[record.poisoned_indices] = True
        if "spectral" in selected:
            report = defenses.spectral_signature(model, record.dataset, mask)
            rows.append(("spectral", train_intensity, train_intensity,
                         "recall", report.recall))
        if "clustering" in selected:
            report = defenses.activation_clustering(
                model, record.dataset, seed=seeds.derive_seed(master, "defense", "ac"))
            for cls, value in sorted(report.silhouettes.items()):
                rows.append(("clustering", train_intensity, train_intensity,
                             f"silhouette_class_{cls}", value))

    if "neural_cleanse" in selected:
        clean = data.subset(test_set, min(200, len(test_set)),
                            seeds.derive_seed(master, "defense", "nc"))
        report = defenses.neural_cleanse(
            model, clean, steps=cfg["defend"]["nc_steps"],
            weight_l1=cfg["defend"]["nc_weight_l1"],
            restarts=cfg["defend"]["nc_restarts"],
            seed=seeds.derive_seed(master, "defense", "nc-init"))
        rows.append(("neural_cleanse", train_intensity, train_intensity,
                     "anomaly_index", report.anomaly_index))
        for cls in sorted(report.triggers):
            trig = report.triggers[cls]
            rows.append(("neural_cleanse", train_intensity, train_intensity,
                         f"l1_class_{cls}", trig.l1_norm))
            rows.append(("neural_cleanse", train_intensity, train_intensity,
                         f"re_asr_class_{cls}", trig.re_asr))
        flagged = report.flagged_class
        best = report.triggers[int(np.argmin(report.l1_norms))]
        defenses.export_reversed_trigger(best, out / "reversed-mask.pgm",
                                         out / "reversed-pattern.raw")
        write_manifest(out, "defend", cfg,
                       {"checkpoint": str(args.checkpoint),
                        "nc_flagged_class": flagged})
    else:
        write_manifest(out, "defend", cfg, {"checkpoint": str(args.checkpoint)})

    defenses.write_defense_report(rows, out / "defense_report.csv")
    print(f"defense report ({len(rows)} rows) -> {out / 'defense_report.csv'}")
    return 0


def cmd_analyze(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, "analyze")
    model = engine.load_checkpoint(args.checkpoint)
    _, test_set = load_datasets(cfg)
    master = cfg["run"]["master_seed"]
    target = cfg["poison"]["target_label"]
    benign = data.subset(test_set, min(500, len(test_set)),
                         seeds.derive_seed(master, "defense", "benign"))
    matched = poisoning.poison_inference_set(
        benign, single_spec(cfg, cfg["trigger"]["intensity"]), target)
    neurons = analysis.identify_compromised_neurons(
        model, benign, matched, k=cfg["analyze"]["top_k"])
    values = [float(v) for v in cfg["analyze"]["intensities"].split(",")]
    by_intensity = {
        v: poisoning.poison_inference_set(benign, single_spec(cfg, v), target)
        for v in values}
    report = analysis.activation_separation(model, neurons, benign, by_intensity)
    with open(out / "separation.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["intensity", "separation"])
        for v in sorted(report.separations):
            writer.writerow([f"{v:.6f}", f"{report.separations[v]:.6f}"])
    analysis.dump_activations(model, neurons, benign, by_intensity,
                              out / "activations.csv")
    write_manifest(out, "analyze", cfg,
                   {"checkpoint": str(args.checkpoint),
                    "neurons": [int(n) for n in neurons]})
    print(f"top neurons: {list(map(int, neurons))}")
    for v in sorted(report.separations):
        print(f"separation @ {v:g}: {report.separations[v]:.3f}")
    return 0


def cmd_gradcheck(args):
    model = CnnModel.init(args.seed)
    rng = np.random.default_rng(args.seed + 1)
    sample = (rng.uniform(0, 1, size=(28, 28, 1)), int(rng.integers(10)))
    err = engine.grad_check(model, sample, epsilon=1e-4, seed=args.seed + 2)
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err < 1e-4 else 1


def _report_grid(path, lines):
    grid = pipeline.grid_from_csv(path)
    regions = grid.regions
    if regions is None:
        regions = pipeline.classify_regions(grid)
    lines.append("sweep quadrants (cells per region):")
    counts = {name: int((regions == name).sum()) for name in pipeline.REGIONS}
    for name in pipeline.REGIONS:
        lines.append(f"  {name:<15} {counts[name]}")
    lines.append(f"  mean clean accuracy: {np.nanmean(grid.acc):.4f}")


def _report_mix(path, lines):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    single = np.array([float(r["single_asr"]) for r in rows])
    mixed = np.array([float(r["mixed_asr"]) for r in rows])
    lines.append("intensity mixing (ASR over the inference grid):")
    lines.append(f"  {'configuration':<12} {'worst':>8} {'average':>8}")
    lines.append(f"  {'single':<12} {single.min():>8.4f} {single.mean():>8.4f}")
    lines.append(f"  {'mixed':<12} {mixed.min():>8.4f} {mixed.mean():>8.4f}")


def _report_defense(path, lines):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    lines.append("defense metrics:")
    for r in rows:
        lines.append(f"  {r['defense']:<15} infer={r['infer_intensity']} "
                     f"{r['metric_name']}={r['value']}")


def cmd_report(args):
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        print(f"no such directory: {run_dir}", file=sys.stderr)
        return 1
    lines = []
    missing = []
    found = False
    for sub in sorted(p for p in run_dir.rglob("manifest.json")):
        found = True
        command = json.loads(sub.read_text()).get("command", "?")
        base = sub.parent
        lines.append(f"run: {base} (command: {command})")
        artifacts = {
            "sweep": ("grid.csv", _report_grid),
            "mix": ("mix.csv", _report_mix),
            "defend": ("defense_report.csv", _report_defense),
        }
        if command in artifacts:
            name, renderer = artifacts[command]
            artifact = base / name
            if artifact.exists():
                renderer(artifact, lines)
            else:
                missing.append(str(artifact))
        lines.append("")
    if not found:
        print("nothing to report")
        return 0
    print("\n".join(lines).rstrip())
    if missing:
        print("missing artifacts:", file=sys.stderr)
        for m in missing:
            print(f"  {m}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="triggerlab",
        description="Backdoor trigger-intensity laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, checkpoint=False):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("config", nargs="?", default=None,
                           help="INI config file (defaults apply when omitted)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint")
        p.set_defaults(fn=fn)
        return p

    add("poison", cmd_poison, "build and export a poisoned training set")
    add("train", cmd_train, "train a (backdoored) model")
    add("eval", cmd_eval, "clean accuracy and ASR of a checkpoint", checkpoint=True)
    add("sweep", cmd_sweep, "full training-vs-inference intensity sweep")
    add("select", cmd_select, "early-stopping training-intensity selection")
    add("mix", cmd_mix, "single- vs mixed-intensity poisoning comparison")
    add("defend", cmd_defend, "run detection defenses against a checkpoint",
        checkpoint=True)
    add("analyze", cmd_analyze, "neuron activation separation for a checkpoint",
        checkpoint=True)
    grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    grad.add_argument("--seed", type=int, default=0)
    grad.set_defaults(fn=cmd_gradcheck)
    report = sub.add_parser("report", help="summarize a run directory")
    report.add_argument("run_dir")
    report.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, engine.CheckpointError, data.IdxFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
