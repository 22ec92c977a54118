"""Parameterized trigger families and the scalar intensity abstraction.

Five families, each with one scalar intensity knob:

* PatchOpacity  - alpha-blended square patch (intensity = alpha)
* PatchSize     - fully opaque patch resized to width pixels (intensity = width)
* Blend         - whole-image overlay blend (intensity = alpha)
* Sinusoid      - additive horizontal sinusoid (intensity = delta, on the [0,1]
                  pixel scale)
* ColorQuantize - bit-depth reduction (intensity = 8 - depth)

Interpolate wraps any base trigger and blends the poisoned image back toward
the original (intensity = lambda). Applying any trigger at intensity 0 is a
bit-exact identity, and outputs always stay inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "PatchOpacity",
    "PatchSize",
    "Blend",
    "Sinusoid",
    "ColorQuantize",
    "Interpolate",
    "TriggerSpec",
    "intensity",
    "family_name",
    "apply_trigger",
    "default_patch",
    "default_overlay",
    "intensity_grid",
    "perturbation_norm",
    "spec_to_config",
    "spec_from_config",
]

CORNERS = ("top_left", "top_right", "bottom_left", "bottom_right")


def _white_patch(size=3):
    return np.ones((size, size), dtype=np.float64)


@dataclass(frozen=True)
class PatchOpacity:
    pattern: np.ndarray = field(default_factory=_white_patch)  # (P, P) in [0, 1]
    position: tuple = (25, 25)                                 # top-left (row, col)
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class PatchSize:
    pattern: np.ndarray = field(default_factory=_white_patch)
    width: int = 3
    position: str = "bottom_right"

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be positive")
        if self.position not in CORNERS:
            raise ValueError(f"position must be one of {CORNERS}")


@dataclass(frozen=True)
class Blend:
    overlay: np.ndarray = None  # (H, W) in [0, 1]; default built lazily
    alpha: float = 0.1

    def __post_init__(self):
        if self.overlay is None:
            object.__setattr__(self, "overlay", default_overlay())
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Sinusoid:
    delta: float = 0.06   # amplitude on the [0, 1] pixel scale
    freq: int = 6         # cycles per image width

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.freq < 1:
            raise ValueError("freq must be a positive integer")


@dataclass(frozen=True)
class ColorQuantize:
    depth: int = 4  # remaining bits per channel

    def __post_init__(self):
        if not 1 <= self.depth <= 8:
            raise ValueError(f"depth must lie in [1, 8], got {self.depth}")


@dataclass(frozen=True)
class Interpolate:
    base: object = None
    lam: float = 1.0

    def __post_init__(self):
        if self.base is None:
            object.__setattr__(self, "base", default_patch())
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


TriggerSpec = (PatchOpacity, PatchSize, Blend, Sinusoid, ColorQuantize, Interpolate)

_FAMILY_NAMES = {
    PatchOpacity: "patch_opacity",
    PatchSize: "patch_size",
    Blend: "blend",
    Sinusoid: "sinusoid",
    ColorQuantize: "color_quantize",
    Interpolate: "interpolate",
}


def family_name(spec):
    return _FAMILY_NAMES[type(spec)]


def intensity(spec):
    """The single scalar intensity of a spec."""
    if isinstance(spec, PatchOpacity):
        return spec.alpha
    if isinstance(spec, PatchSize):
        return float(spec.width)
    if isinstance(spec, Blend):
        return spec.alpha
    if isinstance(spec, Sinusoid):
        return spec.delta
    if isinstance(spec, ColorQuantize):
        return float(8 - spec.depth)
    if isinstance(spec, Interpolate):
        return spec.lam
    raise TypeError(f"not a trigger spec: {spec!r}")


def default_patch(alpha=1.0, size=3, image_size=28):
    """White square patch at the bottom-right corner (3x3 at (25, 25) for 28x28)."""
    anchor = image_size - size
    return PatchOpacity(pattern=_white_patch(size), position=(anchor, anchor), alpha=alpha)


def default_overlay(shape=(28, 28), seed=7):
    """Fixed pseudo-random noise overlay for whole-image blending."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=shape)


def _resize_nearest(pattern, width):
    src = pattern.shape[0]
    idx = (np.arange(width) * src) // width
    return pattern[np.ix_(idx, idx)]


def _corner_slice(position, width, h, w):
    row = 0 if position.startswith("top") else h - width
    col = 0 if position.endswith("left") else w - width
    return slice(row, row + width), slice(col, col + width)


def apply_trigger(image, spec):
    """Apply a trigger to one (H, W, C) image in [0, 1]; returns a new image."""
    image = np.asarray(image)
    h, w, c = image.shape
    out = image.copy()

    if isinstance(spec, PatchOpacity):
        if spec.alpha == 0.0:
            return out
        p = spec.pattern.shape[0]
        row, col = spec.position
        if row < 0 or col < 0 or row + p > h or col + p > w:
            raise ValueError(
                f"patch of size {p} at ({row}, {col}) exceeds {h}x{w} image bounds")
        region = out[row:row + p, col:col + p, :]
        out[row:row + p, col:col + p, :] = (
            (1.0 - spec.alpha) * region + spec.alpha * spec.pattern[:, :, None])
    elif isinstance(spec, PatchSize):
        if spec.width > min(h, w):
            raise ValueError(f"patch width {spec.width} exceeds {h}x{w} image bounds")
        patch = _resize_nearest(spec.pattern, spec.width)
        rows, cols = _corner_slice(spec.position, spec.width, h, w)
        out[rows, cols, :] = patch[:, :, None]
    elif isinstance(spec, Blend):
        if spec.alpha == 0.0:
            return out
        if spec.overlay.shape != (h, w):
            raise ValueError(
                f"overlay shape {spec.overlay.shape} does not match {h}x{w} image")
        out = (1.0 - spec.alpha) * image + spec.alpha * spec.overlay[:, :, None]
    elif isinstance(spec, Sinusoid):
        if spec.delta == 0.0:
            return out
        cols = np.arange(w, dtype=np.float64)
        wave = spec.delta * np.sin(2.0 * np.pi * cols * spec.freq / w)
        out = image + wave[None, :, None]
    elif isinstance(spec, ColorQuantize):
        levels = float(2 ** spec.depth - 1)
        out = np.round(image.astype(np.float64) * levels) / levels
    elif isinstance(spec, Interpolate):
        if spec.lam == 0.0:
            return out
        poisoned = apply_trigger(image, spec.base)
        out = (1.0 - spec.lam) * image + spec.lam * poisoned
    else:
        raise TypeError(f"not a trigger spec: {spec!r}")

    return np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)


def apply_trigger_batch(images, spec):
    """Apply one spec to every image of an (N, H, W, C) stack."""
    return np.stack([apply_trigger(img, spec) for img in images])


def intensity_grid(family, lo, hi, steps, **kwargs):
    """Evenly spaced specs of one family, ascending in intensity.

    Integer-valued families (patch_size, color_quantize) round the grid to
    integers; endpoints are always included.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not lo < hi:
        raise ValueError("lo must be < hi")
    values = np.linspace(lo, hi, steps)
    if family == "patch_opacity":
        base = kwargs.get("base", default_patch())
        return [replace(base, alpha=float(v)) for v in values]
    if family == "patch_size":
        pattern = kwargs.get("pattern", _white_patch(8))
        position = kwargs.get("position", "bottom_right")
        widths = sorted(set(int(round(v)) for v in values))
        return [PatchSize(pattern=pattern, width=w, position=position) for w in widths]
    if family == "blend":
        overlay = kwargs.get("overlay", default_overlay())
        return [Blend(overlay=overlay, alpha=float(v)) for v in values]
    if family == "sinusoid":
        freq = kwargs.get("freq", 6)
        return [Sinusoid(delta=float(v), freq=freq) for v in values]
    if family == "color_quantize":
        depths = sorted(set(int(round(v)) for v in values))
        return [ColorQuantize(depth=8 - d) for d in depths]  # intensity = 8 - depth
    if family == "interpolate":
        base = kwargs.get("base", default_patch())
        return [Interpolate(base=base, lam=float(v)) for v in values]
    raise ValueError(f"unknown trigger family {family!r}")


def perturbation_norm(image, spec):
    """(L2, Linf) distance between an image and its triggered version."""
    diff = apply_trigger(image, spec).astype(np.float64) - np.asarray(image, dtype=np.float64)
    return float(np.sqrt((diff ** 2).sum())), float(np.abs(diff).max(initial=0.0))


# ---------------------------------------------------------------------------
# Human-readable serialization
# ---------------------------------------------------------------------------


def _grid_to_text(grid):
    return ";".join(",".join(repr(float(v)) for v in row) for row in grid)


def _grid_from_text(text):
    rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    return np.asarray(rows, dtype=np.float64)


def _fields(spec):
    if isinstance(spec, PatchOpacity):
        return {"alpha": repr(spec.alpha),
                "row": str(spec.position[0]), "col": str(spec.position[1]),
                "pattern": _grid_to_text(spec.pattern)}
    if isinstance(spec, PatchSize):
        return {"width": str(spec.width), "position": spec.position,
                "pattern": _grid_to_text(spec.pattern)}
    if isinstance(spec, Blend):
        return {"alpha": repr(spec.alpha), "overlay": _grid_to_text(spec.overlay)}
    if isinstance(spec, Sinusoid):
        return {"delta": repr(spec.delta), "freq": str(spec.freq)}
    if isinstance(spec, ColorQuantize):
        return {"depth": str(spec.depth)}
    if isinstance(spec, Interpolate):
        nested = {f"base.{k}": v for k, v in _fields(spec.base).items()}
        nested["base.family"] = family_name(spec.base)
        return {"lambda": repr(spec.lam), **nested}
    raise TypeError(f"not a trigger spec: {spec!r}")


def spec_to_config(spec):
    """Serialize a spec as a key = value block; round-trips losslessly."""
    lines = [f"family = {family_name(spec)}"]
    lines += [f"{k} = {v}" for k, v in _fields(spec).items()]
    return "\n".join(lines) + "\n"


def _build(family, kv):
    if family == "patch_opacity":
        return PatchOpacity(pattern=_grid_from_text(kv["pattern"]),
                            position=(int(kv["row"]), int(kv["col"])),
                            alpha=float(kv["alpha"]))
    if family == "patch_size":
        return PatchSize(pattern=_grid_from_text(kv["pattern"]),
                         width=int(kv["width"]), position=kv["position"])
    if family == "blend":
        return Blend(overlay=_grid_from_text(kv["overlay"]), alpha=float(kv["alpha"]))
    if family == "sinusoid":
        return Sinusoid(delta=float(kv["delta"]), freq=int(kv["freq"]))
    if family == "color_quantize":
        return ColorQuantize(depth=int(kv["depth"]))
    if family == "interpolate":
        base_kv = {k[len("base."):]: v for k, v in kv.items() if k.startswith("base.")}
        base = _build(base_kv.pop("family"), base_kv)
        return Interpolate(base=base, lam=float(kv["lambda"]))
    raise ValueError(f"unknown trigger family {family!r}")


def spec_from_config(text):
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    if "family" not in kv:
        raise ValueError("trigger config is missing the family key")
    return _build(kv.pop("family"), kv)
