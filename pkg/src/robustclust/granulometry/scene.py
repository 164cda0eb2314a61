"""Grain scenes: two primitive shapes, rasterization, random placement, PBM files.

Both primitives have area ``r**2`` at size parameter ``r``:

* ``triangle``: equilateral, side ``2 r / 3**0.25``, height ``3**0.25 r``,
  apex up;
* ``rod``: axis-aligned rectangle, width ``r / sqrt(5)``, height ``sqrt(5) r``.

Coordinates are in pixels with ``x`` along columns and ``y`` along rows; a
grain's ``center`` is the center of its bounding box. Pixel ``(row, col)``
is foreground when its center ``(col + 0.5, row + 0.5)`` lies in the shape.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["PRIMITIVES", "Grain", "GrainScene", "SizingModel", "grain_extent", "grain_mask",
           "render_scene", "sample_scene", "read_pbm", "write_pbm", "scene_to_dict",
           "scene_from_dict", "load_scene", "save_scene"]

PRIMITIVES = ("triangle", "rod")
_SQRT5 = np.sqrt(5.0)
_Q3 = 3.0 ** 0.25


@dataclass(frozen=True)
class Grain:
    primitive: str
    radius: float
    center: tuple[float, float]

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ValueError(f"primitive must be one of {PRIMITIVES}, got {self.primitive!r}")
        if not self.radius > 0:
            raise ValueError("grain radius must be positive")


@dataclass
class GrainScene:
    width: int
    height: int
    grains: list[Grain] = field(default_factory=list)

    def radii(self, primitive: str) -> np.ndarray:
        return np.array([g.radius for g in self.grains if g.primitive == primitive])


@dataclass(frozen=True)
class SizingModel:
    """Gamma size laws for one class: shape ``alpha[i]`` per primitive, common scale ``beta``."""

    alpha: tuple[float, float]
    beta: float

    def __post_init__(self):
        if len(self.alpha) != len(PRIMITIVES) or min(self.alpha) <= 0 or not self.beta > 0:
            raise ValueError("need two positive shapes and a positive scale")


def grain_extent(primitive: str, radius: float) -> tuple[float, float]:
    """Bounding-box ``(width, height)`` of a primitive."""
    if primitive == "triangle":
        return 2.0 * radius / _Q3, _Q3 * radius
    if primitive == "rod":
        return radius / _SQRT5, _SQRT5 * radius
    raise ValueError(f"unknown primitive {primitive!r}")


def grain_mask(grain: Grain) -> tuple[int, int, np.ndarray]:
    """Rasterize one grain; returns ``(row0, col0, mask)`` of its bounding pixels."""
    w, h = grain_extent(grain.primitive, grain.radius)
    cx, cy = grain.center
    x0, y0 = cx - w / 2, cy - h / 2
    c0, r0 = int(np.floor(x0)), int(np.floor(y0))
    c1, r1 = int(np.ceil(x0 + w)), int(np.ceil(y0 + h))
    xs = np.arange(c0, c1) + 0.5
    ys = np.arange(r0, r1) + 0.5
    X, Y = np.meshgrid(xs, ys)
    if grain.primitive == "rod":
        mask = (X >= x0) & (X < x0 + w) & (Y >= y0) & (Y < y0 + h)
    else:
        depth = Y - y0
        mask = (depth >= 0) & (depth < h) & (np.abs(X - cx) <= (w / 2) * depth / h)
    return r0, c0, mask


def render_scene(scene: GrainScene) -> np.ndarray:
    """Binary image of a scene; grains must be disjoint and inside the frame."""
    img = np.zeros((scene.height, scene.width), dtype=bool)
    for k, g in enumerate(scene.grains):
        r0, c0, mask = grain_mask(g)
        rows, cols = np.nonzero(mask)
        rows, cols = rows + r0, cols + c0
        if rows.size == 0:
            continue
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= scene.height or cols.max() >= scene.width:
            raise ValueError(f"grain {k} extends outside the {scene.width}x{scene.height} frame")
        if img[rows, cols].any():
            raise ValueError(f"grain {k} overlaps an earlier grain")
        img[rows, cols] = True
    return img


def _dilate_square(mask: np.ndarray, gap: int) -> np.ndarray:
    if gap == 0:
        return mask
    out = np.zeros((mask.shape[0] + 2 * gap, mask.shape[1] + 2 * gap), dtype=bool)
    for dr in range(2 * gap + 1):
        for dc in range(2 * gap + 1):
            out[dr:dr + mask.shape[0], dc:dc + mask.shape[1]] |= mask
    return out


def _truncated_gamma(rng, shape, scale, lower, size, max_draws=1_000_000):
    out = np.empty(0)
    drawn = 0
    while out.size < size:
        batch = rng.gamma(shape, scale, size=max(2 * (size - out.size), 16))
        drawn += batch.size
        out = np.concatenate([out, batch[batch >= lower]])
        if drawn > max_draws:
            raise RuntimeError("minimum radius rejects almost every draw; lower it")
    return out[:size]


def sample_scene(n_grains: int, proportion: float, sizing: SizingModel, width: int, height: int,
                 seed=None, min_radius: float = 0.0, radius_unit: float = 1.0, gap: int = 1,
                 max_attempts: int = 10_000) -> GrainScene:
    """Draw a random non-overlapping scene.

    ``round(proportion * n_grains)`` grains are triangles and the rest rods.
    Radii are gamma draws in model units times ``radius_unit`` pixels,
    redrawn while below ``min_radius`` pixels. Grains are kept at least
    ``gap`` pixels apart so that distinct grains never touch.

    Raises
    ------
    RuntimeError
        If a grain cannot be placed within ``max_attempts`` tries.
    """
    if not 0 <= proportion <= 1:
        raise ValueError("proportion must lie in [0, 1]")
    if n_grains < 0 or gap < 0:
        raise ValueError("n_grains and gap must be nonnegative")
    rng = np.random.default_rng(seed)
    n_tri = int(round(proportion * n_grains))
    counts = (n_tri, n_grains - n_tri)
    todo = []
    for prim, count, shape in zip(PRIMITIVES, counts, sizing.alpha):
        radii = _truncated_gamma(rng, shape, sizing.beta * radius_unit, min_radius, count)
        todo.extend((prim, r) for r in radii)
    # largest first packs better; the placement order does not affect the size laws
    todo.sort(key=lambda t: -t[1])
    halo = np.zeros((height + 2 * gap, width + 2 * gap), dtype=bool)
    grains = []
    for prim, r in todo:
        w, h = grain_extent(prim, r)
        if w + 1 > width or h + 1 > height:
            raise RuntimeError(f"a grain of radius {r:.1f} px does not fit; use a larger frame")
        for _ in range(max_attempts):
            center = (rng.uniform(w / 2, width - w / 2), rng.uniform(h / 2, height - h / 2))
            grain = Grain(prim, float(r), center)
            r0, c0, mask = grain_mask(grain)
            if r0 < 0 or c0 < 0 or r0 + mask.shape[0] > height or c0 + mask.shape[1] > width:
                continue
            window = halo[r0 + gap:r0 + gap + mask.shape[0], c0 + gap:c0 + gap + mask.shape[1]]
            if not window.any() or not (window & mask).any():
                break
        else:
            raise RuntimeError(f"could not place grain {len(grains) + 1} of {n_grains}; "
                               "use a larger frame")
        grains.append(grain)
        grown = _dilate_square(mask, gap)
        halo[r0:r0 + grown.shape[0], c0:c0 + grown.shape[1]] |= grown
    return GrainScene(width, height, grains)


# ---------------------------------------------------------------------------
# files

def write_pbm(path, img: np.ndarray) -> None:
    """Write a plain (P1) PBM; foreground pixels are written as 1."""
    img = np.asarray(img, dtype=bool)
    if img.ndim != 2:
        raise ValueError("a PBM image must be 2-d")
    rows = "\n".join(" ".join("1" if v else "0" for v in row) for row in img)
    Path(path).write_text(f"P1\n{img.shape[1]} {img.shape[0]}\n{rows}\n")


def read_pbm(path) -> np.ndarray:
    """Read a plain (P1) PBM file into a boolean array."""
    text = Path(path).read_text()
    text = re.sub(r"#[^\n]*", " ", text)
    tokens = text.split()
    if not tokens or tokens[0] != "P1":
        raise ValueError(f"{path}: not a plain PBM (P1) file")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except (IndexError, ValueError):
        raise ValueError(f"{path}: malformed PBM header") from None
    if width < 1 or height < 1:
        raise ValueError(f"{path}: image dimensions must be positive")
    # pixels may be written without separators
    bits = "".join(tokens[3:])
    if set(bits) - {"0", "1"}:
        raise ValueError(f"{path}: pixel data must be 0/1")
    if len(bits) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {len(bits)}")
    return (np.frombuffer(bits.encode(), dtype=np.uint8) == ord("1")).reshape(height, width)


def scene_to_dict(scene: GrainScene) -> dict:
    return {"width": scene.width, "height": scene.height,
            "grains": [{"primitive": g.primitive, "radius": g.radius,
                        "center": list(g.center)} for g in scene.grains]}


def scene_from_dict(data: dict) -> GrainScene:
    try:
        grains = [Grain(g["primitive"], float(g["radius"]), tuple(map(float, g["center"])))
                  for g in data["grains"]]
        return GrainScene(int(data["width"]), int(data["height"]), grains)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scene description: {exc}") from None


def load_scene(path) -> GrainScene:
    return scene_from_dict(json.loads(Path(path).read_text()))


def save_scene(path, scene: GrainScene) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1))
