"""Frame rendering: painter's-algorithm rasterizer with two backends.

The per-pixel inner loop exists twice with identical semantics: a compiled
Cython kernel (rfcnet.scene._raster) used when the extension was built, and a
vectorized numpy fallback. Both evaluate the same float64 coverage tests in
the same order, so rendered frames are bit-identical across backends; the
selection is therefore purely a speed concern (see benchmarks/bench_raster.py).

Set RFCNET_RASTER_BACKEND=python|compiled to force a backend.
"""

from __future__ import annotations

import os

import numpy as np

from .world import KIND_CIRCLE, SceneObject, SceneState
from . import _raster_py

try:
    from . import _raster as _compiled
except ImportError:
    _compiled = None

_FORCED = os.environ.get("RFCNET_RASTER_BACKEND", "")
if _FORCED == "python":
    _kernel = _raster_py
elif _FORCED == "compiled":
    if _compiled is None:
        raise ImportError("RFCNET_RASTER_BACKEND=compiled but the extension is not built")
    _kernel = _compiled
else:
    _kernel = _compiled if _compiled is not None else _raster_py


def raster_backend() -> str:
    """Name of the active kernel: "compiled" or "python"."""
    return "compiled" if _kernel is _compiled and _compiled is not None else "python"


def available_backends() -> dict[str, object]:
    backends = {"python": _raster_py}
    if _compiled is not None:
        backends["compiled"] = _compiled
    return backends


SHAPE_RECT = 0
SHAPE_CIRCLE = 1

BACKGROUND = 0.0

_DRAW_ORDER = {0: 0, 1: 1, 2: 2, 3: 3}  # walls, static, dynamic, circles on top


def _pack(objects: list[SceneObject]):
    n = len(objects)
    shapes = np.zeros(n, dtype=np.int32)
    geom = np.zeros((n, 4), dtype=np.float64)
    colors = np.zeros(n, dtype=np.float32)
    labels = np.zeros(n, dtype=np.uint8)
    digit_colors = np.zeros(n, dtype=np.float32)
    gbox = np.zeros((n, 2), dtype=np.float64)
    glyph_dims = np.zeros((n, 2), dtype=np.int32)
    glyph_offsets = np.zeros(n, dtype=np.int64)
    chunks = []
    offset = 0
    for i, obj in enumerate(objects):
        shapes[i] = SHAPE_CIRCLE if obj.kind == KIND_CIRCLE else SHAPE_RECT
        geom[i] = (obj.x, obj.y, obj.half_w, obj.half_h)
        colors[i] = obj.color
        labels[i] = obj.label
        if obj.glyph_mask is not None:
            mask = np.ascontiguousarray(obj.glyph_mask, dtype=np.uint8)
            glyph_dims[i] = mask.shape
            glyph_offsets[i] = offset
            gbox[i] = (obj.glyph_half_w, obj.glyph_half_h)
            digit_colors[i] = obj.digit_color
            chunks.append(mask.reshape(-1))
            offset += mask.size
    glyph_buf = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)
    return shapes, geom, colors, labels, digit_colors, gbox, glyph_dims, glyph_offsets, glyph_buf


def render(state: SceneState, backend: object | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize a scene into an intensity image and a per-pixel class map.

    Draw order is background, walls/borders, static squares, dynamic squares,
    circles; later layers overwrite. Digit strokes are drawn in the square's
    digit color and inherit the square's class. Pixel membership is decided
    at the pixel center.
    """
    kernel = backend if backend is not None else _kernel
    ordered = sorted(state.objects, key=lambda o: _DRAW_ORDER[o.kind])
    packed = _pack(ordered)
    h = w = state.image_size
    image = np.full((h, w), np.float32(BACKGROUND), dtype=np.float32)
    label = np.zeros((h, w), dtype=np.uint8)
    kernel.rasterize(image, label, *packed)
    return image, label
