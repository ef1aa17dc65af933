"""Pure-numpy rasterizer kernel (fallback for the compiled extension).

Must stay semantically bit-identical to _raster.pyx: same coverage tests,
same float64 expression order, same overwrite order.
"""

from __future__ import annotations

import numpy as np


def rasterize(image, label, shapes, geom, colors, labels, digit_colors, gbox,
              glyph_dims, glyph_offsets, glyph_buf):
    h, w = image.shape
    px = np.arange(w, dtype=np.float64) + 0.5
    py = np.arange(h, dtype=np.float64) + 0.5
    for i in range(len(shapes)):
        cx, cy, half_w, half_h = geom[i]
        if shapes[i] == 0:  # axis-aligned rectangle
            inside = (np.abs(px[None, :] - cx) <= half_w) & (np.abs(py[:, None] - cy) <= half_h)
        else:  # circle of radius half_w
            dx = px[None, :] - cx
            dy = py[:, None] - cy
            inside = dx * dx + dy * dy <= half_w * half_w
        image[inside] = colors[i]
        label[inside] = labels[i]

        gh, gw = int(glyph_dims[i, 0]), int(glyph_dims[i, 1])
        if gh == 0:
            continue
        gbw, gbh = gbox[i]
        in_box = (np.abs(px[None, :] - cx) <= gbw) & (np.abs(py[:, None] - cy) <= gbh)
        in_box &= inside
        if not in_box.any():
            continue
        mask = glyph_buf[glyph_offsets[i]:glyph_offsets[i] + gh * gw].reshape(gh, gw)
        u = (px - (cx - gbw)) / (2.0 * gbw)
        v = (py - (cy - gbh)) / (2.0 * gbh)
        gi = np.clip(np.floor(u * gw).astype(np.int64), 0, gw - 1)
        gj = np.clip(np.floor(v * gh).astype(np.int64), 0, gh - 1)
        stroke = mask[gj[:, None], gi[None, :]].astype(bool) & in_box
        image[stroke] = digit_colors[i]
