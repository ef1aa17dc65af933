# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterizer kernel.

Semantics must stay bit-identical to _raster_py.rasterize: identical float64
coverage tests in identical expression order, painter overwrite per object.
The bounding-box clipping below only trims the pixel loop; membership is
always decided by the same per-pixel test the numpy kernel evaluates.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor

cnp.import_array()


def rasterize(cnp.float32_t[:, ::1] image,
              cnp.uint8_t[:, ::1] label,
              cnp.int32_t[::1] shapes,
              cnp.float64_t[:, ::1] geom,
              cnp.float32_t[::1] colors,
              cnp.uint8_t[::1] labels,
              cnp.float32_t[::1] digit_colors,
              cnp.float64_t[:, ::1] gbox,
              cnp.int32_t[:, ::1] glyph_dims,
              cnp.int64_t[::1] glyph_offsets,
              cnp.uint8_t[::1] glyph_buf):
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t n = shapes.shape[0]
    cdef Py_ssize_t i, r, c, r0, r1, c0, c1
    cdef double cx, cy, half_w, half_h, px, py, dx, dy, gbw, gbh, u, v, reach
    cdef double gw_scale, gh_scale
    cdef cnp.float32_t color, digit_color
    cdef cnp.uint8_t lab
    cdef int shape, gh, gw
    cdef Py_ssize_t goff, gi, gj
    cdef bint inside, has_glyph

    for i in range(n):
        cx = geom[i, 0]
        cy = geom[i, 1]
        half_w = geom[i, 2]
        half_h = geom[i, 3]
        shape = shapes[i]
        color = colors[i]
        lab = labels[i]
        gh = glyph_dims[i, 0]
        gw = glyph_dims[i, 1]
        has_glyph = gh > 0
        gbw = gbox[i, 0]
        gbh = gbox[i, 1]
        digit_color = digit_colors[i]
        goff = glyph_offsets[i]
        gw_scale = 2.0 * gbw
        gh_scale = 2.0 * gbh

        # Loose bounding box (1px slack); the exact test below decides.
        reach = half_w if half_w >= half_h else half_h
        r0 = <Py_ssize_t>floor(cy - (half_h if shape == 0 else reach) - 0.5) - 1
        r1 = <Py_ssize_t>floor(cy + (half_h if shape == 0 else reach) + 0.5) + 1
        c0 = <Py_ssize_t>floor(cx - (half_w if shape == 0 else reach) - 0.5) - 1
        c1 = <Py_ssize_t>floor(cx + (half_w if shape == 0 else reach) + 0.5) + 1
        if r0 < 0:
            r0 = 0
        if c0 < 0:
            c0 = 0
        if r1 > h - 1:
            r1 = h - 1
        if c1 > w - 1:
            c1 = w - 1

        for r in range(r0, r1 + 1):
            py = <double>r + 0.5
            for c in range(c0, c1 + 1):
                px = <double>c + 0.5
                if shape == 0:
                    inside = fabs(px - cx) <= half_w and fabs(py - cy) <= half_h
                else:
                    dx = px - cx
                    dy = py - cy
                    inside = dx * dx + dy * dy <= half_w * half_w
                if not inside:
                    continue
                image[r, c] = color
                label[r, c] = lab
                if has_glyph and fabs(px - cx) <= gbw and fabs(py - cy) <= gbh:
                    u = (px - (cx - gbw)) / gw_scale
                    v = (py - (cy - gbh)) / gh_scale
                    gi = <Py_ssize_t>floor(u * gw)
                    gj = <Py_ssize_t>floor(v * gh)
                    if gi < 0:
                        gi = 0
                    elif gi > gw - 1:
                        gi = gw - 1
                    if gj < 0:
                        gj = 0
                    elif gj > gh - 1:
                        gj = gh - 1
                    if glyph_buf[goff + gj * gw + gi]:
                        image[r, c] = digit_color
