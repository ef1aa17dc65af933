"""IDX digit file parsing and glyph sampling for square textures.

Squares in the simulated scenes are marked with a digit glyph. Glyphs come
either from the four standard IDX files (``train-images-idx3-ubyte`` etc.,
optionally gzipped) or from a built-in procedural bitmap font so that data
generation works offline.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, IdxError, SplitNotLoaded, Truncated, UnsupportedDtype

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
_UBYTE_DTYPE = 0x08

MNIST_DIR_ENV = "RFCNET_MNIST_DIR"

_IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class IdxHeader:
    magic: int
    dtype_code: int
    ndim: int
    dims: tuple[int, ...]


@dataclass(frozen=True)
class DigitGlyph:
    """A single digit image, intensities normalized to [0, 1]."""

    digit: int
    image: np.ndarray


def parse_idx(data: bytes) -> tuple[IdxHeader, np.ndarray]:
    """Decode an IDX byte stream into its header and raw uint8 array.

    Multi-byte header fields are big-endian; pixel bytes are returned
    unscaled. Raises BadMagic, UnsupportedDtype or Truncated on malformed
    input. Trailing bytes beyond the declared payload are ignored.
    """
    if len(data) < 4:
        raise Truncated(f"stream of {len(data)} bytes is shorter than the 4-byte magic")
    if data[0] != 0 or data[1] != 0:
        raise BadMagic(f"first two magic bytes must be zero, got {data[0]:#04x} {data[1]:#04x}")
    dtype_code = data[2]
    ndim = data[3]
    magic = struct.unpack(">I", data[:4])[0]
    if dtype_code != _UBYTE_DTYPE:
        raise UnsupportedDtype(f"dtype code {dtype_code:#04x}, only unsigned byte (0x08) is supported")
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise BadMagic(f"magic {magic} is neither {LABEL_MAGIC} (labels) nor {IMAGE_MAGIC} (images)")
    header_size = 4 + 4 * ndim
    if len(data) < header_size:
        raise Truncated(f"stream of {len(data)} bytes cannot hold {ndim} dimension fields")
    dims = struct.unpack(f">{ndim}I", data[4:header_size])
    if any(d == 0 for d in dims):
        raise IdxError(f"zero-sized dimension in {dims}")
    count = int(np.prod(dims))
    if len(data) < header_size + count:
        raise Truncated(
            f"payload declares {count} bytes but only {len(data) - header_size} are present"
        )
    array = np.frombuffer(data, dtype=np.uint8, count=count, offset=header_size).reshape(dims)
    return IdxHeader(magic=magic, dtype_code=dtype_code, ndim=ndim, dims=dims), array


def write_idx(array: np.ndarray) -> bytes:
    """Serialize a uint8 array back into IDX bytes (inverse of parse_idx)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    magic = IMAGE_MAGIC if arr.ndim == 3 else LABEL_MAGIC
    header = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def load_idx_file(path: str | Path) -> tuple[IdxHeader, np.ndarray]:
    """Read an IDX file from disk, transparently handling .gz compression."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def _find_idx_pair(directory: Path, split: str) -> tuple[Path, Path]:
    image_name, label_name = _IDX_FILES[split]
    pair = []
    for name in (image_name, label_name):
        plain, gzipped = directory / name, directory / (name + ".gz")
        if plain.exists():
            pair.append(plain)
        elif gzipped.exists():
            pair.append(gzipped)
        else:
            raise FileNotFoundError(f"neither {plain} nor {gzipped} exists")
    return pair[0], pair[1]


class GlyphBank:
    """Digit glyphs for one split, indexed by class for uniform sampling."""

    def __init__(self, images: np.ndarray, labels: np.ndarray, source: str):
        if images.shape[0] != labels.shape[0]:
            raise CountMismatch(
                f"{images.shape[0]} images but {labels.shape[0]} labels in paired files"
            )
        self.images = images.astype(np.float32)
        self.labels = labels.astype(np.uint8)
        self.source = source
        lo, hi = float(self.images.min()), float(self.images.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"glyph intensities outside [0, 1]: [{lo}, {hi}]")

    def __len__(self) -> int:
        return len(self.labels)

    def sample(self, rng: np.random.Generator) -> DigitGlyph:
        """Draw one glyph uniformly; deterministic given the rng state."""
        idx = int(rng.integers(len(self.labels)))
        return DigitGlyph(digit=int(self.labels[idx]), image=self.images[idx])

    @classmethod
    def from_idx_dir(cls, directory: str | Path, split: str) -> "GlyphBank":
        """Load a split from the standard IDX file pair in *directory*."""
        if split not in _IDX_FILES:
            raise SplitNotLoaded(f"unknown IDX split {split!r}, expected train or test")
        image_path, label_path = _find_idx_pair(Path(directory), split)
        img_header, images = load_idx_file(image_path)
        lbl_header, labels = load_idx_file(label_path)
        if img_header.magic != IMAGE_MAGIC:
            raise BadMagic(f"{image_path} is not an image file (magic {img_header.magic})")
        if lbl_header.magic != LABEL_MAGIC:
            raise BadMagic(f"{label_path} is not a label file (magic {lbl_header.magic})")
        if images.shape[0] != labels.shape[0]:
            raise CountMismatch(
                f"{image_path} holds {images.shape[0]} images but "
                f"{label_path} holds {labels.shape[0]} labels"
            )
        return cls(images / np.float32(255.0), labels, source=f"idx:{split}")

    @classmethod
    def builtin(cls, split: str) -> "GlyphBank":
        """Procedural bitmap-font bank; fully deterministic, no files needed."""
        if split not in ("train", "test"):
            raise SplitNotLoaded(f"unknown builtin split {split!r}")
        images, labels = _builtin_glyphs(split)
        return cls(images, labels, source=f"builtin:{split}")


# 5x7 bitmap font for digits 0-9; rows top to bottom.
_FONT_ROWS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00110", "01000", "10000", "11111"),
    3: ("11110", "00001", "00001", "01110", "00001", "00001", "11110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

_VARIANTS_PER_DIGIT = {"train": 24, "test": 12}


def _font_bitmap(digit: int) -> np.ndarray:
    rows = _FONT_ROWS[digit]
    return np.array([[int(ch) for ch in row] for row in rows], dtype=np.uint8)


def _builtin_glyphs(split: str) -> tuple[np.ndarray, np.ndarray]:
    """28x28 glyph variants per digit: upscaled font with small jitter.

    Variants differ by integer shift and optional 1px dilation so the bank
    is not a single bitmap per class; train and test use disjoint variant
    streams. Pure integer construction keeps the bank platform-independent.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        (0x5F0E7, 0 if split == "train" else 1))))
    n_variants = _VARIANTS_PER_DIGIT[split]
    images, labels = [], []
    for digit in range(10):
        base = np.kron(_font_bitmap(digit), np.ones((4, 4), dtype=np.uint8))  # 28x20
        for _ in range(n_variants):
            canvas = np.zeros((28, 28), dtype=np.uint8)
            dy = int(rng.integers(-2, 3))
            dx = int(rng.integers(-2, 3))
            dst_y, src_y, rows = max(0, dy), max(0, -dy), 28 - abs(dy)
            x0 = 4 + dx  # base is 20px wide, so 2..6 keeps it inside
            canvas[dst_y:dst_y + rows, x0:x0 + 20] = base[src_y:src_y + rows, :]
            if rng.integers(2):  # thicken strokes horizontally by one pixel
                canvas[:, 1:] |= canvas[:, :-1]
            images.append(canvas)
            labels.append(digit)
    return np.stack(images).astype(np.float32), np.array(labels, dtype=np.uint8)


def resolve_glyph_bank(source: str, split: str, mnist_dir: str | None = None) -> GlyphBank:
    """Map a config glyph source ("builtin" or "mnist") to a loaded bank.

    Training-split glyphs texture train/val sequences; test-split glyphs
    texture the (clean) test sets, so no glyph leaks across the evaluation
    boundary.
    """
    if source == "builtin":
        return GlyphBank.builtin(split)
    if source == "mnist":
        directory = mnist_dir or os.environ.get(MNIST_DIR_ENV)
        if not directory:
            raise SplitNotLoaded(
                f"glyph source 'mnist' needs --mnist-dir or ${MNIST_DIR_ENV}"
            )
        return GlyphBank.from_idx_dir(directory, split)
    raise SplitNotLoaded(f"unknown glyph source {source!r}")
