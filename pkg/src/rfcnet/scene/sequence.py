"""Sequence generation: simulate, render, perturb, label.

Each sample is a length-T clip with a per-pixel class label for the last
frame only. Perturbations model failures that are unresolvable from a single
image: per-pixel Gaussian noise, a decaying global intensity offset, a
decaying offset over a random subregion, plus the in-scene circle occluders.
The clean (unperturbed) twin of every clip is kept alongside it; labels are
computed from geometry before any perturbation and are shared by both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PlacementFailure
from ..mnist import GlyphBank, resolve_glyph_bank
from .raster import render
from .world import SceneConfig, SceneState, sample_scene, step

# Scene draws can exhaust free area on unlucky geometry; each retry uses its
# own derived substream so generation stays a pure function of (config, seed).
_MAX_SCENE_ATTEMPTS = 16


@dataclass(frozen=True)
class PerturbParams:
    """Per-sequence perturbation draw; all-zero means identity."""

    sigma: float
    global_amp: float
    global_decay: float
    sub_amp: float
    sub_decay: float
    sub_rect: tuple[int, int, int, int]  # r0, c0, r1, c1 (exclusive)

    @classmethod
    def zero(cls) -> "PerturbParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, (0, 0, 0, 0))


@dataclass
class SequenceSample:
    """frames: perturbed clip (T, C, H, W); clean_frames: unperturbed twin;
    label: class map (H, W) for the last frame, valid for both clips."""

    frames: np.ndarray
    clean_frames: np.ndarray
    label: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, SequenceSample)
                and np.array_equal(self.frames, other.frames)
                and np.array_equal(self.clean_frames, other.clean_frames)
                and np.array_equal(self.label, other.label))


def draw_perturb_params(config: SceneConfig, rng: np.random.Generator) -> PerturbParams:
    """Sample one sequence's perturbation magnitudes from the config ranges."""
    size = config.image_size
    min_side = config.subregion_min_size
    sigma = float(rng.uniform(*config.noise_sigma_range))
    global_amp = float(rng.uniform(*config.offset_amplitude_range))
    global_decay = float(rng.uniform(*config.offset_decay_range))
    sub_amp = float(rng.uniform(*config.offset_amplitude_range))
    sub_decay = float(rng.uniform(*config.offset_decay_range))
    r0 = int(rng.integers(0, size - min_side + 1))
    c0 = int(rng.integers(0, size - min_side + 1))
    r1 = int(rng.integers(r0 + min_side, size + 1))
    c1 = int(rng.integers(c0 + min_side, size + 1))
    return PerturbParams(sigma, global_amp, global_decay, sub_amp, sub_decay,
                         (r0, c0, r1, c1))


def perturb(frames: np.ndarray, params: PerturbParams,
            rng: np.random.Generator) -> np.ndarray:
    """Apply a perturbation draw to clean frames in [0, 1].

    Frame t receives the global offset a*g**t and the subregion offset over
    its rectangle, then zero-mean Gaussian noise; the result is clipped back
    to [0, 1]. Labels are never touched.
    """
    out = frames.astype(np.float64)
    r0, c0, r1, c1 = params.sub_rect
    for t in range(out.shape[0]):
        if params.global_amp != 0.0:
            out[t] += params.global_amp * params.global_decay ** t
        if params.sub_amp != 0.0:
            out[t, ..., r0:r1, c0:c1] += params.sub_amp * params.sub_decay ** t
    if params.sigma > 0.0:
        out += rng.normal(0.0, params.sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def simulate_clean(config: SceneConfig, scene: SceneState) -> tuple[np.ndarray, np.ndarray, SceneState]:
    """Roll the scene forward, rendering every frame; label from the last one."""
    frames = []
    label = None
    state = scene
    for t in range(config.sequence_length):
        if t > 0:
            state = step(state)
        image, label = render(state)
        frames.append(image[None, :, :])  # single intensity channel
    clean = np.stack(frames).astype(np.float32)
    return clean, label, state


def generate_sequence(config: SceneConfig, seed, glyphs: GlyphBank | None = None,
                      split: str = "train") -> SequenceSample:
    """Generate one sample as a pure function of (config, seed).

    *seed* is an int or tuple of ints; two independent substreams are derived
    from it, one for the scene and one for the perturbations, so a clean twin
    generated from the same seed shares the exact scene.
    """
    if glyphs is None:
        glyphs = resolve_glyph_bank(config.glyph_source, split)
    entropy = seed if isinstance(seed, tuple) else (int(seed),)
    perturb_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((*entropy, 1))))

    scene = None
    for attempt in range(_MAX_SCENE_ATTEMPTS):
        scene_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((*entropy, 0, attempt))))
        try:
            scene = sample_scene(config, scene_rng, glyphs)
            break
        except PlacementFailure:
            if attempt == _MAX_SCENE_ATTEMPTS - 1:
                raise
    clean, label, _ = simulate_clean(config, scene)
    if config.perturbations:
        params = draw_perturb_params(config, perturb_rng)
        frames = perturb(clean, params, perturb_rng)
    else:
        frames = clean.copy()
    return SequenceSample(frames=frames, clean_frames=clean, label=label)
