from .world import SceneConfig, SceneObject, SceneState, sample_scene, step
from .raster import render, raster_backend
from .sequence import PerturbParams, SequenceSample, draw_perturb_params, generate_sequence, perturb

__all__ = [
    "SceneConfig",
    "SceneObject",
    "SceneState",
    "sample_scene",
    "step",
    "render",
    "raster_backend",
    "PerturbParams",
    "SequenceSample",
    "draw_perturb_params",
    "generate_sequence",
    "perturb",
]
