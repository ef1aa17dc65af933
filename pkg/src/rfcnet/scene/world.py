"""Scene model: a 2-D world of squares, circles and walls with elastic dynamics.

Squares (static and dynamic) are axis-aligned, carry a digit glyph and live
inside a walled border; dynamic squares bounce elastically off every square,
border and wall. Circles are pure foreground occluders that fly ballistically
and reflect only at the image bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import CLASS_CIRCLE, CLASS_DIGIT_BASE, CLASS_STATIC_SQUARE, CLASS_WALL
from ..errors import ConfigError, PlacementFailure
from ..mnist import GlyphBank

KIND_WALL = 0
KIND_STATIC_SQUARE = 1
KIND_DYNAMIC_SQUARE = 2
KIND_CIRCLE = 3

_MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class SceneConfig:
    """Ranges from which each sequence's world is drawn.

    All (lo, hi) ranges are inclusive and sampled uniformly per sequence.
    """

    image_size: int = 64
    channels: int = 1
    n_dynamic_squares: tuple[int, int] = (2, 4)
    n_static_squares: tuple[int, int] = (1, 3)
    n_circles: tuple[int, int] = (1, 3)
    square_size: tuple[float, float] = (10.0, 16.0)
    circle_radius: tuple[float, float] = (4.0, 8.0)
    border_thickness: float = 2.0
    n_walls: tuple[int, int] = (0, 2)
    wall_thickness: tuple[float, float] = (2.0, 4.0)
    wall_length: tuple[float, float] = (12.0, 32.0)
    speed_range: tuple[float, float] = (0.5, 3.0)
    noise_sigma_range: tuple[float, float] = (0.05, 0.16)
    offset_amplitude_range: tuple[float, float] = (-0.8, 0.8)
    offset_decay_range: tuple[float, float] = (0.75, 0.98)
    subregion_min_size: int = 8
    sequence_length: int = 5
    color_range: tuple[float, float] = (0.25, 1.0)
    # Body intensity is the only single-frame cue separating static from
    # dynamic squares; the bands are close enough that noise and intensity
    # offsets blur them, while several frames (or motion) disambiguate.
    static_square_color: tuple[float, float] = (0.25, 0.55)
    dynamic_square_color: tuple[float, float] = (0.60, 0.95)
    digit_contrast: float = 0.3
    digit_fill: float = 0.75
    digit_threshold: float = 0.3
    glyph_source: str = "builtin"
    perturbations: bool = True

    def __post_init__(self):
        if self.image_size < 32:
            raise ConfigError(f"image_size must be >= 32, got {self.image_size}")
        if self.sequence_length < 2:
            raise ConfigError(f"sequence_length must be >= 2, got {self.sequence_length}")
        if self.speed_range[0] <= 0:
            raise ConfigError("speed_range must exclude zero so dynamic objects always move")
        for name in ("n_dynamic_squares", "n_static_squares", "n_circles", "n_walls",
                     "square_size", "circle_radius", "wall_thickness", "wall_length",
                     "speed_range", "noise_sigma_range", "offset_amplitude_range",
                     "offset_decay_range", "color_range", "static_square_color",
                     "dynamic_square_color"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigError(f"{name} range ({lo}, {hi}) is empty")


@dataclass
class SceneObject:
    """One body: an axis-aligned rectangle (walls, squares) or a circle.

    Rectangles use (half_w, half_h) half extents; circles store their radius
    in half_w (== half_h). Only squares carry a digit glyph.
    """

    kind: int
    x: float
    y: float
    half_w: float
    half_h: float
    color: float
    vx: float = 0.0
    vy: float = 0.0
    digit: int = -1
    digit_color: float = 0.0
    glyph_mask: np.ndarray | None = None
    glyph_half_w: float = 0.0
    glyph_half_h: float = 0.0

    @property
    def label(self) -> int:
        if self.kind == KIND_WALL:
            return CLASS_WALL
        if self.kind == KIND_STATIC_SQUARE:
            return CLASS_STATIC_SQUARE
        if self.kind == KIND_CIRCLE:
            return CLASS_CIRCLE
        return CLASS_DIGIT_BASE + self.digit


@dataclass
class SceneState:
    image_size: int
    objects: list[SceneObject] = field(default_factory=list)

    def by_kind(self, kind: int) -> list[SceneObject]:
        return [o for o in self.objects if o.kind == kind]


def _overlaps(a: SceneObject, b: SceneObject) -> bool:
    return (abs(a.x - b.x) < a.half_w + b.half_w
            and abs(a.y - b.y) < a.half_h + b.half_h)


def _sample_signed_speed(config: SceneConfig, rng: np.random.Generator) -> float:
    lo, hi = config.speed_range
    magnitude = float(rng.uniform(lo, hi))
    return magnitude if rng.integers(2) else -magnitude


def _sample_color(config: SceneConfig, rng: np.random.Generator) -> float:
    return float(rng.uniform(*config.color_range))


def _sample_digit_color(config: SceneConfig, rng: np.random.Generator, body: float) -> float:
    # Resample until the digit is visible against the square body.
    for _ in range(_MAX_PLACEMENT_ATTEMPTS):
        candidate = _sample_color(config, rng)
        if abs(candidate - body) >= config.digit_contrast:
            return candidate
    lo, hi = config.color_range
    return lo if body > (lo + hi) / 2 else hi


def _place_square(config: SceneConfig, rng: np.random.Generator, half: float,
                  obstacles: list[SceneObject], kind: int, color: float) -> SceneObject:
    size = config.image_size
    tb = config.border_thickness
    lo, hi = tb + half, size - tb - half
    if hi <= lo:
        raise PlacementFailure(f"square of half-size {half} cannot fit inside the border")
    probe = SceneObject(kind=kind, x=0.0, y=0.0, half_w=half, half_h=half, color=color)
    for _ in range(_MAX_PLACEMENT_ATTEMPTS):
        probe.x = float(rng.uniform(lo, hi))
        probe.y = float(rng.uniform(lo, hi))
        if not any(_overlaps(probe, o) for o in obstacles):
            return probe
    raise PlacementFailure(
        f"no non-overlapping position after {_MAX_PLACEMENT_ATTEMPTS} attempts "
        f"(over-dense config?)"
    )


def _make_borders(config: SceneConfig, rng: np.random.Generator) -> list[SceneObject]:
    s, t = float(config.image_size), config.border_thickness
    color = _sample_color(config, rng)
    half = t / 2.0
    strips = [
        (s / 2, half, s / 2, half),          # top
        (s / 2, s - half, s / 2, half),      # bottom
        (half, s / 2, half, s / 2),          # left
        (s - half, s / 2, half, s / 2),      # right
    ]
    return [SceneObject(kind=KIND_WALL, x=x, y=y, half_w=hw, half_h=hh, color=color)
            for x, y, hw, hh in strips]


def _make_interior_walls(config: SceneConfig, rng: np.random.Generator,
                         color: float) -> list[SceneObject]:
    walls = []
    n = int(rng.integers(config.n_walls[0], config.n_walls[1] + 1))
    s, tb = float(config.image_size), config.border_thickness
    for _ in range(n):
        thickness = float(rng.uniform(*config.wall_thickness))
        length = float(rng.uniform(*config.wall_length))
        if rng.integers(2):
            half_w, half_h = length / 2, thickness / 2
        else:
            half_w, half_h = thickness / 2, length / 2
        x = float(rng.uniform(tb + half_w, s - tb - half_w))
        y = float(rng.uniform(tb + half_h, s - tb - half_h))
        walls.append(SceneObject(kind=KIND_WALL, x=x, y=y, half_w=half_w, half_h=half_h,
                                 color=color))
    return walls


def _glyph_mask(glyph_image: np.ndarray, threshold: float) -> np.ndarray:
    # Binarized stroke mask; the digit color is sampled per sequence.
    return (glyph_image > threshold).astype(np.uint8)


def sample_scene(config: SceneConfig, rng: np.random.Generator,
                 glyphs: GlyphBank) -> SceneState:
    """Draw a full world from the config ranges; deterministic given rng state.

    Squares are rejection-sampled so that no square initially overlaps another
    square or a wall. Circles may start anywhere fully inside the image.
    """
    borders = _make_borders(config, rng)
    walls = borders + _make_interior_walls(config, rng, borders[0].color)

    n_static = int(rng.integers(config.n_static_squares[0], config.n_static_squares[1] + 1))
    n_dynamic = int(rng.integers(config.n_dynamic_squares[0], config.n_dynamic_squares[1] + 1))
    n_circles = int(rng.integers(config.n_circles[0], config.n_circles[1] + 1))

    objects = list(walls)
    # Interior walls can overlap each other and the border; squares avoid all.
    solids = list(walls)
    body_ranges = {KIND_STATIC_SQUARE: config.static_square_color,
                   KIND_DYNAMIC_SQUARE: config.dynamic_square_color}
    for kind, count in ((KIND_STATIC_SQUARE, n_static), (KIND_DYNAMIC_SQUARE, n_dynamic)):
        for _ in range(count):
            half = float(rng.uniform(*config.square_size)) / 2.0
            color = float(rng.uniform(*body_ranges[kind]))
            square = _place_square(config, rng, half, solids, kind, color)
            glyph = glyphs.sample(rng)
            square.digit = glyph.digit
            square.digit_color = _sample_digit_color(config, rng, color)
            square.glyph_mask = _glyph_mask(glyph.image, config.digit_threshold)
            square.glyph_half_w = half * config.digit_fill
            square.glyph_half_h = half * config.digit_fill
            if kind == KIND_DYNAMIC_SQUARE:
                square.vx = _sample_signed_speed(config, rng)
                square.vy = _sample_signed_speed(config, rng)
            solids.append(square)
            objects.append(square)

    s = float(config.image_size)
    for _ in range(n_circles):
        radius = float(rng.uniform(*config.circle_radius))
        circle = SceneObject(
            kind=KIND_CIRCLE,
            x=float(rng.uniform(radius, s - radius)),
            y=float(rng.uniform(radius, s - radius)),
            half_w=radius,
            half_h=radius,
            color=_sample_color(config, rng),
            vx=_sample_signed_speed(config, rng),
            vy=_sample_signed_speed(config, rng),
        )
        objects.append(circle)

    return SceneState(image_size=config.image_size, objects=objects)


def _resolve_against_immovable(sq: SceneObject, solid: SceneObject) -> bool:
    """Push *sq* out of *solid* on the minimal-penetration axis and reflect."""
    pen_x = sq.half_w + solid.half_w - abs(sq.x - solid.x)
    pen_y = sq.half_h + solid.half_h - abs(sq.y - solid.y)
    if pen_x <= 0.0 or pen_y <= 0.0:
        return False
    if pen_x < pen_y:
        direction = 1.0 if sq.x >= solid.x else -1.0
        sq.x += direction * pen_x
        if sq.vx * direction < 0.0:
            sq.vx = -sq.vx
    else:
        direction = 1.0 if sq.y >= solid.y else -1.0
        sq.y += direction * pen_y
        if sq.vy * direction < 0.0:
            sq.vy = -sq.vy
    return True


def _resolve_dynamic_pair(a: SceneObject, b: SceneObject) -> bool:
    """Equal-mass elastic contact: symmetric push-out, swap normal velocities."""
    pen_x = a.half_w + b.half_w - abs(a.x - b.x)
    pen_y = a.half_h + b.half_h - abs(a.y - b.y)
    if pen_x <= 0.0 or pen_y <= 0.0:
        return False
    if pen_x < pen_y:
        direction = 1.0 if b.x >= a.x else -1.0  # from a toward b
        a.x -= direction * pen_x / 2.0
        b.x += direction * pen_x / 2.0
        if (a.vx - b.vx) * direction > 0.0:  # approaching along x
            a.vx, b.vx = b.vx, a.vx
    else:
        direction = 1.0 if b.y >= a.y else -1.0
        a.y -= direction * pen_y / 2.0
        b.y += direction * pen_y / 2.0
        if (a.vy - b.vy) * direction > 0.0:
            a.vy, b.vy = b.vy, a.vy
    return True


_MAX_RESOLUTION_PASSES = 8


def step(state: SceneState) -> SceneState:
    """Advance the world one frame.

    Dynamic squares move by their velocity and collide elastically (equal
    masses) with each other; walls and static squares are immovable and act
    as reflectors. Circles reflect only at the image bounds and never
    interact with squares. Velocity updates are pure sign flips and swaps,
    so the kinetic energy of the square subsystem is conserved exactly.
    """
    new_objects = [replace(o) for o in state.objects]
    walls = [o for o in new_objects if o.kind == KIND_WALL]
    statics = [o for o in new_objects if o.kind == KIND_STATIC_SQUARE]
    dynamics = [o for o in new_objects if o.kind == KIND_DYNAMIC_SQUARE]
    circles = [o for o in new_objects if o.kind == KIND_CIRCLE]

    movers = dynamics + circles
    if not movers:
        return SceneState(image_size=state.image_size, objects=new_objects)

    vmax = max(max(abs(o.vx), abs(o.vy)) for o in movers)
    squares = dynamics + statics
    min_side = min((2.0 * min(o.half_w, o.half_h) for o in squares), default=math.inf)
    n_sub = 1 if vmax <= min_side else int(math.ceil(vmax / min_side))

    size = float(state.image_size)
    for _ in range(n_sub):
        for mover in movers:
            mover.x += mover.vx / n_sub
            mover.y += mover.vy / n_sub

        for circle in circles:
            r = circle.half_w
            if circle.x < r:
                circle.x = 2.0 * r - circle.x
                circle.vx = -circle.vx
            elif circle.x > size - r:
                circle.x = 2.0 * (size - r) - circle.x
                circle.vx = -circle.vx
            if circle.y < r:
                circle.y = 2.0 * r - circle.y
                circle.vy = -circle.vy
            elif circle.y > size - r:
                circle.y = 2.0 * (size - r) - circle.y
                circle.vy = -circle.vy

        for _ in range(_MAX_RESOLUTION_PASSES):
            any_contact = False
            for sq in dynamics:
                for solid in walls:
                    any_contact |= _resolve_against_immovable(sq, solid)
                for solid in statics:
                    any_contact |= _resolve_against_immovable(sq, solid)
            for i, a in enumerate(dynamics):
                for b in dynamics[i + 1:]:
                    any_contact |= _resolve_dynamic_pair(a, b)
            if not any_contact:
                break

    return SceneState(image_size=state.image_size, objects=new_objects)
