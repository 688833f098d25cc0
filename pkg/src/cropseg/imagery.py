"""Images, masks, annotations, crop geometry, augmentation and synthetic scenes.

Images are ``(H, W, 3)`` float64 arrays with intensities in ``[0, 1]``; masks
are ``(H, W)`` uint8 arrays holding 0 (background) or 1 (central object).
"""
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from . import kernels

log = logging.getLogger(__name__)


class AnnotationError(ValueError):
    """Malformed or invalid polygon annotation file."""


# --------------------------------------------------------------------------
# data model
# --------------------------------------------------------------------------

def as_image(arr):
    """Normalize an RGB array to float64 in [0, 1]. 8-bit input is divided by 255."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    out = arr.astype(np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError("image contains non-finite intensities")
    return np.clip(out, 0.0, 1.0)


def as_mask(arr):
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"expected an (H, W) mask, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8)


@dataclass
class PolygonAnnotation:
    points: list
    label: str
    image_width: int
    image_height: int

    def __post_init__(self):
        if len(self.points) < 3:
            raise AnnotationError(f"polygon needs at least 3 vertices, got {len(self.points)}")
        w, h = self.image_width, self.image_height
        self.points = [(min(max(float(x), 0.0), float(w)), min(max(float(y), 0.0), float(h)))
                       for x, y in self.points]


@dataclass
class AnnotatedSample:
    image: np.ndarray
    mask: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError(f"image {self.image.shape[:2]} and mask {self.mask.shape} differ in size")


@dataclass(frozen=True)
class CropWindow:
    """Square window in source-photo coordinates (origin top-left)."""
    center: tuple
    side: float
    scale_factor: float = 1.0

    def __post_init__(self):
        if self.side < 2:
            raise ValueError(f"window side must be >= 2, got {self.side}")
        if not 0.0 < self.scale_factor <= 1.0:
            raise ValueError(f"scale_factor must be in (0, 1], got {self.scale_factor}")
        if self.effective_side < 2:
            raise ValueError(f"effective window side {self.effective_side} < 2")

    @property
    def effective_side(self):
        return int(round(self.side * self.scale_factor))


@dataclass(frozen=True)
class CropGeometry:
    """Affine map between a crop's output grid and the source photo."""
    x0: float
    y0: float
    step: float
    out_side: int
    window: CropWindow = None

    def to_source(self, u, v):
        """Map continuous output coordinates to source coordinates."""
        return self.x0 + np.asarray(u) * self.step, self.y0 + np.asarray(v) * self.step

    def to_output(self, x, y):
        return (np.asarray(x) - self.x0) / self.step, (np.asarray(y) - self.y0) / self.step

    @property
    def pixel_area(self):
        """Source-photo area covered by one output pixel."""
        return self.step * self.step


# --------------------------------------------------------------------------
# file IO
# --------------------------------------------------------------------------

def load_image(path):
    with Image.open(path) as im:
        return as_image(np.asarray(im.convert("RGB")))


def save_image(path, image):
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def save_mask(path, mask):
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path)


def load_mask(path):
    with Image.open(path) as im:
        return (np.asarray(im.convert("L")) > 127).astype(np.uint8)


def save_probability_png(path, prob):
    """Write a probability map as a 16-bit grayscale PNG (0..65535)."""
    arr = np.clip(np.round(np.asarray(prob, dtype=np.float64) * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def load_probability_png(path):
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.float64) / 65535.0


def load_annotation(path, label=None):
    """Parse a labelme-style polygon file.

    Returns ``(image_path, PolygonAnnotation)`` where ``image_path`` is resolved
    relative to the annotation file. With ``label`` set, the first polygon of
    that label is the central object; otherwise the first polygon is.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise AnnotationError(f"{path}: top level must be an object")
    for key in ("imageWidth", "imageHeight", "shapes"):
        if key not in doc:
            raise AnnotationError(f"{path}: missing field '{key}'")
    try:
        width, height = int(doc["imageWidth"]), int(doc["imageHeight"])
    except (TypeError, ValueError) as exc:
        raise AnnotationError(f"{path}: field 'imageWidth'/'imageHeight' must be integers") from exc
    if not isinstance(doc["shapes"], list):
        raise AnnotationError(f"{path}: field 'shapes' must be a list")

    polygons = [s for s in doc["shapes"]
                if isinstance(s, dict) and s.get("shape_type", "polygon") == "polygon"]
    if label is not None:
        polygons = [s for s in polygons if s.get("label") == label]
    if not polygons:
        raise AnnotationError(f"{path}: no polygon shape" + (f" with label '{label}'" if label else ""))
    if len(polygons) > 1:
        warnings.warn(f"{path}: {len(polygons) - 1} extra polygon(s) ignored", stacklevel=2)
    shape = polygons[0]
    if "points" not in shape:
        raise AnnotationError(f"{path}: shape is missing field 'points'")
    try:
        points = [(float(p[0]), float(p[1])) for p in shape["points"]]
    except (TypeError, ValueError, IndexError) as exc:
        raise AnnotationError(f"{path}: field 'points' must be a list of [x, y] pairs") from exc
    ann = PolygonAnnotation(points, str(shape.get("label", "")), width, height)
    image_path = doc.get("imagePath")
    if image_path is not None:
        image_path = path.parent / image_path
    return image_path, ann


def write_annotation(path, annotation, image_path=""):
    doc = {
        "version": "cropseg",
        "imagePath": str(image_path),
        "imageWidth": annotation.image_width,
        "imageHeight": annotation.image_height,
        "shapes": [{
            "label": annotation.label,
            "points": [[x, y] for x, y in annotation.points],
            "shape_type": "polygon",
        }],
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_annotated_sample(path, label=None):
    image_path, ann = load_annotation(path, label=label)
    if image_path is None:
        raise AnnotationError(f"{path}: missing field 'imagePath'")
    image = load_image(image_path)
    if image.shape[:2] != (ann.image_height, ann.image_width):
        raise AnnotationError(f"{path}: image {image_path} is {image.shape[1]}x{image.shape[0]}, "
                              f"annotation says {ann.image_width}x{ann.image_height}")
    return AnnotatedSample(image, rasterize_polygon(ann), Path(path).stem)


# --------------------------------------------------------------------------
# rasterization
# --------------------------------------------------------------------------

def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)
    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0
            and orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def is_self_intersecting(points):
    n = len(points)
    edges = [(points[i], points[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def polygon_area(points):
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return 0.5 * abs(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1)))


def rasterize_polygon(annotation):
    """Even-odd fill of the polygon, sampled at pixel centers."""
    h, w = annotation.image_height, annotation.image_width
    if polygon_area(annotation.points) == 0.0:
        warnings.warn("zero-area polygon rasterized to an empty mask", stacklevel=2)
        return np.zeros((h, w), dtype=np.uint8)
    if is_self_intersecting(annotation.points):
        warnings.warn("self-intersecting polygon; filled by the even-odd rule", stacklevel=2)
    xs = [p[0] for p in annotation.points]
    ys = [p[1] for p in annotation.points]
    return kernels.fill_polygon(xs, ys, h, w)


# --------------------------------------------------------------------------
# crop geometry
# --------------------------------------------------------------------------

def crop_geometry(window, out_side=512):
    if out_side < 2:
        raise ValueError(f"out_side must be >= 2, got {out_side}")
    e = window.effective_side
    cx, cy = window.center
    return CropGeometry(cx - e / 2.0, cy - e / 2.0, e / out_side, int(out_side), window)


def crop_resize(photo, window, out_side=512):
    """Cut the square window out of ``photo`` and resize it bilinearly.

    Returns ``(crop, geometry)``; regions beyond the photo border replicate the
    edge pixels.
    """
    geom = crop_geometry(window, out_side)
    h, w = photo.shape[:2]
    e = window.effective_side
    if geom.x0 + e <= 0 or geom.y0 + e <= 0 or geom.x0 >= w or geom.y0 >= h:
        raise ValueError(f"crop window centered at {window.center} lies entirely outside the {w}x{h} photo")
    out = kernels.sample_bilinear(photo, geom.x0, geom.y0, geom.step, out_side)
    return out, geom


def center_crop_window(photo, scale_factor=1.0):
    """Largest centered square window of the photo."""
    h, w = photo.shape[:2]
    return CropWindow((w / 2.0, h / 2.0), min(w, h), scale_factor)


# --------------------------------------------------------------------------
# augmentation
# --------------------------------------------------------------------------

@dataclass
class AugmentationConfig:
    flip_probability: float = 0.5
    rotation_choices: tuple = (0, 90, 180, 270)
    scale_jitter_range: tuple = (0.9, 1.1)
    brightness_range: tuple = (-0.15, 0.15)
    contrast_range: tuple = (0.85, 1.15)
    blur_probability: float = 0.2
    blur_sigma_range: tuple = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_probability", "blur_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        self.rotation_choices = tuple(int(r) for r in self.rotation_choices)
        if not self.rotation_choices or any(r not in (0, 90, 180, 270) for r in self.rotation_choices):
            raise ValueError(f"rotation_choices must be a non-empty subset of 0/90/180/270, got {self.rotation_choices}")
        for name in ("scale_jitter_range", "brightness_range", "contrast_range", "blur_sigma_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name} must be a finite interval lo <= hi, got {(lo, hi)}")
            setattr(self, name, (lo, hi))
        if self.scale_jitter_range[0] <= 0:
            raise ValueError("scale_jitter_range must be positive")

    @classmethod
    def identity(cls, seed=0):
        return cls(0.0, (0,), (1.0, 1.0), (0.0, 0.0), (1.0, 1.0), 0.0, (0.0, 0.0), seed)


@dataclass(frozen=True)
class GeometricTransform:
    flip: bool
    quarter_turns: int
    zoom: float

    def apply(self, arr, nearest=False):
        out = arr[:, ::-1] if self.flip else arr
        if self.quarter_turns:
            out = np.rot90(out, self.quarter_turns, axes=(0, 1))
        out = np.ascontiguousarray(out)
        if self.zoom != 1.0:
            h, w = out.shape[:2]
            step = 1.0 / self.zoom
            x0 = (w - w * step) / 2.0
            y0 = (h - h * step) / 2.0
            if nearest:
                out = kernels.sample_nearest(out, x0, y0, step, h, w)
            else:
                out = kernels.sample_bilinear(out, x0, y0, step, h, w)
        return out


def _rng(config, draw):
    if isinstance(draw, np.random.Generator):
        return draw
    return np.random.default_rng([int(config.seed), int(draw)])


def draw_transform(config, draw):
    """Draw the geometric part of an augmentation; consumes the same draws as :func:`augment`."""
    rng = _rng(config, draw)
    flip = bool(rng.random() < config.flip_probability)
    turns = int(rng.choice(config.rotation_choices)) // 90
    lo, hi = config.scale_jitter_range
    zoom = float(rng.uniform(lo, hi)) if hi > lo else lo
    return GeometricTransform(flip, turns, zoom)


def augment(sample, config, draw):
    """Random flip/rotation/zoom on image and mask, photometric jitter on the image.

    ``draw`` is a ``numpy.random.Generator`` or an integer draw index combined
    with ``config.seed``.
    """
    rng = _rng(config, draw)
    g = draw_transform(config, rng)
    image = g.apply(sample.image)
    mask = g.apply(sample.mask, nearest=True)

    lo, hi = config.brightness_range
    brightness = float(rng.uniform(lo, hi)) if hi > lo else lo
    lo, hi = config.contrast_range
    contrast = float(rng.uniform(lo, hi)) if hi > lo else lo
    blur = bool(rng.random() < config.blur_probability)
    lo, hi = config.blur_sigma_range
    sigma = float(rng.uniform(lo, hi)) if hi > lo else lo

    if brightness != 0.0 or contrast != 1.0:
        mean = image.mean()
        image = np.clip((image - mean) * contrast + mean + brightness, 0.0, 1.0)
    if blur and sigma > 0:
        image = ndimage.gaussian_filter(image, sigma=(sigma, sigma, 0), mode="nearest")
    return AnnotatedSample(np.ascontiguousarray(image), np.ascontiguousarray(mask), sample.source_id)


# --------------------------------------------------------------------------
# dataset splitting
# --------------------------------------------------------------------------

def split_dataset(samples, train_fraction=0.8, seed=0):
    """Shuffle with ``seed`` and cut into (train, validation).

    The training share is ``floor(train_fraction * N)``.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in [0, 1], got {train_fraction}")
    n_train = int(math.floor(train_fraction * len(samples) + 1e-9))
    order = np.random.default_rng(seed).permutation(len(samples))
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:]]
    return train, val


# --------------------------------------------------------------------------
# synthetic scenes
# --------------------------------------------------------------------------

@dataclass
class SceneSpec:
    """Parameters of a synthetic fruit scene.

    The central object is an ellipse near the canvas center; distractors are
    fruit-colored ellipses that never touch it; clutter is leaf-colored
    ellipses drawn behind everything.
    """
    width: int = 128
    height: int = 128
    radius_range: tuple = (16.0, 48.0)
    aspect_range: tuple = (0.85, 1.0)
    center_jitter: float = 6.0
    distractor_count: tuple = (0, 3)
    distractor_radius_range: tuple = (8.0, 40.0)
    distractor_gap: float = 3.0
    clutter_count: tuple = (4, 12)
    texture_amplitude: float = 0.04
    lighting_range: tuple = (0.75, 1.15)
    blur_sigma_range: tuple = (0.0, 0.8)
    flat_background: bool = False

    def __post_init__(self):
        for name in ("radius_range", "aspect_range", "distractor_count", "distractor_radius_range",
                     "clutter_count", "lighting_range", "blur_sigma_range"):
            v = getattr(self, name)
            if isinstance(v, (int, float)):
                v = (v, v)
            v = tuple(v)
            if len(v) != 2 or v[0] > v[1]:
                raise ValueError(f"{name} must be an interval lo <= hi, got {v}")
            setattr(self, name, v)
        if self.radius_range[0] <= 0:
            raise ValueError("radius_range must be positive")
        reach = self.radius_range[1] + self.center_jitter
        if 2 * reach > min(self.width, self.height):
            raise ValueError(f"radius {self.radius_range[1]} (+ jitter {self.center_jitter}) "
                             f"does not fit a {self.width}x{self.height} canvas")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene keys {sorted(unknown)}; valid keys: {sorted(known)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


SCENE_PRESETS = {
    "default": SceneSpec(),
    # distractors and clutter crowd the central object
    "hard": SceneSpec(width=96, height=96, radius_range=(8.0, 12.0), center_jitter=2.0,
                      distractor_count=(3, 6), distractor_radius_range=(8.0, 12.0),
                      distractor_gap=2.0, clutter_count=(6, 14)),
    # dim and out of focus, outside what the default augmentation covers
    "blurred": SceneSpec(blur_sigma_range=(3.0, 4.5), lighting_range=(0.35, 0.6)),
}


@dataclass
class SyntheticScene:
    image: np.ndarray
    mask: np.ndarray
    true_area: float
    true_centroid: tuple
    params: dict = field(default_factory=dict)


FRUIT_BASE = np.array([0.78, 0.76, 0.30])
LEAF_BASE = np.array([0.22, 0.42, 0.14])


def ellipse_mask(height, width, cx, cy, a, b, theta=0.0):
    """Pixels whose centers lie inside the ellipse with semi-axes a, b rotated by theta."""
    yy, xx = np.mgrid[0:height, 0:width]
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.uint8), u / a, v / b


def _fruit_color(rng):
    return np.clip(FRUIT_BASE + rng.normal(0, 0.05, 3), 0, 1)


def _paint_fruit(canvas, mask, u, v, color, rng):
    # radial shading plus a soft highlight toward the upper left
    r2 = np.clip(u * u + v * v, 0, 1)
    shade = 1.0 - 0.35 * r2
    hl = np.exp(-((u + 0.35) ** 2 + (v + 0.35) ** 2) / 0.08) * 0.18
    m = mask.astype(bool)
    canvas[m] = np.clip(color[None, :] * shade[m][:, None] + hl[m][:, None], 0, 1)


def _background(h, w, rng, spec):
    if spec.flat_background:
        return np.full((h, w, 3), 0.35)
    base = np.array([0.30, 0.33, 0.28]) + rng.normal(0, 0.05, 3)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    grad = 1.0 + 0.25 * (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy)
    img = np.clip(base[None, None, :] * grad[..., None], 0, 1)
    low = ndimage.gaussian_filter(rng.normal(0, 1, (h, w)), sigma=max(h, w) / 16)
    low /= max(np.abs(low).max(), 1e-9)
    img = img + 0.08 * low[..., None]
    n_clutter = int(rng.integers(spec.clutter_count[0], spec.clutter_count[1] + 1))
    scale = min(h, w)
    for _ in range(n_clutter):
        a = rng.uniform(0.05, 0.25) * scale
        b = a * rng.uniform(0.25, 0.6)
        m, _, _ = ellipse_mask(h, w, rng.uniform(0, w), rng.uniform(0, h), a, b, rng.uniform(0, math.pi))
        col = np.clip(LEAF_BASE + rng.normal(0, 0.07, 3), 0, 1)
        img[m.astype(bool)] = col
    return np.clip(img, 0, 1)


def _finish(img, rng, spec, lighting=None, sigma=None):
    if lighting is None:
        lighting = rng.uniform(*spec.lighting_range)
    img = img * lighting
    if spec.texture_amplitude > 0 and not spec.flat_background:
        img = img + rng.normal(0, spec.texture_amplitude, img.shape)
    if sigma is None:
        sigma = rng.uniform(*spec.blur_sigma_range)
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")
    return np.clip(img, 0, 1)


def _place_distractors(h, w, rng, spec, keep_out):
    """Random fruit ellipses clear of every ``(cx, cy, r)`` in ``keep_out``."""
    n = int(rng.integers(spec.distractor_count[0], spec.distractor_count[1] + 1))
    placed = []
    for _ in range(n):
        for _attempt in range(50):
            r = rng.uniform(*spec.distractor_radius_range)
            x, y = rng.uniform(-0.3 * r, w + 0.3 * r), rng.uniform(-0.3 * r, h + 0.3 * r)
            if all(math.hypot(x - kx, y - ky) >= r + kr + spec.distractor_gap
                   for kx, ky, kr in keep_out + placed):
                placed.append((x, y, r))
                break
    return placed


def generate_synthetic_scene(spec=None, seed=0, center=None, radius=None):
    """Render one scene; returns a :class:`SyntheticScene` with exact ground truth."""
    spec = spec or SceneSpec()
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    r = float(radius) if radius is not None else rng.uniform(*spec.radius_range)
    if radius is not None and 2 * r > min(h, w):
        raise ValueError(f"radius {r} does not fit a {w}x{h} canvas")
    aspect = rng.uniform(*spec.aspect_range)
    theta = rng.uniform(0, math.pi)
    if center is None:
        cx = w / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter)
        cy = h / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter)
    else:
        cx, cy = center

    img = _background(h, w, rng, spec)
    for dx, dy, dr in _place_distractors(h, w, rng, spec, [(cx, cy, r)]):
        m, u, v = ellipse_mask(h, w, dx, dy, dr, dr * rng.uniform(*spec.aspect_range), rng.uniform(0, math.pi))
        _paint_fruit(img, m, u, v, _fruit_color(rng), rng)
    mask, u, v = ellipse_mask(h, w, cx, cy, r, r * aspect, theta)
    _paint_fruit(img, mask, u, v, _fruit_color(rng), rng)
    img = _finish(img, rng, spec)

    n, sx, sy = kernels.mask_moments(mask)
    centroid = (sx / n, sy / n) if n else (cx, cy)
    params = {"cx": cx, "cy": cy, "radius": r, "aspect": aspect, "theta": theta}
    return SyntheticScene(img, mask, float(n), centroid, params)


def synthetic_samples(n, spec=None, seed=0):
    """``n`` independent scenes as :class:`AnnotatedSample` objects."""
    out = []
    for i in range(n):
        s = generate_synthetic_scene(spec, seed=[int(seed), i])
        out.append(AnnotatedSample(s.image, s.mask, f"synth_{seed}_{i:04d}"))
    return out


@dataclass
class SequenceFrame:
    photo: np.ndarray
    mask: np.ndarray
    center: tuple
    area: float


def generate_track_sequence(n_frames=60, width=400, height=400, radius=40.0, growth=0.005,
                            max_step=10.0, seed=0, spec=None):
    """Fixed-camera time series of one fruit drifting and growing.

    ``growth`` is the per-frame relative increase in area; the drift per frame
    never exceeds ``max_step`` pixels. Background and distractors are static,
    lighting varies slightly between frames.
    """
    spec = spec or replace(SceneSpec(), width=width, height=height, radius_range=(radius, radius),
                           center_jitter=0.0, blur_sigma_range=(0.0, 0.0))
    rng = np.random.default_rng(seed)
    # smooth wandering path that stays inside the central region
    cx, cy = width / 2.0, height / 2.0
    heading = rng.uniform(0, 2 * math.pi)
    path = []
    for _ in range(n_frames):
        path.append((cx, cy))
        heading += rng.normal(0, 0.4)
        step = rng.uniform(0.3, 1.0) * max_step
        nx, ny = cx + step * math.cos(heading), cy + step * math.sin(heading)
        margin = radius * 2.5
        if not (margin < nx < width - margin and margin < ny < height - margin):
            heading = math.atan2(height / 2.0 - cy, width / 2.0 - cx)
            nx, ny = cx + step * math.cos(heading), cy + step * math.sin(heading)
        cx, cy = nx, ny
    radii = [radius * math.sqrt((1.0 + growth) ** t) for t in range(n_frames)]

    static = _background(height, width, rng, spec)
    xs = [p[0] for p in path]
    ys = [p[1] for p in path]
    keep_out = [(x, y, radii[-1] * 1.05) for x, y in zip(xs, ys)]
    for dx, dy, dr in _place_distractors(height, width, rng, spec, keep_out):
        m, u, v = ellipse_mask(height, width, dx, dy, dr, dr * rng.uniform(*spec.aspect_range), rng.uniform(0, math.pi))
        _paint_fruit(static, m, u, v, _fruit_color(rng), rng)
    color = _fruit_color(rng)
    aspect = rng.uniform(*spec.aspect_range)
    theta = rng.uniform(0, math.pi)

    frames = []
    for t, ((x, y), r) in enumerate(zip(path, radii)):
        frng = np.random.default_rng([seed, t])
        img = static.copy()
        mask, u, v = ellipse_mask(height, width, x, y, r, r * aspect, theta)
        _paint_fruit(img, mask, u, v, color, frng)
        img = _finish(img, frng, spec, lighting=frng.uniform(0.9, 1.05))
        n, sx, sy = kernels.mask_moments(mask)
        frames.append(SequenceFrame(img, mask, (sx / n, sy / n), float(n)))
    return frames
