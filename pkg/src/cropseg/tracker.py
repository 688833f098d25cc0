"""Time-series size and position tracking of one fruit in fixed-camera photos.

Per photo the fruit is cropped at eleven window sizes around the current
center, segmented, and each foreground count is rescaled to source-photo
pixels. The median of the eleven values is the photo's area and the center
of mass of the median measurement's mask becomes the next photo's center.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imagery, kernels
from .predictor import binarize, predict_many, render_overlay

log = logging.getLogger(__name__)

SCALES = tuple(round(1.0 - 0.05 * i, 2) for i in range(11))
COUNT_COLUMNS = tuple(f"count_s{int(round(s * 100)):03d}" for s in SCALES)
CSV_FIELDS = ("photo_id", "cx", "cy", "area", "clamped", "low_confidence") + COUNT_COLUMNS
DEFAULT_CAP = 400000.0


class NetworkSegmenter:
    """Adapter giving a network the segmenter interface used by the tracker."""

    def __init__(self, net, use_d4=True, threshold=0.5, average="probability"):
        self.net = net
        self.use_d4 = use_d4
        self.threshold = threshold
        self.average = average

    @property
    def input_side(self):
        return self.net.config.input_side

    def __call__(self, crops, geometries):
        probs = predict_many(self.net, crops, use_d4=self.use_d4, average=self.average)
        return [binarize(p, self.threshold) for p in probs]


def as_segmenter(obj, **kw):
    if hasattr(obj, "input_side") and callable(obj):
        return obj
    return NetworkSegmenter(obj, **kw)


@dataclass
class Measurement:
    photo_id: int
    scale_factors: tuple
    raw_counts: list
    rescaled_counts: list
    median_index: int
    chosen_area: float
    chosen_mask: np.ndarray
    crop_geometry: imagery.CropGeometry
    masks: list = field(default_factory=list, repr=False)
    chosen_crop: np.ndarray = field(default=None, repr=False)

    @property
    def low_confidence(self):
        return self.raw_counts[self.median_index] == 0


@dataclass
class TrackRecord:
    photo_id: int
    center: tuple
    area: float
    rescaled_counts: list
    clamped: bool = False
    low_confidence: bool = False
    timestamp: str = None


@dataclass
class TrackSeries:
    records: list
    manifest: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.photo_id for r in self.records]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("photo ids must be strictly increasing")


def median_index(values):
    """Index of the median of an odd-length list; ties go to the lowest index."""
    if len(values) % 2 == 0:
        raise ValueError("median selection needs an odd number of values")
    v = sorted(values)[len(values) // 2]
    return min(i for i, x in enumerate(values) if x == v)


def multiscale_measure(segmenter, photo, center, base_window, photo_id=0, scales=SCALES):
    """Measure the fruit around ``center`` at every scale and keep the median."""
    segmenter = as_segmenter(segmenter)
    h, w = photo.shape[:2]
    cx, cy = center
    if not (0 <= cx <= w and 0 <= cy <= h):
        raise ValueError(f"center {center} lies outside the {w}x{h} photo")
    if base_window < 2:
        raise ValueError(f"base_window must be >= 2, got {base_window}")
    out_side = segmenter.input_side
    crops, geoms = [], []
    for s in scales:
        crop, geom = imagery.crop_resize(photo, imagery.CropWindow((cx, cy), base_window, s), out_side)
        crops.append(crop)
        geoms.append(geom)
    masks = segmenter(crops, geoms)
    raw = [int(np.count_nonzero(m)) for m in masks]
    rescaled = [n * g.pixel_area for n, g in zip(raw, geoms)]
    k = median_index(rescaled)
    return Measurement(photo_id, tuple(scales), raw, rescaled, k, rescaled[k], masks[k], geoms[k],
                       masks, crops[k])


def center_of_mass(mask, geometry):
    """Mean foreground position mapped back to source-photo coordinates."""
    n, sx, sy = kernels.mask_moments(mask)
    if n == 0:
        raise ValueError("center of mass of an empty mask")
    x, y = geometry.to_source(sx / n, sy / n)
    return float(x), float(y)


def estimate_base_window(segmenter, photo, center, factor=3.0, probe_side=None):
    """Window side from the bounding square of the object detected at ``center``.

    The probe crop is the largest square around ``center`` that the photo
    holds, unless ``probe_side`` is given.
    """
    segmenter = as_segmenter(segmenter)
    h, w = photo.shape[:2]
    side = probe_side or min(w, h)
    crop, geom = imagery.crop_resize(photo, imagery.CropWindow(tuple(center), side), segmenter.input_side)
    mask = segmenter([crop], [geom])[0]
    labels, n = ndimage.label(mask)
    if n == 0:
        raise ValueError(f"no object detected around {center}")
    u, v = geom.to_output(*center)
    iu = min(max(int(u), 0), mask.shape[1] - 1)
    iv = min(max(int(v), 0), mask.shape[0] - 1)
    lab = labels[iv, iu]
    if lab == 0:
        # nearest component to the probe center
        idx = ndimage.distance_transform_edt(labels == 0, return_distances=False, return_indices=True)
        lab = labels[idx[0][iv, iu], idx[1][iv, iu]]
    rows, cols = np.nonzero(labels == lab)
    extent = max(rows.max() - rows.min() + 1, cols.max() - cols.min() + 1) * geom.step
    return max(2.0, factor * extent)


@dataclass
class PhotoEntry:
    photo_id: int
    source: object            # path or (H, W, 3) array
    timestamp: str = None

    def load(self):
        if isinstance(self.source, np.ndarray):
            return imagery.as_image(self.source)
        return imagery.load_image(self.source)


def as_entries(photos):
    out = []
    for i, p in enumerate(photos):
        out.append(p if isinstance(p, PhotoEntry) else PhotoEntry(i, p))
    return out


def read_manifest(path):
    """Photo list from a ``photo_id,path[,timestamp]`` CSV or a directory of images."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        return [PhotoEntry(i, p) for i, p in enumerate(files)]
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            p = Path(row["path"])
            if not p.is_absolute():
                p = path.parent / p
            entries.append(PhotoEntry(int(row["photo_id"]), p, row.get("timestamp") or None))
    return entries


def mask_grid(masks, columns=4, gap=2):
    """Tile binary masks into one uint8 image (255 = foreground, gray gaps)."""
    side = masks[0].shape[0]
    rows = math.ceil(len(masks) / columns)
    grid = np.full((rows * side + (rows - 1) * gap, columns * side + (columns - 1) * gap), 128, np.uint8)
    for k, m in enumerate(masks):
        r, c = divmod(k, columns)
        grid[r * (side + gap):r * (side + gap) + side, c * (side + gap):c * (side + gap) + side] = m * 255
    return grid


def track(segmenter, photos, initial_center, base_window=None, window_factor=3.0, out_dir=None,
          scales=SCALES):
    """Follow one fruit through chronologically ordered photos.

    ``photos`` holds arrays, paths or :class:`PhotoEntry` objects. When
    ``out_dir`` is given, a mask thumbnail grid and an overlay of the chosen
    crop are written per photo.
    """
    segmenter = as_segmenter(segmenter)
    entries = as_entries(photos)
    if not entries:
        raise ValueError("no photos to track")
    first = entries[0].load()
    h, w = first.shape[:2]
    if not (0 <= initial_center[0] <= w and 0 <= initial_center[1] <= h):
        raise ValueError(f"initial center {initial_center} lies outside the first {w}x{h} photo")
    if base_window is None:
        base_window = estimate_base_window(segmenter, first, initial_center, window_factor)
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "thumbnails").mkdir(parents=True, exist_ok=True)
        (out_dir / "overlays").mkdir(parents=True, exist_ok=True)

    center = (float(initial_center[0]), float(initial_center[1]))
    records = []
    for k, entry in enumerate(entries):
        try:
            photo = first if k == 0 else entry.load()
        except (OSError, ValueError) as exc:
            log.warning("photo %s unreadable (%s); center carried forward", entry.photo_id, exc)
            records.append(TrackRecord(entry.photo_id, center, 0.0, [0.0] * len(scales),
                                       low_confidence=True, timestamp=entry.timestamp))
            continue
        m = multiscale_measure(segmenter, photo, center, base_window, entry.photo_id, scales)
        low = m.low_confidence
        if low:
            area = 0.0
        else:
            area = m.chosen_area
            x, y = center_of_mass(m.chosen_mask, m.crop_geometry)
            ph, pw = photo.shape[:2]
            center = (min(max(x, 0.0), float(pw)), min(max(y, 0.0), float(ph)))
        records.append(TrackRecord(entry.photo_id, center, float(area), list(m.rescaled_counts),
                                   low_confidence=low, timestamp=entry.timestamp))
        if out_dir is not None:
            stem = f"{entry.photo_id:05d}"
            from PIL import Image
            Image.fromarray(mask_grid(m.masks)).save(out_dir / "thumbnails" / f"{stem}_scales.png")
            imagery.save_image(out_dir / "overlays" / f"{stem}_overlay.png",
                               render_overlay(m.chosen_crop, m.chosen_mask))
    config = {"base_window": float(base_window), "scales": list(scales),
              "initial_center": list(map(float, initial_center))}
    manifest = [{"photo_id": e.photo_id, "source": str(e.source) if not isinstance(e.source, np.ndarray) else "<array>",
                 "timestamp": e.timestamp} for e in entries]
    return TrackSeries(records, manifest, config)


def clamp_outliers(series, cap=DEFAULT_CAP):
    """Replace areas above ``cap`` by ``cap`` and flag them."""
    if not cap > 0:
        raise ValueError(f"cap must be > 0, got {cap}")
    out = []
    for r in series.records:
        if r.area > cap:
            r = TrackRecord(r.photo_id, r.center, float(cap), list(r.rescaled_counts), True,
                            r.low_confidence, r.timestamp)
        out.append(r)
    return TrackSeries(out, series.manifest, dict(series.config, cap=cap))


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def write_track_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in series.records:
            w.writerow([r.photo_id, repr(float(r.center[0])), repr(float(r.center[1])), repr(float(r.area)),
                        int(r.clamped), int(r.low_confidence)] + [repr(float(c)) for c in r.rescaled_counts])


def read_track_csv(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        counts_cols = [c for c in reader.fieldnames if c.startswith("count_s")]
        for row in reader:
            records.append(TrackRecord(int(row["photo_id"]), (float(row["cx"]), float(row["cy"])),
                                       float(row["area"]), [float(row[c]) for c in counts_cols],
                                       bool(int(row["clamped"])), bool(int(row["low_confidence"]))))
    return TrackSeries(records)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def boxplot_stats(values, whis=1.5):
    """Quartiles (linear interpolation) and whiskers at the extreme data within whis*IQR."""
    from matplotlib import cbook

    st = cbook.boxplot_stats(np.asarray(values, dtype=np.float64), whis=whis)[0]
    return {"q1": float(st["q1"]), "med": float(st["med"]), "q3": float(st["q3"]),
            "whislo": float(st["whislo"]), "whishi": float(st["whishi"]),
            "fliers": np.sort(st["fliers"]).tolist()}


def _hour(ts):
    try:
        return int(str(ts).replace("T", " ").split(" ")[1].split(":")[0])
    except (IndexError, ValueError):
        return None


def report(series, out_dir, highlight=None, shade_night=True):
    """Area timeline, per-photo box plots and position scatter, plus their CSVs.

    ``highlight`` is an optional list of ``(first_photo_id, last_photo_id)``
    spans shaded on the timeline. Night shading uses record timestamps
    (hours 19:00-06:00) when present.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not series.records:
        raise ValueError("empty series")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs = series.records
    ids = np.array([r.photo_id for r in recs])
    areas = np.array([r.area for r in recs])

    with open(out_dir / "area_timeline.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(("photo_id", "timestamp", "area", "clamped", "low_confidence") + COUNT_COLUMNS)
        for r in recs:
            wr.writerow([r.photo_id, r.timestamp or "", repr(float(r.area)), int(r.clamped),
                         int(r.low_confidence)] + [repr(float(c)) for c in r.rescaled_counts])
    with open(out_dir / "positions.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(("photo_id", "cx", "cy"))
        for r in recs:
            wr.writerow([r.photo_id, repr(float(r.center[0])), repr(float(r.center[1]))])

    fig, ax = plt.subplots(figsize=(9, 3.5))
    if shade_night:
        for r in recs:
            hr = _hour(r.timestamp) if r.timestamp else None
            if hr is not None and (hr >= 19 or hr < 6):
                ax.axvspan(r.photo_id - 0.5, r.photo_id + 0.5, color="0.85", lw=0)
    for a, b in highlight or ():
        ax.axvspan(a, b, color="cyan", alpha=0.3, lw=0)
    ax.plot(ids, areas, "-o", ms=2, lw=0.8)
    clamped = np.array([r.clamped for r in recs])
    if clamped.any():
        ax.plot(ids[clamped], areas[clamped], "rx")
    ax.set_xlabel("photo id")
    ax.set_ylabel("pixels")
    fig.tight_layout()
    fig.savefig(out_dir / "area_timeline.png", dpi=80)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(max(4, 0.15 * len(recs)), 3.5))
    stats = [dict(boxplot_stats(r.rescaled_counts), label=str(r.photo_id)) for r in recs]
    ax.bxp(stats, showfliers=True)
    ax.set_xlabel("photo id")
    ax.set_ylabel("pixels")
    if len(recs) > 20:
        step = max(1, len(recs) // 20)
        ax.set_xticks(range(1, len(recs) + 1, step))
        ax.set_xticklabels([str(r.photo_id) for r in recs[::step]])
    fig.tight_layout()
    fig.savefig(out_dir / "area_boxplot.png", dpi=80)
    plt.close(fig)

    xs = np.array([r.center[0] for r in recs])
    ys = np.array([r.center[1] for r in recs])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(xs, ys, "-", color="0.6", lw=0.8)
    sc = ax.scatter(xs, ys, c=ids, cmap="viridis", s=12)
    fig.colorbar(sc, ax=ax, label="photo id")
    ax.invert_yaxis()
    ax.set_xlabel("x (px from left)")
    ax.set_ylabel("y (px from top)")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(out_dir / "positions.png", dpi=80)
    plt.close(fig)
    return {
        "pngs": [out_dir / "area_timeline.png", out_dir / "area_boxplot.png", out_dir / "positions.png"],
        "csvs": [out_dir / "area_timeline.csv", out_dir / "positions.csv"],
    }
