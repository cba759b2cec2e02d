"""Frame-sequence dataset ingestion, normalization, merging and synthesis.

Datasets are directories with a ``manifest.csv`` (columns ``video_id,
subject_id,database_id,label,frame_dir,au_tags``), one directory of
zero-padded-numbered 8-bit grayscale PNG frames per video, a ``taxonomy.txt``
sidecar naming the classes, and (for synthesized data) a per-video
``motion.csv`` with the rendered ground-truth displacement per frame step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .imageops import resize_bilinear, smooth_noise

# ITU-R 601 luma weights for color -> gray conversion
_LUMA = np.array([0.299, 0.587, 0.114])

# Motion loci for synthetic classes, as fractions of the image side
# (x0, y0, x1, y1).  The first four sit strictly inside one quadrant each.
_REGION_FRACTIONS = (
    (0.05, 0.05, 0.45, 0.45),   # brow_left    (top-left quadrant)
    (0.55, 0.05, 0.95, 0.45),   # brow_right   (top-right quadrant)
    (0.05, 0.55, 0.45, 0.95),   # mouth_left   (bottom-left quadrant)
    (0.55, 0.55, 0.95, 0.95),   # mouth_right  (bottom-right quadrant)
    (0.30, 0.30, 0.70, 0.70),   # nose         (center)
)
_CLASS_NAMES = ("brow_left", "brow_right", "mouth_left", "mouth_right", "nose")
# Per-class unit motion direction; class 0 moves horizontally.
_CLASS_DIRECTIONS = (
    (1.0, 0.0),
    (0.0, 1.0),
    (-1.0, 0.0),
    (0.0, -1.0),
    (0.7071067811865476, 0.7071067811865476),
)


class DatasetError(Exception):
    """Raised when a dataset fails to load or validate."""


@dataclass(frozen=True)
class ClassTaxonomy:
    name: str
    classes: tuple[str, ...]

    def __post_init__(self):
        if not self.classes:
            raise DatasetError("taxonomy must contain at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise DatasetError("taxonomy class names must be unique")

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise DatasetError(f"class {name!r} not in taxonomy {self.name!r}") from None


@dataclass
class VideoSample:
    video_id: str
    subject_id: str
    database_id: str
    label: int
    frames: np.ndarray                      # (T, H, W) float64 in [0, 1]
    au_tags: tuple[int, ...] | None = None
    motion_truth: np.ndarray | None = None  # (T-1, 2) rendered (dx, dy) per step

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise DatasetError(f"video {self.video_id!r}: frames must be a non-empty (T, H, W) stack")
        object.__setattr__(self, "frames", frames)
        if self.motion_truth is not None:
            mt = np.asarray(self.motion_truth, dtype=np.float64)
            if mt.shape != (frames.shape[0] - 1, 2):
                raise DatasetError(f"video {self.video_id!r}: motion truth must have shape (T-1, 2)")
            object.__setattr__(self, "motion_truth", mt)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass
class Dataset:
    samples: list[VideoSample]
    taxonomy: ClassTaxonomy

    def __post_init__(self):
        for s in self.samples:
            if not 0 <= s.label < len(self.taxonomy):
                raise DatasetError(f"video {s.video_id!r}: label {s.label} outside taxonomy of size {len(self.taxonomy)}")

    def __len__(self) -> int:
        return len(self.samples)

    def subjects(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.samples:
            seen.setdefault(s.subject_id, None)
        return list(seen)


@dataclass
class SynthSpec:
    """Recipe for a labeled synthetic micro-motion dataset.

    Each class is defined by the image region its textured patch moves in,
    mimicking localized facial action; one video is generated per
    (subject, class) pair.
    """
    n_subjects: int = 3
    n_classes: int = 3
    frames_per_video: int = 6
    image_size: int = 32
    motion_amplitude: float = 2.0
    noise_sigma: float = 0.01
    motion_region_per_class: dict[int, tuple[int, int, int, int]] = field(default_factory=dict)
    database_id: str = "synth"

    def __post_init__(self):
        if self.n_classes < 1 or self.n_classes > 5:
            raise DatasetError("n_classes must be in 1..5")
        if self.n_subjects < 1:
            raise DatasetError("n_subjects must be >= 1")
        if self.frames_per_video < 2:
            raise DatasetError("frames_per_video must be >= 2")
        if self.motion_amplitude < 0:
            raise DatasetError("motion_amplitude must be >= 0")
        if self.noise_sigma < 0:
            raise DatasetError("noise_sigma must be >= 0")
        if not self.motion_region_per_class:
            self.motion_region_per_class = default_motion_regions(self.n_classes, self.image_size)
        for c, (x0, y0, x1, y1) in self.motion_region_per_class.items():
            if not (0 <= x0 < x1 <= self.image_size and 0 <= y0 < y1 <= self.image_size):
                raise DatasetError(f"motion region for class {c} lies outside the image bounds")

    @property
    def patch_size(self) -> int:
        return max(3, self.image_size // 5)


def default_motion_regions(n_classes: int, image_size: int) -> dict[int, tuple[int, int, int, int]]:
    """Quadrant-anchored default motion regions for up to five classes."""
    regions = {}
    for c in range(n_classes):
        fx0, fy0, fx1, fy1 = _REGION_FRACTIONS[c]
        regions[c] = (int(round(fx0 * image_size)), int(round(fy0 * image_size)),
                      int(round(fx1 * image_size)), int(round(fy1 * image_size)))
    return regions


def default_class_names(n_classes: int) -> tuple[str, ...]:
    return _CLASS_NAMES[:n_classes]


def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    """8-bit (or float) image -> float64 grayscale in [0, 1], luma weighting for color."""
    arr = np.asarray(pixels)
    if arr.ndim == 3:
        arr = arr[..., :3] @ _LUMA
    arr = arr.astype(np.float64)
    if pixels.dtype == np.uint8:
        arr = arr / 255.0
    return np.clip(arr, 0.0, 1.0)


def resize_frame(img: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resample to a square ``side x side`` image; intensities stay in [0, 1]."""
    if side < 2:
        raise ValueError("side must be >= 2")
    out = resize_bilinear(np.asarray(img, dtype=np.float64), side, side)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# manifest IO
# ---------------------------------------------------------------------------

MANIFEST_COLUMNS = ["video_id", "subject_id", "database_id", "label", "frame_dir", "au_tags"]


def save_dataset(ds: Dataset, root: str | Path) -> Path:
    """Write manifest + 8-bit PNG frames (+ motion CSVs) under ``root``.

    Returns the manifest path. Frames are quantized to 8 bits; everything
    else round-trips exactly through :func:`load_manifest`.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "taxonomy.txt").write_text(
        "\n".join([ds.taxonomy.name, *ds.taxonomy.classes]) + "\n", encoding="utf-8")
    manifest = root / "manifest.csv"
    with manifest.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for s in ds.samples:
            frame_dir = root / "frames" / s.video_id
            frame_dir.mkdir(parents=True, exist_ok=True)
            for t in range(s.n_frames):
                img = np.clip(np.rint(s.frames[t] * 255.0), 0, 255).astype(np.uint8)
                Image.fromarray(img, mode="L").save(frame_dir / f"{t:04d}.png")
            if s.motion_truth is not None:
                with (frame_dir / "motion.csv").open("w", newline="", encoding="utf-8") as mfh:
                    mwriter = csv.writer(mfh)
                    mwriter.writerow(["frame_idx", "dx", "dy"])
                    for t, (dx, dy) in enumerate(s.motion_truth):
                        mwriter.writerow([t, repr(float(dx)), repr(float(dy))])
            tags = ";".join(str(t) for t in s.au_tags) if s.au_tags else ""
            writer.writerow([s.video_id, s.subject_id, s.database_id, s.label,
                             str(Path("frames") / s.video_id), tags])
    return manifest


def load_manifest(path: str | Path) -> Dataset:
    """Load a dataset from its manifest CSV; frames decode to grayscale [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    root = path.parent
    taxonomy = _load_taxonomy(root)
    samples = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"manifest missing columns: {missing}")
        for row in reader:
            samples.append(_load_sample(root, row, taxonomy))
    if taxonomy is None:
        n = max((s.label for s in samples), default=0) + 1
        taxonomy = ClassTaxonomy("unnamed", tuple(f"class_{i}" for i in range(n)))
    return Dataset(samples, taxonomy)


def _load_taxonomy(root: Path) -> ClassTaxonomy | None:
    tax_path = root / "taxonomy.txt"
    if not tax_path.is_file():
        return None
    lines = [ln for ln in tax_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) < 2:
        raise DatasetError(f"taxonomy file {tax_path} must name the taxonomy and at least one class")
    return ClassTaxonomy(lines[0], tuple(lines[1:]))


def _load_sample(root: Path, row: dict, taxonomy: ClassTaxonomy | None) -> VideoSample:
    video_id = row.get("video_id") or "<unknown>"
    try:
        label = int(row["label"])
    except (KeyError, ValueError):
        raise DatasetError(f"video {video_id!r}: malformed label {row.get('label')!r}") from None
    frame_dir = root / row["frame_dir"]
    if not frame_dir.is_dir():
        raise DatasetError(f"video {video_id!r}: frame directory missing: {frame_dir}")
    frame_paths = sorted(frame_dir.glob("*.png"))
    if not frame_paths:
        raise DatasetError(f"video {video_id!r}: no frames in {frame_dir}")
    frames = []
    for fp in frame_paths:
        with Image.open(fp) as img:
            frames.append(to_grayscale(np.asarray(img)))
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DatasetError(f"video {video_id!r}: inconsistent frame sizes {sorted(shapes)}")
    motion = None
    motion_path = frame_dir / "motion.csv"
    if motion_path.is_file():
        rows = list(csv.DictReader(motion_path.open(newline="", encoding="utf-8")))
        rows.sort(key=lambda r: int(r["frame_idx"]))
        motion = np.array([[float(r["dx"]), float(r["dy"])] for r in rows], dtype=np.float64)
    tags_field = (row.get("au_tags") or "").strip()
    au_tags = tuple(int(t) for t in tags_field.split(";")) if tags_field else None
    return VideoSample(video_id, row["subject_id"], row["database_id"],
                       label, np.stack(frames), au_tags, motion)


# ---------------------------------------------------------------------------
# merging
# ---------------------------------------------------------------------------

def merge_datasets(a: Dataset, b: Dataset, keep_classes: list[str]) -> Dataset:
    """Merge two datasets, keeping only ``keep_classes`` and re-indexing labels.

    Subject ids are prefixed with their database id so subjects never collide
    across databases.
    """
    if not keep_classes:
        raise DatasetError("keep_classes must not be empty")
    for name in keep_classes:
        a.taxonomy.index_of(name)
        b.taxonomy.index_of(name)
    taxonomy = ClassTaxonomy("composite", tuple(keep_classes))
    merged = []
    for ds in (a, b):
        for s in ds.samples:
            class_name = ds.taxonomy.classes[s.label]
            if class_name not in keep_classes:
                continue
            merged.append(VideoSample(
                video_id=s.video_id,
                subject_id=f"{s.database_id}/{s.subject_id}",
                database_id=s.database_id,
                label=taxonomy.index_of(class_name),
                frames=s.frames,
                au_tags=s.au_tags,
                motion_truth=s.motion_truth,
            ))
    return Dataset(merged, taxonomy)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def synthesize_dataset(spec: SynthSpec, seed: int) -> Dataset:
    """Render a labeled micro-motion dataset, deterministic for a fixed seed.

    Each video shows a small high-contrast patch translating inside its
    class's region over a static per-subject background; the rendered
    per-step displacement is stored on the sample for oracle tests.
    """
    samples = []
    for s_idx in range(spec.n_subjects):
        bg_rng = np.random.default_rng([seed, s_idx, 0xB6])
        background = smooth_noise(bg_rng, spec.image_size, spec.image_size, lo=0.35, hi=0.65)
        for c in range(spec.n_classes):
            samples.append(_render_video(spec, seed, s_idx, c, background))
    taxonomy = ClassTaxonomy(f"{spec.database_id}-loci", default_class_names(spec.n_classes))
    return Dataset(samples, taxonomy)


def _render_video(spec: SynthSpec, seed: int, s_idx: int, c: int,
                  background: np.ndarray) -> VideoSample:
    rng = np.random.default_rng([seed, s_idx, c, 0x51])
    ps = spec.patch_size
    patch = smooth_noise(rng, ps, ps, passes=1, lo=0.0, hi=1.0)
    x0, y0, x1, y1 = spec.motion_region_per_class[c]
    # patch top-left stays inside [x0, x1-ps] x [y0, y1-ps]; velocity reflects
    # at the bounds so the locus is preserved for any amplitude
    xmin, xmax = float(x0), float(max(x0, x1 - ps))
    ymin, ymax = float(y0), float(max(y0, y1 - ps))
    dx_unit, dy_unit = _CLASS_DIRECTIONS[c]
    vx, vy = spec.motion_amplitude * dx_unit, spec.motion_amplitude * dy_unit
    px = xmin if vx >= 0 else xmax
    py = ymin if vy >= 0 else ymax
    frames = np.empty((spec.frames_per_video, spec.image_size, spec.image_size))
    positions = []
    for t in range(spec.frames_per_video):
        positions.append((px, py))
        frame = background.copy()
        _blit_patch(frame, patch, px, py)
        if spec.noise_sigma > 0:
            frame = frame + spec.noise_sigma * rng.standard_normal(frame.shape)
        frames[t] = np.clip(frame, 0.0, 1.0)
        px, vx = _bounce(px, vx, xmin, xmax)
        py, vy = _bounce(py, vy, ymin, ymax)
    motion = np.diff(np.asarray(positions, dtype=np.float64), axis=0)
    return VideoSample(
        video_id=f"s{s_idx:02d}_{_CLASS_NAMES[c]}",
        subject_id=f"s{s_idx:02d}",
        database_id=spec.database_id,
        label=c,
        frames=frames,
        au_tags=None,
        motion_truth=motion,
    )


def _bounce(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    nxt = pos + vel
    if nxt > hi:
        return 2 * hi - nxt, -vel
    if nxt < lo:
        return 2 * lo - nxt, -vel
    return nxt, vel


def _blit_patch(frame: np.ndarray, patch: np.ndarray, px: float, py: float) -> None:
    """Composite ``patch`` over ``frame`` at float position (px, py), bilinear."""
    ph, pw = patch.shape
    h, w = frame.shape
    gx0 = max(0, int(np.floor(px)))
    gy0 = max(0, int(np.floor(py)))
    gx1 = min(w, int(np.ceil(px + pw)) + 1)
    gy1 = min(h, int(np.ceil(py + ph)) + 1)
    if gx0 >= gx1 or gy0 >= gy1:
        return
    ys, xs = np.meshgrid(np.arange(gy0, gy1), np.arange(gx0, gx1), indexing="ij")
    # positions inside the patch's own coordinate frame
    u = xs - px
    v = ys - py
    value, alpha = _sample_patch(patch, u, v)
    region = frame[gy0:gy1, gx0:gx1]
    frame[gy0:gy1, gx0:gx1] = (1.0 - alpha) * region + alpha * value


def _sample_patch(patch: np.ndarray, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ph, pw = patch.shape
    # alpha is the bilinear coverage of the patch support, soft 1-px rim
    ax = np.clip(np.minimum(u + 1.0, pw - u), 0.0, 1.0)
    ay = np.clip(np.minimum(v + 1.0, ph - v), 0.0, 1.0)
    alpha = ax * ay
    uc = np.clip(u, 0.0, pw - 1.0)
    vc = np.clip(v, 0.0, ph - 1.0)
    u0 = np.minimum(uc.astype(np.intp), pw - 2) if pw > 1 else np.zeros_like(uc, dtype=np.intp)
    v0 = np.minimum(vc.astype(np.intp), ph - 2) if ph > 1 else np.zeros_like(vc, dtype=np.intp)
    fu = uc - u0
    fv = vc - v0
    u1 = np.minimum(u0 + 1, pw - 1)
    v1 = np.minimum(v0 + 1, ph - 1)
    top = patch[v0, u0] * (1 - fu) + patch[v0, u1] * fu
    bot = patch[v1, u0] * (1 - fu) + patch[v1, u1] * fu
    return top * (1 - fv) + bot * fv, alpha
