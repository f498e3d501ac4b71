"""Seeded synthetic dorsal hand vein captures with ground-truth centerlines.

All randomness comes from SplitMix64, a 64-bit generator from the
xorshift family, so any language can reproduce the streams exactly.
With all arithmetic modulo 2**64::

    state  <- state + 0x9E3779B97F4A7C15
    z      <- state
    z      <- (z xor (z >> 30)) * 0xBF58476D1CE4E5B9
    z      <- (z xor (z >> 27)) * 0x94D049BB133111EB
    output <- z xor (z >> 31)

Uniform doubles are ``(output >> 11) * 2**-53``. Normal deviates use the
cosine branch of Box-Muller on two consecutive uniforms ``u1, u2``:
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.

Streams are keyed independently: a subject's vein tree uses
``derive_seed(seed, subject)`` and a capture uses
``derive_seed(seed, subject, sample)``, so generation order never matters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import BinaryImage, GrayImage, save_pgm

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit stream key."""
    h = 0
    for i, part in enumerate(parts):
        h = mix64(h ^ ((part + (i + 1) * GOLDEN) & MASK64))
    return h


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        return lo + int(self.uniform() * (hi - lo + 1))

    def normal(self) -> float:
        u1, u2 = self.uniform(), self.uniform()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)

    def uniform_array(self, n: int) -> np.ndarray:
        """The next ``n`` uniforms, identical to ``n`` calls of :meth:`uniform`."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN) & MASK64
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal_array(self, n: int) -> np.ndarray:
        u = self.uniform_array(2 * n).reshape(n, 2)
        return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])


@dataclass(frozen=True)
class Jitter:
    translation: float = 3.0
    rotation_deg: float = 2.0
    noise_sigma: float = 6.0


@dataclass(frozen=True)
class SynthSpec:
    width: int = 320
    height: int = 240
    n_subjects: int = 20
    samples_per_subject: int = 5
    branch_depth: int = 4
    branch_angle_jitter: float = 10.0
    within_subject_jitter: Jitter = field(default_factory=Jitter)
    vein_width: float = 4.0
    seed: int = 42
    vein_contrast: float = 45.0

    def __post_init__(self):
        j = self.within_subject_jitter
        if min(self.width, self.height, self.n_subjects, self.samples_per_subject, self.branch_depth) < 1:
            raise ValueError("all counts and dimensions must be >= 1")
        if min(self.branch_angle_jitter, j.translation, j.rotation_deg, j.noise_sigma) < 0:
            raise ValueError("jitter magnitudes must be >= 0")
        if self.vein_width <= 0:
            raise ValueError("vein_width must be positive")


@dataclass(frozen=True)
class SynthSample:
    label: int
    sample: int
    image: GrayImage
    ground_truth: BinaryImage

    @property
    def filename(self) -> str:
        return f"subject{self.label}_sample{self.sample}.pgm"


def _hand_geometry(spec: SynthSpec):
    cx, cy = spec.width / 2.0, spec.height / 2.0
    return cx, cy, 0.46 * spec.width, 0.47 * spec.height


def _inside(x: float, y: float, spec: SynthSpec, scale: float) -> bool:
    cx, cy, ax, ay = _hand_geometry(spec)
    return ((x - cx) / (ax * scale)) ** 2 + ((y - cy) / (ay * scale)) ** 2 <= 1.0


def gen_vein_tree(subject_seed: int, spec: SynthSpec) -> list[np.ndarray]:
    """Branching centerlines for one subject as ``(k, 2)`` arrays of (x, y)."""
    rng = SplitMix64(subject_seed)
    polylines: list[np.ndarray] = []
    step = 5.0
    root_len = 0.32 * spec.height

    def grow(x, y, heading, length, level):
        pts = [(x, y)]
        for _ in range(max(1, int(length / step))):
            heading += math.radians(6.0) * rng.normal()
            nx, ny = x + step * math.cos(heading), y + step * math.sin(heading)
            if not _inside(nx, ny, spec, 0.82):
                break
            x, y = nx, ny
            pts.append((x, y))
        if len(pts) > 1:
            polylines.append(np.array(pts))
        if level >= spec.branch_depth or len(pts) < 3:
            return
        spread = 28.0 + spec.branch_angle_jitter * (2 * rng.uniform() - 1)
        skew = spec.branch_angle_jitter * (2 * rng.uniform() - 1)
        for sign in (-1.0, 1.0):
            grow(x, y, heading + math.radians(sign * spread + skew), length * 0.68, level + 1)

    n_roots = rng.randint(2, 3)
    for r in range(n_roots):
        lane = (r + 0.2 + 0.6 * rng.uniform()) / n_roots
        x0 = spec.width * (0.2 + 0.6 * lane)
        y0 = spec.height * (0.80 + 0.06 * rng.uniform())
        while not _inside(x0, y0, spec, 0.78):  # wrist corners can fall outside the hand
            y0 -= 2.0
        heading = math.radians(-90.0 + 35.0 * (2 * rng.uniform() - 1))
        grow(x0, y0, heading, root_len * (0.8 + 0.4 * rng.uniform()), 1)
    return polylines


def _transform(points: np.ndarray, dx: float, dy: float, angle: float, cx: float, cy: float):
    c, s = math.cos(angle), math.sin(angle)
    x, y = points[:, 0] - cx, points[:, 1] - cy
    return np.column_stack([c * x - s * y + cx + dx, s * x + c * y + cy + dy])


def _centerline_raster(polylines, width, height) -> np.ndarray:
    mask = np.zeros((height, width), dtype=np.uint8)
    for line in polylines:
        for (x0, y0), (x1, y1) in zip(line[:-1], line[1:]):
            n = max(2, int(math.ceil(4 * math.hypot(x1 - x0, y1 - y0))) + 1)
            t = np.linspace(0.0, 1.0, n)
            xs = np.floor(x0 + t * (x1 - x0) + 0.5).astype(int)
            ys = np.floor(y0 + t * (y1 - y0) + 0.5).astype(int)
            ok = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
            mask[ys[ok], xs[ok]] = 1
    return mask


def render_background(spec: SynthSpec, dx: float = 0.0, dy: float = 0.0, angle: float = 0.0):
    """Noise-free hand intensity field and hand mask for a given pose."""
    cx, cy, ax, ay = _hand_geometry(spec)
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    c, s = math.cos(-angle), math.sin(-angle)
    ux, uy = xx - cx - dx, yy - cy - dy
    hx, hy = c * ux - s * uy, s * ux + c * uy
    r2 = (hx / ax) ** 2 + (hy / ay) ** 2
    hand = r2 <= 1.0
    base = 165.0 + 25.0 * (xx / spec.width - 0.5) - 30.0 * r2
    field_ = np.where(hand, base, 30.0)
    return field_, hand


def render_sample(
    tree: list[np.ndarray],
    sample_seed: int,
    spec: SynthSpec,
    jitter: Jitter | None = None,
) -> tuple[GrayImage, BinaryImage]:
    """Render one capture of ``tree`` and its 1-px ground-truth centerline raster."""
    j = spec.within_subject_jitter if jitter is None else jitter
    rng = SplitMix64(sample_seed)
    dx = j.translation * (2 * rng.uniform() - 1)
    dy = j.translation * (2 * rng.uniform() - 1)
    angle = math.radians(j.rotation_deg * (2 * rng.uniform() - 1))
    cx, cy = spec.width / 2.0, spec.height / 2.0
    moved = [_transform(line, dx, dy, angle, cx, cy) for line in tree]
    gt = _centerline_raster(moved, spec.width, spec.height)

    background, hand = render_background(spec, dx, dy, angle)
    if gt.any():
        dist = ndimage.distance_transform_edt(gt == 0)
    else:
        dist = np.full(gt.shape, np.inf)
    s = spec.vein_width / 2.5
    tube = spec.vein_contrast * np.exp(-(dist**2) / (2 * s * s))
    img = background - np.where(hand, tube, 0.0)
    if j.noise_sigma > 0:
        img = img + j.noise_sigma * rng.normal_array(img.size).reshape(img.shape)
    img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return GrayImage(img), BinaryImage(gt)


def gen_dataset(spec: SynthSpec) -> list[SynthSample]:
    """``n_subjects * samples_per_subject`` captures, fully determined by the spec."""
    out = []
    for subject in range(spec.n_subjects):
        tree = gen_vein_tree(derive_seed(spec.seed, subject), spec)
        for sample in range(spec.samples_per_subject):
            img, gt = render_sample(tree, derive_seed(spec.seed, subject, sample), spec)
            out.append(SynthSample(subject, sample, img, gt))
    return out


def write_dataset(samples: list[SynthSample], out_dir) -> Path:
    """Write PGMs, ``gt/`` ground truth and ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["filename", "label"])
        for s in samples:
            save_pgm(s.image, out / s.filename)
            save_pgm(s.ground_truth.to_gray(), out / "gt" / s.filename)
            writer.writerow([s.filename, s.label])
    return manifest
