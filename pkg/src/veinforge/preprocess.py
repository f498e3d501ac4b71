"""Grayscale hand image to pruned one-pixel-wide vein skeleton.

Stages, in pipeline order: polarity inversion (veins bright), top-hat
background subtraction, contrast stretch, Gaussian smoothing, adaptive
Wiener filtering, oriented matched filtering, Otsu thresholding, masking
to the segmented hand, small component removal, Zhang-Suen thinning and
spur pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import NoContrast, WindowTooLarge
from .raster import BinaryImage, GrayImage

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class StructuringElement:
    """Flat binary structuring element with its origin at the center cell."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] % 2 == 0 or m.shape[1] % 2 == 0:
            raise ValueError(f"structuring element must have odd dimensions, got {m.shape}")
        if not m[m.shape[0] // 2, m.shape[1] // 2]:
            raise ValueError("structuring element origin cell must be set")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
        return cls(xx * xx + yy * yy <= radius * radius)

    @classmethod
    def square(cls, size: int) -> "StructuringElement":
        return cls(np.ones((size, size), dtype=bool))

    @classmethod
    def cross(cls, radius: int = 1) -> "StructuringElement":
        m = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=bool)
        m[radius, :] = True
        m[:, radius] = True
        return cls(m)

    def offsets(self) -> list[tuple[int, int]]:
        """``(dy, dx)`` of every set cell relative to the origin."""
        cy, cx = self.mask.shape[0] // 2, self.mask.shape[1] // 2
        return [(int(y) - cy, int(x) - cx) for y, x in zip(*np.nonzero(self.mask))]


@dataclass(frozen=True)
class MatchedFilterParams:
    sigma: float = 2.0
    length: int = 9
    orientations: int = 12
    enabled: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    background_se_radius: int = 15
    smoothing_sigma: float = 1.0
    wiener_window: int = 5
    matched_filter: MatchedFilterParams = field(default_factory=MatchedFilterParams)
    threshold_mode: Literal["otsu", "fixed"] = "otsu"
    threshold_level: int = 128
    min_component_area: int = 50
    prune_length: int = 8
    hand_margin: int = 10

    def __post_init__(self):
        mf = self.matched_filter
        if self.background_se_radius < 1:
            raise ValueError("background_se_radius must be positive")
        if self.smoothing_sigma <= 0:
            raise ValueError("smoothing_sigma must be positive")
        if self.wiener_window < 3 or self.wiener_window % 2 == 0:
            raise ValueError("wiener_window must be odd and >= 3")
        if mf.sigma <= 0 or mf.length < 1 or mf.orientations < 1:
            raise ValueError("matched filter sigma/length/orientations must be positive")
        if self.threshold_mode not in ("otsu", "fixed"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if not 0 <= self.threshold_level <= 255:
            raise ValueError("threshold_level must lie in [0, 255]")
        if self.min_component_area < 0 or self.prune_length < 0 or self.hand_margin < 0:
            raise ValueError("min_component_area, prune_length and hand_margin must be >= 0")


# --- morphology -------------------------------------------------------------


def _shift_reduce(px: np.ndarray, offsets, pad_value, reduce) -> np.ndarray:
    r = max(max(abs(dy), abs(dx)) for dy, dx in offsets)
    h, w = px.shape
    padded = np.pad(px, r, mode="constant", constant_values=pad_value)
    out = None
    for dy, dx in offsets:
        window = padded[r + dy : r + dy + h, r + dx : r + dx + w]
        out = window.copy() if out is None else reduce(out, window, out=out)
    return out


def dilate(img: GrayImage, se: StructuringElement) -> GrayImage:
    """Flat dilation; samples outside the image count as 0.

    ``out(p) = max over b in B of img(p - b)``, the reflected form that makes
    ``dilate(erode(.))`` a true opening for asymmetric elements too.
    """
    offsets = [(-dy, -dx) for dy, dx in se.offsets()]
    return GrayImage(_shift_reduce(img.pixels, offsets, 0, np.maximum))


def erode(img: GrayImage, se: StructuringElement) -> GrayImage:
    """Flat erosion ``min over b in B of img(p + b)``; outside samples count as 255."""
    return GrayImage(_shift_reduce(img.pixels, se.offsets(), 255, np.minimum))


def opening(img: GrayImage, se: StructuringElement) -> GrayImage:
    """Opening: erosion followed by dilation."""
    return dilate(erode(img, se), se)


open = opening  # noqa: A001


def subtract_background(img: GrayImage, se: StructuringElement) -> GrayImage:
    """White top-hat: the image minus its opening, floored at 0."""
    px = img.pixels.astype(np.float64)
    bg = opening(img, se).pixels.astype(np.float64)
    out = np.maximum(px - bg, 0.0)
    if img.pixels.dtype == np.uint8:
        return GrayImage(out.astype(np.uint8))
    return GrayImage(out)


def invert(img: GrayImage) -> GrayImage:
    if img.pixels.dtype == np.uint8:
        return GrayImage(255 - img.pixels)
    return GrayImage(255.0 - img.pixels)


# --- intensity filters ------------------------------------------------------


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def contrast_stretch(img: GrayImage) -> GrayImage:
    """Map [min, max] linearly onto [0, 255]; constant images become all-zero."""
    px = img.pixels.astype(np.float64)
    lo, hi = px.min(), px.max()
    if hi == lo:
        return GrayImage(np.zeros(px.shape, dtype=np.uint8))
    out = round_half_away((px - lo) * 255.0 / (hi - lo))
    return GrayImage(np.clip(out, 0, 255).astype(np.uint8))


def _window_stack(px: np.ndarray, window: int) -> np.ndarray:
    r = window // 2
    padded = np.pad(px, r, mode="edge")
    h, w = px.shape
    return np.stack(
        [padded[dy : dy + h, dx : dx + w] for dy in range(window) for dx in range(window)]
    )


def wiener_filter(img: GrayImage, window: int) -> GrayImage:
    """Locally adaptive Wiener filter over a ``window`` x ``window`` neighbourhood.

    Local statistics use clamp-to-edge padding. The noise power is the mean
    of all local variances.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if window > img.width or window > img.height:
        raise WindowTooLarge(f"window {window} exceeds image {img.width}x{img.height}")
    px = img.pixels.astype(np.float64)
    stack = _window_stack(px, window)
    mu = stack.mean(axis=0)
    var = ((stack - mu) ** 2).mean(axis=0)
    noise = var.mean()
    denom = np.maximum(var, noise)
    gain = np.divide(
        np.maximum(var - noise, 0.0), denom, out=np.zeros_like(var), where=denom > 0
    )
    return GrayImage(np.clip(mu + gain * (px - mu), 0.0, 255.0))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def smooth(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur, kernel radius ceil(3 sigma), clamp-to-edge."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = gaussian_kernel1d(sigma)
    px = img.pixels.astype(np.float64)
    out = ndimage.correlate1d(px, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return GrayImage(np.clip(out, 0.0, 255.0))


def matched_filter_kernels(sigma: float, length: int, orientations: int) -> list[np.ndarray]:
    """Zero-mean inverted-Gaussian line detectors, one per orientation.

    Orientation ``i`` is the angle ``i * pi / orientations`` measured from the
    x axis; the kernel extends ``length`` pixels along that direction and
    3 sigma either side across it.
    """
    half_across = 3.0 * sigma
    half_along = length / 2.0
    radius = math.ceil(math.hypot(half_across, half_along))
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(np.float64)
    kernels = []
    for i in range(orientations):
        theta = math.pi * i / orientations
        along = xx * math.cos(theta) + yy * math.sin(theta)
        across = -xx * math.sin(theta) + yy * math.cos(theta)
        support = (np.abs(across) <= half_across) & (np.abs(along) <= half_along)
        k = np.where(support, -np.exp(-(across**2) / (2 * sigma * sigma)), 0.0)
        k[support] -= k[support].mean()
        kernels.append(k)
    return kernels


def matched_filter(
    img: GrayImage, sigma: float = 2.0, length: int = 9, orientations: int = 12
) -> GrayImage:
    """Maximum oriented matched-filter response, rescaled to [0, 255].

    Dark line structures respond positively. A flat response map (for
    instance from a constant image) yields an all-zero output.
    """
    px = img.pixels.astype(np.float64)
    response = None
    for k in matched_filter_kernels(sigma, length, orientations):
        r = ndimage.correlate(px, k, mode="nearest")
        response = r if response is None else np.maximum(response, r)
    lo, hi = response.min(), response.max()
    if hi - lo <= 1e-9 * (1.0 + np.abs(px).max()):
        return GrayImage(np.zeros(px.shape))
    return GrayImage(np.clip((response - lo) * (255.0 / (hi - lo)), 0.0, 255.0))


# --- segmentation -----------------------------------------------------------


def otsu_level(hist: np.ndarray) -> int:
    """Level maximising between-class variance, exact integer arithmetic.

    Class 0 is ``<= level``. Ties resolve to the lowest level.
    """
    counts = [int(c) for c in hist]
    total = sum(counts)
    weighted_total = sum(i * c for i, c in enumerate(counts))
    best_level, best_num, best_den = 0, -1, 1
    n0 = s0 = 0
    for t in range(len(counts)):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            num, den = 0, 1
        else:
            num, den = (s0 * total - weighted_total * n0) ** 2, n0 * n1
        if num * best_den > best_num * den:
            best_level, best_num, best_den = t, num, den
    return best_level


def threshold_otsu(img: GrayImage) -> tuple[BinaryImage, int]:
    """Otsu threshold over the 256 byte levels; foreground is ``> level``."""
    q = img.to_uint8()
    hist = np.bincount(q.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise NoContrast("image has a single intensity")
    level = otsu_level(hist)
    return BinaryImage(q > level), level


def threshold_fixed(img: GrayImage, level: int) -> BinaryImage:
    return BinaryImage(img.to_uint8() > level)


def remove_small_components(bin_img: BinaryImage, min_area: int) -> BinaryImage:
    """Clear 8-connected foreground components smaller than ``min_area`` pixels."""
    if min_area < 0:
        raise ValueError("min_area must be >= 0")
    if min_area == 0:
        return bin_img
    labels, n = ndimage.label(bin_img.mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return bin_img
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_area
    keep[0] = False
    return BinaryImage(keep[labels])


def segment_hand(img: GrayImage, margin: int) -> BinaryImage:
    """Hand region: largest Otsu-bright component, holes filled, eroded by ``margin``.

    The erosion keeps the hand outline itself out of the vein mask. An image
    without contrast is treated as all hand.
    """
    try:
        bright, _ = threshold_otsu(img)
    except NoContrast:
        return BinaryImage(np.ones(img.pixels.shape, dtype=np.uint8))
    labels, n = ndimage.label(bright.mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return bright
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    hand = ndimage.binary_fill_holes(labels == np.argmax(sizes))
    if margin > 0:
        disk = StructuringElement.disk(margin).mask
        hand = ndimage.binary_erosion(hand, structure=disk, border_value=0)
    return BinaryImage(hand)


# --- thinning ---------------------------------------------------------------


def _neighbours(m: np.ndarray) -> list[np.ndarray]:
    """P2..P9 planes (N, NE, E, SE, S, SW, W, NW) with zero padding."""
    p = np.pad(m, 1)
    h, w = m.shape
    return [
        p[0:h, 1 : w + 1],
        p[0:h, 2 : w + 2],
        p[1 : h + 1, 2 : w + 2],
        p[2 : h + 2, 2 : w + 2],
        p[2 : h + 2, 1 : w + 1],
        p[2 : h + 2, 0:w],
        p[1 : h + 1, 0:w],
        p[0:h, 0:w],
    ]


def _zs_candidates(m: np.ndarray, step: int) -> np.ndarray:
    n = _neighbours(m)
    b = sum(x.astype(np.int16) for x in n)
    ring = n + n[:1]
    a = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.int16) for i in range(8))
    p2, _, p4, _, p6, _, p8, _ = n
    if step == 0:
        c = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        c = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return (m == 1) & (b >= 2) & (b <= 6) & (a == 1) & c


def _zs_point(m: np.ndarray, y: int, x: int, step: int) -> bool:
    """Zhang-Suen deletion test for one pixel on the current image."""
    h, w = m.shape

    def at(yy, xx):
        return int(m[yy, xx]) if 0 <= yy < h and 0 <= xx < w else 0

    n = [
        at(y - 1, x), at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
        at(y + 1, x), at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1),
    ]  # fmt: skip
    b = sum(n)
    a = sum(1 for i in range(8) if n[i] == 0 and n[(i + 1) % 8] == 1)
    p2, _, p4, _, p6, _, p8, _ = n
    if step == 0:
        c = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
    else:
        c = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
    return m[y, x] == 1 and 2 <= b <= 6 and a == 1 and c


def _topology_kept(before: np.ndarray, after: np.ndarray) -> bool:
    lb, nb = ndimage.label(before, structure=EIGHT_CONNECTED)
    _, na = ndimage.label(after, structure=EIGHT_CONNECTED)
    if na != nb:
        return False
    survivors = np.unique(lb[after == 1])
    return survivors.size == nb


def _is_simple(m: np.ndarray, y: int, x: int) -> bool:
    """True if deleting a non-end pixel keeps 8-connected topology.

    Uses Yokoi's 8-connectivity number over the ring E, NE, N, NW, W, SW,
    S, SE; the pixel is simple when it equals 1.
    """
    h, w = m.shape

    def bg(yy, xx):
        return 0 if 0 <= yy < h and 0 <= xx < w and m[yy, xx] else 1

    ring = [
        bg(y, x + 1), bg(y - 1, x + 1), bg(y - 1, x), bg(y - 1, x - 1),
        bg(y, x - 1), bg(y + 1, x - 1), bg(y + 1, x), bg(y + 1, x + 1),
    ]  # fmt: skip
    if 8 - sum(ring) < 2:
        return False
    yokoi = sum(ring[k] - ring[k] * ring[(k + 1) % 8] * ring[(k + 2) % 8] for k in (0, 2, 4, 6))
    return yokoi == 1


def _break_blocks(m: np.ndarray) -> None:
    """Delete simple pixels from any remaining 2x2 foreground blocks (in place)."""
    while True:
        blocks = m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1] & m[1:, 1:]
        ys, xs = np.nonzero(blocks)
        changed = False
        for y, x in zip(ys, xs):
            if not (m[y, x] & m[y, x + 1] & m[y + 1, x] & m[y + 1, x + 1]):
                continue
            for yy, xx in ((y, x), (y, x + 1), (y + 1, x), (y + 1, x + 1)):
                if _is_simple(m, yy, xx):
                    m[yy, xx] = 0
                    changed = True
                    break
        if not changed:
            return


def thin(bin_img: BinaryImage) -> BinaryImage:
    """Zhang-Suen thinning run to a fixpoint.

    Each sub-iteration deletes its candidates in parallel. If a parallel
    deletion would erase or split an 8-connected component (the 2x2 square
    and two-pixel-thick diagonal cases), that sub-iteration is redone
    sequentially in raster order, re-testing every candidate on the current
    image. Any 2x2 block left at the fixpoint is broken by deleting one
    simple pixel.
    """
    m = bin_img.mask.astype(np.uint8).copy()
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            cand = _zs_candidates(m, step)
            if not cand.any():
                continue
            after = m & ~cand
            if not _topology_kept(m, after):
                after = m.copy()
                for y, x in zip(*np.nonzero(cand)):
                    if _zs_point(after, y, x, step) and _is_simple(after, y, x):
                        after[y, x] = 0
            if not np.array_equal(after, m):
                m = after
                changed = True
    _break_blocks(m)
    return BinaryImage(m)


# --- pruning ----------------------------------------------------------------

_OFFSETS_4 = ((-1, 0), (0, 1), (1, 0), (0, -1))
_OFFSETS_DIAG = ((-1, 1), (1, 1), (1, -1), (-1, -1))


def _crossing_numbers(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = _neighbours(m)
    b = sum(x.astype(np.int16) for x in n)
    ring = n + n[:1]
    a = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.int16) for i in range(8))
    return b, a


def prune(skel: BinaryImage, max_spur: int) -> BinaryImage:
    """Remove spur branches of at most ``max_spur`` pixels.

    A spur is walked from an end point (one neighbour, or two mutually
    adjacent neighbours) until it meets a junction (crossing number >= 3).
    Spurs that reach a junction within ``max_spur`` pixels are deleted;
    junction pixels, loops and longer branches are left untouched.
    """
    if max_spur <= 0:
        return skel
    m = skel.mask
    h, w = m.shape
    b, a = _crossing_numbers(m)
    junction = (m == 1) & (a >= 3)
    endpoint = (m == 1) & ((b == 1) | ((b == 2) & (a == 1)))
    out = m.copy()

    def fg(y, x):
        return 0 <= y < h and 0 <= x < w and m[y, x] == 1

    for ey, ex in zip(*np.nonzero(endpoint)):
        path = [(ey, ex)]
        seen = {(ey, ex)}
        cur = (ey, ex)
        reached = False
        while len(path) <= max_spur:
            nbrs = [
                (cur[0] + dy, cur[1] + dx)
                for dy, dx in _OFFSETS_4 + _OFFSETS_DIAG
                if fg(cur[0] + dy, cur[1] + dx) and (cur[0] + dy, cur[1] + dx) not in seen
            ]
            if any(junction[p] for p in nbrs):
                reached = True
                break
            if not nbrs:
                break
            nxt = nbrs[0]  # 4-neighbours come first
            if len(nbrs) > 1 and not all(
                abs(p[0] - nxt[0]) <= 1 and abs(p[1] - nxt[1]) <= 1 for p in nbrs
            ):
                break
            seen.update(nbrs[:1])
            path.append(nxt)
            cur = nxt
        if reached and len(path) <= max_spur:
            for y, x in path:
                out[y, x] = 0
    return BinaryImage(out)


def preprocess_pipeline(img: GrayImage, cfg: PipelineConfig | None = None) -> BinaryImage:
    """Full skeleton extraction; deterministic for a fixed image and config."""
    cfg = cfg or PipelineConfig()
    se = StructuringElement.disk(cfg.background_se_radius)
    x = invert(img)
    x = subtract_background(x, se)
    x = contrast_stretch(x)
    x = smooth(x, cfg.smoothing_sigma)
    x = wiener_filter(x, cfg.wiener_window)
    mf = cfg.matched_filter
    if mf.enabled:
        x = matched_filter(invert(x), mf.sigma, mf.length, mf.orientations)
    if cfg.threshold_mode == "otsu":
        binary, _ = threshold_otsu(x)
    else:
        binary = threshold_fixed(x, cfg.threshold_level)
    hand = segment_hand(img, cfg.hand_margin)
    binary = BinaryImage(binary.mask & hand.mask)
    binary = remove_small_components(binary, cfg.min_component_area)
    skel = thin(binary)
    return prune(skel, cfg.prune_length)
