"""Vein-space decisions and the pixel-overlap baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import BothEmpty, DimensionMismatch, EmptyModel, UnknownLabel
from .raster import BinaryImage
from .veinspace import VeinSpaceModel, project, residual


class Outcome(str, Enum):
    ACCEPTED = "accepted"
    REJECTED_NOT_A_VEIN = "rejected_not_a_vein"
    REJECTED_UNKNOWN = "rejected_unknown"


@dataclass(frozen=True)
class MatchDecision:
    outcome: Outcome
    best_label: str | None
    distance: float
    vein_score: float

    @property
    def accepted(self) -> bool:
        return self.outcome is Outcome.ACCEPTED


class OpCounter:
    """Tally of scalar elements touched while matching."""

    def __init__(self):
        self.elements = 0

    def add(self, n: int) -> None:
        self.elements += int(n)


def euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes {a.shape} and {b.shape} differ")
    # hypot rescales internally, so tiny differences do not underflow to 0
    return math.hypot(*(a - b).tolist())


def _template_matrix(model: VeinSpaceModel) -> np.ndarray:
    if not model.templates:
        raise EmptyModel("model has no enrolled templates")
    return np.array([w for _, w in model.templates]).reshape(len(model.templates), model.K)


def qif_distances(model: VeinSpaceModel, probe: np.ndarray, counter: OpCounter | None = None):
    """Weights of ``probe`` and its distance to every template, in enrollment order."""
    templates = _template_matrix(model)
    w = project(probe, model.mean, model.eigenveins)
    diff = templates - w
    if counter is not None:
        counter.add(probe.size + templates.size)
    return w, np.sqrt(np.einsum("ij,ij->i", diff, diff))


def vein_score(model: VeinSpaceModel, probe: np.ndarray) -> float:
    return residual(probe, model.mean, basis=model.basis)


def identify(model: VeinSpaceModel, probe: np.ndarray) -> MatchDecision:
    """Vein-ness gate, then nearest template by Euclidean distance.

    Ties go to the earliest enrolled template.
    """
    if not model.templates:
        raise EmptyModel("model has no enrolled templates")
    score = vein_score(model, probe)
    if score > model.theta_vein:
        return MatchDecision(Outcome.REJECTED_NOT_A_VEIN, None, float("inf"), score)
    _, dist = qif_distances(model, probe)
    best = int(np.argmin(dist))
    label = model.templates[best][0]
    outcome = Outcome.ACCEPTED if dist[best] <= model.theta_id else Outcome.REJECTED_UNKNOWN
    return MatchDecision(outcome, label, float(dist[best]), score)


def verify(model: VeinSpaceModel, probe: np.ndarray, claimed: str) -> MatchDecision:
    """Like :func:`identify` but only the claimed identity's templates count."""
    if not model.templates:
        raise EmptyModel("model has no enrolled templates")
    claimed = str(claimed)
    rows = [i for i, (label, _) in enumerate(model.templates) if label == claimed]
    if not rows:
        raise UnknownLabel(f"label {claimed!r} is not enrolled")
    score = vein_score(model, probe)
    if score > model.theta_vein:
        return MatchDecision(Outcome.REJECTED_NOT_A_VEIN, claimed, float("inf"), score)
    _, dist = qif_distances(model, probe)
    d = float(dist[rows].min())
    outcome = Outcome.ACCEPTED if d <= model.theta_id else Outcome.REJECTED_UNKNOWN
    return MatchDecision(outcome, claimed, d, score)


# --- pixel-by-pixel baseline ------------------------------------------------


def pixel_similarity(a: BinaryImage, b: BinaryImage, mode: str = "max") -> float:
    """Overlap count normalised by ``max(|A|, |B|)`` (or ``|A u B|`` for jaccard)."""
    if a.mask.shape != b.mask.shape:
        raise DimensionMismatch(f"raster shapes {a.mask.shape} and {b.mask.shape} differ")
    na, nb = a.count(), b.count()
    if na == 0 and nb == 0:
        raise BothEmpty("both rasters are empty")
    overlap = int(np.count_nonzero(a.mask & b.mask))
    if mode == "jaccard":
        return overlap / (na + nb - overlap)
    return overlap / max(na, nb)


def pixel_similarities(
    stack: np.ndarray, counts: np.ndarray, probe: BinaryImage, counter: OpCounter | None = None
) -> np.ndarray:
    """Max-normalised overlap of ``probe`` against a ``(T, H, W)`` template stack."""
    if stack.shape[1:] != probe.mask.shape:
        raise DimensionMismatch(f"template shape {stack.shape[1:]} vs probe {probe.mask.shape}")
    overlap = np.count_nonzero(stack & probe.mask.astype(bool), axis=(1, 2))
    if counter is not None:
        counter.add(stack.size)
    denom = np.maximum(counts, probe.count())
    if np.any(denom == 0):
        raise BothEmpty("probe and a template are both empty")
    return overlap / denom


def _stack(templates: Sequence[tuple[str, BinaryImage]]):
    if not templates:
        raise EmptyModel("no pixel templates enrolled")
    shape = templates[0][1].mask.shape
    for _, t in templates:
        if t.mask.shape != shape:
            raise DimensionMismatch("template rasters differ in size")
    stack = np.stack([t.mask.astype(bool) for _, t in templates])
    return stack, stack.sum(axis=(1, 2))


def pixel_identify(
    templates: Sequence[tuple[str, BinaryImage]], probe: BinaryImage, theta_px: float
) -> MatchDecision:
    """Best-overlap template; accepted when similarity >= ``theta_px``."""
    stack, counts = _stack(templates)
    sims = pixel_similarities(stack, counts, probe)
    best = int(np.argmax(sims))
    s = float(sims[best])
    outcome = Outcome.ACCEPTED if s >= theta_px else Outcome.REJECTED_UNKNOWN
    return MatchDecision(outcome, templates[best][0], 1.0 - s, 0.0)


def pixel_verify(
    templates: Sequence[tuple[str, BinaryImage]], probe: BinaryImage, claimed: str, theta_px: float
) -> MatchDecision:
    claimed = str(claimed)
    chosen = [(lab, t) for lab, t in templates if str(lab) == claimed]
    if not templates:
        raise EmptyModel("no pixel templates enrolled")
    if not chosen:
        raise UnknownLabel(f"label {claimed!r} is not enrolled")
    stack, counts = _stack(chosen)
    s = float(pixel_similarities(stack, counts, probe).max())
    outcome = Outcome.ACCEPTED if s >= theta_px else Outcome.REJECTED_UNKNOWN
    return MatchDecision(outcome, claimed, 1.0 - s, 0.0)
