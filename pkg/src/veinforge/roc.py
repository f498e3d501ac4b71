"""Threshold sweeps over distance scores (accept when distance <= threshold)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyScoreList


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float


def sweep_thresholds(genuine, impostor) -> RocCurve:
    """FAR/FRR at every distinct observed score plus -inf and +inf.

    A trial is accepted when its distance is <= the threshold, so FAR is
    non-decreasing and FRR non-increasing along the sweep. The EER is read
    where ``FAR - FRR`` changes sign, interpolating linearly between the two
    bracketing thresholds. Infinite scores (e.g. gate rejections) are never
    accepted at a finite threshold.
    """
    g = np.asarray(genuine, dtype=np.float64)
    i = np.asarray(impostor, dtype=np.float64)
    if g.size == 0 or i.size == 0:
        raise EmptyScoreList("genuine and impostor score lists must be non-empty")
    finite = np.unique(np.concatenate([g, i])[np.isfinite(np.concatenate([g, i]))])
    thresholds = np.concatenate([[-np.inf], finite, [np.inf]])
    gs, is_ = np.sort(g), np.sort(i)
    far = np.searchsorted(is_, thresholds, side="right") / i.size
    frr = 1.0 - np.searchsorted(gs, thresholds, side="right") / g.size
    # +inf accepts everything, including infinite scores
    far[-1], frr[-1] = 1.0, 0.0
    diff = far - frr
    k = int(np.argmax(diff >= 0))  # diff[-1] = 1 so a crossing always exists
    if diff[k] == 0 or k == 0:
        eer, thr = float(far[k]), float(thresholds[k])
    else:
        d0, d1 = diff[k - 1], diff[k]
        t = d0 / (d0 - d1)
        eer = float(far[k - 1] + t * (far[k] - far[k - 1]))
        t0, t1 = thresholds[k - 1], thresholds[k]
        if np.isfinite(t0) and np.isfinite(t1):
            thr = float(t0 + t * (t1 - t0))
        else:
            thr = float(t1 if np.isfinite(t1) else t0)
    return RocCurve(thresholds, far, frr, eer, thr)


def rates_at(genuine, impostor, threshold: float) -> tuple[float, float]:
    """(FAR, FRR) at a single threshold."""
    g = np.asarray(genuine, dtype=np.float64)
    i = np.asarray(impostor, dtype=np.float64)
    return float(np.mean(i <= threshold)), float(np.mean(~(g <= threshold)))
