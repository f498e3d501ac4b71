"""FAR/FRR experiments, threshold sweeps and the matching-time benchmark.

Default protocol: identities are taken in order of first appearance and
the last 20% are withheld from enrollment. Each enrolled identity enrolls
its first sample; its remaining samples are genuine attempts against
their own identity. Every sample of a withheld identity is an impostor
attempt against every enrolled identity. A trial is accepted when its
distance is at or below the threshold (for the pixel method the distance
is ``1 - similarity``).
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import InsufficientData, IoFailure, NoAttempts, ProtocolViolation
from .matching import OpCounter, pixel_similarities, qif_distances, vein_score
from .raster import BinaryImage
from .roc import RocCurve, sweep_thresholds
from .veinspace import (
    DEFAULT_MAX_POINTS,
    extract_coordinates,
    grid_from_coordinates,
    train,
)

DEFAULT_SIZES = (20, 40, 60, 80, 100)
HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class TrialCounts:
    impostor_attempts: int = 0
    impostor_accepts: int = 0
    genuine_attempts: int = 0
    genuine_rejects: int = 0

    def __post_init__(self):
        if min(self.impostor_attempts, self.genuine_attempts, self.impostor_accepts, self.genuine_rejects) < 0:
            raise ValueError("counts must be >= 0")
        if self.impostor_accepts > self.impostor_attempts or self.genuine_rejects > self.genuine_attempts:
            raise ValueError("accepts/rejects cannot exceed attempts")


def far(c: TrialCounts) -> float:
    """Impostor accepts over impostor attempts."""
    if c.impostor_attempts < 1:
        raise NoAttempts("no impostor attempts")
    return c.impostor_accepts / c.impostor_attempts


def frr(c: TrialCounts) -> float:
    """Genuine rejects over genuine attempts."""
    if c.genuine_attempts < 1:
        raise NoAttempts("no genuine attempts")
    return c.genuine_rejects / c.genuine_attempts


def counts_at(genuine, impostor, threshold: float) -> TrialCounts:
    g = np.asarray(genuine, dtype=np.float64)
    i = np.asarray(impostor, dtype=np.float64)
    return TrialCounts(
        impostor_attempts=int(i.size),
        impostor_accepts=int(np.count_nonzero(i <= threshold)),
        genuine_attempts=int(g.size),
        genuine_rejects=int(np.count_nonzero(~(g <= threshold))),
    )


@dataclass(frozen=True)
class LabeledSkeleton:
    label: str
    skeleton: BinaryImage

    @property
    def coords(self) -> np.ndarray:
        return extract_coordinates(self.skeleton)


@dataclass(frozen=True)
class EvalRow:
    n_images: int
    far: float
    frr: float


@dataclass
class EvalReport:
    method: str
    threshold: float
    eer: float
    rows: list[EvalRow] = field(default_factory=list)
    curves: dict[int, RocCurve] = field(default_factory=dict, repr=False)


@dataclass(frozen=True)
class TimingRow:
    n_images: int
    pixel_seconds: float
    qif_seconds: float
    speedup: float
    pixel_ops: int = 0
    qif_ops: int = 0

    @property
    def op_ratio(self) -> float:
        return self.pixel_ops / self.qif_ops if self.qif_ops else float("inf")


@dataclass
class TimingTable:
    rows: list[TimingRow] = field(default_factory=list)


# --- protocol -----------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    enrolled: list[LabeledSkeleton]
    genuine: list[LabeledSkeleton]
    impostor: list[LabeledSkeleton]


def default_split(dataset: Sequence[LabeledSkeleton], holdout: float = HOLDOUT_FRACTION) -> Split:
    """Enroll sample 0 per identity; withhold the last ``holdout`` share of identities."""
    order: list[str] = []
    for item in dataset:
        if item.label not in order:
            order.append(item.label)
    if len(order) < 2:
        raise ProtocolViolation("need at least two identities")
    n_out = min(max(1, int(round(holdout * len(order)))), len(order) - 1)
    withheld = set(order[len(order) - n_out :])
    enrolled, genuine, impostor, seen = [], [], [], set()
    for item in dataset:
        if item.label in withheld:
            impostor.append(item)
        elif item.label not in seen:
            seen.add(item.label)
            enrolled.append(item)
        else:
            genuine.append(item)
    return Split(enrolled, genuine, impostor)


def qif_scores(split: Split, tau: float = 0.95, max_points: int = DEFAULT_MAX_POINTS):
    """Genuine and impostor distances in vein space; gate rejections score +inf."""
    model = train([(s.label, s.coords) for s in split.enrolled], tau=tau, max_points=max_points)
    labels = model.labels()
    index = {lab: i for i, lab in enumerate(labels)}

    def distances(item):
        grid = grid_from_coordinates(item.coords, model.dims)
        if vein_score(model, grid) > model.theta_vein:
            return np.full(len(labels), np.inf)
        return qif_distances(model, grid)[1]

    genuine = []
    for item in split.genuine:
        if item.label not in index:
            raise ProtocolViolation(f"genuine probe {item.label!r} is not enrolled")
        genuine.append(distances(item)[index[item.label]])
    impostor = [d for item in split.impostor for d in distances(item)]
    return np.array(genuine), np.array(impostor), model


def pixel_scores(split: Split):
    """Genuine and impostor ``1 - overlap similarity`` distances."""
    stack = np.stack([s.skeleton.mask.astype(bool) for s in split.enrolled])
    counts = stack.sum(axis=(1, 2))
    index = {s.label: i for i, s in enumerate(split.enrolled)}
    genuine = []
    for item in split.genuine:
        if item.label not in index:
            raise ProtocolViolation(f"genuine probe {item.label!r} is not enrolled")
        genuine.append(1.0 - pixel_similarities(stack, counts, item.skeleton)[index[item.label]])
    impostor = [
        d for item in split.impostor for d in 1.0 - pixel_similarities(stack, counts, item.skeleton)
    ]
    return np.array(genuine), np.array(impostor)


def method_name(method: str, tau: float) -> str:
    return f"qif(tau={tau:g})" if method == "qif" else "pixel"


def run_experiment(
    dataset: Sequence[LabeledSkeleton],
    method: str = "qif",
    tau: float = 0.95,
    sizes: Sequence[int] = DEFAULT_SIZES,
    threshold: float | None = None,
    holdout: float = HOLDOUT_FRACTION,
) -> EvalReport:
    """FAR/FRR for the first ``n`` images of ``dataset`` at each requested size.

    ``threshold=None`` operates each row at the equal-error threshold of its
    own sweep; a number fixes the distance threshold for every row. The
    report's EER and threshold come from the largest evaluated size.
    """
    if method not in ("qif", "pixel"):
        raise ValueError(f"unknown method {method!r}")
    usable = sorted({n for n in sizes if n <= len(dataset)})
    if not usable:
        usable = [len(dataset)]
    report = EvalReport(method=method_name(method, tau), threshold=float("nan"), eer=float("nan"))
    for n in usable:
        split = default_split(dataset[:n], holdout)
        if not split.genuine or not split.impostor:
            raise ProtocolViolation(f"size {n} yields no genuine or no impostor attempts")
        if method == "qif":
            genuine, impostor, _ = qif_scores(split, tau)
        else:
            genuine, impostor = pixel_scores(split)
        curve = sweep_thresholds(genuine, impostor)
        thr = curve.eer_threshold if threshold is None else float(threshold)
        c = counts_at(genuine, impostor, thr)
        report.rows.append(EvalRow(n, far(c), frr(c)))
        report.curves[n] = curve
        report.threshold, report.eer = thr, curve.eer
    return report


# --- timing -------------------------------------------------------------------


def bench_timing(
    dataset: Sequence[LabeledSkeleton],
    sizes: Sequence[int] = DEFAULT_SIZES,
    repetitions: int = 3,
    tau: float = 0.95,
) -> TimingTable:
    """Matching-phase wall clock for both methods, median over repetitions.

    For size T the first T images are enrolled and then each is presented
    as a probe against all T templates. Enrollment and training are not
    timed. QIF matching covers grid construction, projection and the
    distance loop; pixel matching covers the overlap counts.
    """
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    if any(t > len(dataset) or t < 2 for t in sizes):
        raise InsufficientData(f"sizes {list(sizes)} exceed dataset of {len(dataset)} images")
    table = TimingTable()
    with threadpool_limits(limits=1):
        for t in sizes:
            items = list(dataset[:t])
            coords = [s.coords for s in items]
            model = train([(s.label, c) for s, c in zip(items, coords)], tau=tau)
            stack = np.stack([s.skeleton.mask.astype(bool) for s in items])
            counts = stack.sum(axis=(1, 2))
            probes = [s.skeleton for s in items]

            def run_qif(counter=None):
                for c in coords:
                    qif_distances(model, grid_from_coordinates(c, model.dims), counter)

            def run_pixel(counter=None):
                for p in probes:
                    pixel_similarities(stack, counts, p, counter)

            qif_times, pixel_times = [], []
            for _ in range(repetitions):
                start = time.perf_counter()
                run_qif()
                qif_times.append(time.perf_counter() - start)
                start = time.perf_counter()
                run_pixel()
                pixel_times.append(time.perf_counter() - start)
            qc, pc = OpCounter(), OpCounter()
            run_qif(qc)
            run_pixel(pc)
            q, p = statistics.median(qif_times), statistics.median(pixel_times)
            table.rows.append(TimingRow(t, p, q, p / q, pc.elements // t, qc.elements // t))
    return table


# --- CSV ------------------------------------------------------------------------

EVAL_HEADER = ["n_images", "far", "frr"]
TIMING_HEADER = ["n_images", "pixel_seconds", "qif_seconds", "speedup", "pixel_ops", "qif_ops"]


def emit_csv(report: EvalReport | TimingTable, path) -> None:
    """Header plus one line per row; rates as %.4f, seconds as %.3f."""
    try:
        _write_csv(report, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _write_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if isinstance(report, TimingTable):
            fh.write(",".join(TIMING_HEADER) + "\n")
            for r in report.rows:
                fh.write(
                    f"{r.n_images},{r.pixel_seconds:.3f},{r.qif_seconds:.3f},"
                    f"{r.speedup:.3f},{r.pixel_ops},{r.qif_ops}\n"
                )
        else:
            fh.write(",".join(EVAL_HEADER) + "\n")
            for r in report.rows:
                fh.write(f"{r.n_images},{r.far:.4f},{r.frr:.4f}\n")


def read_csv(path) -> list[EvalRow] | list[TimingRow]:
    """Parse a file written by :func:`emit_csv` back into rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header == EVAL_HEADER:
        return [EvalRow(int(n), float(a), float(r)) for n, a, r in rows]
    if header == TIMING_HEADER:
        return [
            TimingRow(int(n), float(p), float(q), float(s), int(po), int(qo))
            for n, p, q, s, po, qo in rows
        ]
    raise ValueError(f"unrecognised CSV header {header}")


def emit_summary(reports: Sequence[EvalReport], path) -> None:
    """One line per method with the operating threshold and EER."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("method,threshold,eer\n")
        for r in reports:
            fh.write(f"{r.method},{r.threshold:.6g},{r.eer:.4f}\n")
