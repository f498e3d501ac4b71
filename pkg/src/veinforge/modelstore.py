"""Binary persistence of trained vein-space models.

Layout (all integers u32 little-endian, all reals f64 little-endian)::

    offset  size       field
    0       4          magic b"VQIF"
    4       4          version (1)
    8       16         M, N, K, T
    24      24         tau, theta_vein, theta_id
    48      8*M*2N     mean grid, row-major
            8*K        eigenvalues of the selected directions
            8*K*2N     eigenveins, one vector after another
            ...        T records: label length, UTF-8 label, K weights

The training image count is not part of the layout; a loaded model reports
``dims.I = max(T, 1)``.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import BadMagic, CorruptLength, IoFailure, UnsupportedVersion
from .veinspace import TrainingDims, VeinSpaceModel

MAGIC = b"VQIF"
VERSION = 1
_HEAD = struct.Struct("<4s5I3d")


def encoded_length(M: int, N: int, K: int, labels) -> int:
    fixed = _HEAD.size + 8 * (M * 2 * N + K + K * 2 * N)
    return fixed + sum(4 + len(lab.encode("utf-8")) + 8 * K for lab in labels)


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def encode_model(model: VeinSpaceModel) -> bytes:
    M, N, K = model.dims.M, model.dims.N, model.K
    parts = [
        _HEAD.pack(
            MAGIC, VERSION, M, N, K, len(model.templates),
            float(model.tau), float(model.theta_vein), float(model.theta_id),
        ),
        _f64(model.mean),
        _f64(model.eigenvalues[:K]),
        _f64(model.eigenveins),
    ]
    for label, w in model.templates:
        raw = label.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, _f64(w)]
    return b"".join(parts)


def decode_model(buf: bytes) -> VeinSpaceModel:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {bytes(buf[:4])!r}")
    if len(buf) < _HEAD.size:
        raise CorruptLength(f"header needs {_HEAD.size} bytes, file has {len(buf)}")
    _, version, M, N, K, T, tau, theta_vein, theta_id = _HEAD.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} (reader supports {VERSION})")
    if M < 1 or N < 1 or K < 1 or K > 2 * N:
        raise CorruptLength(f"implausible dims M={M} N={N} K={K}")

    off = _HEAD.size

    def take(count: int) -> np.ndarray:
        nonlocal off
        end = off + 8 * count
        if end > len(buf):
            raise CorruptLength(f"payload ends at {len(buf)}, need {end}")
        out = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(np.float64)
        off = end
        return out

    mean = take(M * 2 * N).reshape(M, 2 * N)
    values = take(K)
    veins = take(K * 2 * N).reshape(K, 2 * N)
    templates = []
    for _ in range(T):
        if off + 4 > len(buf):
            raise CorruptLength("template record truncated")
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + n > len(buf):
            raise CorruptLength("template label truncated")
        label = bytes(buf[off : off + n]).decode("utf-8")
        off += n
        templates.append((label, take(K)))
    if off != len(buf):
        raise CorruptLength(f"{len(buf) - off} trailing bytes after last template")
    return VeinSpaceModel(
        dims=TrainingDims(M, N, max(T, 1)),
        mean=mean,
        tau=tau,
        eigenvalues=values,
        eigenveins=veins,
        templates=templates,
        theta_vein=theta_vein,
        theta_id=theta_id,
    )


def save_model(model: VeinSpaceModel, path) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    data = encode_model(model)
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".vqif-", dir=folder)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write model to {path}: {exc}") from exc


def load_model(path) -> VeinSpaceModel:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read model {path}: {exc}") from exc
    return decode_model(buf)


def same_model(a: VeinSpaceModel, b: VeinSpaceModel) -> bool:
    """Bit-pattern equality of every persisted field."""

    def bits(x):
        return np.ascontiguousarray(x, dtype="<f8").tobytes()

    if (a.dims.M, a.dims.N, a.K) != (b.dims.M, b.dims.N, b.K):
        return False
    head = [a.tau, a.theta_vein, a.theta_id], [b.tau, b.theta_vein, b.theta_id]
    if bits(head[0]) != bits(head[1]):
        return False
    if bits(a.mean) != bits(b.mean) or bits(a.eigenveins) != bits(b.eigenveins):
        return False
    if bits(a.eigenvalues[: a.K]) != bits(b.eigenvalues[: b.K]):
        return False
    if [lab for lab, _ in a.templates] != [lab for lab, _ in b.templates]:
        return False
    return all(bits(wa) == bits(wb) for (_, wa), (_, wb) in zip(a.templates, b.templates))
