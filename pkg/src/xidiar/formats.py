"""File formats: RTTM, UEM, SAD label files, matrices, change tracks, MLP weights.

Matrix binary layout (little-endian)::

    6 bytes  magic  b"XIMAT\\0"
    u16      version (1)
    u64      rows
    u64      cols
    f64 * rows * cols, row-major

The text form is a header line ``XIMAT 1 <rows> <cols>`` followed by one
line per row of space-separated floats in round-trip precision.
"""
from __future__ import annotations

import io
import json
import struct
from collections import defaultdict
from pathlib import Path

import numpy as np

from .annotation import TimedLabeling, Turn
from .domain import MlpModel, Layer
from .errors import FormatError
from .segmentation import ChangeScoreTrack, Segment, SegmentList

MATRIX_MAGIC = b"XIMAT\x00"
MLP_MAGIC = b"XIMLP\x00"
FORMAT_VERSION = 1
_MATRIX_HEADER = struct.Struct("<6sHQQ")


# --- RTTM / UEM / label files -------------------------------------------------

def format_rttm(labeling: TimedLabeling) -> str:
    lines = []
    for t in sorted(labeling.turns, key=lambda t: (t.onset, t.label, t.duration)):
        # round both edges to the millisecond so touching turns still touch
        a, b = round(t.onset * 1000), round(t.end * 1000)
        if b <= a:
            continue
        lines.append(f"SPEAKER {labeling.uri} 1 {a / 1000:.3f} {(b - a) / 1000:.3f} <NA> <NA> {t.label} <NA> <NA>")
    return "".join(line + "\n" for line in lines)


def write_rttm(path, labelings):
    if isinstance(labelings, TimedLabeling):
        labelings = [labelings]
    Path(path).write_text("".join(format_rttm(l) for l in sorted(labelings, key=lambda l: l.uri)))


def parse_rttm(text: str) -> dict[str, TimedLabeling]:
    turns = defaultdict(list)
    for n, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#") or parts[0] != "SPEAKER":
            continue
        if len(parts) < 8:
            raise FormatError(f"RTTM line {n}: expected at least 8 fields, got {len(parts)}")
        try:
            onset, dur = float(parts[3]), float(parts[4])
        except ValueError as exc:
            raise FormatError(f"RTTM line {n}: {exc}") from exc
        if dur <= 0:
            continue
        turns[parts[1]].append(Turn(onset, dur, parts[7]))
    return {uri: TimedLabeling(uri, t) for uri, t in sorted(turns.items())}


def read_rttm(path) -> dict[str, TimedLabeling]:
    return parse_rttm(Path(path).read_text())


def parse_uem(text: str) -> dict[str, list[tuple[float, float]]]:
    out = defaultdict(list)
    for n, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 4:
            raise FormatError(f"UEM line {n}: expected 4 fields, got {len(parts)}")
        out[parts[0]].append((float(parts[2]), float(parts[3])))
    return dict(out)


def read_uem(path) -> dict[str, list[tuple[float, float]]]:
    return parse_uem(Path(path).read_text())


def format_uem(uems: dict[str, list[tuple[float, float]]]) -> str:
    return "".join(f"{uri} 1 {s:.3f} {e:.3f}\n" for uri in sorted(uems) for s, e in uems[uri])


def parse_label_file(text: str, uri: str) -> TimedLabeling:
    """``<onset> <end> [label]`` per line; label defaults to ``speech``."""
    turns = []
    for n, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) < 2:
            raise FormatError(f"label line {n}: expected '<onset> <end> [label]'")
        s, e = float(parts[0]), float(parts[1])
        if e > s:
            turns.append(Turn(s, e - s, parts[2] if len(parts) > 2 else "speech"))
    return TimedLabeling(uri, turns)


def read_sad(path, uri: str | None = None) -> TimedLabeling:
    """SAD from RTTM (any speaker label counts as speech) or a label file."""
    path = Path(path)
    text = path.read_text()
    if any(line.startswith("SPEAKER") for line in text.splitlines()):
        labs = parse_rttm(text)
        if uri is None:
            if len(labs) != 1:
                raise FormatError(f"{path}: RTTM holds {len(labs)} uris; pass one explicitly")
            uri = next(iter(labs))
        lab = labs.get(uri, TimedLabeling(uri, []))
        return TimedLabeling.from_intervals(uri, lab.speech())
    return parse_label_file(text, uri or path.name.split(".")[0])


# --- matrices ------------------------------------------------------------------

def matrix_to_bytes(m: np.ndarray) -> bytes:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.ndim != 2:
        raise FormatError(f"matrix must be 2-D, got shape {m.shape}")
    return _MATRIX_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, m.shape[0], m.shape[1]) + m.astype("<f8").tobytes(order="C")


def matrix_from_stream(f) -> np.ndarray:
    head = f.read(_MATRIX_HEADER.size)
    if len(head) != _MATRIX_HEADER.size:
        raise FormatError("truncated matrix header")
    magic, version, rows, cols = _MATRIX_HEADER.unpack(head)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad matrix magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported matrix version {version}")
    data = f.read(8 * rows * cols)
    if len(data) != 8 * rows * cols:
        raise FormatError("truncated matrix payload")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(np.float64)


def matrix_to_text(m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    lines = [f"XIMAT {FORMAT_VERSION} {m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in m]
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> np.ndarray:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise FormatError("empty matrix text")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "XIMAT":
        raise FormatError(f"bad matrix text header {lines[0]!r}")
    if int(head[1]) != FORMAT_VERSION:
        raise FormatError(f"unsupported matrix version {head[1]}")
    rows, cols = int(head[2]), int(head[3])
    body = lines[1:]
    if len(body) != rows:
        raise FormatError(f"expected {rows} rows, found {len(body)}")
    out = np.zeros((rows, cols))
    for i, line in enumerate(body):
        vals = line.split()
        if len(vals) != cols:
            raise FormatError(f"row {i}: expected {cols} values, found {len(vals)}")
        out[i] = [float(v) for v in vals]
    return out


def write_matrix(path, m: np.ndarray, text: bool = False):
    if text:
        Path(path).write_text(matrix_to_text(m))
    else:
        Path(path).write_bytes(matrix_to_bytes(m))


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data.startswith(MATRIX_MAGIC):
        return matrix_from_stream(io.BytesIO(data))
    if data.startswith(b"XIMAT"):
        return matrix_from_text(data.decode("ascii"))
    raise FormatError(f"{path}: not a matrix file")


# --- change-score tracks and segment lists ------------------------------------

def write_track(path, track: ChangeScoreTrack, text: bool = False):
    write_matrix(path, np.column_stack([track.times(), track.scores]), text)


def read_track(path) -> ChangeScoreTrack:
    m = read_matrix(path)
    if m.shape[1] != 2:
        raise FormatError(f"{path}: a change track has 2 columns (time, score), got {m.shape[1]}")
    if len(m) == 0:
        return ChangeScoreTrack(np.zeros(0), 0.01, 0.0)
    if len(m) == 1:
        return ChangeScoreTrack(m[:, 1], 0.01, float(m[0, 0]))
    steps = np.diff(m[:, 0])
    step = float(np.median(steps))
    if step <= 0 or np.max(np.abs(steps - step)) > 1e-6:
        raise FormatError(f"{path}: change track times are not uniformly spaced")
    return ChangeScoreTrack(m[:, 1], step, float(m[0, 0]))


def format_segments(segs: SegmentList) -> str:
    return "".join(f"{s.onset!r} {s.end!r} {s.parent}\n" for s in segs.segments)


def parse_segments(text: str, uri: str) -> SegmentList:
    out = SegmentList(uri)
    for line in text.splitlines():
        parts = line.split()
        if parts:
            s, e = float(parts[0]), float(parts[1])
            out.segments.append(Segment(s, e - s, int(parts[2]) if len(parts) > 2 else 0))
    return out


# --- MLP weights ---------------------------------------------------------------

def mlp_to_bytes(model: MlpModel) -> bytes:
    meta = json.dumps(model.metadata, sort_keys=True).encode()
    out = [MLP_MAGIC, struct.pack("<HI", FORMAT_VERSION, len(meta)), meta, struct.pack("<I", len(model.layers))]
    for layer in model.layers:
        tag = layer.activation.value.encode("ascii")
        out += [struct.pack("<B", len(tag)), tag, matrix_to_bytes(layer.weight), matrix_to_bytes(layer.bias[None, :])]
    return b"".join(out)


def mlp_from_bytes(data: bytes) -> MlpModel:
    f = io.BytesIO(data)
    if f.read(len(MLP_MAGIC)) != MLP_MAGIC:
        raise FormatError("bad MLP magic")
    version, meta_len = struct.unpack("<HI", f.read(6))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported MLP version {version}")
    meta = json.loads(f.read(meta_len).decode())
    (n_layers,) = struct.unpack("<I", f.read(4))
    layers = []
    for _ in range(n_layers):
        (tag_len,) = struct.unpack("<B", f.read(1))
        tag = f.read(tag_len).decode("ascii")
        w = matrix_from_stream(f)
        b = matrix_from_stream(f)
        layers.append(Layer(w, b.ravel(), tag))
    return MlpModel(tuple(layers), meta)


def write_mlp(path, model: MlpModel, text: bool = False):
    if text:
        Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")
    else:
        Path(path).write_bytes(mlp_to_bytes(model))


def read_mlp(path) -> MlpModel:
    data = Path(path).read_bytes()
    if data.startswith(MLP_MAGIC):
        return mlp_from_bytes(data)
    try:
        return MlpModel.from_dict(json.loads(data.decode()))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not an MLP weight file") from exc
