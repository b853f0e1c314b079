"""Sensor stream schema, CSV I/O, normalization and orientation preprocessing."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence, TextIO

import numpy as np

JOINT_COMPONENTS = ("AccX", "AccY", "AccZ", "GyroX", "GyroY", "GyroZ", "q1", "q2", "q3", "q4", "temp")
N_JOINTS = 7
# the last entry is not in the published channel table; it brings the total to 86
POWER_CHANNELS = (
    "current",
    "frequency",
    "phase_angle",
    "power",
    "power_factor",
    "reactive_power",
    "voltage",
    "import_energy",
)
ACTION_CHANNEL = "action_id"
TIMESTAMP = "timestamp"
LABEL = "label"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def joint_channel(joint: int, component: str) -> str:
    return f"sensor_id_{joint}_{component}"


@dataclass(frozen=True)
class ChannelSchema:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate channel names in schema")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def indices(self, names: Sequence[str]) -> list[int]:
        return [self.names.index(n) for n in names]


def default_schema() -> ChannelSchema:
    names = [ACTION_CHANNEL]
    for j in range(N_JOINTS):
        names += [joint_channel(j, c) for c in JOINT_COMPONENTS]
    names += list(POWER_CHANNELS)
    return ChannelSchema(tuple(names))


class SampleRecord(NamedTuple):
    timestamp: float
    values: np.ndarray
    label: int  # 0 normal, 1 anomaly


@dataclass
class LabeledStream:
    """A recorded or generated stream: timestamps [N], float32 values [N, C], labels [N]."""

    schema: ChannelSchema
    timestamps: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        n = len(self.timestamps)
        if self.values.shape != (n, len(self.schema)) or self.labels.shape != (n,):
            raise DataError(
                f"inconsistent stream: {n} timestamps, values {self.values.shape}, "
                f"labels {self.labels.shape}, {len(self.schema)} channels"
            )
        if n > 1 and not np.all(np.diff(self.timestamps) > 0):
            bad = int(np.argmin(np.diff(self.timestamps) > 0)) + 2
            raise DataError(f"timestamps must be strictly increasing (row {bad})")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_channels(self) -> int:
        return len(self.schema)

    def records(self) -> Iterator[SampleRecord]:
        for t, v, y in zip(self.timestamps, self.values, self.labels):
            yield SampleRecord(float(t), v, int(y))

    def slice(self, start: int, stop: int) -> "LabeledStream":
        return LabeledStream(
            self.schema, self.timestamps[start:stop], self.values[start:stop], self.labels[start:stop]
        )


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


@dataclass
class Normalizer:
    """Per-channel min-max map onto [-1, 1]."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        self.minimum = np.asarray(self.minimum, dtype=np.float32)
        self.maximum = np.asarray(self.maximum, dtype=np.float32)
        if self.minimum.shape != self.maximum.shape or self.minimum.ndim != 1:
            raise DataError("normalizer min/max must be equal-length vectors")
        if np.any(self.minimum > self.maximum):
            raise DataError("normalizer has min > max")

    @property
    def n_channels(self) -> int:
        return len(self.minimum)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalizer":
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 2 or len(values) == 0:
            raise DataError("normalizer needs at least one sample of shape [N, C]")
        return cls(values.min(axis=0), values.max(axis=0))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Map raw ``[..., C]`` values into [-1, 1]; constant channels map to 0."""
        x = np.asarray(values, dtype=np.float64)
        lo = self.minimum.astype(np.float64)
        span = self.maximum.astype(np.float64) - lo
        flat = span == 0
        out = 2.0 * (x - lo) / np.where(flat, 1.0, span) - 1.0
        out = np.where(flat, 0.0, out)
        return np.clip(out, -1.0, 1.0).astype(np.float32)


def normalize_fit(stream: LabeledStream) -> Normalizer:
    return Normalizer.fit(stream.values)


def normalize_apply(normalizer: Normalizer, sample: np.ndarray) -> np.ndarray:
    return normalizer.apply(sample)


# ---------------------------------------------------------------------------
# orientation
# ---------------------------------------------------------------------------


def euler_to_quaternion(roll, pitch, yaw) -> np.ndarray:
    """Degrees to a unit quaternion ``(w, x, y, z)``, intrinsic Z-Y-X (yaw, then pitch, then roll).

    Accepts scalars or equal-shape arrays; the component axis is last.
    """
    r, p, y = (np.radians(np.asarray(a, dtype=np.float64)) / 2.0 for a in (roll, pitch, yaw))
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    w = cr * cp * cy + sr * sp * sy
    x = sr * cp * cy - cr * sp * sy
    yy = cr * sp * cy + sr * cp * sy
    z = cr * cp * sy - sr * sp * cy
    return np.stack([w, x, yy, z], axis=-1)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _parse_header(header: list[str], schema: ChannelSchema | None, source: str):
    header = [h.strip() for h in header]
    if not header or header[0] != TIMESTAMP:
        raise DataError(f"{source}: first column must be '{TIMESTAMP}'")
    has_label = header[-1] == LABEL
    channels = header[1:-1] if has_label else header[1:]
    if LABEL in channels or TIMESTAMP in channels:
        raise DataError(f"{source}: '{LABEL}' must be the last column and '{TIMESTAMP}' the first")
    if schema is None:
        return ChannelSchema(tuple(channels)), list(range(len(channels))), has_label
    unknown = [c for c in channels if c not in schema.names]
    missing = [c for c in schema.names if c not in channels]
    if unknown or missing:
        raise DataError(f"{source}: unknown channels {unknown[:5]}, missing channels {missing[:5]}")
    if len(set(channels)) != len(channels):
        raise DataError(f"{source}: duplicate channel columns")
    # column position of each schema channel
    order = [channels.index(n) for n in schema.names]
    return schema, order, has_label


def _locate_bad_cell(rows: list[list[str]], header: list[str], source: str):
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{source}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{source}: row {r}, column '{header[c]}': non-numeric value {cell!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{source}: row {r}, column '{header[c]}': non-finite value {cell!r}")
    raise DataError(f"{source}: could not parse numeric table")


def read_csv(fh: TextIO, schema: ChannelSchema | None = None, source: str = "<stream>") -> LabeledStream:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    schema, order, has_label = _parse_header(header, schema, source)
    rows = [row for row in reader if row]
    width = len(header)
    if not rows:
        table = np.zeros((0, width))
    else:
        try:
            if any(len(row) != width for row in rows):
                raise ValueError
            table = np.array(rows, dtype=np.float64)
            if not np.all(np.isfinite(table)):
                raise ValueError
        except ValueError:
            _locate_bad_cell(rows, [h.strip() for h in header], source)
    timestamps = table[:, 0]
    body = table[:, 1 : width - 1] if has_label else table[:, 1:]
    values = body[:, order]
    if has_label:
        labels = table[:, -1]
        if not np.all(np.isin(labels, (0, 1))):
            r = int(np.argmax(~np.isin(labels, (0, 1)))) + 1
            raise DataError(f"{source}: row {r}, column '{LABEL}': labels must be 0 or 1")
    else:
        labels = np.zeros(len(table))
    return LabeledStream(schema, timestamps, values, labels)


def load_csv(path, schema: ChannelSchema | None = None) -> LabeledStream:
    """Load a stream; columns are matched to ``schema`` by header name.

    Without ``schema`` the channel set is taken from the header.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            return read_csv(fh, schema, source=str(path))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None


def write_csv(stream: LabeledStream, path_or_fh, with_labels: bool = True) -> None:
    """Write the uniform dialect: timestamp, channels..., label. float32 values round-trip exactly."""
    if isinstance(path_or_fh, (str, Path)):
        with open(path_or_fh, "w", newline="") as fh:
            return write_csv(stream, fh, with_labels)
    fh = path_or_fh
    header = [TIMESTAMP, *stream.schema.names] + ([LABEL] if with_labels else [])
    fh.write(",".join(header) + "\n")
    buf = io.StringIO()
    vals = stream.values
    for i in range(len(stream)):
        buf.write(f"{stream.timestamps[i]:.6f},")
        buf.write(",".join(f"{v:.9g}" for v in vals[i].tolist()))
        if with_labels:
            buf.write(f",{int(stream.labels[i])}")
        buf.write("\n")
        if buf.tell() > 1 << 20:
            fh.write(buf.getvalue())
            buf = io.StringIO()
    fh.write(buf.getvalue())
