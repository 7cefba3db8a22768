"""Readers and writers for event streams, geometry sidecars and point files.

Formats
-------
* CSV events: header ``x,y,t,p`` and one decimal event per line.
* Packed binary events: ``EVPC`` magic, version u8 = 1, then little-endian
  ``{width: u16, height: u16, count: u64}`` and ``count`` records of
  ``{x: u16, y: u16, t: u64, p: u8}`` without padding.
* Geometry sidecar: ``key=value`` lines with ``width``, ``height`` and the
  twelve entries ``p00 .. p23`` of the projection matrix (row-major).
* Packed binary points: ``EVPP`` magic, version u8 = 1, ``{k: u8, count: u64}``
  and records of ``{x: u16, y: u16, t_avg: f32, p_acc: i32, e_cnt: u32,
  slice: u8}``.
"""

from __future__ import annotations

import struct
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from src.common.errors import EventOrderError, EventParseError, EventValidationError
from src.events.types import CameraGeometry, EventStream, RasterizedPoints

EVENT_MAGIC = b"EVPC"
POINT_MAGIC = b"EVPP"
FORMAT_VERSION = 1

_EVENT_HEADER = struct.Struct("<4sBHHQ")
_POINT_HEADER = struct.Struct("<4sBBQ")
EVENT_RECORD = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "u1")])
POINT_RECORD = np.dtype(
    [
        ("x", "<u2"),
        ("y", "<u2"),
        ("t_avg", "<f4"),
        ("p_acc", "<i4"),
        ("e_cnt", "<u4"),
        ("slice", "u1"),
    ]
)
CSV_COLUMNS = ["x", "y", "t", "p"]
_MATRIX_KEYS = [f"p{r}{c}" for r in range(3) for c in range(4)]


class EventFormat(str, Enum):
    CSV = "csv"
    BINARY = "packed-binary"

    @classmethod
    def infer(cls, path: Path) -> "EventFormat":
        return cls.CSV if path.suffix.lower() in {".csv", ".txt"} else cls.BINARY


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(".cam")


# ---------------------------------------------------------------- geometry


def read_geometry(path: str | Path) -> CameraGeometry:
    geometry_file = Path(path)
    if not geometry_file.exists():
        raise FileNotFoundError(f"No se encontró el archivo de geometría {geometry_file}")

    values = dotenv_values(geometry_file)
    missing = [key for key in ["width", "height", *_MATRIX_KEYS] if not values.get(key)]
    if missing:
        raise ValueError(f"Faltan claves en {geometry_file}: {', '.join(missing)}")
    try:
        P = np.array([float(values[key]) for key in _MATRIX_KEYS]).reshape(3, 4)
        return CameraGeometry(P, int(values["width"]), int(values["height"]))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"Geometría inválida en {geometry_file}: {exc}") from exc


def write_geometry(path: str | Path, geometry: CameraGeometry) -> None:
    geometry_file = Path(path)
    geometry_file.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"width={geometry.width}", f"height={geometry.height}"]
    lines += [f"{key}={value!r}" for key, value in zip(_MATRIX_KEYS, geometry.P.ravel().tolist())]
    geometry_file.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- events


def validate_stream(stream: EventStream, geometry: CameraGeometry) -> None:
    """Check sensor bounds, polarity values and timestamp order."""

    if len(stream) == 0:
        return
    bad = np.flatnonzero(
        (stream.x >= geometry.width) | (stream.y >= geometry.height) | (stream.p > 1)
    )
    if bad.size:
        i = int(bad[0])
        raise EventValidationError(
            f"Evento {i} fuera de rango: x={stream.x[i]}, y={stream.y[i]}, p={stream.p[i]} "
            f"(sensor {geometry.width}x{geometry.height})",
            index=i,
        )
    negative = np.flatnonzero(stream.t < 0)
    if negative.size:
        i = int(negative[0])
        raise EventValidationError(f"Evento {i} con marca de tiempo negativa", index=i)
    backwards = np.flatnonzero(np.diff(stream.t) < 0)
    if backwards.size:
        i = int(backwards[0]) + 1
        raise EventOrderError(
            f"Marca de tiempo decreciente en el evento {i}: {stream.t[i - 1]} -> {stream.t[i]}",
            index=i,
        )


def _read_csv_events(path: Path) -> EventStream:
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return EventStream.empty()
    except pd.errors.ParserError as exc:
        raise EventParseError(f"CSV de eventos mal formado en {path}: {exc}") from exc

    if list(frame.columns) != CSV_COLUMNS:
        raise EventParseError(
            f"Cabecera inesperada en {path}: {list(frame.columns)} (se esperaba x,y,t,p)", line=1
        )
    if frame.empty:
        return EventStream.empty()

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    broken = numeric.isna().any(axis=1) | (numeric % 1 != 0).any(axis=1)
    if broken.any():
        row = int(np.flatnonzero(broken.to_numpy())[0])
        raw = ",".join(str(v) for v in frame.iloc[row].tolist())
        raise EventParseError(
            f"Registro mal formado en la línea {row + 2} de {path}: '{raw}'", line=row + 2
        )

    values = numeric.to_numpy(dtype=np.int64)
    negative = np.flatnonzero((values < 0).any(axis=1))
    if negative.size:
        i = int(negative[0])
        raise EventValidationError(f"Evento {i} con valores negativos: {values[i].tolist()}", index=i)
    overflow = np.flatnonzero(
        (values[:, :2].max(axis=1) > np.iinfo(np.uint16).max) | (values[:, 3] > 1)
    )
    if overflow.size:
        i = int(overflow[0])
        raise EventValidationError(f"Evento {i} fuera de rango: {values[i].tolist()}", index=i)
    return EventStream(values[:, 0], values[:, 1], values[:, 2], values[:, 3])


def _read_binary_events(path: Path) -> Tuple[EventStream, int, int]:
    data = path.read_bytes()
    if len(data) < _EVENT_HEADER.size:
        raise EventParseError(f"Cabecera truncada en {path}", offset=len(data))
    magic, version, width, height, count = _EVENT_HEADER.unpack_from(data, 0)
    if magic != EVENT_MAGIC:
        raise EventParseError(f"Magic inesperado {magic!r} en {path}", offset=0)
    if version != FORMAT_VERSION:
        raise EventParseError(f"Versión de formato no soportada: {version}", offset=4)

    expected = _EVENT_HEADER.size + count * EVENT_RECORD.itemsize
    if len(data) != expected:
        complete = (len(data) - _EVENT_HEADER.size) // EVENT_RECORD.itemsize
        offset = _EVENT_HEADER.size + min(complete, count) * EVENT_RECORD.itemsize
        raise EventParseError(
            f"{path}: se esperaban {count} registros ({expected} bytes) y hay {len(data)} bytes",
            offset=offset,
        )
    records = np.frombuffer(data, dtype=EVENT_RECORD, count=count, offset=_EVENT_HEADER.size)
    if count and records["t"].max() > np.iinfo(np.int64).max:
        i = int(np.flatnonzero(records["t"] > np.iinfo(np.int64).max)[0])
        raise EventValidationError(f"Marca de tiempo desbordada en el evento {i}", index=i)
    stream = EventStream(records["x"], records["y"], records["t"].astype(np.int64), records["p"])
    return stream, width, height


def read_event_stream(
    path: str | Path,
    fmt: EventFormat | str | None = None,
    *,
    camera_id: int = 0,
    geometry_path: Optional[str | Path] = None,
) -> Tuple[EventStream, CameraGeometry]:
    """Read one camera's stream plus its geometry and validate it.

    The geometry comes from ``geometry_path`` or the ``.cam`` sidecar next to
    the stream; without either, a default pinhole camera of the declared (or
    default) sensor size is used.
    """

    event_file = Path(path)
    if not event_file.exists():
        raise FileNotFoundError(f"No se encontró el archivo de eventos {event_file}")
    fmt = EventFormat(fmt) if fmt is not None else EventFormat.infer(event_file)

    sidecar = Path(geometry_path) if geometry_path else sidecar_path(event_file)
    geometry = read_geometry(sidecar) if sidecar.exists() else None

    if fmt is EventFormat.CSV:
        stream = _read_csv_events(event_file)
        geometry = geometry or CameraGeometry.default()
    else:
        stream, width, height = _read_binary_events(event_file)
        if geometry is None:
            geometry = CameraGeometry.default(width, height)
        elif (geometry.width, geometry.height) != (width, height):
            raise ValueError(
                f"La cabecera de {event_file} ({width}x{height}) no coincide con la geometría "
                f"({geometry.width}x{geometry.height})"
            )

    validate_stream(stream, geometry)
    return stream.with_camera(camera_id), geometry


def write_event_stream(
    path: str | Path,
    stream: EventStream,
    geometry: CameraGeometry,
    fmt: EventFormat | str | None = None,
    *,
    with_sidecar: bool = True,
) -> Path:
    event_file = Path(path)
    fmt = EventFormat(fmt) if fmt is not None else EventFormat.infer(event_file)
    validate_stream(stream, geometry)
    event_file.parent.mkdir(parents=True, exist_ok=True)

    if fmt is EventFormat.CSV:
        frame = pd.DataFrame({"x": stream.x, "y": stream.y, "t": stream.t, "p": stream.p})
        frame.to_csv(event_file, index=False, lineterminator="\n")
    else:
        records = np.empty(len(stream), dtype=EVENT_RECORD)
        records["x"] = stream.x
        records["y"] = stream.y
        records["t"] = stream.t
        records["p"] = stream.p
        header = _EVENT_HEADER.pack(
            EVENT_MAGIC, FORMAT_VERSION, geometry.width, geometry.height, len(stream)
        )
        event_file.write_bytes(header + records.tobytes())

    if with_sidecar:
        write_geometry(sidecar_path(event_file), geometry)
    return event_file


def merge_streams(streams: dict[int, EventStream]) -> EventStream:
    """Merge per-camera streams into one, stable in timestamp then camera id."""

    tagged = [streams[camera_id].with_camera(camera_id) for camera_id in sorted(streams)]
    if not tagged:
        return EventStream.empty()
    merged = EventStream(
        np.concatenate([s.x for s in tagged]),
        np.concatenate([s.y for s in tagged]),
        np.concatenate([s.t for s in tagged]),
        np.concatenate([s.p for s in tagged]),
        np.concatenate([s.camera for s in tagged]),
    )
    order = np.argsort(merged.t, kind="stable")
    return merged.take(order)


# ---------------------------------------------------------------- points


def write_points(path: str | Path, points: RasterizedPoints, k: int) -> Path:
    """Write rasterized points; fields outside the channel set are stored as zero."""

    point_file = Path(path)
    point_file.parent.mkdir(parents=True, exist_ok=True)
    view = points.feature_view()
    records = np.empty(len(points), dtype=POINT_RECORD)
    records["x"] = points.x
    records["y"] = points.y
    records["t_avg"] = points.t_avg
    records["p_acc"] = view[:, 3].astype(np.int32)
    records["e_cnt"] = view[:, 4].astype(np.uint32)
    records["slice"] = points.slice_index
    header = _POINT_HEADER.pack(POINT_MAGIC, FORMAT_VERSION, k, len(points))
    point_file.write_bytes(header + records.tobytes())
    return point_file


def read_points(path: str | Path) -> Tuple[RasterizedPoints, int]:
    point_file = Path(path)
    data = point_file.read_bytes()
    if len(data) < _POINT_HEADER.size:
        raise EventParseError(f"Cabecera truncada en {point_file}", offset=len(data))
    magic, version, k, count = _POINT_HEADER.unpack_from(data, 0)
    if magic != POINT_MAGIC or version != FORMAT_VERSION:
        raise EventParseError(f"{point_file} no es un archivo de puntos EVPP v1", offset=0)
    expected = _POINT_HEADER.size + count * POINT_RECORD.itemsize
    if len(data) != expected:
        raise EventParseError(
            f"{point_file}: tamaño {len(data)} bytes, se esperaban {expected}", offset=len(data)
        )
    records = np.frombuffer(data, dtype=POINT_RECORD, count=count, offset=_POINT_HEADER.size)
    points = RasterizedPoints(
        records["x"],
        records["y"],
        records["t_avg"].astype(np.float64),
        records["p_acc"],
        records["e_cnt"],
        records["slice"],
    )
    return points, k
