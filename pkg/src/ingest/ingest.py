"""Conversion of event streams between CSV and the packed binary format."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from src.events.io import EventFormat, read_event_stream, write_event_stream


def convert_events(
    source: str | Path,
    target: str | Path,
    *,
    geometry_path: Optional[str | Path] = None,
    camera_id: int = 0,
) -> tuple[Path, int]:
    """Read, validate and rewrite one camera's stream; the sidecar goes along.

    Formats are taken from the file suffixes (``.csv`` text, anything else
    packed binary). Returns the written path and the event count.
    """

    source_file, target_file = Path(source), Path(target)
    if not source_file.exists():
        raise FileNotFoundError(f"No se encontró el archivo de eventos {source_file}")
    if source_file.resolve() == target_file.resolve():
        raise ValueError("El archivo de salida no puede ser el mismo que el de entrada")
    stream, geometry = read_event_stream(source_file, camera_id=camera_id, geometry_path=geometry_path)
    write_event_stream(target_file, stream, geometry, EventFormat.infer(target_file))
    return target_file, len(stream)
