"""Frame records and the JSON-lines dataset format.

One JSON object per line::

    {"frame_id": 17, "camera_id": 0, "ts_ms": 1700.0,
     "objects": [{"object_id": "c0-o3", "color": "red"}],
     "hist": {"quant": [1, 32, 32], "cells": [[h, s, v, count], ...], "total": N},
     "stage_flags": {"passes_blob_filter": true, "passes_color_filter": true}}

``stage_flags`` is optional and defaults to both filters passing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .errors import InputError
from .features import HsvHistogram


@dataclass
class FrameRecord:
    frame_id: int
    camera_id: int
    ts_ms: float
    hist: HsvHistogram
    objects: list[tuple[str, str]] = field(default_factory=list)
    passes_blob_filter: bool = True
    passes_color_filter: bool = True
    segment: Optional[int] = None

    def object_colors(self) -> set[str]:
        return {color for _, color in self.objects}

    def labels(self, colors: Iterable[str]) -> dict[str, int]:
        present = self.object_colors()
        return {c: int(c in present) for c in colors}

    def to_json(self) -> dict:
        d = {
            "frame_id": self.frame_id,
            "camera_id": self.camera_id,
            "ts_ms": self.ts_ms,
            "objects": [{"object_id": oid, "color": c} for oid, c in self.objects],
            "hist": self.hist.to_json(),
            "stage_flags": {
                "passes_blob_filter": self.passes_blob_filter,
                "passes_color_filter": self.passes_color_filter,
            },
        }
        if self.segment is not None:
            d["segment"] = self.segment
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FrameRecord":
        try:
            flags = d.get("stage_flags") or {}
            return cls(
                frame_id=d["frame_id"],
                camera_id=d["camera_id"],
                ts_ms=float(d["ts_ms"]),
                hist=HsvHistogram.from_json(d["hist"]),
                objects=[(str(o["object_id"]), str(o["color"])) for o in d.get("objects", [])],
                passes_blob_filter=bool(flags.get("passes_blob_filter", True)),
                passes_color_filter=bool(flags.get("passes_color_filter", True)),
                segment=d.get("segment"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed frame record: {exc!r}") from exc


def dumps_record(rec: FrameRecord) -> str:
    return json.dumps(rec.to_json(), separators=(",", ":"))


def write_jsonl(records: Iterable[FrameRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")


def iter_jsonl(path) -> Iterator[FrameRecord]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            try:
                yield FrameRecord.from_json(obj)
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc


def read_jsonl(path) -> list[FrameRecord]:
    return list(iter_jsonl(path))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def by_camera(records: Sequence[FrameRecord]) -> dict[int, list[FrameRecord]]:
    out: dict[int, list[FrameRecord]] = {}
    for rec in records:
        out.setdefault(rec.camera_id, []).append(rec)
    return out
