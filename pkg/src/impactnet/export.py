"""Export packages: one CDE-titled event file per event plus a manifest.

Only kinematic fields, the device id and the trigger time leave the
pipeline; nothing in :class:`KinematicEvent` identifies a person, and the
manifest carries labels and model provenance only.
"""

from __future__ import annotations

import csv
import io
import os
import re
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import __version__
from .errors import InvalidParameterError, SchemaError
from .eventfile import fmt, render_event
from .kinematics import KinematicEvent, Label, LabelValue

MANIFEST_COLUMNS = ("event_id", "label", "source", "predicted", "score", "model_id", "version")
_SAFE_ID = re.compile(r"^[A-Za-z0-9._+-]+$")


def _check_id(event_id: str) -> None:
    if not _SAFE_ID.match(event_id) or event_id in (".", ".."):
        raise InvalidParameterError(f"event id {event_id!r} cannot be used as a file name")


def render_manifest(rows: Sequence[Mapping[str, str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for row in sorted(rows, key=lambda r: r["event_id"]):
        w.writerow([row.get(c, "") for c in MANIFEST_COLUMNS])
    return buf.getvalue()


def write_manifest(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_manifest(rows))


def read_manifest(path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"manifest is missing column '{missing[0]}'", column=missing[0])
        return list(reader)


def manifest_row(event_id: str, label: Optional[Label], prediction=None, model_id: str = "",
                 version: str = __version__) -> Dict[str, str]:
    predicted, score = "", ""
    if prediction is not None:
        predicted = LabelValue(prediction[0]).value
        score = fmt(prediction[1])
    return {
        "event_id": event_id,
        "label": label.value.value if label else "",
        "source": label.source.value if label else "",
        "predicted": predicted,
        "score": score,
        "model_id": model_id,
        "version": version,
    }


def export_package(events: Sequence[KinematicEvent], labels: Sequence[Optional[Label]], out_dir,
                   predictions: Optional[Mapping[str, Tuple[LabelValue, float]]] = None,
                   model_id: str = "", version: str = __version__, cde: bool = True
                   ) -> List[Dict[str, str]]:
    """Write ``out_dir/events/<event_id>.csv`` and ``out_dir/manifest.csv``.

    Output is a pure function of the inputs: files and manifest rows are
    ordered by event id.  Returns the manifest rows.
    """
    if len(labels) != len(events):
        raise InvalidParameterError("need one label per event")
    seen = set()
    for ev in events:
        _check_id(ev.event_id)
        if ev.event_id in seen:
            raise InvalidParameterError(f"duplicate event id {ev.event_id!r}")
        seen.add(ev.event_id)
    predictions = predictions or {}

    ev_dir = os.path.join(out_dir, "events")
    os.makedirs(ev_dir, exist_ok=True)
    rows = []
    for ev, label in sorted(zip(events, labels), key=lambda p: p[0].event_id):
        with open(os.path.join(ev_dir, f"{ev.event_id}.csv"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(render_event(ev, cde=cde))
        rows.append(manifest_row(ev.event_id, label, predictions.get(ev.event_id), model_id,
                                 version))
    write_manifest(rows, os.path.join(out_dir, "manifest.csv"))
    return rows
