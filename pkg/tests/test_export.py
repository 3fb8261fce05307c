import hashlib
import os

import pytest

from impactnet.errors import InvalidParameterError
from impactnet.eventfile import parse_event_file
from impactnet.export import export_package, read_manifest
from impactnet.kinematics import LabelValue

from conftest import make_event


def tree_hash(root):
    h = hashlib.sha256()
    for dirpath, _, files in sorted(os.walk(root)):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def three(small_sim):
    pairs = small_sim[:2] + small_sim[-1:]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def test_three_events(tmp_path, small_sim):
    events, labels = three(small_sim)
    rows = export_package(events, labels, tmp_path)
    files = sorted(os.listdir(tmp_path / "events"))
    assert files == sorted(f"{e.event_id}.csv" for e in events)
    manifest = read_manifest(tmp_path / "manifest.csv")
    assert [r["event_id"] for r in manifest] == sorted(e.event_id for e in events)
    assert manifest == rows
    back = parse_event_file(tmp_path / "events" / files[0])
    assert back.event_id == files[0][:-4]


def test_predictions_in_manifest(tmp_path, small_sim):
    events, labels = three(small_sim)
    preds = {events[0].event_id: (LabelValue.TRUE_IMPACT, 0.75)}
    export_package(events, labels, tmp_path, predictions=preds, model_id="abc")
    row = {r["event_id"]: r for r in read_manifest(tmp_path / "manifest.csv")}[events[0].event_id]
    assert row["predicted"] == "TrueImpact" and row["score"] == "0.75"
    assert row["model_id"] == "abc"


def test_duplicate_id(tmp_path):
    ev = make_event(event_id="dup")
    with pytest.raises(InvalidParameterError):
        export_package([ev, ev], [None, None], tmp_path)


def test_unsafe_id(tmp_path):
    with pytest.raises(InvalidParameterError):
        export_package([make_event(event_id="../x")], [None], tmp_path)


def test_reexport_is_byte_identical(tmp_path, small_sim):
    events, labels = three(small_sim)
    export_package(events, labels, tmp_path / "a")
    export_package(list(reversed(events)), list(reversed(labels)), tmp_path / "b")
    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
