"""Labelled windows, time-shift augmentation, class weighting and splits."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ContaminationError,
    FormatError,
    InvalidParameterError,
    StructuralError,
)
from .kinematics import Label, LabelValue, ProcessedWindow, Source

TRAIN, TEST = "train", "test"
DEFAULT_SHIFTS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class LabeledEvent:
    event_id: str
    window: ProcessedWindow
    label: Label
    split: Optional[str] = None

    @property
    def is_test(self) -> bool:
        return self.split == TEST


@dataclass(frozen=True)
class ClassWeights:
    w_true: float
    w_false: float

    def __post_init__(self):
        if not (self.w_true > 0 and self.w_false > 0):
            raise InvalidParameterError("class weights must be positive")

    def for_label(self, value: LabelValue) -> float:
        return self.w_true if LabelValue(value) is LabelValue.TRUE_IMPACT else self.w_false

    def as_array(self) -> np.ndarray:
        """Indexed by class index (0 = TrueImpact, 1 = NonContact)."""
        return np.array([self.w_true, self.w_false])

    def scaled(self, factor: float) -> "ClassWeights":
        return ClassWeights(self.w_true * factor, self.w_false * factor)


UNIT_WEIGHTS = ClassWeights(1.0, 1.0)


def class_weights(n_true: int, n_false: int) -> ClassWeights:
    """Inverse-frequency weights, w_c = N / (2 n_c); mean weight per event is 1."""
    if n_true <= 0 or n_false <= 0:
        raise InvalidParameterError(f"both classes need events (got {n_true}, {n_false})")
    total = n_true + n_false
    return ClassWeights(total / (2.0 * n_true), total / (2.0 * n_false))


def class_weights_for(events: Sequence[LabeledEvent]) -> ClassWeights:
    n_true = sum(1 for e in events if e.label.is_impact)
    return class_weights(n_true, len(events) - n_true)


def _guard_train(events: Iterable[LabeledEvent], what: str) -> None:
    for e in events:
        if e.is_test:
            raise ContaminationError(f"{what}: test-split event {e.event_id!r} is not allowed here")


def augment_shift(event: LabeledEvent, shift_ms: int, max_shift_ms: int = 5,
                  min_shift_ms: int = 1) -> LabeledEvent:
    """Delay every row by ``shift_ms`` columns, zero-filling the front.

    The trailing ``shift_ms`` columns fall off the end so the window keeps
    its length.  Assumes the 1 ms grid of :func:`build_window`.
    """
    _guard_train([event], "augment_shift")
    if int(shift_ms) != shift_ms or not min_shift_ms <= shift_ms <= max_shift_ms:
        raise InvalidParameterError(
            f"shift {shift_ms} ms outside the allowed range [{min_shift_ms}, {max_shift_ms}]"
        )
    k = int(shift_ms)
    if k == 0:
        return event
    src = event.window.data
    if k >= src.shape[1]:
        raise InvalidParameterError("shift longer than the window")
    data = np.zeros_like(src)
    data[:, k:] = src[:, :-k]
    parent = event.label.parent_id if event.label.source is Source.AUGMENTED else event.event_id
    return LabeledEvent(
        event_id=f"{event.event_id}+{k}ms",
        window=replace(event.window, data=data),
        label=Label(event.label.value, Source.AUGMENTED, parent_id=parent),
        split=TRAIN if event.split == TRAIN else None,
    )


def expand_training_set(events: Sequence[LabeledEvent], shifts: Sequence[int] = DEFAULT_SHIFTS,
                        augment_classes: str = "both", max_shift_ms: int = 5) -> List[LabeledEvent]:
    """Each original followed by its shifted copies (6x the input by default).

    ``augment_classes`` is ``"both"``, ``"impact"`` or ``"noncontact"``.
    """
    if augment_classes not in ("both", "impact", "noncontact"):
        raise InvalidParameterError(f"unknown augment_classes {augment_classes!r}")
    _guard_train(events, "expand_training_set")
    out: List[LabeledEvent] = []
    for e in events:
        out.append(e)
        wanted = (augment_classes == "both"
                  or (augment_classes == "impact") == e.label.is_impact)
        if wanted:
            out.extend(augment_shift(e, k, max_shift_ms=max_shift_ms) for k in shifts)
    return out


@dataclass(frozen=True)
class SplitSpec:
    train_ids: frozenset
    test_ids: frozenset
    augment_train: bool = True

    def __post_init__(self):
        object.__setattr__(self, "train_ids", frozenset(self.train_ids))
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))
        overlap = self.train_ids & self.test_ids
        if overlap:
            raise ContaminationError(f"ids in both train and test: {sorted(overlap)[:5]}")

    def to_text(self) -> str:
        lines = ["# split=impact-pipe/1",
                 f"# augment_train={'true' if self.augment_train else 'false'}",
                 "role,event_id"]
        lines += [f"{TRAIN},{i}" for i in sorted(self.train_ids)]
        lines += [f"{TEST},{i}" for i in sorted(self.test_ids)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SplitSpec":
        augment = True
        train, test = [], []
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0] != "# split=impact-pipe/1":
            raise FormatError("not a split file")
        for ln in rows[1:]:
            if ln.startswith("# augment_train="):
                augment = ln.split("=", 1)[1].strip() == "true"
            elif ln == "role,event_id" or ln.startswith("#"):
                continue
            else:
                role, _, eid = ln.partition(",")
                if role == TRAIN:
                    train.append(eid)
                elif role == TEST:
                    test.append(eid)
                else:
                    raise FormatError(f"unknown split role {role!r}")
        return cls(frozenset(train), frozenset(test), augment)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _ids_and_labels(events) -> List[Tuple[str, LabelValue, Source]]:
    out = []
    for e in events:
        if isinstance(e, LabeledEvent):
            out.append((e.event_id, e.label.value, e.label.source))
        else:
            eid, label = e[0], e[1]
            eid = getattr(eid, "event_id", eid)
            out.append((eid, label.value, label.source))
    return out


def make_split(events, test_fraction: Optional[float] = None, n_test_true: Optional[int] = None,
               n_test_false: Optional[int] = None, test_ids: Optional[Iterable[str]] = None,
               seed: int = 0, augment_train: bool = True) -> SplitSpec:
    """Stratified train/test split of original (non-augmented) events.

    Give either ``test_fraction``, explicit per-class counts, or an explicit
    list of test ids.  ``events`` may be LabeledEvents or (event, Label)
    pairs.
    """
    items = _ids_and_labels(events)
    if any(src is Source.AUGMENTED for _, _, src in items):
        raise ContaminationError("split originals before augmenting")
    ids = [i for i, _, _ in items]
    if len(set(ids)) != len(ids):
        raise InvalidParameterError("duplicate event ids")

    if test_ids is not None:
        test = frozenset(test_ids)
        unknown = test - set(ids)
        if unknown:
            raise InvalidParameterError(f"unknown test ids: {sorted(unknown)[:5]}")
        return SplitSpec(frozenset(ids) - test, test, augment_train)

    by_class = {v: sorted(i for i, lv, _ in items if lv is v) for v in LabelValue}
    if n_test_true is None and n_test_false is None:
        if test_fraction is None or not 0 < test_fraction < 1:
            raise InvalidParameterError("need test_fraction in (0, 1) or explicit counts")
        n_test_true = int(round(test_fraction * len(by_class[LabelValue.TRUE_IMPACT])))
        n_test_false = int(round(test_fraction * len(by_class[LabelValue.NON_CONTACT])))
    wanted = {LabelValue.TRUE_IMPACT: n_test_true or 0, LabelValue.NON_CONTACT: n_test_false or 0}

    rng = np.random.Generator(np.random.PCG64(seed))
    test = []
    for value in LabelValue:
        pool = by_class[value]
        n = wanted[value]
        if n < 0 or n > len(pool):
            raise InvalidParameterError(
                f"requested {n} test {value.value} events but only {len(pool)} available"
            )
        order = rng.permutation(len(pool))
        test.extend(pool[j] for j in order[:n])
    test = frozenset(test)
    return SplitSpec(frozenset(ids) - test, test, augment_train)


def apply_split(events: Sequence[LabeledEvent], split: SplitSpec
                ) -> Tuple[List[LabeledEvent], List[LabeledEvent]]:
    """Tag events with their role; augmented copies follow their parent."""
    train, test = [], []
    for e in events:
        root = e.label.parent_id if e.label.source is Source.AUGMENTED else e.event_id
        if root in split.test_ids:
            if e.label.source is Source.AUGMENTED:
                raise ContaminationError(f"augmented copy of test event {root!r}")
            test.append(replace(e, split=TEST))
        elif root in split.train_ids:
            train.append(replace(e, split=TRAIN))
        else:
            raise InvalidParameterError(f"event {e.event_id!r} is not covered by the split")
    return train, test


def labels_array(events: Sequence[LabeledEvent]) -> np.ndarray:
    """Class indices: 0 = TrueImpact, 1 = NonContact."""
    return np.array([0 if e.label.is_impact else 1 for e in events], dtype=np.int64)


# window sets: a deterministic .npy tensor plus a CSV index

INDEX_COLUMNS = ("event_id", "label", "source", "parent_id", "split", "trigger_col", "normalized",
                 "units")


def save_window_set(events: Sequence[LabeledEvent], directory) -> None:
    os.makedirs(directory, exist_ok=True)
    data = np.stack([e.window.data for e in events]) if events else np.zeros((0, 6, 0))
    np.save(os.path.join(directory, "windows.npy"), np.ascontiguousarray(data, dtype="<f8"))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INDEX_COLUMNS)
    for e in events:
        w.writerow([e.event_id, e.label.value.value, e.label.source.value, e.label.parent_id or "",
                    e.split or "", e.window.trigger_col, "true" if e.window.normalized else "false",
                    "|".join(e.window.channel_units)])
    with open(os.path.join(directory, "index.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_window_set(directory) -> List[LabeledEvent]:
    data = np.load(os.path.join(directory, "windows.npy"))
    with open(os.path.join(directory, "index.csv"), "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != data.shape[0]:
        raise StructuralError(f"index has {len(rows)} rows but tensor holds {data.shape[0]} windows")
    out = []
    for row, arr in zip(rows, data):
        window = ProcessedWindow(arr, int(row["trigger_col"]), tuple(row["units"].split("|")),
                                 row["normalized"] == "true")
        label = Label(row["label"], row["source"], row["parent_id"] or None)
        out.append(LabeledEvent(row["event_id"], window, label, row["split"] or None))
    return out


def counts(events: Sequence[LabeledEvent]) -> Dict[str, int]:
    n_true = sum(1 for e in events if e.label.is_impact)
    return {"TrueImpact": n_true, "NonContact": len(events) - n_true}
