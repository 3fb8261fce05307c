"""Confusion-matrix metrics, evaluation reports and a row-consistency checker.

Positive class is TrueImpact::

    sensitivity = TP / (TP + FN)
    specificity = TN / (TN + FP)
    accuracy    = (TP + TN) / (TP + FN + FP + TN)
    precision   = TP / (TP + FP)

A metric whose denominator is zero is *undefined* (``None``), never 0 or 1.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .dataset import LabeledEvent
from .errors import ContaminationError, FormatError, InvalidParameterError
from .kinematics import LabelValue, Source

METRIC_NAMES = ("sensitivity", "specificity", "accuracy", "precision")
UNDEFINED = "undefined"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 0:
                raise InvalidParameterError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def n_positive(self) -> int:
        return self.tp + self.fn

    @property
    def n_negative(self) -> int:
        return self.fp + self.tn

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp,
                               self.tn + other.tn)

    def scaled(self, k: int) -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp * k, self.fn * k, self.fp * k, self.tn * k)

    @classmethod
    def from_labels(cls, truth: Iterable, predicted: Iterable) -> "ConfusionMatrix":
        tp = fn = fp = tn = 0
        truth, predicted = list(truth), list(predicted)
        if len(truth) != len(predicted):
            raise InvalidParameterError("truth and predictions differ in length")
        for t, p in zip(truth, predicted):
            t_pos = LabelValue(t) is LabelValue.TRUE_IMPACT
            p_pos = LabelValue(p) is LabelValue.TRUE_IMPACT
            if t_pos:
                tp, fn = (tp + 1, fn) if p_pos else (tp, fn + 1)
            else:
                fp, tn = (fp + 1, tn) if p_pos else (fp, tn + 1)
        return cls(tp, fn, fp, tn)


@dataclass(frozen=True)
class Metrics:
    sensitivity: Optional[float]
    specificity: Optional[float]
    accuracy: Optional[float]
    precision: Optional[float]

    def as_tuple(self) -> Tuple[Optional[float], ...]:
        return (self.sensitivity, self.specificity, self.accuracy, self.precision)

    def percent(self) -> Tuple[Optional[int], ...]:
        """Whole percentages, rounded half up; None stays None."""
        return tuple(None if v is None else _round_percent(v) for v in self.as_tuple())


def _round_percent(v: float) -> int:
    return int(np.floor(v * 100.0 + 0.5))


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def metrics(m: ConfusionMatrix) -> Metrics:
    return Metrics(_ratio(m.tp, m.tp + m.fn), _ratio(m.tn, m.tn + m.fp),
                   _ratio(m.tp + m.tn, m.total), _ratio(m.tp, m.tp + m.fp))


def report_timestamp() -> str:
    """UTC time in ISO form; SOURCE_DATE_EPOCH pins it for reproducible runs."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
    else:
        t = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class EvalReport:
    matrix: ConfusionMatrix
    sensitivity: Optional[float]
    specificity: Optional[float]
    accuracy: Optional[float]
    precision: Optional[float]
    model_id: str = ""
    dataset_id: str = ""
    seed: int = 0
    timestamp: str = ""
    test_name: str = ""
    model_name: str = ""
    dataset_size: Optional[int] = None

    @classmethod
    def from_matrix(cls, matrix: ConfusionMatrix, **kw) -> "EvalReport":
        return cls(matrix, *metrics(matrix).as_tuple(), **kw)

    @property
    def metrics(self) -> Metrics:
        return Metrics(self.sensitivity, self.specificity, self.accuracy, self.precision)

    @property
    def size(self) -> int:
        return self.matrix.total if self.dataset_size is None else self.dataset_size

    def is_consistent(self) -> bool:
        """Stored metrics equal those recomputed from the matrix."""
        return self.metrics == metrics(self.matrix)


# -- text report -----------------------------------------------------------

TABLE_COLUMNS = ("Test", "Model", "Sensitivity", "Specificity", "Accuracy", "Precision",
                 "Dataset size")
REPORT_MAGIC = "# eval-report/1"
_FOOTER_KEYS = ("test_name", "model_name", "model_id", "dataset_id", "seed", "timestamp",
                "dataset_size", "tp", "fn", "fp", "tn") + METRIC_NAMES


def _pct_cell(v: Optional[float]) -> str:
    return UNDEFINED if v is None else f"{_round_percent(v)}%"


def render_table(reports: Sequence[EvalReport]) -> str:
    """Column-aligned table with whole-percent cells."""
    rows = [TABLE_COLUMNS] + [
        (r.test_name or "-", r.model_name or "-", *(_pct_cell(v) for v in r.metrics.as_tuple()),
         str(r.size))
        for r in reports
    ]
    widths = [max(len(row[c]) for row in rows) for c in range(len(TABLE_COLUMNS))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                     for row in rows) + "\n"


def _fmt_value(v) -> str:
    if v is None:
        return UNDEFINED
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_report(reports: Union[EvalReport, Sequence[EvalReport]]) -> str:
    """Table followed by a key/value footer per row holding full precision."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    parts = [REPORT_MAGIC, render_table(reports).rstrip("\n"), ""]
    for i, r in enumerate(reports, 1):
        parts.append(f"[row {i}]")
        values = {"test_name": r.test_name, "model_name": r.model_name, "model_id": r.model_id,
                  "dataset_id": r.dataset_id, "seed": r.seed, "timestamp": r.timestamp,
                  "dataset_size": r.dataset_size, "tp": r.matrix.tp, "fn": r.matrix.fn,
                  "fp": r.matrix.fp, "tn": r.matrix.tn, "sensitivity": r.sensitivity,
                  "specificity": r.specificity, "accuracy": r.accuracy, "precision": r.precision}
        parts.extend(f"{k}={_fmt_value(values[k])}" for k in _FOOTER_KEYS)
    parts.append(f"version={__version__}")
    return "\n".join(parts) + "\n"


def parse_report(text: str) -> List[EvalReport]:
    lines = text.split("\n")
    if not lines or lines[0] != REPORT_MAGIC:
        raise FormatError("not an evaluation report")
    blocks: List[Dict[str, str]] = []
    for line in lines[1:]:
        if line.startswith("[row "):
            blocks.append({})
        elif blocks and "=" in line:
            k, _, v = line.partition("=")
            blocks[-1][k] = v
    if not blocks:
        raise FormatError("report has no rows")
    out = []
    for b in blocks:
        b.pop("version", None)
        missing = [k for k in _FOOTER_KEYS if k not in b]
        if missing:
            raise FormatError(f"report row lacks {', '.join(missing)}")

        def opt_float(key):
            return None if b[key] == UNDEFINED else float(b[key])

        try:
            matrix = ConfusionMatrix(int(b["tp"]), int(b["fn"]), int(b["fp"]), int(b["tn"]))
            size = None if b["dataset_size"] == UNDEFINED else int(b["dataset_size"])
            out.append(EvalReport(matrix, *(opt_float(k) for k in METRIC_NAMES),
                                  model_id=b["model_id"], dataset_id=b["dataset_id"],
                                  seed=int(b["seed"]), timestamp=b["timestamp"],
                                  test_name=b["test_name"], model_name=b["model_name"],
                                  dataset_size=size))
        except ValueError as exc:
            raise FormatError(f"bad report value: {exc}") from None
        if not out[-1].is_consistent():
            raise FormatError("report row metrics do not match its confusion matrix")
    return out


def save_report(reports, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_report(reports))


def load_report(path) -> List[EvalReport]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_report(fh.read())


# -- evaluation ------------------------------------------------------------

Prediction = Tuple[LabelValue, float]


def _root_id(e: LabeledEvent) -> str:
    return e.label.parent_id if e.label.source is Source.AUGMENTED else e.event_id


def check_disjoint(test_set: Sequence[LabeledEvent], train_ids: Iterable[str]) -> None:
    train_ids = frozenset(train_ids)
    for e in test_set:
        if e.split is not None and not e.is_test:
            raise ContaminationError(f"event {e.event_id!r} is tagged {e.split!r}, not test")
        if e.label.source is Source.AUGMENTED:
            raise ContaminationError(f"augmented event {e.event_id!r} in a test set")
        if _root_id(e) in train_ids:
            raise ContaminationError(f"test event {e.event_id!r} was used for training")


def classify_windows(classifier, windows, tie: str = "noncontact") -> List[Prediction]:
    """Dispatch to MiGNet, the SVM, or any callable ``window -> label | (label, score)``.

    ``tie`` picks the class for an exact 0.5/0.5 MiGNet output.
    """
    from .mignet.model import MiGNetModel, predict_many
    from .svm.features import feature_matrix
    from .svm.smo import SvmModel, predict_svm_many

    if isinstance(classifier, MiGNetModel):
        return predict_many(classifier, windows, tie)
    if isinstance(classifier, SvmModel):
        return predict_svm_many(classifier, feature_matrix(windows)) if windows else []
    if callable(classifier):
        out = []
        for w in windows:
            r = classifier(w)
            if isinstance(r, tuple):
                out.append((LabelValue(r[0]), float(r[1])))
            else:
                label = LabelValue(r)
                out.append((label, 1.0 if label is LabelValue.TRUE_IMPACT else 0.0))
        return out
    raise InvalidParameterError(f"cannot classify with {type(classifier).__name__}")


def model_fingerprint(classifier) -> str:
    """Short content hash of a saved model's text form."""
    from .mignet.model import MiGNetModel
    from .mignet.persist import render_model
    from .svm.persist import render_svm
    from .svm.smo import SvmModel

    if isinstance(classifier, MiGNetModel):
        text = render_model(classifier)
    elif isinstance(classifier, SvmModel):
        text = render_svm(classifier)
    else:
        text = repr(classifier)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def dataset_fingerprint(events: Sequence[LabeledEvent]) -> str:
    h = hashlib.sha256()
    for e in sorted(events, key=lambda e: e.event_id):
        h.update(e.event_id.encode())
        h.update(e.label.value.value.encode())
        h.update(np.ascontiguousarray(e.window.data).tobytes())
    return h.hexdigest()[:16]


def evaluate(classifier, test_set: Sequence[LabeledEvent], *, train_ids: Optional[Iterable[str]] = None,
             seed: int = 0, test_name: str = "", model_name: str = "", model_id: Optional[str] = None,
             dataset_id: Optional[str] = None, timestamp: Optional[str] = None,
             tie: str = "noncontact") -> EvalReport:
    """Classify every test event and summarise.

    ``train_ids`` defaults to the ids recorded in the model; any overlap
    with the test set, augmented test events, or events tagged as training
    raise ContaminationError.
    """
    if not test_set:
        raise InvalidParameterError("test set is empty")
    if train_ids is None:
        train_ids = getattr(classifier, "train_ids", frozenset())
    check_disjoint(test_set, train_ids)
    preds = classify_windows(classifier, [e.window for e in test_set], tie)
    matrix = ConfusionMatrix.from_labels([e.label.value for e in test_set], [p[0] for p in preds])
    return EvalReport.from_matrix(
        matrix,
        model_id=model_fingerprint(classifier) if model_id is None else model_id,
        dataset_id=dataset_fingerprint(test_set) if dataset_id is None else dataset_id,
        seed=seed, timestamp=report_timestamp() if timestamp is None else timestamp,
        test_name=test_name, model_name=model_name,
    )


# -- consistency of reported percentages -----------------------------------

@dataclass(frozen=True)
class ReferenceRow:
    test_name: str
    model_name: str
    percent: Tuple[int, int, int, int]  # sensitivity, specificity, accuracy, precision
    dataset_size: int


# Reference results from the real-data field study (not reproducible here).
REFERENCE_ROWS = (
    ReferenceRow("Test 1", "SVM", (86, 94, 91, 90), 165),
    ReferenceRow("Test 1", "MiGNet", (97, 90, 93, 86), 165),
    ReferenceRow("Test 2", "MiGNet", (76, 99, 96, 86), 512),
)

# Class sizes of the held-out test set the reference rows were scored on.
REFERENCE_TEST_SPLIT = (65, 100)


@dataclass
class ConsistencyResult:
    percent: Tuple[int, int, int, int]
    matrices: List[ConfusionMatrix] = field(default_factory=list)
    searched: str = ""

    @property
    def consistent(self) -> bool:
        return bool(self.matrices)


def _rounds_to(num: np.ndarray, den, target: int) -> np.ndarray:
    # |100 num/den - target| <= 1/2, in exact integer arithmetic
    return np.abs(200 * num - 2 * target * den) <= den


def consistent_matrices(percent: Sequence[int], n_positive: Optional[int] = None,
                        n_negative: Optional[int] = None, total: Optional[int] = None,
                        limit: int = 1000) -> ConsistencyResult:
    """All integer confusion matrices whose four metrics round to ``percent``.

    Either fix the class sizes (``n_positive`` and ``n_negative``) or give
    only ``total`` to search every class split.  A value rounds to p if it
    lies within half a percentage point of p, so both neighbours of an
    exact .5 are accepted.
    """
    sens, spec, acc, prec = (int(p) for p in percent)
    if n_positive is not None and n_negative is not None:
        splits = [(int(n_positive), int(n_negative))]
        searched = f"{n_positive} positive / {n_negative} negative"
    elif total is not None:
        splits = [(p, int(total) - p) for p in range(1, int(total))]
        searched = f"every class split of {total}"
    else:
        raise InvalidParameterError("give class sizes or a total")
    found: List[ConfusionMatrix] = []
    for npos, nneg in splits:
        tp = np.arange(npos + 1)
        tp = tp[_rounds_to(tp, npos, sens)]
        tn = np.arange(nneg + 1)
        tn = tn[_rounds_to(tn, nneg, spec)]
        if tp.size == 0 or tn.size == 0:
            continue
        tpg, tng = np.meshgrid(tp, tn, indexing="ij")
        fpg = nneg - tng
        ok = _rounds_to(tpg + tng, npos + nneg, acc)
        den = tpg + fpg
        ok &= (den > 0) & _rounds_to(tpg, np.maximum(den, 1), prec)
        for a, b in zip(tpg[ok], tng[ok]):
            found.append(ConfusionMatrix(int(a), npos - int(a), nneg - int(b), int(b)))
            if len(found) >= limit:
                return ConsistencyResult(tuple(percent), found, searched)
    return ConsistencyResult((sens, spec, acc, prec), found, searched)


def check_report_rows(reports: Sequence[EvalReport]) -> List[Tuple[EvalReport, bool]]:
    """For each report, whether its whole-percent row is reachable by some
    integer matrix with the report's own class sizes."""
    out = []
    for r in reports:
        pct = r.metrics.percent()
        if any(v is None for v in pct):
            out.append((r, True))
            continue
        res = consistent_matrices(pct, r.matrix.n_positive, r.matrix.n_negative, limit=1)
        out.append((r, res.consistent))
    return out
