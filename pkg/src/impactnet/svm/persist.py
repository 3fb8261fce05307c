"""Plain-text containers for SVM models and feature-selection results.

Model file::

    svm-model/1
    version=<package version>
    kernel=rbf
    C=<float>
    gamma=<float>
    bias=<float>
    degenerate=0|1
    mask=<comma separated column indices into the feature vector>
    train_ids=<comma separated, sorted>
    mean=<space separated floats>
    sd=<space separated floats>
    coef=<alpha_i * y_i per support vector>
    sv <count> <dim>
    <one support vector per line>
    end

Selection file::

    svm-selection/1
    version=<package version>
    features=<comma separated, in selection order>
    baseline=<float>
    seed=<int>
    k_folds=<int>
    trace=<feature>:<cv error> ...

Floats are written with ``repr`` so round trips are exact.
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from .. import __version__
from ..errors import FormatError
from .features import Standardizer
from .selection import SelectionResult, SelectionStep
from .smo import KERNELS, SvmModel

MODEL_MAGIC = "svm-model/1"
SELECTION_MAGIC = "svm-selection/1"


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _parse_floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split()], dtype=np.float64)
    except ValueError:
        raise FormatError(f"unparsable {what}") from None


def _read_meta(lines: List[str], start: int, stop_prefix: str):
    meta: Dict[str, str] = {}
    i = start
    while i < len(lines) and lines[i] and not lines[i].startswith(stop_prefix) and lines[i] != "end":
        key, sep, value = lines[i].partition("=")
        if not sep:
            raise FormatError(f"line {i + 1}: expected key=value")
        meta[key] = value
        i += 1
    return meta, i


def render_svm(model: SvmModel) -> str:
    sv = np.atleast_2d(model.support_vectors)
    lines = [MODEL_MAGIC, f"version={__version__}", f"kernel={model.kernel}",
             f"C={model.c!r}", f"gamma={model.gamma!r}", f"bias={float(model.bias)!r}",
             f"degenerate={int(model.degenerate)}",
             f"mask={','.join(str(i) for i in model.feature_mask)}",
             f"train_ids={','.join(sorted(model.train_ids))}",
             f"mean={_floats(model.standardizer.mean)}", f"sd={_floats(model.standardizer.sd)}",
             f"coef={_floats(model.dual_coef)}", f"sv {sv.shape[0]} {len(model.feature_mask)}"]
    lines.extend(_floats(row) for row in sv)
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_svm(text: str) -> SvmModel:
    lines = text.split("\n")
    if lines[0] != MODEL_MAGIC:
        raise FormatError("not an SVM model file")
    meta, i = _read_meta(lines, 1, "sv ")
    need = ("kernel", "C", "gamma", "bias", "degenerate", "mask", "mean", "sd", "coef")
    missing = [k for k in need if k not in meta]
    if missing:
        raise FormatError(f"SVM model file lacks {', '.join(missing)}")
    if meta["kernel"] not in KERNELS:
        raise FormatError(f"unknown kernel {meta['kernel']!r}")
    try:
        c, gamma, bias = float(meta["C"]), float(meta["gamma"]), float(meta["bias"])
        mask = tuple(int(v) for v in meta["mask"].split(",") if v)
        head = lines[i].split(" ")
        n_sv, dim = int(head[1]), int(head[2])
    except (ValueError, IndexError):
        raise FormatError("malformed SVM model header") from None
    mean, sd = _parse_floats(meta["mean"], "mean"), _parse_floats(meta["sd"], "sd")
    coef = _parse_floats(meta["coef"], "coef")
    rows = lines[i + 1:i + 1 + n_sv]
    if len(rows) != n_sv or i + 1 + n_sv >= len(lines) or lines[i + 1 + n_sv] != "end":
        raise FormatError("SVM model file is truncated")
    sv = np.array([_parse_floats(r, "support vector") for r in rows]).reshape(n_sv, dim)
    if not (len(mask) == dim == mean.size == sd.size and coef.size == n_sv):
        raise FormatError("SVM model blocks disagree in size")
    if not all(np.all(np.isfinite(a)) for a in (mean, sd, coef, sv)):
        raise FormatError("SVM model contains non-finite values")
    ids = frozenset(v for v in meta.get("train_ids", "").split(",") if v)
    return SvmModel(meta["kernel"], c, gamma, mask, Standardizer(mean, sd), sv, coef, bias,
                    meta["degenerate"] == "1", train_ids=ids)


def save_svm(model: SvmModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_svm(model))


def load_svm(path) -> SvmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_svm(fh.read())


def render_selection(result: SelectionResult) -> str:
    lines = [SELECTION_MAGIC, f"version={__version__}",
             f"features={','.join(str(i) for i in result.selected)}",
             f"baseline={result.baseline_error!r}", f"seed={result.seed}",
             f"k_folds={result.k_folds}",
             "trace=" + " ".join(f"{s.feature}:{s.cv_error!r}" for s in result.trace)]
    return "\n".join(lines) + "\n"


def parse_selection(text: str) -> SelectionResult:
    lines = text.split("\n")
    if lines[0] != SELECTION_MAGIC:
        raise FormatError("not a feature-selection file")
    meta, _ = _read_meta(lines, 1, "\0")
    try:
        selected = tuple(int(v) for v in meta["features"].split(",") if v)
        trace = [SelectionStep(int(f), float(e))
                 for f, e in (t.split(":") for t in meta["trace"].split())]
        result = SelectionResult(selected, trace, float(meta["baseline"]), None,
                                 int(meta["seed"]), int(meta["k_folds"]))
    except (KeyError, ValueError):
        raise FormatError("malformed feature-selection file") from None
    if tuple(s.feature for s in trace) != selected:
        raise FormatError("selection trace disagrees with the feature list")
    return result


def save_selection(result: SelectionResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_selection(result))


def load_selection(path) -> SelectionResult:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_selection(fh.read())
