"""Greedy architecture search over layer counts and the final-layer type.

Three stages, each holding the winners of the previous ones fixed:

1. number of 1D conv layers  (``sweep_conv1d_counts``)
2. number of 2D conv layers  (``sweep_conv2d_counts``)
3. head type                 (``sweep_heads``: gap or flatten)

Candidates are scored by accuracy on a stratified validation slice carved
out of the *training* events; the test split is never touched.  Ties go to
the candidate with fewer parameters.  When a stage asks for more layers
than the configured widths list, the last configured width/kernel repeats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..dataset import (UNIT_WEIGHTS, LabeledEvent, apply_split, class_weights_for,
                       expand_training_set, labels_array, make_split)
from ..errors import InvalidParameterError
from . import layers as L
from .model import Architecture, init_model, predict_proba
from .train import TrainConfig, fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepTrial:
    stage: str
    descriptor: str
    val_accuracy: float
    val_loss: float
    n_params: int


@dataclass
class SweepResult:
    trials: List[SweepTrial] = field(default_factory=list)
    best: Optional[Architecture] = None

    def to_text(self) -> str:
        lines = ["# sweep=impact-pipe/1", "stage\tval_accuracy\tval_loss\tn_params\tarchitecture"]
        lines += [f"{t.stage}\t{t.val_accuracy!r}\t{t.val_loss!r}\t{t.n_params}\t{t.descriptor}"
                  for t in self.trials]
        lines.append(f"best={self.best.descriptor() if self.best else ''}")
        return "\n".join(lines) + "\n"


def _widths(values: Sequence[int], n: int) -> tuple:
    return tuple(values[min(i, len(values) - 1)] for i in range(n))


def candidate(cfg, n_conv1d: int, n_conv2d: int, head: str, n_cols: int) -> Architecture:
    return Architecture(_widths(cfg.conv1d_filters, n_conv1d), _widths(cfg.conv1d_kernels, n_conv1d),
                        _widths(cfg.conv2d_filters, n_conv2d), cfg.conv2d_kernel, head, 6, n_cols)


def greedy_sweep(train_events: Sequence[LabeledEvent], cfg, seed: int = 0, progress=None
                 ) -> SweepResult:
    """Run the three-stage greedy search; ``cfg`` is a PipelineConfig."""
    originals = [e for e in train_events if e.label.parent_id is None]
    if len(originals) != len(train_events):
        raise InvalidParameterError("sweep expects original (non-augmented) training events")
    if any(e.is_test for e in originals):
        raise InvalidParameterError("sweep must not see test-split events")
    untagged = [replace(e, split=None) for e in originals]
    split = make_split(untagged, test_fraction=cfg.sweep_val_fraction, seed=seed)
    inner, val = apply_split(untagged, split)
    inner = expand_training_set(inner, cfg.augment_shifts, cfg.augment_classes)
    n_cols = originals[0].window.data.shape[1]
    x_val = np.stack([e.window.data for e in val])
    y_val = labels_array(val)
    weights = class_weights_for(inner) if cfg.class_weighting else UNIT_WEIGHTS
    tcfg = TrainConfig(cfg.lr, cfg.momentum, cfg.batch_size, cfg.sweep_epochs, weights, seed)
    result = SweepResult()
    seen: Dict[str, SweepTrial] = {}

    def score(stage: str, arch: Architecture) -> SweepTrial:
        key = arch.descriptor()
        if key not in seen:
            model = fit(init_model(arch, seed, cfg.input_gain), inner, tcfg).model
            probs = predict_proba(model, x_val)
            pred = np.where(probs[:, 0] > probs[:, 1], 0, 1)  # exact ties -> NonContact
            acc = float(np.mean(pred == y_val))
            vloss = L.weighted_cross_entropy(probs, y_val, weights.as_array())[0]
            seen[key] = SweepTrial(stage, key, acc, vloss, arch.n_params())
            result.trials.append(seen[key])
            log.info("sweep %s %s acc=%.4f", stage, key, acc)
            if progress is not None:
                progress(seen[key])
        return seen[key]

    def pick(stage: str, archs: List[Architecture]) -> Architecture:
        trials = [score(stage, a) for a in archs]
        best = min(range(len(archs)), key=lambda i: (-trials[i].val_accuracy, trials[i].n_params, i))
        return archs[best]

    n2_default = len(cfg.conv2d_filters)
    best = pick("conv1d", [candidate(cfg, n, n2_default, cfg.head, n_cols)
                           for n in cfg.sweep_conv1d_counts])
    n1 = len(best.conv1d_filters)
    best = pick("conv2d", [candidate(cfg, n1, n, cfg.head, n_cols) for n in cfg.sweep_conv2d_counts])
    n2 = len(best.conv2d_filters)
    best = pick("head", [candidate(cfg, n1, n2, h, n_cols) for h in cfg.sweep_heads])
    result.best = best
    return result
