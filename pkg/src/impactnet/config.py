"""Pipeline configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored.  Tuples are comma separated;
``none`` clears an optional value.  Unknown keys are rejected so typos do
not silently fall back to defaults.  :meth:`PipelineConfig.to_text` writes
every key in a fixed order, and :meth:`PipelineConfig.digest` hashes that
canonical form, so two configs with the same effective settings share a
hash regardless of how their files were written.
"""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, fields
from typing import Optional, Tuple

from .errors import InvalidParameterError
from .kinematics import ProcessingConfig, TriggerConfig

TIE_RULES = ("noncontact", "impact")


@dataclass(frozen=True)
class PipelineConfig:
    # trigger
    threshold_g: float = 10.0
    trigger_mode: str = "axis"
    pre_ms: float = 50.0
    post_ms: float = 150.0
    lin_rate_hz: float = 1000.0
    ang_rate_hz: float = 8000.0
    # window processing
    angular_mode: str = "acceleration"
    lowpass_hz: float = 300.0
    # dataset
    augment_shifts: Tuple[int, ...] = (1, 2, 3, 4, 5)
    augment_classes: str = "both"
    class_weighting: bool = True
    test_true: int = 65
    test_false: int = 100
    # MiGNet
    conv1d_filters: Tuple[int, ...] = (16, 32)
    conv1d_kernels: Tuple[int, ...] = (7, 5)
    conv2d_filters: Tuple[int, ...] = (32,)
    conv2d_kernel: int = 3
    head: str = "gap"
    input_gain: float = 32.0
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 20
    tie_rule: str = "noncontact"
    # sweep
    sweep_conv1d_counts: Tuple[int, ...] = (1, 2, 3, 4)
    sweep_conv2d_counts: Tuple[int, ...] = (1, 2)
    sweep_heads: Tuple[str, ...] = ("gap", "flatten")
    sweep_epochs: int = 20
    sweep_val_fraction: float = 0.2
    # SVM
    svm_kernel: str = "rbf"
    svm_c: float = 1.0
    svm_gamma: Optional[float] = None
    svm_k_folds: int = 5
    svm_max_features: Optional[int] = None
    # sanity rule
    rule_min_width_ms: float = 2.0
    rule_min_ang_fraction: float = 0.05

    def __post_init__(self):
        if self.tie_rule not in TIE_RULES:
            raise InvalidParameterError(f"tie_rule must be one of {TIE_RULES}")
        if self.test_true < 0 or self.test_false < 0:
            raise InvalidParameterError("test split counts must be non-negative")
        if not 0 < self.sweep_val_fraction < 1:
            raise InvalidParameterError("sweep_val_fraction must lie in (0, 1)")
        # validate the derived objects eagerly
        self.trigger_config()
        self.processing_config()
        self.architecture()
        self.train_config()

    # derived objects
    def trigger_config(self) -> TriggerConfig:
        return TriggerConfig(self.threshold_g, self.pre_ms, self.post_ms, self.lin_rate_hz,
                             self.ang_rate_hz, self.trigger_mode)

    def processing_config(self) -> ProcessingConfig:
        return ProcessingConfig(angular_mode=self.angular_mode, lowpass_hz=self.lowpass_hz)

    def architecture(self, n_cols: Optional[int] = None):
        from .mignet.model import Architecture

        cols = n_cols or int(round(self.pre_ms + self.post_ms))
        return Architecture(self.conv1d_filters, self.conv1d_kernels, self.conv2d_filters,
                            self.conv2d_kernel, self.head, 6, cols)

    def train_config(self, seed: int = 0, class_weights=None):
        from .mignet.train import TrainConfig

        return TrainConfig(self.lr, self.momentum, self.batch_size, self.epochs, class_weights,
                           seed)

    # text form
    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise InvalidParameterError(f"config line {lineno}: expected 'key = value'")
            if key not in known:
                raise InvalidParameterError(f"config line {lineno}: unknown key {key!r}")
            if key in values:
                raise InvalidParameterError(f"config line {lineno}: duplicate key {key!r}")
            try:
                values[key] = _parse(value, hints[key])
            except ValueError as exc:
                raise InvalidParameterError(f"config line {lineno}: {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, hint):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:  # Optional[X]
        if text.lower() == "none":
            return None
        return _parse(text, next(a for a in args if a is not type(None)))
    if origin is tuple:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(_parse(t, args[0]) for t in items)
    if hint is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    return text
