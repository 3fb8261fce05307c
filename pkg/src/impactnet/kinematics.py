"""Kinematic event types and the conditioning chain that turns a raw
dual-rate mouthguard recording into the fixed 6 x 200 classifier input.

Linear acceleration arrives at 1000 Hz in g, angular velocity at 8000 Hz in
deg/s.  :func:`build_window` puts both on a common 1000 Hz grid:

* rows 0-2: linear acceleration x, y, z (g), taken as recorded;
* rows 3-5: angular channel x, y, z, low-passed, optionally differentiated
  to rad/s^2, then decimated to the grid rate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .errors import (
    InvalidParameterError,
    InvalidStateError,
    MalformedEventError,
)

LIN_FULL_SCALE_G = 400.0
ANG_FULL_SCALE_DPS = 4000.0
ANG_ACC_FULL_SCALE_RADS2 = 20000.0

UNITS = ("g", "deg/s", "rad/s^2")

DEG2RAD = math.pi / 180.0


class LabelValue(str, enum.Enum):
    TRUE_IMPACT = "TrueImpact"
    NON_CONTACT = "NonContact"


class Source(str, enum.Enum):
    VIDEO_VERIFIED = "VideoVerified"
    SYNTHETIC = "Synthetic"
    AUGMENTED = "Augmented"


class AngularMode(str, enum.Enum):
    VELOCITY = "velocity"
    ACCELERATION = "acceleration"


@dataclass(frozen=True)
class Label:
    value: LabelValue
    source: Source
    parent_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "value", LabelValue(self.value))
        object.__setattr__(self, "source", Source(self.source))
        if self.source is Source.AUGMENTED and not self.parent_id:
            raise InvalidParameterError("augmented labels must reference a parent event id")

    @property
    def is_impact(self) -> bool:
        return self.value is LabelValue.TRUE_IMPACT


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    """One sampled channel.

    ``t0_offset`` is the time of the first sample relative to the trigger,
    in ms; negative values are pre-trigger.
    """

    samples: np.ndarray
    rate: float
    unit: str
    t0_offset: float = 0.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64).ravel()
        if arr.size == 0:
            raise InvalidParameterError("channel series must be non-empty")
        if not self.rate > 0:
            raise InvalidParameterError(f"sampling rate must be positive, got {self.rate}")
        if self.unit not in UNITS:
            raise InvalidParameterError(f"unknown unit {self.unit!r}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise InvalidParameterError(f"non-finite sample at index {bad}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "t0_offset", float(self.t0_offset))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, ChannelSeries):
            return NotImplemented
        return (
            self.rate == other.rate
            and self.unit == other.unit
            and self.t0_offset == other.t0_offset
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    def times_ms(self) -> np.ndarray:
        return self.t0_offset + np.arange(self.samples.size) * (1000.0 / self.rate)

    def with_samples(self, samples, **changes) -> "ChannelSeries":
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class TriggerConfig:
    """Device trigger settings.

    ``trigger_mode`` is ``"axis"`` (any single linear axis reaches the
    threshold) or ``"magnitude"`` (the linear vector magnitude does).
    """

    threshold_g: float = 10.0
    pre_ms: float = 50.0
    post_ms: float = 150.0
    lin_rate_hz: float = 1000.0
    ang_rate_hz: float = 8000.0
    trigger_mode: str = "axis"

    def __post_init__(self):
        if not self.threshold_g > 0:
            raise InvalidParameterError("threshold_g must be positive")
        if not (self.pre_ms > 0 and self.post_ms > 0):
            raise InvalidParameterError("pre_ms and post_ms must be positive")
        if not (self.lin_rate_hz > 0 and self.ang_rate_hz > 0):
            raise InvalidParameterError("sampling rates must be positive")
        if self.trigger_mode not in ("axis", "magnitude"):
            raise InvalidParameterError(f"unknown trigger_mode {self.trigger_mode!r}")
        for name in ("pre", "post"):
            ms = getattr(self, f"{name}_ms")
            for rate in (self.lin_rate_hz, self.ang_rate_hz):
                n = ms * rate / 1000.0
                if abs(n - round(n)) > 1e-9:
                    raise InvalidParameterError(
                        f"{name}_ms={ms} is not a whole number of samples at {rate} Hz"
                    )

    @property
    def window_ms(self) -> float:
        return self.pre_ms + self.post_ms

    def samples(self, rate: float, ms: float) -> int:
        return int(round(ms * rate / 1000.0))

    @property
    def n_lin(self) -> int:
        return self.samples(self.lin_rate_hz, self.window_ms)

    @property
    def n_ang(self) -> int:
        return self.samples(self.ang_rate_hz, self.window_ms)


@dataclass(frozen=True)
class KinematicEvent:
    event_id: str
    device_id: str
    trigger_time: str
    lin_acc: Tuple[ChannelSeries, ChannelSeries, ChannelSeries]
    ang_vel: Tuple[ChannelSeries, ChannelSeries, ChannelSeries]
    trigger_config: TriggerConfig = field(default_factory=TriggerConfig)
    worn_flag: bool = True

    def __post_init__(self):
        cfg = self.trigger_config
        object.__setattr__(self, "lin_acc", tuple(self.lin_acc))
        object.__setattr__(self, "ang_vel", tuple(self.ang_vel))
        checks = (
            ("lin_acc", self.lin_acc, cfg.lin_rate_hz, "g", cfg.n_lin, LIN_FULL_SCALE_G),
            ("ang_vel", self.ang_vel, cfg.ang_rate_hz, "deg/s", cfg.n_ang, ANG_FULL_SCALE_DPS),
        )
        for name, chans, rate, unit, n, full_scale in checks:
            if len(chans) != 3:
                raise MalformedEventError(f"{name} needs 3 channels, got {len(chans)}")
            for axis, s in zip("xyz", chans):
                if not isinstance(s, ChannelSeries):
                    raise MalformedEventError(f"{name}[{axis}] is not a ChannelSeries")
                if s.unit != unit or s.rate != rate:
                    raise MalformedEventError(
                        f"{name}[{axis}] must be {unit} at {rate} Hz, got {s.unit} at {s.rate} Hz"
                    )
                if len(s) != n:
                    raise MalformedEventError(f"{name}[{axis}] has {len(s)} samples, expected {n}")
                if s.t0_offset != -cfg.pre_ms:
                    raise MalformedEventError(
                        f"{name}[{axis}] starts at {s.t0_offset} ms, expected {-cfg.pre_ms}"
                    )
                if np.max(np.abs(s.samples)) > full_scale:
                    raise MalformedEventError(f"{name}[{axis}] exceeds sensor full scale {full_scale}")

    @classmethod
    def from_arrays(cls, event_id, lin, ang, trigger_config=None, device_id="MG-SIM",
                    trigger_time="1970-01-01T00:00:00.000Z", worn_flag=True):
        cfg = trigger_config or TriggerConfig()
        lin = np.asarray(lin, dtype=np.float64)
        ang = np.asarray(ang, dtype=np.float64)
        if lin.ndim != 2 or ang.ndim != 2:
            raise MalformedEventError("lin and ang must be 2D (channels x samples)")
        return cls(
            event_id=event_id,
            device_id=device_id,
            trigger_time=trigger_time,
            lin_acc=tuple(ChannelSeries(r, cfg.lin_rate_hz, "g", -cfg.pre_ms) for r in lin),
            ang_vel=tuple(ChannelSeries(r, cfg.ang_rate_hz, "deg/s", -cfg.pre_ms) for r in ang),
            trigger_config=cfg,
            worn_flag=bool(worn_flag),
        )

    @property
    def lin_matrix(self) -> np.ndarray:
        return np.vstack([s.samples for s in self.lin_acc])

    @property
    def ang_matrix(self) -> np.ndarray:
        return np.vstack([s.samples for s in self.ang_vel])


@dataclass(frozen=True, eq=False)
class ProcessedWindow:
    """Classifier input: 6 rows on a uniform grid (1 column per ms by default)."""

    data: np.ndarray
    trigger_col: int = 50
    channel_units: Tuple[str, ...] = ("g", "g", "g", "rad/s^2", "rad/s^2", "rad/s^2")
    normalized: bool = False

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != 6:
            raise MalformedEventError(f"window must be 6 x n, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MalformedEventError("window contains non-finite values")
        if len(self.channel_units) != 6:
            raise MalformedEventError("window needs one unit tag per row")
        if self.normalized and np.max(np.abs(arr), initial=0.0) > 1.0:
            raise InvalidStateError("normalized window has entries outside [-1, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "channel_units", tuple(self.channel_units))

    def __eq__(self, other):
        if not isinstance(other, ProcessedWindow):
            return NotImplemented
        return (
            self.trigger_col == other.trigger_col
            and self.channel_units == other.channel_units
            and self.normalized == other.normalized
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ProcessingConfig:
    angular_mode: AngularMode = AngularMode.ACCELERATION
    lowpass_hz: float = 300.0
    grid_rate_hz: float = 1000.0
    lin_full_scale_g: float = LIN_FULL_SCALE_G
    ang_vel_full_scale_dps: float = ANG_FULL_SCALE_DPS
    ang_acc_full_scale: float = ANG_ACC_FULL_SCALE_RADS2

    def __post_init__(self):
        object.__setattr__(self, "angular_mode", AngularMode(self.angular_mode))
        for name in ("lowpass_hz", "grid_rate_hz", "lin_full_scale_g",
                     "ang_vel_full_scale_dps", "ang_acc_full_scale"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")


_FILTER_ORDER = 4


def _zero_phase(samples: np.ndarray, cutoff_hz: float, rate: float) -> np.ndarray:
    sos = signal.butter(_FILTER_ORDER, cutoff_hz, btype="low", fs=rate, output="sos")
    # scipy's default pad length exceeds very short inputs
    padlen = min(3 * (2 * len(sos) + 1), samples.size - 1)
    return signal.sosfiltfilt(sos, samples, padlen=padlen)


def lowpass_filter(series: ChannelSeries, cutoff_hz: float) -> ChannelSeries:
    """4th-order Butterworth low-pass run forward and backward (zero phase)."""
    nyquist = series.rate / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise InvalidParameterError(
            f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) for rate {series.rate} Hz"
        )
    if len(series) < 2:
        raise InvalidParameterError("series too short to filter")
    return series.with_samples(_zero_phase(series.samples, cutoff_hz, series.rate))


def decimate(series: ChannelSeries, target_rate_hz: float) -> ChannelSeries:
    """Anti-alias at 0.4 x the target rate, then keep every n-th sample.

    The first sample is always kept, so ``t0_offset`` carries over unchanged.
    """
    if not target_rate_hz > 0:
        raise InvalidParameterError("target rate must be positive")
    ratio = series.rate / target_rate_hz
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise InvalidParameterError(
            f"rate {series.rate} Hz is not an integer multiple of {target_rate_hz} Hz"
        )
    if factor == 1:
        return series
    filtered = lowpass_filter(series, 0.4 * target_rate_hz).samples
    return series.with_samples(filtered[::factor], rate=float(target_rate_hz))


def differentiate(series: ChannelSeries) -> ChannelSeries:
    """Angular velocity (deg/s) to angular acceleration (rad/s^2).

    Central differences inside, one-sided at the two endpoints so the
    length is unchanged.
    """
    if series.unit != "deg/s":
        raise InvalidParameterError(f"differentiate expects deg/s, got {series.unit}")
    if len(series) < 3:
        raise InvalidParameterError("differentiate needs at least 3 samples")
    deriv = np.gradient(series.samples, 1.0 / series.rate, edge_order=1) * DEG2RAD
    return series.with_samples(deriv, unit="rad/s^2")


def _to_grid(series: ChannelSeries, grid_rate: float) -> ChannelSeries:
    if series.rate == grid_rate:
        return series
    return decimate(series, grid_rate)


def build_window(event: KinematicEvent, cfg: Optional[ProcessingConfig] = None) -> ProcessedWindow:
    cfg = cfg or ProcessingConfig()
    tc = event.trigger_config
    if len(event.lin_acc) != 3 or len(event.ang_vel) != 3:
        raise MalformedEventError("event is missing a channel")
    n_cols = int(round(tc.window_ms * cfg.grid_rate_hz / 1000.0))
    trigger_col = int(round(tc.pre_ms * cfg.grid_rate_hz / 1000.0))

    rows = [_to_grid(s, cfg.grid_rate_hz).samples for s in event.lin_acc]
    for s in event.ang_vel:
        s = lowpass_filter(s, cfg.lowpass_hz)
        if cfg.angular_mode is AngularMode.ACCELERATION:
            s = differentiate(s)
        rows.append(_to_grid(s, cfg.grid_rate_hz).samples)

    data = np.vstack(rows)
    if data.shape[1] != n_cols:
        raise MalformedEventError(f"window has {data.shape[1]} columns, expected {n_cols}")
    ang_unit = "deg/s" if cfg.angular_mode is AngularMode.VELOCITY else "rad/s^2"
    return ProcessedWindow(data, trigger_col, ("g",) * 3 + (ang_unit,) * 3, normalized=False)


def normalize(window: ProcessedWindow, cfg: Optional[ProcessingConfig] = None) -> ProcessedWindow:
    """Divide by fixed sensor full-scale constants and clip to [-1, 1].

    Constants do not depend on the data, so train and test windows get the
    identical transform.
    """
    cfg = cfg or ProcessingConfig()
    if window.normalized:
        raise InvalidStateError("window is already normalized")
    scales = []
    for unit in window.channel_units:
        if unit == "g":
            scales.append(cfg.lin_full_scale_g)
        elif unit == "deg/s":
            scales.append(cfg.ang_vel_full_scale_dps)
        else:
            scales.append(cfg.ang_acc_full_scale)
    data = np.clip(window.data / np.asarray(scales)[:, None], -1.0, 1.0)
    return replace(window, data=data, normalized=True)


def prepare(event: KinematicEvent, cfg: Optional[ProcessingConfig] = None) -> ProcessedWindow:
    """build_window followed by normalize."""
    return normalize(build_window(event, cfg), cfg)


def stack_windows(windows: Sequence[ProcessedWindow]) -> np.ndarray:
    if not windows:
        return np.zeros((0, 6, 0))
    return np.stack([w.data for w in windows])
