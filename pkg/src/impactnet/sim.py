"""Mouthguard trigger/buffer simulation and a synthetic labelled corpus.

The waveform families here are oracle assumptions made so that the rest of
the pipeline can be exercised without the private field data:

* impacts: a haversine linear pulse (6-15 ms) along a random direction,
  with a longer angular-velocity pulse about a perpendicular axis;
* artifact ``burst``: 180-450 Hz oscillation under a smooth envelope, weak
  rotation (device rattle);
* artifact ``spikes``: a train of isolated single-sample spikes;
* artifact ``bite``: a slow clench ramp with jitter, weak rotation.

All randomness flows through numpy's PCG64 bit generator, seeded from a
``SeedSequence`` keyed by (dataset seed, event index, retry), so corpora are
reproducible across platforms.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import InvalidParameterError, PipelineError
from .kinematics import (
    ANG_FULL_SCALE_DPS,
    LIN_FULL_SCALE_G,
    KinematicEvent,
    Label,
    LabelValue,
    ProcessingConfig,
    Source,
    TriggerConfig,
    build_window,
    normalize,
)

SEGMENT_MS = 250
STREAM_MS = 600
SEGMENT_OFFSET_MS = 150
QUIET_NOISE_G = 0.05
ANG_NOISE_DPS_PER_G = 10.0
ARTIFACT_FAMILIES = ("burst", "spikes", "bite")
MAX_RETRIES = 8
EPOCH = _dt.datetime(2020, 9, 1, tzinfo=_dt.timezone.utc)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(keys)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class SensorStream:
    """Continuous recording: lin is 3 x N (g), ang is 3 x N*ratio (deg/s),
    worn is the proximity-gate state at the linear rate."""

    lin: np.ndarray
    ang: np.ndarray
    worn: np.ndarray
    lin_rate_hz: float = 1000.0
    ang_rate_hz: float = 8000.0
    device_id: str = "MG-SIM"
    start_time: _dt.datetime = EPOCH

    def __post_init__(self):
        lin = np.asarray(self.lin, dtype=np.float64)
        ang = np.asarray(self.ang, dtype=np.float64)
        worn = np.asarray(self.worn, dtype=bool)
        if lin.ndim != 2 or lin.shape[0] != 3 or ang.ndim != 2 or ang.shape[0] != 3:
            raise InvalidParameterError("stream needs 3 linear and 3 angular channels")
        ratio = self.ang_rate_hz / self.lin_rate_hz
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidParameterError("angular rate must be an integer multiple of the linear rate")
        if ang.shape[1] != lin.shape[1] * int(round(ratio)) or worn.shape != (lin.shape[1],):
            raise InvalidParameterError("stream channels do not cover the same time span")
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "ang", ang)
        object.__setattr__(self, "worn", worn)

    @property
    def n_lin(self) -> int:
        return self.lin.shape[1]

    @property
    def ratio(self) -> int:
        return int(round(self.ang_rate_hz / self.lin_rate_hz))

    @classmethod
    def quiet(cls, duration_ms, rng=None, noise_g=QUIET_NOISE_G, lin_rate_hz=1000.0,
              ang_rate_hz=8000.0, **kw):
        n = int(round(duration_ms * lin_rate_hz / 1000.0))
        m = int(round(duration_ms * ang_rate_hz / 1000.0))
        if rng is None:
            lin, ang = np.zeros((3, n)), np.zeros((3, m))
        else:
            lin = rng.normal(0.0, noise_g, (3, n))
            ang = rng.normal(0.0, noise_g * ANG_NOISE_DPS_PER_G, (3, m))
        return cls(lin, ang, np.ones(n, bool), lin_rate_hz, ang_rate_hz, **kw)


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    peak_g: float
    duration_ms: Optional[float] = None
    ang_peak_dps: Optional[float] = None
    noise_rms_g: float = 0.2
    rng_seed: int = 0
    family: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("Impact", "Artifact"):
            raise InvalidParameterError(f"unknown kind {self.kind!r}")
        if not self.peak_g > 0:
            raise InvalidParameterError("peak_g must be positive")
        if self.duration_ms is not None and not self.duration_ms > 0:
            raise InvalidParameterError("duration_ms must be positive")
        if self.noise_rms_g < 0:
            raise InvalidParameterError("noise_rms_g must be non-negative")
        if self.family is not None and self.family not in ARTIFACT_FAMILIES:
            raise InvalidParameterError(f"unknown artifact family {self.family!r}")


def _iso(t: _dt.datetime) -> str:
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def run_trigger(stream: SensorStream, cfg: Optional[TriggerConfig] = None,
                id_prefix: Optional[str] = None) -> List[KinematicEvent]:
    """Replay the device's threshold trigger over a continuous stream.

    A sample fires when it reaches the threshold (inclusive) while the
    device is worn.  Crossings during an active capture are ignored until
    the post-trigger part of the window has been written.  Crossings whose
    window would run off either end of the stream never start a capture,
    so they do not hold off later crossings either; this keeps the event
    count monotone in the threshold.
    """
    cfg = cfg or TriggerConfig()
    if stream.n_lin == 0:
        raise InvalidParameterError("empty stream")
    if stream.lin_rate_hz != cfg.lin_rate_hz or stream.ang_rate_hz != cfg.ang_rate_hz:
        raise InvalidParameterError("stream rates do not match the trigger configuration")
    if cfg.trigger_mode == "axis":
        level = np.max(np.abs(stream.lin), axis=0)
    else:
        level = np.sqrt(np.sum(stream.lin ** 2, axis=0))
    fired = np.flatnonzero((level >= cfg.threshold_g) & stream.worn)

    pre = cfg.samples(cfg.lin_rate_hz, cfg.pre_ms)
    post = cfg.samples(cfg.lin_rate_hz, cfg.post_ms)
    ratio = stream.ratio
    prefix = id_prefix if id_prefix is not None else stream.device_id
    events = []
    busy_until = -1
    fired = fired[(fired >= pre) & (fired + post <= stream.n_lin)]
    for i in fired:
        if i < busy_until:
            continue
        busy_until = i + post
        start, stop = i - pre, i + post
        when = stream.start_time + _dt.timedelta(milliseconds=float(i) * 1000.0 / cfg.lin_rate_hz)
        events.append(KinematicEvent.from_arrays(
            event_id=f"{prefix}-{len(events):04d}",
            lin=stream.lin[:, start:stop],
            ang=stream.ang[:, start * ratio:stop * ratio],
            trigger_config=cfg,
            device_id=stream.device_id,
            trigger_time=_iso(when),
            worn_flag=bool(stream.worn[i]),
        ))
    return events


def _haversine(t, onset, duration):
    x = (t - onset) / duration
    out = np.sin(np.pi * x) ** 2
    out[(x < 0) | (x > 1)] = 0.0
    return out


def _unit(v):
    return v / np.linalg.norm(v)


def _finish(lin, ang, spec, rng):
    lin = lin + rng.normal(0.0, spec.noise_rms_g, lin.shape)
    ang = ang + rng.normal(0.0, spec.noise_rms_g * ANG_NOISE_DPS_PER_G, ang.shape)
    lin = np.clip(lin, -LIN_FULL_SCALE_G, LIN_FULL_SCALE_G)
    ang = np.clip(ang, -ANG_FULL_SCALE_DPS, ANG_FULL_SCALE_DPS)
    return SensorStream(lin, ang, np.ones(lin.shape[1], bool))


def _grids(lin_rate=1000.0, ang_rate=8000.0):
    t_lin = np.arange(int(SEGMENT_MS * lin_rate / 1000)) * (1000.0 / lin_rate)
    t_ang = np.arange(int(SEGMENT_MS * ang_rate / 1000)) * (1000.0 / ang_rate)
    return t_lin, t_ang


def gen_impact(spec: SyntheticSpec) -> Tuple[SensorStream, Label]:
    """A 250 ms segment holding one head impact starting ~20 ms in."""
    if spec.kind != "Impact":
        raise InvalidParameterError("gen_impact needs kind='Impact'")
    rng = make_rng(spec.rng_seed)
    duration = spec.duration_ms if spec.duration_ms is not None else rng.uniform(6.0, 15.0)
    ang_peak = spec.ang_peak_dps if spec.ang_peak_dps is not None else rng.uniform(800.0, 3000.0)
    direction = _unit(rng.standard_normal(3))
    axis = _unit(np.cross(direction, rng.standard_normal(3)))
    ang_duration = duration * rng.uniform(2.0, 3.0)

    t_lin, t_ang = _grids()
    # put the crest on a whole-ms sample so the sampled peak equals peak_g
    onset = round(20.0 + duration / 2.0) - duration / 2.0
    lin = direction[:, None] * (spec.peak_g * _haversine(t_lin, onset, duration))
    ang = axis[:, None] * (ang_peak * _haversine(t_ang, onset, ang_duration))
    return _finish(lin, ang, spec, rng), Label(LabelValue.TRUE_IMPACT, Source.SYNTHETIC)


def gen_artifact(spec: SyntheticSpec) -> Tuple[SensorStream, Label]:
    """A 250 ms segment holding one non-contact disturbance."""
    if spec.kind != "Artifact":
        raise InvalidParameterError("gen_artifact needs kind='Artifact'")
    rng = make_rng(spec.rng_seed)
    family = spec.family or ARTIFACT_FAMILIES[int(rng.integers(len(ARTIFACT_FAMILIES)))]
    ang_peak = spec.ang_peak_dps if spec.ang_peak_dps is not None else rng.uniform(5.0, 40.0)
    t_lin, t_ang = _grids()
    lin = np.zeros((3, t_lin.size))

    if family == "burst":
        duration = spec.duration_ms if spec.duration_ms is not None else rng.uniform(15.0, 40.0)
        carrier = rng.uniform(180.0, 450.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        direction = _unit(rng.standard_normal(3))
        envelope = _haversine(t_lin, 20.0, duration)
        wave = np.cos(2 * np.pi * carrier * t_lin / 1000.0 + phase)
        lin = direction[:, None] * (spec.peak_g * envelope * wave)
        # make sure the strongest axis reaches the requested peak somewhere
        lin *= spec.peak_g / max(np.max(np.abs(lin)), 1e-12)
    elif family == "spikes":
        span = spec.duration_ms if spec.duration_ms is not None else rng.uniform(5.0, 40.0)
        n_spikes = int(rng.integers(1, 5))
        axis = int(rng.integers(3))
        where = np.sort(20 + rng.choice(int(span) + 1, size=n_spikes, replace=False))
        amps = spec.peak_g * rng.uniform(0.6, 1.0, n_spikes)
        amps[0] = spec.peak_g
        lin[axis, where] = amps * rng.choice([-1.0, 1.0], n_spikes)
    else:
        rise = spec.duration_ms if spec.duration_ms is not None else rng.uniform(20.0, 60.0)
        hold = rng.uniform(20.0, 60.0)
        fall = rng.uniform(20.0, 60.0)
        direction = _unit(np.array([*rng.normal(0.0, 0.15, 2), 1.0]))
        x = np.clip((t_lin - 20.0) / rise, 0.0, 1.0)
        y = np.clip((t_lin - 20.0 - rise - hold) / fall, 0.0, 1.0)
        ramp = (3 * x ** 2 - 2 * x ** 3) * (1.0 - (3 * y ** 2 - 2 * y ** 3))
        jitter_hz = rng.uniform(30.0, 80.0)
        jitter = 0.08 * np.sin(2 * np.pi * jitter_hz * t_lin / 1000.0) * ramp
        lin = direction[:, None] * (spec.peak_g * (ramp + jitter))
        lin[2] *= spec.peak_g / max(np.max(np.abs(lin[2])), 1e-12)

    wobble_hz = rng.uniform(3.0, 15.0)
    axis_vec = _unit(rng.standard_normal(3))
    ang = axis_vec[:, None] * (ang_peak * np.sin(2 * np.pi * wobble_hz * t_ang / 1000.0))
    return _finish(lin, ang, spec, rng), Label(LabelValue.NON_CONTACT, Source.SYNTHETIC)


def draw_spec(kind: str, rng: np.random.Generator) -> SyntheticSpec:
    seed = int(rng.integers(2 ** 63))
    if kind == "Impact":
        return SyntheticSpec("Impact", peak_g=float(rng.uniform(20.0, 100.0)),
                             noise_rms_g=float(rng.uniform(0.1, 0.5)), rng_seed=seed)
    family = ARTIFACT_FAMILIES[int(rng.integers(len(ARTIFACT_FAMILIES)))]
    low, high = {"burst": (20.0, 60.0), "spikes": (12.0, 80.0), "bite": (14.0, 30.0)}[family]
    return SyntheticSpec("Artifact", peak_g=float(rng.uniform(low, high)),
                         noise_rms_g=float(rng.uniform(0.1, 0.5)), rng_seed=seed, family=family)


def embed(segment: SensorStream, rng: np.random.Generator, device_id="MG-SIM",
          start_time=EPOCH) -> SensorStream:
    base = SensorStream.quiet(STREAM_MS, rng, lin_rate_hz=segment.lin_rate_hz,
                              ang_rate_hz=segment.ang_rate_hz)
    i0 = int(SEGMENT_OFFSET_MS * segment.lin_rate_hz / 1000)
    lin = base.lin.copy()
    ang = base.ang.copy()
    lin[:, i0:i0 + segment.n_lin] += segment.lin
    ang[:, i0 * segment.ratio:(i0 + segment.n_lin) * segment.ratio] += segment.ang
    lin = np.clip(lin, -LIN_FULL_SCALE_G, LIN_FULL_SCALE_G)
    ang = np.clip(ang, -ANG_FULL_SCALE_DPS, ANG_FULL_SCALE_DPS)
    return SensorStream(lin, ang, base.worn, segment.lin_rate_hz, segment.ang_rate_hz,
                        device_id=device_id, start_time=start_time)


def gen_dataset(n_impact: int, n_artifact: int, seed: int,
                cfg: Optional[TriggerConfig] = None) -> List[Tuple[KinematicEvent, Label]]:
    """Impacts first, then artifacts; each event gets its own derived seed."""
    cfg = cfg or TriggerConfig()
    if n_impact < 0 or n_artifact < 0:
        raise InvalidParameterError("event counts must be non-negative")
    if cfg.lin_rate_hz != 1000.0 or cfg.ang_rate_hz != 8000.0:
        raise InvalidParameterError("the synthetic generator emits 1000/8000 Hz streams only")
    if cfg.pre_ms > SEGMENT_OFFSET_MS or cfg.post_ms > STREAM_MS - SEGMENT_OFFSET_MS - SEGMENT_MS:
        raise InvalidParameterError("trigger window does not fit the synthetic stream layout")
    out = []
    kinds = ["Impact"] * n_impact + ["Artifact"] * n_artifact
    for i, kind in enumerate(kinds):
        for attempt in range(MAX_RETRIES):
            rng = make_rng(derive_seed(seed, i, attempt))
            spec = draw_spec(kind, rng)
            segment, label = gen_impact(spec) if kind == "Impact" else gen_artifact(spec)
            stream = embed(segment, rng, start_time=EPOCH + _dt.timedelta(seconds=i))
            events = run_trigger(stream, cfg, id_prefix=f"sim{seed}-{i:05d}")
            if events:
                ev = events[0]
                ev = KinematicEvent(
                    event_id=f"sim{seed}-{i:05d}", device_id=ev.device_id,
                    trigger_time=ev.trigger_time, lin_acc=ev.lin_acc, ang_vel=ev.ang_vel,
                    trigger_config=ev.trigger_config, worn_flag=ev.worn_flag,
                )
                out.append((ev, label))
                break
        else:
            raise PipelineError(f"event {i} ({kind}) failed to trigger after {MAX_RETRIES} attempts")
    return out


@dataclass(frozen=True)
class SanityRule:
    """Hand-written classifier used as the separability floor.

    Impact iff the linear vector-magnitude pulse stays above half its peak
    for more than ``min_width_ms`` AND the angular rows carry more than
    ``min_ang_fraction`` of the normalized window energy.
    """

    min_width_ms: float = 2.0
    min_ang_fraction: float = 0.05
    processing: ProcessingConfig = field(default_factory=ProcessingConfig)

    def features(self, event: KinematicEvent) -> Tuple[float, float]:
        lin = event.lin_matrix
        mag = np.sqrt(np.sum(lin ** 2, axis=0))
        peak = int(np.argmax(mag))
        half = mag[peak] / 2.0
        left = peak
        while left > 0 and mag[left - 1] >= half:
            left -= 1
        right = peak
        while right < mag.size - 1 and mag[right + 1] >= half:
            right += 1
        width_ms = (right - left + 1) * 1000.0 / event.trigger_config.lin_rate_hz
        w = normalize(build_window(event, self.processing), self.processing).data
        e_lin = float(np.sum(w[:3] ** 2))
        e_ang = float(np.sum(w[3:] ** 2))
        total = e_lin + e_ang
        return width_ms, (e_ang / total if total > 0 else 0.0)

    def __call__(self, event: KinematicEvent) -> LabelValue:
        width, frac = self.features(event)
        if width > self.min_width_ms and frac > self.min_ang_fraction:
            return LabelValue.TRUE_IMPACT
        return LabelValue.NON_CONTACT
