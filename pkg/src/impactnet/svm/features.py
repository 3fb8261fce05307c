"""Engineered features for the SVM baseline.

Per row, in this order (rows: lin_x, lin_y, lin_z, ang_x, ang_y, ang_z):

    peak              max |value|
    time_to_peak_ms   column of the peak minus the trigger column (0 for an all-zero row)
    integral          signed sum times the sample period (value * s)
    above_half_ms     number of samples with |value| >= peak / 2, in ms
    zero_crossings    sign changes, zeros skipped
    band_0_100        periodogram energy fraction in [0, 100) Hz
    band_100_300      ... in [100, 300) Hz
    band_300_500      ... in [300, Nyquist] Hz

followed by two cross-row features: the peak linear vector magnitude and
the angular/linear energy ratio.  8 x 6 + 2 = 50 features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import signal

from ..kinematics import ProcessedWindow

ROWS = ("lin_x", "lin_y", "lin_z", "ang_x", "ang_y", "ang_z")
PER_ROW = ("peak", "time_to_peak_ms", "integral", "above_half_ms", "zero_crossings",
           "band_0_100", "band_100_300", "band_300_500")
BANDS = ((0.0, 100.0), (100.0, 300.0), (300.0, np.inf))
FEATURE_NAMES: List[str] = [f"{r}_{f}" for r in ROWS for f in PER_ROW] + [
    "lin_mag_peak", "ang_lin_energy_ratio"]
N_FEATURES = len(FEATURE_NAMES)


def zero_crossings(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def band_fractions(x: np.ndarray, fs: float) -> np.ndarray:
    freqs, power = signal.periodogram(x, fs=fs, window="boxcar", detrend=False, scaling="spectrum")
    total = power.sum()
    if total <= 0:
        return np.zeros(len(BANDS))
    return np.array([power[(freqs >= lo) & (freqs < hi)].sum() / total for lo, hi in BANDS])


def row_features(x: np.ndarray, trigger_col: int, fs: float) -> List[float]:
    dt_ms = 1000.0 / fs
    mag = np.abs(x)
    peak = float(mag.max())
    if peak == 0.0:
        return [0.0] * len(PER_ROW)
    ttp = (int(np.argmax(mag)) - trigger_col) * dt_ms
    integral = float(x.sum()) * dt_ms / 1000.0
    above = float(np.count_nonzero(mag >= peak / 2.0)) * dt_ms
    bands = band_fractions(x, fs)
    return [peak, ttp, integral, above, float(zero_crossings(x)), *bands]


def extract_features(window: ProcessedWindow, fs: float = 1000.0) -> np.ndarray:
    data = window.data
    out: List[float] = []
    for row in data:
        out.extend(row_features(row, window.trigger_col, fs))
    lin, ang = data[:3], data[3:]
    out.append(float(np.sqrt((lin ** 2).sum(axis=0)).max()))
    e_lin = float((lin ** 2).sum())
    out.append(float((ang ** 2).sum()) / e_lin if e_lin > 0 else 0.0)
    return np.array(out)


def feature_matrix(windows: Sequence[ProcessedWindow], fs: float = 1000.0) -> np.ndarray:
    if not windows:
        return np.zeros((0, N_FEATURES))
    return np.vstack([extract_features(w, fs) for w in windows])


@dataclass(frozen=True, eq=False)
class Standardizer:
    """z-score with statistics from training data only; zero-variance
    features are centred but left unscaled."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        sd = x.std(axis=0)
        sd[sd == 0] = 1.0
        return cls(x.mean(axis=0), sd)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.sd
