"""Reader and writer for single-event CSV files.

Layout (UTF-8, ``\\n`` line endings)::

    # schema=impact-pipe/1
    # event_id=<id>
    # device_id=<id>
    # trigger_time=<ISO-8601>
    # threshold_g=<g>
    # lin_rate_hz=1000
    # ang_rate_hz=8000
    # worn=true|false
    t_ms,lin_x_g,lin_y_g,lin_z_g
    <200 rows>

    t_ms,ang_x_dps,ang_y_dps,ang_z_dps
    <1600 rows>

Numbers are written with 9 significant digits (``format(x, ".9g")``).  The
exporter writes the same layout with CDE-style column titles; the reader
accepts either set of titles.
"""

from __future__ import annotations

import math
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, SchemaError, StructuralError
from .kinematics import KinematicEvent, TriggerConfig

SCHEMA = "impact-pipe/1"
HEADER_KEYS = ("schema", "event_id", "device_id", "trigger_time", "threshold_g",
               "lin_rate_hz", "ang_rate_hz", "worn")

LIN_COLUMNS = ("t_ms", "lin_x_g", "lin_y_g", "lin_z_g")
ANG_COLUMNS = ("t_ms", "ang_x_dps", "ang_y_dps", "ang_z_dps")

CDE_NAMES = {
    "t_ms": "SampleTimeMillisecond",
    "lin_x_g": "HeadLinearAccelerationXAxisG",
    "lin_y_g": "HeadLinearAccelerationYAxisG",
    "lin_z_g": "HeadLinearAccelerationZAxisG",
    "ang_x_dps": "HeadAngularVelocityXAxisDegPerSec",
    "ang_y_dps": "HeadAngularVelocityYAxisDegPerSec",
    "ang_z_dps": "HeadAngularVelocityZAxisDegPerSec",
}
_FROM_CDE = {v: k for k, v in CDE_NAMES.items()}


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def _block(title: Sequence[str], times: np.ndarray, values: np.ndarray) -> List[str]:
    lines = [",".join(title)]
    for i in range(times.size):
        lines.append(",".join([fmt(times[i])] + [fmt(v) for v in values[:, i]]))
    return lines


def render_event(event: KinematicEvent, cde: bool = False) -> str:
    cfg = event.trigger_config
    lin_cols, ang_cols = LIN_COLUMNS, ANG_COLUMNS
    if cde:
        lin_cols = tuple(CDE_NAMES[c] for c in lin_cols)
        ang_cols = tuple(CDE_NAMES[c] for c in ang_cols)
    lines = [
        f"# schema={SCHEMA}",
        f"# event_id={event.event_id}",
        f"# device_id={event.device_id}",
        f"# trigger_time={event.trigger_time}",
        f"# threshold_g={fmt(cfg.threshold_g)}",
        f"# lin_rate_hz={fmt(cfg.lin_rate_hz)}",
        f"# ang_rate_hz={fmt(cfg.ang_rate_hz)}",
        f"# worn={'true' if event.worn_flag else 'false'}",
    ]
    lines += _block(lin_cols, event.lin_acc[0].times_ms(), event.lin_matrix)
    lines.append("")
    lines += _block(ang_cols, event.ang_vel[0].times_ms(), event.ang_matrix)
    return "\n".join(lines) + "\n"


def write_event_file(event: KinematicEvent, path, cde: bool = False) -> None:
    if not os.fspath(path):
        raise FileNotFoundError("empty output path")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_event(event, cde=cde))


def _parse_header(lines: List[str]) -> Tuple[Dict[str, str], int]:
    header: Dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].strip().partition("=")
        if sep:
            header[key.strip()] = value.strip()
        i += 1
    for key in HEADER_KEYS:
        if key not in header:
            raise SchemaError(f"header is missing '{key}'", column=key)
    if header["schema"] != SCHEMA:
        raise SchemaError(f"unrecognised schema {header['schema']!r}", column="schema")
    return header, i


def _parse_block(lines: List[str], start: int, expected: Sequence[str]):
    """Returns (array of shape (n_rows, n_cols), next line index)."""
    if start >= len(lines):
        raise SchemaError(f"missing block with columns {','.join(expected)}", column=expected[1])
    title = [_FROM_CDE.get(c.strip(), c.strip()) for c in lines[start].split(",")]
    for col in expected:
        if col not in title:
            raise SchemaError(f"missing column '{col}' (line {start + 1})", column=col)
    order = [title.index(col) for col in expected]
    rows = []
    i = start + 1
    while i < len(lines) and lines[i].strip() != "":
        cells = lines[i].split(",")
        row_idx = len(rows)
        if len(cells) != len(title):
            raise StructuralError(
                f"line {i + 1}: expected {len(title)} values, got {len(cells)}"
            )
        values = []
        for j in order:
            try:
                v = float(cells[j])
            except ValueError:
                raise DataError(f"row {row_idx} (line {i + 1}): cannot parse {cells[j]!r}",
                                row=row_idx, line=i + 1) from None
            if not math.isfinite(v):
                raise DataError(f"row {row_idx} (line {i + 1}): non-finite value {cells[j]!r}",
                                row=row_idx, line=i + 1)
            values.append(v)
        rows.append(values)
        i += 1
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(expected)), i


def _check_times(times: np.ndarray, t0: float, rate: float, what: str) -> None:
    expected = t0 + np.arange(times.size) * (1000.0 / rate)
    if not np.allclose(times, expected, rtol=0, atol=1e-6):
        bad = int(np.flatnonzero(~np.isclose(times, expected, rtol=0, atol=1e-6))[0])
        raise StructuralError(f"{what} t_ms at row {bad} inconsistent with {rate} Hz sampling")


def parse_event_text(text: str, window_ms: Optional[float] = 200.0) -> KinematicEvent:
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    header, i = _parse_header(lines)
    try:
        lin_rate = float(header["lin_rate_hz"])
        ang_rate = float(header["ang_rate_hz"])
        threshold = float(header["threshold_g"])
    except ValueError as exc:
        raise SchemaError(f"bad numeric header value: {exc}") from None
    worn = header["worn"].lower()
    if worn not in ("true", "false"):
        raise SchemaError(f"worn must be true or false, got {header['worn']!r}", column="worn")

    lin, i = _parse_block(lines, i, LIN_COLUMNS)
    while i < len(lines) and lines[i].strip() == "":
        i += 1
    ang, i = _parse_block(lines, i, ANG_COLUMNS)
    if any(ln.strip() for ln in lines[i:]):
        raise StructuralError(f"unexpected content after angular block (line {i + 1})")

    n_lin = lin.shape[0]
    if n_lin == 0:
        raise StructuralError("linear block has no rows")
    if window_ms is not None:
        want = int(round(window_ms * lin_rate / 1000.0))
        if n_lin != want:
            raise StructuralError(f"linear block has {n_lin} rows, expected {want}")
    ratio = ang_rate / lin_rate
    want_ang = int(round(n_lin * ratio))
    if abs(ratio - round(ratio)) > 1e-9 or ang.shape[0] != want_ang:
        raise StructuralError(f"angular block has {ang.shape[0]} rows, expected {want_ang}")

    t0 = lin[0, 0]
    _check_times(lin[:, 0], t0, lin_rate, "linear")
    _check_times(ang[:, 0], t0, ang_rate, "angular")
    pre_ms = -t0
    post_ms = n_lin * 1000.0 / lin_rate - pre_ms
    try:
        cfg = TriggerConfig(threshold_g=threshold, pre_ms=pre_ms, post_ms=post_ms,
                            lin_rate_hz=lin_rate, ang_rate_hz=ang_rate)
    except ValueError as exc:
        raise StructuralError(f"window geometry rejected: {exc}") from None
    return KinematicEvent.from_arrays(
        event_id=header["event_id"], lin=lin[:, 1:].T, ang=ang[:, 1:].T, trigger_config=cfg,
        device_id=header["device_id"], trigger_time=header["trigger_time"],
        worn_flag=(worn == "true"),
    )


def parse_event_file(path, window_ms: Optional[float] = 200.0) -> KinematicEvent:
    """Read and validate one event file.

    Raises SchemaError (missing header key or column, named in ``.column``),
    DataError (unparsable or non-finite sample, data row index in ``.row``)
    or StructuralError (row counts or timing disagree with the header).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_event_text(text, window_ms=window_ms)
