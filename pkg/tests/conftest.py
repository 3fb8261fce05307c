"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from impactnet.dataset import LabeledEvent
from impactnet.kinematics import (KinematicEvent, Label, LabelValue, ProcessedWindow, Source,
                                  TriggerConfig, prepare)
from impactnet.sim import gen_dataset

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def half_sine(n, rate, start_ms, duration_ms, peak):
    """Haversine-free half sine: peak * sin(pi * (t - start) / duration) on [start, start+duration]."""
    t = np.arange(n) * 1000.0 / rate
    x = (t - start_ms) / duration_ms
    out = peak * np.sin(np.pi * x)
    out[(x < 0) | (x > 1)] = 0.0
    return out


def make_event(lin=None, ang=None, event_id="ev-0001", cfg=None, **kw) -> KinematicEvent:
    cfg = cfg or TriggerConfig()
    lin = np.zeros((3, cfg.n_lin)) if lin is None else lin
    ang = np.zeros((3, cfg.n_ang)) if ang is None else ang
    return KinematicEvent.from_arrays(event_id, lin, ang, trigger_config=cfg, **kw)


def make_labeled(event_id, data, impact=True, split=None, normalized=True) -> LabeledEvent:
    value = LabelValue.TRUE_IMPACT if impact else LabelValue.NON_CONTACT
    return LabeledEvent(event_id, ProcessedWindow(data, 50, normalized=normalized),
                        Label(value, Source.SYNTHETIC), split)


def labeled_from_sim(pairs):
    return [LabeledEvent(ev.event_id, prepare(ev), label) for ev, label in pairs]


@pytest.fixture(scope="session")
def small_sim():
    """40 true / 40 false synthetic events (raw pairs)."""
    return gen_dataset(40, 40, seed=11)


@pytest.fixture(scope="session")
def small_labeled(small_sim):
    return labeled_from_sim(small_sim)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture(scope="session")
def sim_858():
    """The 358 true / 500 false corpus with seed 42."""
    return gen_dataset(358, 500, seed=42)


def random_stream(rng, max_pulses=6):
    """Noisy continuous stream with random pulses and a random non-worn interval.

    Returns the stream; the pulse layout is random enough to create
    overlapping crossings, edge crossings and sub-threshold streams.
    """
    from impactnet.sim import SensorStream

    n = int(rng.integers(250, 1500))
    lin = rng.normal(0.0, rng.uniform(0.0, 2.0), (3, n))
    ang = rng.normal(0.0, 5.0, (3, n * 8))
    for _ in range(int(rng.integers(0, max_pulses + 1))):
        axis = int(rng.integers(3))
        lin[axis] += half_sine(n, 1000.0, rng.uniform(-10, n), rng.uniform(2, 30),
                               rng.uniform(2, 60) * rng.choice([-1, 1]))
    lin = np.clip(lin, -400, 400)
    worn = np.ones(n, bool)
    if rng.random() < 0.5:
        a = int(rng.integers(0, n))
        worn[a:a + int(rng.integers(1, n))] = False
    return SensorStream(lin, ang, worn)


def random_event(rng, event_id="ev-0000"):
    """A valid event with random (full-precision) samples and header values."""
    from impactnet.kinematics import KinematicEvent

    lin = rng.uniform(-400, 400, (3, 200)) * rng.choice([1e-3, 1.0, 1.0], (3, 1))
    ang = rng.uniform(-4000, 4000, (3, 1600)) * rng.choice([1e-3, 1.0, 1.0], (3, 1))
    cfg = TriggerConfig(threshold_g=float(rng.choice([8.0, 10.0, 12.5])))
    ms = int(rng.integers(0, 1000))
    return KinematicEvent.from_arrays(event_id, lin, ang, trigger_config=cfg,
                                      device_id=f"MG-{int(rng.integers(1000)):03d}",
                                      trigger_time=f"2021-03-04T05:06:07.{ms:03d}Z",
                                      worn_flag=bool(rng.random() < 0.8))


def malformed_corpus(text):
    """(name, text, expected error class, expected attributes) variants of a valid file."""
    from impactnet.errors import DataError, SchemaError, StructuralError

    lines = text.split("\n")
    lin_title = next(i for i, ln in enumerate(lines) if ln.startswith("t_ms,lin"))
    ang_title = next(i for i, ln in enumerate(lines) if ln.startswith("t_ms,ang"))
    first = lin_title + 1

    def edit(fn):
        out = list(lines)
        fn(out)
        return "\n".join(out)

    def drop_column(out, title, col):
        names = out[title].split(",")
        j = names.index(col)
        end = out.index("", title) if "" in out[title:] else len(out)
        for i in range(title, end):
            cells = out[i].split(",")
            del cells[j]
            out[i] = ",".join(cells)

    def set_cell(out, row, value):
        cells = out[first + row].split(",")
        cells[2] = value
        out[first + row] = ",".join(cells)

    return [
        ("missing lin_y column", edit(lambda o: drop_column(o, lin_title, "lin_y_g")),
         SchemaError, {"column": "lin_y_g"}),
        ("missing ang_z column", edit(lambda o: drop_column(o, ang_title, "ang_z_dps")),
         SchemaError, {"column": "ang_z_dps"}),
        ("missing header key", edit(lambda o: o.pop(o.index(next(x for x in o if x.startswith(
            "# worn="))))), SchemaError, {"column": "worn"}),
        ("NaN in row 12", edit(lambda o: set_cell(o, 12, "NaN")), DataError, {"row": 12}),
        ("inf in row 0", edit(lambda o: set_cell(o, 0, "inf")), DataError, {"row": 0}),
        ("text in row 150", edit(lambda o: set_cell(o, 150, "abc")), DataError, {"row": 150}),
        ("199 linear rows", edit(lambda o: o.pop(first + 199)), StructuralError, {}),
        ("201 linear rows", edit(lambda o: o.insert(first + 200, o[first + 199])),
         StructuralError, {}),
        ("1599 angular rows", edit(lambda o: o.pop(ang_title + 1600)), StructuralError, {}),
        ("short data row", edit(lambda o: o.__setitem__(first + 3, o[first + 3].rsplit(",", 1)[0])),
         StructuralError, {}),
        ("wrong lin rate header", edit(lambda o: o.__setitem__(
            o.index("# lin_rate_hz=1000"), "# lin_rate_hz=2000")), StructuralError, {}),
    ]


SMALL_CONFIG = """\
# small and fast: the CLI tests check plumbing, not accuracy
conv1d_filters = 4, 4
conv1d_kernels = 7, 5
conv2d_filters = 4
epochs = 2
test_true = 5
test_false = 5
svm_max_features = 2
"""


def run_pipeline(out, seed=3, n_true=15, n_false=15, config_text=SMALL_CONFIG):
    """Drive every CLI stage in order; returns the list of (argv, exit code)."""
    from impactnet.cli import main

    out = str(out)
    os.makedirs(out, exist_ok=True)
    cfg = os.path.join(out, "pipeline.cfg")
    with open(cfg, "w", encoding="utf-8") as fh:
        fh.write(config_text)
    common = ["--out", out, "--seed", str(seed), "--config", cfg]
    steps = [
        ["simulate", "--true", str(n_true), "--false", str(n_false)],
        ["ingest"],
        ["split"],
        ["augment"],
        ["train-mignet"],
        ["train-svm"],
        ["evaluate", "--model", os.path.join(out, "mignet.model"), "--name", "Held-out",
         "--report", os.path.join(out, "report-mignet.txt")],
        ["evaluate", "--model", os.path.join(out, "svm.model"), "--name", "Held-out",
         "--report", os.path.join(out, "report-svm.txt")],
        ["classify", "--model", os.path.join(out, "mignet.model"), "--events",
         os.path.join(out, "events")],
        ["export", "--predictions", os.path.join(out, "predictions.csv")],
        ["report", os.path.join(out, "report-mignet.txt"), os.path.join(out, "report-svm.txt"),
         "--reference"],
    ]
    results = []
    for step in steps:
        argv = step[:1] + common + step[1:]
        results.append((argv, main(argv)))
    return results


# -- acceptance reporting ---------------------------------------------------

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
