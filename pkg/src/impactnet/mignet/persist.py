"""Plain-text model container.

::

    mignet-model/1
    version=<package version>
    arch=conv1d=16x7,32x5;conv2d=32x3;head=gap;input=6x200
    seed=<int>
    train_ids=<comma separated, sorted; empty if untrained>
    param <name> <comma separated shape>
    <all values, row-major, space separated, Python repr>
    ...
    end

``repr`` of a float is the shortest string that parses back to the same
double, so a save/load round trip is bit-exact and the bytes depend only on
the parameter values.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .. import __version__
from ..errors import FormatError
from .model import Architecture, MiGNetModel

MAGIC = "mignet-model/1"


def render_model(model: MiGNetModel) -> str:
    lines = [MAGIC, f"version={__version__}", f"arch={model.arch.descriptor()}",
             f"seed={model.seed}", f"train_ids={','.join(sorted(model.train_ids))}"]
    for name, p in model.params.items():
        lines.append(f"param {name} {','.join(str(d) for d in p.shape)}")
        lines.append(" ".join(repr(float(v)) for v in p.ravel()))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(model: MiGNetModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_model(model))


def parse_model(text: str, expected_arch: Optional[Architecture] = None) -> MiGNetModel:
    lines = text.split("\n")
    if not lines or lines[0] != MAGIC:
        raise FormatError("not a MiGNet model file")
    meta = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("param ") and lines[i] != "end":
        key, sep, value = lines[i].partition("=")
        if not sep:
            raise FormatError(f"line {i + 1}: expected key=value")
        meta[key] = value
        i += 1
    for key in ("arch", "seed", "train_ids"):
        if key not in meta:
            raise FormatError(f"model file lacks '{key}'")
    try:
        arch = Architecture.from_descriptor(meta["arch"])
        seed = int(meta["seed"])
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if expected_arch is not None and arch != expected_arch:
        raise FormatError(
            f"architecture mismatch: file has {arch.descriptor()}, expected {expected_arch.descriptor()}"
        )
    shapes = arch.param_shapes()
    params = {}
    while i < len(lines) and lines[i].startswith("param "):
        parts = lines[i].split(" ")
        if len(parts) != 3 or i + 1 >= len(lines):
            raise FormatError(f"line {i + 1}: malformed parameter header")
        name = parts[1]
        try:
            shape = tuple(int(d) for d in parts[2].split(","))
            values = np.array([float(v) for v in lines[i + 1].split(" ")], dtype=np.float64)
        except ValueError:
            raise FormatError(f"line {i + 2}: unparsable parameter values") from None
        if name not in shapes or shapes[name] != shape:
            raise FormatError(f"parameter {name} {shape} does not fit {arch.descriptor()}")
        if values.size != int(np.prod(shape)) or not np.all(np.isfinite(values)):
            raise FormatError(f"parameter {name}: wrong count or non-finite values")
        params[name] = values.reshape(shape)
        i += 2
    if i >= len(lines) or lines[i] != "end":
        raise FormatError("model file is truncated")
    if list(params) != list(shapes):
        raise FormatError("model file is missing parameters")
    ids = frozenset(x for x in meta["train_ids"].split(",") if x)
    return MiGNetModel(arch, params, seed, ids)


def load_model(path, expected_arch: Optional[Architecture] = None) -> MiGNetModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read(), expected_arch)
