"""Convolutional impact classifier with a hand-written backward pass."""

from .model import (
    CLASSES,
    Architecture,
    ForwardCache,
    MiGNetModel,
    backward,
    forward,
    forward_batch,
    init_model,
    loss,
    predict,
    predict_many,
    predict_proba,
    zero_model,
)
from .persist import load_model, parse_model, render_model, save_model
from .sweep import SweepResult, SweepTrial, greedy_sweep
from .train import TrainConfig, TrainResult, fit, sgd_step, train, zero_velocity

__all__ = [
    "CLASSES", "Architecture", "ForwardCache", "MiGNetModel", "SweepResult", "SweepTrial",
    "TrainConfig", "TrainResult", "backward", "fit", "greedy_sweep",
    "forward", "forward_batch", "init_model", "load_model", "loss", "parse_model", "predict",
    "predict_many", "predict_proba", "render_model", "save_model", "sgd_step", "train",
    "zero_model", "zero_velocity",
]
