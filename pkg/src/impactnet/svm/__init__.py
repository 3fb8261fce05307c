"""SVM baseline: engineered features, forward selection and an SMO-trained C-SVC."""

from .features import FEATURE_NAMES, N_FEATURES, PER_ROW, ROWS, Standardizer, extract_features, \
    feature_matrix
from .persist import load_selection, load_svm, parse_selection, parse_svm, render_selection, \
    render_svm, save_selection, save_svm
from .selection import SelectionResult, SelectionStep, cv_error, sequential_forward_selection, \
    stratified_folds
from .smo import SvmModel, dual_objective, kernel_matrix, predict_svm, predict_svm_many, \
    solve_dual, train_svm

__all__ = [
    "FEATURE_NAMES", "N_FEATURES", "PER_ROW", "ROWS", "SelectionResult", "SelectionStep",
    "Standardizer", "SvmModel",
    "cv_error", "dual_objective", "extract_features", "feature_matrix", "kernel_matrix",
    "load_selection", "load_svm", "parse_selection", "parse_svm", "predict_svm",
    "predict_svm_many", "render_selection", "render_svm", "save_selection", "save_svm",
    "sequential_forward_selection", "solve_dual", "stratified_folds", "train_svm",
]
