"""Command-line front end: ``impactnet <command> [options]``.

Every command reads its inputs from explicit paths (defaulting to the
conventional locations under ``--out``), writes its outputs under
``--out``, and leaves ``--out/runs/<command>.run`` behind: the argument
vector, seed, package version, config hash and the full effective config.
A run file can be passed back as ``--config`` to replay the run.

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 solver/training
failure.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

from . import __version__
from .config import PipelineConfig
from .errors import FormatError, InvalidParameterError, PipelineError, SolverError, ValidationError

log = logging.getLogger("impactnet")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_SOLVER = 0, 2, 3, 4
RUN_MAGIC = "# run=impact-pipe/1"


# -- helpers ---------------------------------------------------------------

def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.startswith(RUN_MAGIC):
        marker = "\n[config]\n"
        if marker not in text:
            raise FormatError(f"{path}: run file has no [config] section")
        text = text.split(marker, 1)[1]
    return PipelineConfig.from_text(text)


def render_run(command: str, argv: Sequence[str], seed: int, cfg: PipelineConfig) -> str:
    return "\n".join([
        RUN_MAGIC,
        f"command={command}",
        f"argv={' '.join(argv)}",
        f"seed={seed}",
        f"version={__version__}",
        f"config_hash={cfg.digest()}",
        "[config]",
        cfg.to_text(),
    ])


def _out(args, *parts) -> str:
    return os.path.join(args.out, *parts)


def _event_paths(directory: str) -> List[str]:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"no such directory: {directory}")
    return sorted(glob.glob(os.path.join(directory, "*.csv")))


def _labels_from_manifest(path: Optional[str]) -> Dict[str, "object"]:
    from .export import read_manifest
    from .kinematics import Label

    if path is None or not os.path.exists(path):
        return {}
    return {row["event_id"]: Label(row["label"], row["source"]) for row in read_manifest(path)
            if row["label"]}


def _parse_events(directory: str, cfg: PipelineConfig):
    from .eventfile import parse_event_file

    events = []
    for path in _event_paths(directory):
        try:
            events.append(parse_event_file(path, window_ms=cfg.pre_ms + cfg.post_ms))
        except ValidationError as exc:
            exc.args = (f"{os.path.basename(path)}: {exc}",) + exc.args[1:]
            raise
    return events


def load_classifier(path: str):
    from .mignet.persist import MAGIC as MIGNET_MAGIC, load_model
    from .svm.persist import MODEL_MAGIC as SVM_MAGIC, load_svm

    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    if first == MIGNET_MAGIC:
        return load_model(path), "MiGNet"
    if first == SVM_MAGIC:
        return load_svm(path), "SVM"
    raise FormatError(f"{path}: not a model file")


# -- commands --------------------------------------------------------------

def cmd_simulate(args, cfg: PipelineConfig) -> int:
    from .export import export_package
    from .sim import gen_dataset

    data = gen_dataset(args.n_true, args.n_false, args.seed, cfg.trigger_config())
    rows = export_package([e for e, _ in data], [l for _, l in data], args.out, cde=False)
    print(f"wrote {len(rows)} events to {_out(args, 'events')}")
    return EXIT_OK


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    from .dataset import LabeledEvent, counts, save_window_set
    from .kinematics import prepare

    events_dir = args.events or _out(args, "events")
    manifest = args.manifest or os.path.join(os.path.dirname(os.path.abspath(events_dir)),
                                             "manifest.csv")
    events = _parse_events(events_dir, cfg)
    labels = _labels_from_manifest(manifest)
    missing = [e.event_id for e in events if e.event_id not in labels]
    if missing:
        raise InvalidParameterError(f"no label for {len(missing)} events, e.g. {missing[0]!r}")
    proc = cfg.processing_config()
    windows = [LabeledEvent(e.event_id, prepare(e, proc), labels[e.event_id]) for e in events]
    save_window_set(windows, _out(args, "windows"))
    print(f"ingested {len(windows)} events {counts(windows)}")
    return EXIT_OK


def cmd_split(args, cfg: PipelineConfig) -> int:
    from .dataset import load_window_set, make_split

    events = load_window_set(args.windows or _out(args, "windows"))
    if args.test_fraction is not None:
        spec = make_split(events, test_fraction=args.test_fraction, seed=args.seed)
    else:
        spec = make_split(events, n_test_true=cfg.test_true, n_test_false=cfg.test_false,
                          seed=args.seed)
    spec.save(_out(args, "split.txt"))
    print(f"split: {len(spec.train_ids)} train, {len(spec.test_ids)} test")
    return EXIT_OK


def cmd_augment(args, cfg: PipelineConfig) -> int:
    from .dataset import SplitSpec, apply_split, counts, expand_training_set, load_window_set, \
        save_window_set

    events = load_window_set(args.windows or _out(args, "windows"))
    spec = SplitSpec.load(args.split or _out(args, "split.txt"))
    train, test = apply_split(events, spec)
    if spec.augment_train:
        train = expand_training_set(train, cfg.augment_shifts, cfg.augment_classes)
    save_window_set(train, _out(args, "train"))
    save_window_set(test, _out(args, "test"))
    print(f"train {counts(train)}, test {counts(test)}")
    return EXIT_OK


def _train_set(args):
    from .dataset import load_window_set
    return load_window_set(args.train or _out(args, "train"))


def cmd_train_mignet(args, cfg: PipelineConfig) -> int:
    from .dataset import UNIT_WEIGHTS, class_weights_for
    from .mignet import fit, init_model, save_model

    train = _train_set(args)
    weights = class_weights_for(train) if cfg.class_weighting else UNIT_WEIGHTS
    n_cols = train[0].window.data.shape[1] if train else None
    model = init_model(cfg.architecture(n_cols), args.seed, cfg.input_gain)
    result = fit(model, train, cfg.train_config(args.seed, weights),
                 progress=lambda e, l: log.info("epoch %d loss %.6f", e + 1, l))
    save_model(result.model, _out(args, "mignet.model"))
    with open(_out(args, "mignet-train.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        fh.writelines(f"{i + 1},{v!r}\n" for i, v in enumerate(result.epoch_losses))
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(f"trained MiGNet on {len(train)} windows; final epoch loss {final:.6f}")
    return EXIT_OK


def cmd_train_svm(args, cfg: PipelineConfig) -> int:
    from .kinematics import Source
    from .svm import feature_matrix, save_selection, save_svm, sequential_forward_selection, \
        train_svm

    train = _train_set(args)
    x = feature_matrix([e.window for e in train])
    y = [e.label.value for e in train]
    mask = None
    if args.select:
        sel = sequential_forward_selection(x, y, cfg.svm_k_folds, cfg.svm_max_features, args.seed,
                                           cfg.svm_kernel, cfg.svm_c, cfg.svm_gamma)
        save_selection(sel, _out(args, "svm-selection.txt"))
        mask = sel.selected or None
        print(f"selected features {list(sel.selected)} (CV error {sel.cv_error:.4f})")
    ids = [e.label.parent_id if e.label.source is Source.AUGMENTED else e.event_id for e in train]
    model = train_svm(x, y, cfg.svm_kernel, cfg.svm_c, cfg.svm_gamma, mask, train_ids=ids)
    save_svm(model, _out(args, "svm.model"))
    print(f"trained SVM on {len(train)} windows; {model.support_vectors.shape[0]} support vectors"
          + (" (degenerate)" if model.degenerate else ""))
    return EXIT_OK


def cmd_sweep(args, cfg: PipelineConfig) -> int:
    from .mignet.sweep import greedy_sweep

    train = [e for e in _train_set(args) if e.label.parent_id is None]
    result = greedy_sweep(train, cfg, args.seed,
                          progress=lambda t: log.info("%s %s %.4f", t.stage, t.descriptor,
                                                      t.val_accuracy))
    with open(_out(args, "sweep.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_text())
    print(f"best architecture: {result.best.descriptor()}")
    return EXIT_OK


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    from .dataset import load_window_set
    from .evaluation import evaluate, render_table, save_report

    model, kind = load_classifier(args.model)
    test = load_window_set(args.test or _out(args, "test"))
    report = evaluate(model, test, seed=args.seed, test_name=args.name, model_name=kind,
                      tie=cfg.tie_rule)
    path = args.report or _out(args, "report.txt")
    save_report([report], path)
    sys.stdout.write(render_table([report]))
    return EXIT_OK


def cmd_classify(args, cfg: PipelineConfig) -> int:
    from .evaluation import classify_windows, model_fingerprint
    from .export import manifest_row, write_manifest
    from .kinematics import prepare

    model, _ = load_classifier(args.model)
    events = _parse_events(args.events, cfg)
    proc = cfg.processing_config()
    preds = classify_windows(model, [prepare(e, proc) for e in events], cfg.tie_rule)
    mid = model_fingerprint(model)
    rows = [manifest_row(e.event_id, None, p, mid) for e, p in zip(events, preds)]
    write_manifest(rows, _out(args, "predictions.csv"))
    n_true = sum(1 for label, _ in preds if label.value == "TrueImpact")
    print(f"classified {len(events)} events: {n_true} TrueImpact, {len(events) - n_true} NonContact")
    return EXIT_OK


def cmd_export(args, cfg: PipelineConfig) -> int:
    from .export import export_package, read_manifest
    from .kinematics import LabelValue

    events_dir = args.events or _out(args, "events")
    events = _parse_events(events_dir, cfg)
    manifest = args.manifest or os.path.join(os.path.dirname(os.path.abspath(events_dir)),
                                             "manifest.csv")
    labels = _labels_from_manifest(manifest)
    predictions, model_id = {}, ""
    if args.predictions:
        for row in read_manifest(args.predictions):
            if row["predicted"]:
                predictions[row["event_id"]] = (LabelValue(row["predicted"]), float(row["score"]))
                model_id = row["model_id"] or model_id
    rows = export_package(events, [labels.get(e.event_id) for e in events],
                          _out(args, "package"), predictions, model_id)
    print(f"exported {len(rows)} events to {_out(args, 'package')}")
    return EXIT_OK


def cmd_report(args, cfg: PipelineConfig) -> int:
    from .evaluation import (REFERENCE_ROWS, REFERENCE_TEST_SPLIT, check_report_rows,
                             consistent_matrices, load_report, render_table)

    reports = []
    for path in args.reports:
        reports.extend(load_report(path))
    lines = [render_table(reports).rstrip("\n")] if reports else []
    for r, ok in check_report_rows(reports):
        if not ok:
            lines.append(f"inconsistent: {r.test_name or '-'} {r.model_name or '-'}")
    if args.reference:
        n_pos, n_neg = REFERENCE_TEST_SPLIT
        lines.append("")
        lines.append("reference rows (whole percent), checked for an integer confusion matrix")
        lines.append(f"  split: {n_pos} positive / {n_neg} negative; total: the row's dataset "
                     "size with any class split")
        for ref in REFERENCE_ROWS:
            verdicts = []
            for label, res in (
                    ("split", consistent_matrices(ref.percent, n_pos, n_neg, limit=3)),
                    ("total", consistent_matrices(ref.percent, total=ref.dataset_size, limit=3))):
                verdicts.append(f"{label} " + (", ".join(
                    f"tp={m.tp} fn={m.fn} fp={m.fp} tn={m.tn}" for m in res.matrices)
                    if res.consistent else "INCONSISTENT"))
            pct = "  ".join(f"{p}%" for p in ref.percent)
            lines.append(f"{ref.test_name}  {ref.model_name:<6}  {pct}  size {ref.dataset_size}  "
                         + "; ".join(verdicts))
    text = "\n".join(lines) + "\n"
    with open(_out(args, "report-table.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "split": cmd_split, "augment": cmd_augment,
    "train-mignet": cmd_train_mignet, "train-svm": cmd_train_svm, "sweep": cmd_sweep,
    "evaluate": cmd_evaluate, "classify": cmd_classify, "export": cmd_export,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (default 0)")
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="key = value config file, or a run file to replay")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="impactnet", parents=[common],
                                description="Head-impact event pipeline: simulate, ingest, "
                                            "train and evaluate impact classifiers.")
    p.add_argument("--version", action="version", version=f"impactnet {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    s = add("simulate", "generate synthetic triggered events and a labelled manifest")
    s.add_argument("--true", dest="n_true", type=int, required=True, help="number of impacts")
    s.add_argument("--false", dest="n_false", type=int, required=True,
                   help="number of non-contact events")

    s = add("ingest", "parse and validate event files into a window set")
    s.add_argument("--events", help="event file directory (default OUT/events)")
    s.add_argument("--manifest", help="label manifest (default: manifest.csv beside the events)")

    s = add("split", "stratified train/test split of a window set")
    s.add_argument("--windows", help="window set (default OUT/windows)")
    s.add_argument("--test-fraction", type=float,
                   help="test fraction per class instead of the configured counts")

    s = add("augment", "apply a split and expand the training side with time shifts")
    s.add_argument("--windows", help="window set (default OUT/windows)")
    s.add_argument("--split", help="split file (default OUT/split.txt)")

    s = add("train-mignet", "train the convolutional classifier")
    s.add_argument("--train", help="training window set (default OUT/train)")

    s = add("train-svm", "select features and train the SVM baseline")
    s.add_argument("--train", help="training window set (default OUT/train)")
    s.add_argument("--no-select", dest="select", action="store_false",
                   help="use every feature instead of forward selection")

    s = add("sweep", "greedy search over layer counts and head type")
    s.add_argument("--train", help="training window set (default OUT/train)")

    s = add("evaluate", "evaluate a saved model on a test window set")
    s.add_argument("--model", required=True, help="mignet.model or svm.model")
    s.add_argument("--test", help="test window set (default OUT/test)")
    s.add_argument("--name", default="", help="row label for the report table")
    s.add_argument("--report", help="report path (default OUT/report.txt)")

    s = add("classify", "apply a saved model to event files")
    s.add_argument("--model", required=True)
    s.add_argument("--events", required=True, help="directory of event files")

    s = add("export", "write an export package with a manifest")
    s.add_argument("--events", help="event file directory (default OUT/events)")
    s.add_argument("--manifest", help="label manifest (default: manifest.csv beside the events)")
    s.add_argument("--predictions", help="predictions.csv from classify")

    s = add("report", "render evaluation reports as a table and check row consistency")
    s.add_argument("reports", nargs="*", help="report files written by evaluate")
    s.add_argument("--reference", action="store_true",
                   help="append the reference result rows with a consistency check")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help/--version exit 0
        return int(exc.code or 0)
    args.seed = getattr(args, "seed", 0)
    args.out = getattr(args, "out", ".")
    args.config = getattr(args, "config", None)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        os.makedirs(os.path.join(args.out, "runs"), exist_ok=True)
        with open(os.path.join(args.out, "runs", f"{args.command}.run"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(render_run(args.command, argv, args.seed, cfg))
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, PipelineError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
