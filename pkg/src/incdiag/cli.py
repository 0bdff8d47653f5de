"""Command-line front end.

Commands:
    run        execute an experiment described by a TOML config file
    ablate     sweep component variants (loss / selection / classifier)
    gen-synth  write a synthetic Gaussian-stream dataset as CSV
    defaults   print the default config with every supported key

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical error.
"""

import argparse
import csv
import itertools
import json
import os
import sys
from dataclasses import dataclass, field, fields as dc_fields

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


from . import __version__
from . import encoder as enc
from . import memory as mem
from .datasets import (PRESET_NAMES, LabeledDataset, ScenarioConfig, build_scenario,
                       load_csv_dataset, scenario_preset, synth_fault_stream,
                       synth_gaussian_stream)
from .errors import ConfigError, DataError, NumericalError
from .losses import LossConfig
from .rng import STREAM_DATA, derive_seed
from .session import (CLASSIFIER_KINDS, LOSS_KINDS, SELECTION_STRATEGIES, TrainConfig,
                      aggregate_metrics, report_to_dict, run_experiment)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass
class ExperimentConfig:
    """Flat, fully-typed description of one experiment run."""

    preset: str = "synth"
    seed: int = 0
    out_dir: str = "runs/out"
    dump_embeddings: bool = False
    normalize: bool = False

    csv: str = ""
    label_column: str = "label"
    synth_kind: str = "faults"  # faults | isotropic
    synth_classes: int = 6
    synth_dim: int = 24
    synth_means_scale: float = 4.0
    synth_fault_offset: float = 3.0
    synth_noise_sigma: float = 0.7
    data_seed: int = -1  # -1: derive from master seed

    base_classes: list[int] = field(default_factory=lambda: [0, 1])
    novel_per_session: int = 2
    sessions: int = 3
    normal_train_count: int = 200
    fault_train_count: int = 10
    test_per_class: int = 50
    memory_k: int = 12

    hidden_dims: list[int] = field(default_factory=lambda: [64, 64])
    embed_dim: int = 16
    activation: str = "relu"

    temperature: float = 0.07
    kd_weight: float = 1.0
    loss: str = "scl"

    selection: str = "mes"
    classifier: str = "brf"
    n_trees: int = 100
    mtry: int = 0  # 0: ceil(sqrt(embed_dim))
    min_leaf: int = 1

    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 0.01
    weight_decay: float = 1e-5
    fcc_epochs: int = 500
    fcc_lr: float = 0.001


_BOOL_KEYS = {"dump_embeddings", "normalize"}
_LIST_KEYS = {"base_classes", "hidden_dims"}


def load_experiment_config(path) -> ExperimentConfig:
    """Parse and validate a flat TOML config file."""
    if not os.path.isfile(path):
        raise ConfigError(f"no such config file: {path}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    cfg = ExperimentConfig()
    known = {f.name: f for f in dc_fields(ExperimentConfig)}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        default = getattr(cfg, key)
        if key in _LIST_KEYS:
            if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
                raise ConfigError(f"{path}: {key} must be a list of integers")
        elif key in _BOOL_KEYS:
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: {key} must be a boolean")
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{path}: {key} must be a string")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path}: {key} must be a number")
            value = float(value)
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}: {key} must be an integer")
        setattr(cfg, key, value)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.preset != "custom" and cfg.preset not in PRESET_NAMES:
        raise ConfigError(
            f"preset must be 'custom' or one of {', '.join(PRESET_NAMES)}; got {cfg.preset!r}")
    if cfg.temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {cfg.temperature}")
    if cfg.kd_weight < 0:
        raise ConfigError("kd_weight must be >= 0")
    if cfg.loss not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {cfg.loss!r}")
    if cfg.selection not in SELECTION_STRATEGIES:
        raise ConfigError(
            f"selection must be one of {SELECTION_STRATEGIES}, got {cfg.selection!r}")
    if cfg.classifier not in CLASSIFIER_KINDS:
        raise ConfigError(
            f"classifier must be one of {CLASSIFIER_KINDS}, got {cfg.classifier!r}")
    if cfg.activation not in ("relu", "tanh"):
        raise ConfigError(f"activation must be 'relu' or 'tanh', got {cfg.activation!r}")
    if cfg.embed_dim < 2:
        raise ConfigError("embed_dim must be >= 2")
    if not cfg.hidden_dims or any(h < 1 for h in cfg.hidden_dims):
        raise ConfigError("hidden_dims must be a nonempty list of positive widths")
    if cfg.csv and not os.path.isfile(cfg.csv):
        raise ConfigError(f"csv path does not exist: {cfg.csv}")
    for name in ("epochs",):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0")
    for name in ("batch_size", "n_trees", "min_leaf", "fcc_epochs", "memory_k",
                 "sessions", "novel_per_session", "normal_train_count",
                 "fault_train_count", "test_per_class", "synth_classes", "synth_dim"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be a positive integer")
    if cfg.mtry < 0:
        raise ConfigError("mtry must be >= 0 (0 selects the sqrt default)")
    if cfg.synth_noise_sigma <= 0:
        raise ConfigError("synth_noise_sigma must be > 0")
    if cfg.synth_kind not in ("faults", "isotropic"):
        raise ConfigError(
            f"synth_kind must be 'faults' or 'isotropic', got {cfg.synth_kind!r}")


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot render {type(value)} as TOML")


def config_to_toml(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_toml_value(getattr(cfg, f.name))}"
             for f in dc_fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"


def scenario_from_config(cfg: ExperimentConfig) -> ScenarioConfig:
    if cfg.preset != "custom":
        return scenario_preset(cfg.preset, seed=cfg.seed)
    return ScenarioConfig(
        base_classes=tuple(cfg.base_classes),
        novel_per_session=cfg.novel_per_session,
        sessions=cfg.sessions,
        normal_train_count=cfg.normal_train_count,
        fault_train_count=cfg.fault_train_count,
        test_per_class=cfg.test_per_class,
        memory_k=cfg.memory_k,
        seed=cfg.seed,
    )


def dataset_from_config(cfg: ExperimentConfig, scenario: ScenarioConfig) -> LabeledDataset:
    if cfg.csv:
        dataset = load_csv_dataset(cfg.csv, cfg.label_column)
    else:
        total = scenario.total_classes
        if cfg.synth_classes < total:
            raise ConfigError(
                f"synth_classes={cfg.synth_classes} cannot cover the scenario's "
                f"{total} classes")
        counts = [(scenario.normal_train_count if c == 0 else scenario.fault_train_count)
                  + scenario.test_per_class for c in range(cfg.synth_classes)]
        data_seed = cfg.data_seed if cfg.data_seed >= 0 else derive_seed(cfg.seed, STREAM_DATA)
        if cfg.synth_kind == "faults":
            dataset = synth_fault_stream(cfg.synth_classes, cfg.synth_dim,
                                         cfg.synth_means_scale, cfg.synth_fault_offset,
                                         cfg.synth_noise_sigma, counts, data_seed)
        else:
            dataset = synth_gaussian_stream(cfg.synth_classes, cfg.synth_dim,
                                            cfg.synth_means_scale, cfg.synth_noise_sigma,
                                            counts, data_seed)
    if cfg.normalize:
        feats = dataset.features
        std = feats.std(axis=0)
        std[std == 0.0] = 1.0
        dataset = LabeledDataset(dataset.dim, dataset.class_count,
                                 (feats - feats.mean(axis=0)) / std,
                                 dataset.labels, dataset.label_mapping)
    return dataset


def train_config_from(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        loss=LossConfig(temperature=cfg.temperature, kd_weight=cfg.kd_weight),
        loss_kind=cfg.loss,
        selection=cfg.selection,
        classifier=cfg.classifier,
        n_trees=cfg.n_trees,
        mtry=cfg.mtry or None,
        min_leaf=cfg.min_leaf,
        fcc_epochs=cfg.fcc_epochs,
        fcc_lr=cfg.fcc_lr,
    )


def encoder_config_from(cfg: ExperimentConfig, input_dim: int) -> enc.EncoderConfig:
    return enc.EncoderConfig(input_dim=input_dim, hidden_dims=tuple(cfg.hidden_dims),
                             embed_dim=cfg.embed_dim, activation=cfg.activation,
                             seed=cfg.seed)


def _write_reports(out_dir: str, cfg: ExperimentConfig, reports) -> None:
    os.makedirs(out_dir, exist_ok=True)
    summary = aggregate_metrics(reports)
    doc = {
        "seed": cfg.seed,
        "config": {f.name: getattr(cfg, f.name) for f in dc_fields(ExperimentConfig)},
        "sessions": [report_to_dict(r) for r in reports],
        "average_accuracy": summary["average"],
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    with open(os.path.join(out_dir, "report.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session", "accuracy", "average"])
        for r in reports:
            writer.writerow([r.session_index, repr(r.accuracy), repr(r.average_accuracy)])
    with open(os.path.join(out_dir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(config_to_toml(cfg))


def _dump_embeddings(out_dir: str, state, plan) -> None:
    path = os.path.join(out_dir, "embeddings.csv")
    dim = state.encoder.config.embed_dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session", "class", "split"] + [f"e{i}" for i in range(dim)])
        session = state.session_index
        for s in state.buffer.sets:
            z = enc.encode_batch(state.encoder, s.features)
            for row in z:
                writer.writerow([session, s.class_id, "exemplar"]
                                + [repr(float(v)) for v in row])
        test_x, test_y = plan.cumulative_test(session)
        z = enc.encode_batch(state.encoder, test_x)
        for label, row in zip(test_y, z):
            writer.writerow([session, int(label), "test"]
                            + [repr(float(v)) for v in row])


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.dump_embeddings:
        cfg.dump_embeddings = True
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_experiment_config(args.config), args)
    scenario = scenario_from_config(cfg)
    dataset = dataset_from_config(cfg, scenario)
    plan = build_scenario(dataset, scenario)
    state, reports = run_experiment(plan, encoder_config_from(cfg, dataset.dim),
                                    train_config_from(cfg), cfg.seed)
    _write_reports(cfg.out_dir, cfg, reports)
    if cfg.dump_embeddings:
        _dump_embeddings(cfg.out_dir, state, plan)
    if state.buffer.sets:
        mem.buffer_to_csv(state.buffer, os.path.join(cfg.out_dir, "buffer.csv"))
    for r in reports:
        print(f"session {r.session_index}: accuracy {r.accuracy:.4f} "
              f"({len(r.classes)} classes, {r.test_count} test samples)")
    print(f"average accuracy: {aggregate_metrics(reports)['average']:.4f}")
    print(f"reports written to {cfg.out_dir}")
    return EXIT_OK


_AXES = {
    "loss": list(LOSS_KINDS),
    "selection": ["mes", "herding", "random", "mixed"],
    "classifier": list(CLASSIFIER_KINDS),
}


def cmd_ablate(args) -> int:
    cfg = _apply_overrides(load_experiment_config(args.config), args)
    axes = [a.strip() for a in args.axes.split(",") if a.strip()]
    if not axes:
        raise ConfigError("--axes must name at least one of: " + ", ".join(_AXES))
    for axis in axes:
        if axis not in _AXES:
            raise ConfigError(f"unknown ablation axis {axis!r}; choose from "
                              + ", ".join(_AXES))
    grids = [(_AXES[a] if a in axes else [getattr(cfg, a)]) for a in _AXES]
    scenario = scenario_from_config(cfg)
    dataset = dataset_from_config(cfg, scenario)
    plan = build_scenario(dataset, scenario)
    encoder_cfg = encoder_config_from(cfg, dataset.dim)

    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    n_sessions = len(plan.session_classes)
    for loss_kind, selection, classifier in itertools.product(*grids):
        cfg.loss, cfg.selection, cfg.classifier = loss_kind, selection, classifier
        _, reports = run_experiment(plan, encoder_cfg, train_config_from(cfg), cfg.seed)
        summary = aggregate_metrics(reports)
        rows.append([loss_kind, selection, classifier]
                    + [repr(r.accuracy) for r in reports]
                    + [repr(summary["average"])])
        print(f"loss={loss_kind} selection={selection} classifier={classifier}: "
              f"average {summary['average']:.4f}")
    path = os.path.join(cfg.out_dir, "ablation.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["loss", "selection", "classifier"]
                        + [f"acc_s{k}" for k in range(1, n_sessions + 1)] + ["average"])
        writer.writerows(rows)
    print(f"{len(rows)} variants written to {path}")
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    if args.counts:
        counts = [int(c) for c in args.counts.split(",")]
    else:
        counts = args.count
    if args.kind == "faults":
        dataset = synth_fault_stream(args.classes, args.dim, args.means_scale,
                                     args.fault_offset, args.noise_sigma, counts,
                                     args.seed)
    elif args.kind == "isotropic":
        dataset = synth_gaussian_stream(args.classes, args.dim, args.means_scale,
                                        args.noise_sigma, counts, args.seed)
    else:
        raise ConfigError(f"unknown synthetic kind {args.kind!r}")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    try:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
            for feats, label in zip(dataset.features, dataset.labels):
                writer.writerow([repr(float(v)) for v in feats] + [int(label)])
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc}") from None
    print(f"wrote {len(dataset)} samples, {dataset.class_count} classes, "
          f"dim {dataset.dim} to {args.out}")
    return EXIT_OK


def cmd_defaults(_args) -> int:
    sys.stdout.write(config_to_toml(ExperimentConfig()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incdiag",
        description="Class-incremental fault diagnosis on imbalanced sensor data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a TOML config")
    run.add_argument("--config", required=True, help="path to the TOML config file")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument("--dump-embeddings", action="store_true",
                     help="also write per-session embeddings.csv")
    run.set_defaults(func=cmd_run)

    ablate = sub.add_parser("ablate", help="sweep component variants")
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--axes", required=True,
                        help="comma list from: loss, selection, classifier")
    ablate.add_argument("--seed", type=int, default=None)
    ablate.add_argument("--out", default=None)
    ablate.add_argument("--dump-embeddings", action="store_true", help=argparse.SUPPRESS)
    ablate.set_defaults(func=cmd_ablate)

    gen = sub.add_parser("gen-synth", help="write a synthetic dataset CSV")
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.add_argument("--kind", choices=("faults", "isotropic"), default="faults",
                     help="faults: one normal state plus offset fault classes")
    gen.add_argument("--classes", type=int, default=6)
    gen.add_argument("--dim", type=int, default=24)
    gen.add_argument("--means-scale", type=float, default=4.0)
    gen.add_argument("--fault-offset", type=float, default=3.0)
    gen.add_argument("--noise-sigma", type=float, default=0.7)
    gen.add_argument("--count", type=int, default=300, help="samples per class")
    gen.add_argument("--counts", default="",
                     help="comma list of per-class counts (overrides --count)")
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=cmd_gen_synth)

    defaults = sub.add_parser("defaults", help="print the default config as TOML")
    defaults.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
