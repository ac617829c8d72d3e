"""Command-line harness tying pipeline -> models -> training -> evaluation.

Commands: train, evaluate, compare, synth, export-slice, import-slice.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

Configuration precedence: built-in defaults < JSON config file (flat keys
mirroring the CLI flags, dotted prefixes allowed) < explicit CLI flags.
The output directory may also be set via the PYROCAST_OUT environment
variable.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import click
import numpy as np

from . import data as datamod
from .archive import NamedTensorArchive
from .decoder import (DecoderBlockConfig, FrozenSlice, export_slice,
                      load_slice)
from .errors import (ArchiveFormatError, ConfigError, ContractError,
                     DimensionError, DivergenceError, ManifestError,
                     ParseError, PyrocastError, SchemaError)
from .metrics import ScoredSet, score_model
from .models import (ModelConfig, VARIANTS, audit_parameters, build_model,
                     load_checkpoint, save_checkpoint)
from .report import TABLE_COLUMNS, _table_row, emit_report
from .training import LossConfig, TrainConfig, predict, train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass
class ExperimentConfig:
    """Every tunable of an experiment run with its default."""
    model: str = "internal_world"
    data: str | None = None          # CSV path; None -> synthetic
    synth: str = "pos=2000,neg=2000,sep=6"
    cutoff: str = "2022-01-01"
    seed: int = 42
    input_dim: int = 276
    blocks: int = 2
    pseudo_seq_len: int = 1
    loss: str = "weighted_bce"
    micro_batch: int = 32
    accumulation: int = 4
    max_epochs: int = 300
    patience: int = 10
    min_delta: float = 0.001
    clip_norm: float = 1.0
    lr_projection: float = 1.0e-3
    lr_classifier: float = 5.0e-4
    wd_projection: float = 1.0e-2
    wd_classifier: float = 1.0e-3
    out_dir: str = "runs"

    def model_config(self, variant: str | None = None) -> ModelConfig:
        v = (variant or self.model).replace("-", "_")
        cfg = ModelConfig(variant=v, input_dim=self.input_dim,
                          pseudo_seq_len=self.pseudo_seq_len, seed=self.seed)
        cfg.slice = dataclasses.replace(cfg.slice, block_count=self.blocks,
                                        seed=self.seed)
        if self.input_dim % cfg.branches != 0:
            raise ConfigError(
                f"input_dim ({self.input_dim}) must be divisible by "
                f"{cfg.branches} for the branch split")
        return cfg.validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=LossConfig(kind=self.loss),
            micro_batch=self.micro_batch,
            accumulation=self.accumulation,
            max_epochs=self.max_epochs,
            patience=self.patience,
            min_delta=self.min_delta,
            clip_norm=self.clip_norm,
            lr_projection=self.lr_projection,
            lr_classifier=self.lr_classifier,
            wd_projection=self.wd_projection,
            wd_classifier=self.wd_classifier,
            seed=self.seed,
        )

    def cutoff_date(self) -> dt.date:
        try:
            return dt.date.fromisoformat(self.cutoff)
        except ValueError as exc:
            raise ConfigError(f"bad cutoff date {self.cutoff!r}: {exc}")


def _load_config(config_path: str | None, overrides: dict) -> ExperimentConfig:
    values: dict = {}
    problems: list[str] = []
    valid = {f.name for f in fields(ExperimentConfig)}
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_path}: {exc}")
        for key, value in raw.items():
            name = key.split(".")[-1].replace("-", "_")
            if name not in valid:
                problems.append(f"unknown config key {key!r}")
            else:
                values[name] = value
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if problems:
        raise ConfigError("; ".join(problems))
    cfg = ExperimentConfig(**values)
    if "out_dir" not in values and os.environ.get("PYROCAST_OUT"):
        cfg.out_dir = os.environ["PYROCAST_OUT"]
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    problems = []
    if cfg.model.replace("-", "_") not in VARIANTS:
        problems.append(f"unknown model {cfg.model!r}; choose from "
                        + ", ".join(VARIANTS))
    if cfg.loss not in ("weighted_bce", "balanced_focal"):
        problems.append(f"unknown loss {cfg.loss!r}")
    if cfg.micro_batch < 1 or cfg.accumulation < 1:
        problems.append("micro_batch and accumulation must be >= 1")
    if cfg.max_epochs < 1:
        problems.append("max_epochs must be >= 1")
    try:
        cfg.cutoff_date()
    except ConfigError as exc:
        problems.append(str(exc))
    try:
        _parse_synth(cfg.synth)
    except ConfigError as exc:
        problems.append(str(exc))
    if problems:
        raise ConfigError("; ".join(problems))


def _parse_synth(spec: str) -> dict:
    out = {"pos": 2000, "neg": 2000, "sep": 6.0}
    for part in filter(None, spec.split(",")):
        if "=" not in part:
            raise ConfigError(f"bad synth parameter {part!r}; use key=value")
        key, value = part.split("=", 1)
        if key not in out:
            raise ConfigError(f"unknown synth key {key!r}; "
                              f"expected pos, neg, sep")
        try:
            out[key] = float(value) if key == "sep" else int(value)
        except ValueError:
            raise ConfigError(f"bad synth value {part!r}")
    return out


def _load_dataset(cfg: ExperimentConfig) -> datamod.RawDataset:
    if cfg.data:
        return datamod.load_csv(cfg.data, expected_features=cfg.input_dim)
    synth = _parse_synth(cfg.synth)
    return datamod.synth_generate(synth["pos"], synth["neg"], cfg.input_dim,
                                  cfg.seed, synth["sep"], cfg.cutoff_date())


def _write_history(history: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_f1", "threshold",
                         "lr_projection", "lr_classifier"])
        for row in history:
            writer.writerow([row["epoch"], f"{row['train_loss']:.8f}",
                             f"{row['val_f1']:.8f}", f"{row['threshold']:.8f}",
                             f"{row['lr_projection']:.10f}",
                             f"{row['lr_classifier']:.10f}"])


def _print_table(reports) -> None:
    click.echo("\t".join(TABLE_COLUMNS))
    for r in reports:
        click.echo("\t".join(str(c) for c in _table_row(r)))


def _train_one(cfg: ExperimentConfig, variant: str, train_split, val_split):
    model = build_model(cfg.model_config(variant))
    result = train(model, train_split, val_split, cfg.train_config())
    scores = predict(model, val_split.features)
    scored = ScoredSet(scores, val_split.labels)
    audit = audit_parameters(model)
    report = score_model(
        variant, scored, threshold=result.threshold,
        train_time_s=result.state.train_time_s,
        trainable_params=audit["trainable"],
        frozen_params=audit["frozen"])
    return model, result, report, scored


_CONFIG_OPTIONS = [
    click.option("--config", "config_path", type=str, default=None,
                 help="JSON config file; CLI flags override its values."),
    click.option("--model", type=str, default=None,
                 help="Model variant [default: internal_world]."),
    click.option("--data", type=str, default=None,
                 help="CSV dataset path; omit to use synthetic data."),
    click.option("--synth", type=str, default=None,
                 help="Synthetic data spec [default: pos=2000,neg=2000,sep=6]."),
    click.option("--cutoff", type=str, default=None,
                 help="Temporal split cutoff date [default: 2022-01-01]."),
    click.option("--seed", type=int, default=None,
                 help="Global RNG seed [default: 42]."),
    click.option("--input-dim", "input_dim", type=int, default=None,
                 help="Feature count d [default: 276]."),
    click.option("--blocks", type=int, default=None,
                 help="Frozen decoder blocks [default: 2]."),
    click.option("--pseudo-seq-len", "pseudo_seq_len", type=int, default=None,
                 help="Pseudo-sequence length fed to the slice [default: 1]."),
    click.option("--loss", type=str, default=None,
                 help="weighted_bce or balanced_focal [default: weighted_bce]."),
    click.option("--micro-batch", "micro_batch", type=int, default=None,
                 help="Micro-batch size [default: 32]."),
    click.option("--accumulation", type=int, default=None,
                 help="Micro-batches per optimizer step [default: 4]."),
    click.option("--max-epochs", "max_epochs", type=int, default=None,
                 help="Epoch budget [default: 300]."),
    click.option("--patience", type=int, default=None,
                 help="Early-stopping patience [default: 10]."),
    click.option("--min-delta", "min_delta", type=float, default=None,
                 help="Minimum F1 improvement [default: 0.001]."),
    click.option("--clip-norm", "clip_norm", type=float, default=None,
                 help="Global gradient-norm clip [default: 1.0]."),
    click.option("--lr-projection", "lr_projection", type=float, default=None,
                 help="Projection-group base LR [default: 1e-3]."),
    click.option("--lr-classifier", "lr_classifier", type=float, default=None,
                 help="Classifier-group base LR [default: 5e-4]."),
    click.option("--wd-projection", "wd_projection", type=float, default=None,
                 help="Projection-group weight decay [default: 1e-2]."),
    click.option("--wd-classifier", "wd_classifier", type=float, default=None,
                 help="Classifier-group weight decay [default: 1e-3]."),
    click.option("--out", "out_dir", type=str, default=None,
                 help="Output directory [default: runs; env PYROCAST_OUT]."),
]


def _with_config_options(fn):
    for opt in reversed(_CONFIG_OPTIONS):
        fn = opt(fn)
    return fn


def _gather(kwargs) -> ExperimentConfig:
    config_path = kwargs.pop("config_path", None)
    return _load_config(config_path, kwargs)


@click.group()
def cli():
    """Wildfire-occurrence prediction experiments."""


@cli.command("train")
@_with_config_options
def cmd_train(**kwargs):
    """Train one model; write checkpoint, history CSV, and report JSON."""
    cfg = _gather(kwargs)
    ds = _load_dataset(cfg)
    train_split, val_split = datamod.prepare_splits(ds, cfg.cutoff_date(),
                                                    cfg.seed)
    variant = cfg.model.replace("-", "_")
    model, result, report, scored = _train_one(cfg, variant, train_split,
                                               val_split)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / f"{variant}.nta")
    _write_history(result.history, out / f"{variant}_history.csv")
    (out / f"{variant}_report.json").write_text(
        json.dumps(report.to_dict(), indent=2))
    datamod.save_manifest(out / "splits.json", train_split, val_split,
                          cfg.cutoff_date(), cfg.seed)
    _print_table([report])


@cli.command("evaluate")
@click.option("--checkpoint", required=True, type=str,
              help="Model checkpoint (.nta) written by train.")
@_with_config_options
def cmd_evaluate(checkpoint, **kwargs):
    """Score a saved checkpoint on a dataset's validation split."""
    cfg = _gather(kwargs)
    model = load_checkpoint(checkpoint)
    ds = _load_dataset(cfg)
    _, val_split = datamod.prepare_splits(ds, cfg.cutoff_date(), cfg.seed)
    scores = predict(model, val_split.features)
    audit = audit_parameters(model)
    report = score_model(model.config.variant,
                         ScoredSet(scores, val_split.labels),
                         trainable_params=audit["trainable"],
                         frozen_params=audit["frozen"])
    _print_table([report])


@cli.command("compare")
@click.option("--models", "models_csv", type=str,
              default=",".join(VARIANTS),
              show_default=True,
              help="Comma-separated variants to train on identical splits.")
@_with_config_options
def cmd_compare(models_csv, **kwargs):
    """Train several variants on identical splits; emit comparison artifacts."""
    cfg = _gather(kwargs)
    variants = [v.strip().replace("-", "_")
                for v in models_csv.split(",") if v.strip()]
    if len(variants) < 2:
        raise ConfigError("compare needs at least two model variants")
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variants: {', '.join(unknown)}")
    ds = _load_dataset(cfg)
    train_split, val_split = datamod.prepare_splits(ds, cfg.cutoff_date(),
                                                    cfg.seed)
    reports, scored_sets = [], {}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for variant in variants:
        try:
            model, result, report, scored = _train_one(
                cfg, variant, train_split, val_split)
        except PyrocastError as exc:
            raise type(exc)(f"variant {variant!r} failed: {exc}") from exc
        reports.append(report)
        scored_sets[variant] = scored
        save_checkpoint(model, out / f"{variant}.nta")
        _write_history(result.history, out / f"{variant}_history.csv")
    emit_report(reports, out, scored_sets)
    _print_table(reports)


@cli.command("synth")
@click.option("--path", required=True, type=str, help="Destination CSV path.")
@_with_config_options
def cmd_synth(path, **kwargs):
    """Generate a seeded synthetic dataset CSV."""
    cfg = _gather(kwargs)
    ds = _load_dataset(dataclasses.replace(cfg, data=None))
    datamod.write_csv(ds, path)
    click.echo(f"wrote {len(ds)} rows to {path}")


@cli.command("export-slice")
@click.option("--path", required=True, type=str,
              help="Destination archive path.")
@_with_config_options
def cmd_export_slice(path, **kwargs):
    """Export the (random-seeded) frozen slice weights to an archive."""
    cfg = _gather(kwargs)
    slice_cfg = cfg.model_config("internal_world").slice
    slice_ = FrozenSlice(slice_cfg)
    export_slice(slice_).save(path)
    click.echo(f"exported {slice_.parameter_count()} scalars to {path}")


@cli.command("import-slice")
@click.option("--path", "in_path", required=True, type=str,
              help="Source archive path.")
@click.option("--dest", type=str, default=None,
              help="Optional re-export destination (round-trip check).")
@_with_config_options
def cmd_import_slice(in_path, dest, **kwargs):
    """Validate an archive against the slice configuration; optionally re-export."""
    cfg = _gather(kwargs)
    slice_cfg = cfg.model_config("internal_world").slice
    arch = NamedTensorArchive.load(in_path)
    slice_ = load_slice(arch, slice_cfg)
    click.echo(f"imported {slice_.parameter_count()} scalars from {in_path}")
    if dest:
        export_slice(slice_).save(dest)
        click.echo(f"re-exported to {dest}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError,) as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except (SchemaError, ParseError, ManifestError, ArchiveFormatError,
            FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except DivergenceError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return EXIT_NUMERIC
    except (ContractError, DimensionError) as exc:
        # wrong archive shapes or degenerate datasets are input problems
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
