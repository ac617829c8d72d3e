"""Dataset ingestion, preprocessing, and seeded synthetic generation.

The pipeline is: load CSV -> temporal split at a cutoff date -> per-split
1:1 undersampling -> z-scoring with statistics from the training split only.
Every stage is a pure function of (file bytes, seed, cutoff).
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError, SchemaError

DATE_COLUMN = "acq_date"
LABEL_COLUMN = "is_fire"
FEATURE_GROUPS = ("vegetation", "moisture", "temp", "precip", "wind", "topo")
DEFAULT_CUTOFF = dt.date(2022, 1, 1)


@dataclass
class RawDataset:
    dates: list[dt.date]
    labels: np.ndarray              # (N,) of {0,1}
    features: np.ndarray            # (N, d) float32
    feature_names: list[str]

    def __len__(self) -> int:
        return len(self.dates)

    def take(self, indices: np.ndarray) -> "RawDataset":
        idx = np.asarray(indices)
        return RawDataset([self.dates[i] for i in idx],
                          self.labels[idx], self.features[idx],
                          self.feature_names)


@dataclass
class DatasetSplit:
    features: np.ndarray            # standardized, (N, d)
    labels: np.ndarray              # (N,)
    split: str                      # "train" | "validation"
    mean: np.ndarray                # train-column means
    std: np.ndarray                 # train-column sample stds (0 -> guarded to 1)
    kept: int
    dropped: int
    seed: int

    def manifest(self) -> dict:
        return {
            "split": self.split,
            "rows": int(len(self.labels)),
            "kept": self.kept,
            "dropped": self.dropped,
            "seed": self.seed,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }


def default_feature_names(d: int) -> list[str]:
    """d feature names cycled through the schema's six column groups."""
    names = []
    for j in range(d):
        group = FEATURE_GROUPS[j % len(FEATURE_GROUPS)]
        names.append(f"{group}_{j // len(FEATURE_GROUPS):03d}")
    return names


def load_csv(path: str | Path, expected_features: int | None = None) -> RawDataset:
    """Parse a schema CSV; bad cells are rejected with row/column coordinates."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required")
        for required in (DATE_COLUMN, LABEL_COLUMN):
            if required not in header:
                raise SchemaError(f"{path}: missing required column {required!r}")
        date_i = header.index(DATE_COLUMN)
        label_i = header.index(LABEL_COLUMN)
        feat_idx = [i for i in range(len(header)) if i not in (date_i, label_i)]
        feature_names = [header[i] for i in feat_idx]
        if expected_features is not None and len(feat_idx) != expected_features:
            raise SchemaError(
                f"{path}: expected {expected_features} feature columns, "
                f"found {len(feat_idx)}")
        dates, labels, rows = [], [], []
        for r, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
            try:
                dates.append(dt.date.fromisoformat(row[date_i]))
            except ValueError:
                raise ParseError(
                    f"{path}: row {r}: bad date {row[date_i]!r} "
                    f"(expected YYYY-MM-DD)")
            if row[label_i] not in ("0", "1"):
                raise ParseError(
                    f"{path}: row {r}: {LABEL_COLUMN} must be 0 or 1, "
                    f"got {row[label_i]!r}")
            labels.append(int(row[label_i]))
            vals = np.empty(len(feat_idx), dtype=np.float32)
            for k, i in enumerate(feat_idx):
                try:
                    v = float(row[i])
                except ValueError:
                    v = float("nan")
                if not np.isfinite(v):
                    raise ParseError(
                        f"{path}: row {r}, column {header[i]!r}: "
                        f"unparseable numeric cell {row[i]!r}")
                vals[k] = v
            rows.append(vals)
    features = (np.stack(rows) if rows
                else np.empty((0, len(feat_idx)), dtype=np.float32))
    return RawDataset(dates, np.array(labels, dtype=np.int64),
                      features, feature_names)


def temporal_split(ds: RawDataset,
                   cutoff: dt.date = DEFAULT_CUTOFF) -> tuple[RawDataset, RawDataset]:
    """Partition by date: rows before `cutoff` train, the rest validate."""
    before = np.array([d < cutoff for d in ds.dates])
    train = ds.take(np.flatnonzero(before))
    val = ds.take(np.flatnonzero(~before))
    if len(train) == 0:
        warnings.warn("temporal split produced an empty training side")
    if len(val) == 0:
        warnings.warn("temporal split produced an empty validation side")
    return train, val


def balance_undersample(ds: RawDataset, seed: int) -> RawDataset:
    """Randomly subsample the majority class to the minority count, then shuffle."""
    pos = np.flatnonzero(ds.labels == 1)
    neg = np.flatnonzero(ds.labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ContractError(
            f"undersampling needs both classes; got {len(pos)} positive / "
            f"{len(neg)} negative rows")
    rng = np.random.default_rng(seed)
    n = min(len(pos), len(neg))
    keep_pos = pos if len(pos) == n else rng.choice(pos, n, replace=False)
    keep_neg = neg if len(neg) == n else rng.choice(neg, n, replace=False)
    kept = np.sort(np.concatenate([keep_pos, keep_neg]))
    kept = kept[rng.permutation(len(kept))]
    return ds.take(kept)


def standardize(train: RawDataset, val: RawDataset,
                seed: int = 0) -> tuple[DatasetSplit, DatasetSplit]:
    """Z-score both splits using mean/std computed from the train split only."""
    if len(train) == 0:
        raise ContractError("standardize requires a non-empty train split")
    mean = train.features.mean(axis=0, dtype=np.float64)
    std = train.features.std(axis=0, ddof=1, dtype=np.float64) \
        if len(train) > 1 else np.zeros(train.features.shape[1])
    std = np.where(std == 0.0, 1.0, std)
    def apply(ds: RawDataset, tag: str, dropped: int) -> DatasetSplit:
        feats = ((ds.features - mean) / std).astype(np.float32)
        return DatasetSplit(feats, ds.labels.copy(), tag,
                            mean.astype(np.float32), std.astype(np.float32),
                            kept=len(ds), dropped=dropped, seed=seed)
    return apply(train, "train", 0), apply(val, "validation", 0)


def prepare_splits(ds: RawDataset, cutoff: dt.date,
                   seed: int) -> tuple[DatasetSplit, DatasetSplit]:
    """Full preprocessing chain: split, balance each side, standardize."""
    train_raw, val_raw = temporal_split(ds, cutoff)
    n_train, n_val = len(train_raw), len(val_raw)
    train_bal = balance_undersample(train_raw, seed)
    val_bal = balance_undersample(val_raw, seed + 1) if len(val_raw) else val_raw
    train, val = standardize(train_bal, val_bal, seed)
    train.dropped = n_train - len(train_bal)
    val.dropped = n_val - len(val_bal)
    return train, val


def save_manifest(path: str | Path, train: DatasetSplit, val: DatasetSplit,
                  cutoff: dt.date, seed: int) -> None:
    payload = {
        "cutoff": cutoff.isoformat(),
        "seed": seed,
        "train": train.manifest(),
        "validation": val.manifest(),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def build_windows(features: np.ndarray, width: int) -> np.ndarray:
    """Stack each row with its `width-1` predecessors: (N, d) -> (N-w+1, w, d).

    Utility for lag-window assembly; the default models consume flat rows
    whose lag structure already lives in the columns.
    """
    if width < 1 or width > len(features):
        raise ContractError(
            f"window width {width} invalid for {len(features)} rows")
    view = np.lib.stride_tricks.sliding_window_view(features, width, axis=0)
    return np.ascontiguousarray(view.transpose(0, 2, 1))


def synth_generate(n_pos: int, n_neg: int, d: int, seed: int,
                   separation: float,
                   cutoff: dt.date = DEFAULT_CUTOFF) -> RawDataset:
    """Two Gaussian clusters offset by `separation` along a random unit direction.

    Dates are assigned sequentially over a range spanning the cutoff so that
    both sides of the temporal split are populated.
    """
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    n = n_pos + n_neg
    labels = np.array([1] * n_pos + [0] * n_neg, dtype=np.int64)
    labels = labels[rng.permutation(n)]
    feats = rng.normal(size=(n, d))
    feats[labels == 1] += separation * direction
    # 80% of the date range precedes the cutoff
    start = cutoff - dt.timedelta(days=365)
    span_days = 456
    dates = [start + dt.timedelta(days=int(i * span_days / max(n, 1)))
             for i in range(n)]
    return RawDataset(dates, labels, feats.astype(np.float32),
                      default_feature_names(d))


def write_csv(ds: RawDataset, path: str | Path) -> None:
    """Serialize a dataset deterministically (fixed float formatting)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([DATE_COLUMN, LABEL_COLUMN] + ds.feature_names)
        for date, label, row in zip(ds.dates, ds.labels, ds.features):
            writer.writerow([date.isoformat(), int(label)]
                            + [format(v, ".8g") for v in row])
