"""Survival datasets: CSV ingestion, train-only preprocessing and seeded splits.

A dataset is a triple of arrays (time, event, covariates) plus a column
schema.  Numeric covariates are float64 with NaN for missing cells.  When any
categorical column is present the covariate matrix has object dtype and
categorical cells are ``str`` (``None`` when missing).
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write, scaled_count

NUMERIC = "numeric"
CATEGORICAL = "categorical"

_EVENT_CODES = {"1": True, "0": False, "true": True, "false": False}


class DatasetError(ValueError):
    """Malformed input data or a schema mismatch."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = NUMERIC


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    event: bool
    covariates: tuple = ()


@dataclass(eq=False)
class SurvivalDataset:
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray = None
    schema: tuple = ()
    # positions in the originating dataset; survives subsetting so that
    # externally supplied predictions can be looked up per row
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float).reshape(-1)
        self.event = np.asarray(self.event, dtype=bool).reshape(-1)
        n = self.time.shape[0]
        if self.event.shape[0] != n:
            raise DatasetError("time and event lengths differ")
        if not np.all(np.isfinite(self.time)) or np.any(self.time < 0):
            raise DatasetError("times must be finite and non-negative")
        self.schema = tuple(c if isinstance(c, Column) else Column(*c) for c in self.schema)
        if self.covariates is None:
            self.covariates = np.empty((n, len(self.schema)), dtype=float)
        else:
            dtype = object if any(c.kind == CATEGORICAL for c in self.schema) else float
            self.covariates = np.asarray(self.covariates, dtype=dtype)
            if self.covariates.ndim == 1:
                self.covariates = self.covariates.reshape(n, -1)
        if not self.schema and self.covariates.shape[1]:
            self.schema = tuple(Column(f"x{k}") for k in range(self.covariates.shape[1]))
        if self.covariates.shape != (n, len(self.schema)):
            raise DatasetError(
                f"covariates have shape {self.covariates.shape}, expected ({n}, {len(self.schema)})"
            )
        self.ids = np.arange(n) if self.ids is None else np.asarray(self.ids, dtype=np.int64)

    def __len__(self):
        return self.time.shape[0]

    def __getitem__(self, i):
        return SurvivalRecord(float(self.time[i]), bool(self.event[i]), tuple(self.covariates[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def n_events(self):
        return int(self.event.sum())

    @property
    def event_fraction(self):
        return self.n_events / len(self) if len(self) else 0.0

    @property
    def is_numeric(self):
        return all(c.kind == NUMERIC for c in self.schema)

    def features(self):
        """Covariates as a float matrix; only valid once categoricals are encoded."""
        if not self.is_numeric:
            raise DatasetError("dataset has categorical columns; apply a PreprocessPlan first")
        return np.asarray(self.covariates, dtype=float)

    def subset(self, idx):
        idx = np.asarray(idx)
        return SurvivalDataset(
            self.time[idx], self.event[idx], self.covariates[idx], self.schema, self.ids[idx]
        )

    def replace(self, time=None, event=None):
        """Copy with a new outcome; covariates, schema and ids are shared."""
        return SurvivalDataset(
            self.time if time is None else time,
            self.event if event is None else event,
            self.covariates,
            self.schema,
            self.ids,
        )


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(path, time_col="time", event_col="event"):
    """Read a header-first, comma-separated UTF-8 file into a SurvivalDataset.

    Every column other than ``time_col`` and ``event_col`` is a covariate.
    A covariate is numeric when all of its non-empty cells parse as floats,
    otherwise categorical.  Empty cells are missing values.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = list(reader)

    for name in (time_col, event_col):
        if name not in header:
            raise DatasetError(f"{path}: missing column {name!r}")
    t_pos, e_pos = header.index(time_col), header.index(event_col)
    cov_pos = [k for k in range(len(header)) if k not in (t_pos, e_pos)]

    times, events, cells = [], [], []
    for r, row in enumerate(rows, start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise DatasetError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        t = _parse_float(row[t_pos].strip())
        if t is None:
            raise DatasetError(f"row {r}: time {row[t_pos]!r} is not a number")
        if not math.isfinite(t) or t < 0:
            raise DatasetError(f"row {r}: time must be finite and non-negative, got {row[t_pos]!r}")
        code = row[e_pos].strip().lower()
        if code not in _EVENT_CODES:
            raise DatasetError(f"row {r}: unknown event encoding {row[e_pos]!r}")
        times.append(t)
        events.append(_EVENT_CODES[code])
        cells.append([row[k].strip() for k in cov_pos])

    schema = []
    columns = []
    for j, k in enumerate(cov_pos):
        raw = [c[j] for c in cells]
        present = [v for v in raw if v != ""]
        if all(_parse_float(v) is not None for v in present):
            schema.append(Column(header[k], NUMERIC))
            columns.append([float(v) if v != "" else math.nan for v in raw])
        else:
            schema.append(Column(header[k], CATEGORICAL))
            columns.append([v if v != "" else None for v in raw])

    n = len(times)
    if any(c.kind == CATEGORICAL for c in schema):
        cov = np.empty((n, len(schema)), dtype=object)
    else:
        cov = np.empty((n, len(schema)), dtype=float)
    for j, col in enumerate(columns):
        cov[:, j] = col
    return SurvivalDataset(np.array(times, dtype=float), np.array(events, dtype=bool), cov, tuple(schema))


def _format_cell(value, kind):
    if kind == CATEGORICAL:
        return "" if value is None else str(value)
    value = float(value)
    return "" if math.isnan(value) else repr(value)


def write_csv(data, path, time_col="time", event_col="event", extra=None):
    """Write ``data`` in the format load_csv reads; ``extra`` maps column name -> values."""
    extra = extra or {}
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([time_col, event_col] + [c.name for c in data.schema] + list(extra))
    for i in range(len(data)):
        row = [repr(float(data.time[i])), "1" if data.event[i] else "0"]
        row += [_format_cell(data.covariates[i, j], c.kind) for j, c in enumerate(data.schema)]
        row += [repr(float(v[i])) for v in extra.values()]
        writer.writerow(row)
    atomic_write(path, out.getvalue())


@dataclass
class PreprocessPlan:
    """Statistics fitted on a training split and replayed on any split."""

    schema: tuple
    means: dict
    stds: dict
    medians: dict
    categories: dict
    modes: dict
    scale: float
    power: float = 0.5

    def __post_init__(self):
        if not self.scale > 0:
            raise DatasetError("time scale must be positive")
        if not self.power > 0:
            raise DatasetError("power exponent must be positive")

    def transform_time(self, t):
        return (np.asarray(t, dtype=float) / self.scale) ** self.power

    def inverse_time(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self.scale * t ** (1.0 / self.power)

    @property
    def output_width(self):
        return sum(1 if c.kind == NUMERIC else len(self.categories[c.name]) for c in self.schema)

    def to_dict(self):
        return {
            "schema": [[c.name, c.kind] for c in self.schema],
            "means": self.means,
            "stds": self.stds,
            "medians": self.medians,
            "categories": self.categories,
            "modes": self.modes,
            "scale": self.scale,
            "power": self.power,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["schema"] = tuple(Column(name, kind) for name, kind in d["schema"])
        return cls(**d)


def fit_preprocess(train, p=0.5):
    """Fit imputation, standardization, one-hot and target-scaling statistics.

    Numeric columns are imputed with the median first and then standardized
    with the population mean/std of the imputed column, so the training split
    comes out at exactly zero mean and unit variance.  A zero-variance column
    keeps std = 1.
    """
    if len(train) == 0:
        raise DatasetError("cannot fit preprocessing on an empty dataset")
    means, stds, medians, categories, modes = {}, {}, {}, {}, {}
    for j, col in enumerate(train.schema):
        values = train.covariates[:, j]
        if col.kind == NUMERIC:
            x = np.asarray(values, dtype=float)
            observed = x[~np.isnan(x)]
            if observed.size == 0:
                raise DatasetError(f"numeric column {col.name!r} has no observed values in train")
            med = float(np.median(observed))
            x = np.where(np.isnan(x), med, x)
            mu = float(x.mean())
            dev = x - mu
            # rescale before squaring so tiny spreads do not underflow
            peak = float(np.abs(dev).max())
            sd = peak * float(np.sqrt(np.mean((dev / peak) ** 2))) if peak > 0 else 0.0
            medians[col.name] = med
            means[col.name] = mu
            stds[col.name] = sd if sd > 0 else 1.0
        else:
            observed = [v for v in values if v is not None]
            cats = sorted(set(observed))
            if not cats:
                raise DatasetError(f"categorical column {col.name!r} has no observed values in train")
            counts = {c: 0 for c in cats}
            for v in observed:
                counts[v] += 1
            # ties resolved by sorted order
            modes[col.name] = max(cats, key=lambda c: (counts[c], -cats.index(c)))
            categories[col.name] = cats
    scale = float(train.time.max())
    return PreprocessPlan(train.schema, means, stds, medians, categories, modes, scale, float(p))


def apply_preprocess(plan, data):
    """Impute, standardize, one-hot encode and power-transform ``data`` with ``plan``.

    Unseen categories encode as an all-zero block.
    """
    if tuple(data.schema) != tuple(plan.schema):
        raise DatasetError("dataset schema does not match the preprocessing plan")
    n = len(data)
    blocks, names = [], []
    for j, col in enumerate(plan.schema):
        values = data.covariates[:, j]
        if col.kind == NUMERIC:
            x = np.asarray(values, dtype=float)
            x = np.where(np.isnan(x), plan.medians[col.name], x)
            blocks.append(((x - plan.means[col.name]) / plan.stds[col.name]).reshape(n, 1))
            names.append(Column(col.name))
        else:
            cats = plan.categories[col.name]
            lookup = {c: k for k, c in enumerate(cats)}
            onehot = np.zeros((n, len(cats)))
            for i, v in enumerate(values):
                if v is None:
                    v = plan.modes[col.name]
                k = lookup.get(v)
                if k is not None:
                    onehot[i, k] = 1.0
            blocks.append(onehot)
            names.extend(Column(f"{col.name}={c}") for c in cats)
    cov = np.hstack(blocks) if blocks else np.empty((n, 0))
    return SurvivalDataset(plan.transform_time(data.time), data.event, cov, tuple(names), data.ids)


def split_indices(n, frac, seed):
    """(keep, held) sorted index arrays with len(held) = round_half_up(frac * n)."""
    if not 0 < frac < 1:
        raise ValueError("frac must lie strictly between 0 and 1")
    k = scaled_count(frac, n)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[k:]), np.sort(perm[:k])


def split_holdout(data, frac=0.3, seed=0):
    """Split into (train, test) with a seeded hold-out fraction ``frac``."""
    keep, held = split_indices(len(data), frac, seed)
    return data.subset(keep), data.subset(held)


def resample_folds(train, n_folds=100, train_frac=0.9, seed=0):
    """Independent random (subtrain, validation) index splits of one training pool.

    ``train`` may be a dataset or a pool size.
    """
    if n_folds < 1:
        raise ValueError("n_folds must be at least 1")
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie strictly between 0 and 1")
    n = train if isinstance(train, (int, np.integer)) else len(train)
    n_sub = scaled_count(train_frac, n)
    rng = np.random.default_rng(seed)
    folds = []
    for _ in range(n_folds):
        perm = rng.permutation(n)
        folds.append((np.sort(perm[:n_sub]), np.sort(perm[n_sub:])))
    return folds
