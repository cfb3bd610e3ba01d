"""Size and censoring experiments, and the statistics used to compare models.

The three dataset manipulations:

* size only: stratified subsampling that keeps the event fraction;
* censoring only: flip randomly chosen events to censored at their recorded
  time, keeping every row;
* size and censoring: drop randomly chosen event rows, keeping every
  censored row.

Targets within ``atol`` (default half a percentage point) of the current
event fraction leave the data unchanged, so "68%" on a 68.11% dataset means
the original data.
"""

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._util import as_fraction, atomic_write, round_half_up, scaled_count
from .concordance import count_pairs_fast, decompose
from .dataset import apply_preprocess, fit_preprocess, resample_folds, split_indices

SIZE_ONLY = "size_only"
CENSORING_ONLY = "censoring_only"
SIZE_AND_CENSORING = "size_and_censoring"
KINDS = (SIZE_ONLY, CENSORING_ONLY, SIZE_AND_CENSORING)

DEFAULT_ATOL = 0.005


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    target: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}")
        if not 0 < self.target <= 1:
            raise ExperimentError(f"target must lie in (0, 1], got {self.target}")


def _pick(rng, idx, k):
    return rng.choice(idx, size=k, replace=False) if k < len(idx) else idx


def size_only(data, target_size, seed=0):
    """Stratified random subsample of ``target_size`` rows; rows keep their order."""
    n, n_e = len(data), data.n_events
    n_c = n - n_e
    if not 0 < target_size <= n:
        raise ExperimentError(f"target size {target_size} not in 1..{n}")
    k_e = round_half_up(Fraction(target_size * n_e, n))
    k_e = min(k_e, n_e)
    k_c = target_size - k_e
    if k_c > n_c:
        k_c = n_c
        k_e = target_size - k_c
    rng = np.random.default_rng(seed)
    events = _pick(rng, np.flatnonzero(data.event), k_e)
    censored = _pick(rng, np.flatnonzero(~data.event), k_c)
    return data.subset(np.sort(np.concatenate([events, censored])))


def censoring_only(data, target_event_frac, seed=0, atol=DEFAULT_ATOL):
    """Censor surplus events at their recorded time until round(target * n) remain."""
    n, n_e = len(data), data.n_events
    current = n_e / n
    if abs(target_event_frac - current) <= atol:
        return data.replace()
    if target_event_frac > current:
        raise ExperimentError(f"target event fraction {target_event_frac} exceeds current {current:.4f}")
    keep = scaled_count(target_event_frac, n)
    rng = np.random.default_rng(seed)
    flip = _pick(rng, np.flatnonzero(data.event), n_e - keep)
    event = data.event.copy()
    event[flip] = False
    return data.replace(event=event)


def size_and_censoring(data, target_event_frac, seed=0, atol=DEFAULT_ATOL):
    """Drop random event rows until events / (events + censored) hits the target."""
    n, n_e = len(data), data.n_events
    n_c = n - n_e
    current = n_e / n
    if abs(target_event_frac - current) <= atol:
        return data.replace()
    if target_event_frac > current:
        raise ExperimentError(f"target event fraction {target_event_frac} exceeds current {current:.4f}")
    if n_c == 0:
        raise ExperimentError("no censored rows: dropping events cannot lower the event fraction")
    f = as_fraction(target_event_frac)
    keep = min(round_half_up(f * n_c / (1 - f)), n_e)
    rng = np.random.default_rng(seed)
    events = _pick(rng, np.flatnonzero(data.event), keep)
    return data.subset(np.sort(np.concatenate([events, np.flatnonzero(~data.event)])))


def apply_experiment(data, spec):
    if spec.kind == SIZE_ONLY:
        return size_only(data, scaled_count(spec.target, len(data)), spec.seed)
    if spec.kind == CENSORING_ONLY:
        return censoring_only(data, spec.target, spec.seed)
    return size_and_censoring(data, spec.target, spec.seed)


# -- statistics -------------------------------------------------------------


def _midranks(values):
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    tie_sizes = []
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, np.array(tie_sizes)


def _rank_sum_distribution(m, n_total):
    """counts[s] = number of m-subsets of ranks 1..n_total with rank sum s."""
    max_sum = sum(range(n_total - m + 1, n_total + 1))
    counts = np.zeros((m + 1, max_sum + 1))
    counts[0, 0] = 1.0
    for r in range(1, n_total + 1):
        for k in range(min(r, m), 0, -1):
            counts[k, r:] += counts[k - 1, : max_sum + 1 - r]
    return counts[m]


def wilcoxon_exact(a, b):
    """Two-sided exact rank-sum p-value; requires tie-free data."""
    a, b = list(a), list(b)
    if len(a) > len(b):
        a, b = b, a
    m, n_total = len(a), len(a) + len(b)
    ranks, ties = _midranks(a + b)
    if np.any(ties > 1):
        raise ValueError("exact test requires untied data")
    w = int(round(ranks[:m].sum()))
    dist = _rank_sum_distribution(m, n_total)
    total = dist.sum()
    lower = dist[: w + 1].sum() / total
    upper = dist[w:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def wilcoxon_normal(a, b):
    """Two-sided normal approximation with tie and continuity corrections."""
    n1, n2 = len(a), len(b)
    n = n1 + n2
    ranks, ties = _midranks(list(a) + list(b))
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    mean = n1 * n2 / 2.0
    tie_term = float(np.sum(ties**3 - ties)) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = max(abs(u - mean) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def wilcoxon_rank_sum(a, b):
    """Two-sided Wilcoxon rank-sum p-value.

    Exact enumeration when the smaller sample has at most 8 values and there
    are no ties, otherwise the normal approximation.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if not a or not b:
        raise ValueError("both samples must be nonempty")
    _, ties = _midranks(a + b)
    if min(len(a), len(b)) <= 8 and not np.any(ties > 1):
        return wilcoxon_exact(a, b)
    return wilcoxon_normal(a, b)


def quantile_summary(vals):
    """(median, 2.5% quantile, 97.5% quantile), linear interpolation."""
    v = np.asarray(list(vals), dtype=float)
    if v.size == 0:
        raise ValueError("no values to summarize")
    q = np.quantile(v, [0.5, 0.025, 0.975])
    return float(q[0]), float(q[1]), float(q[2])


# -- predictors -------------------------------------------------------------


class FixedPredictions:
    """Predictions supplied per row of the original dataset (e.g. from a file)."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def __call__(self, train, validation, test, seed):
        return self.values[test.ids]


class ConstantPredictor:
    def __init__(self, value=0.0):
        self.value = float(value)

    def __call__(self, train, validation, test, seed):
        return np.full(len(test), self.value)


class SurvedPredictor:
    """Preprocess on the training fold, fit SurVED with early stopping, predict test."""

    def __init__(self, power=0.5, **config):
        self.power = power
        self.config = config

    def __call__(self, train, validation, test, seed):
        from .surved import ModelConfig, SurvedModel, fit, predict

        plan = fit_preprocess(train, self.power)
        tr, va, te = (apply_preprocess(plan, d) for d in (train, validation, test))
        cfg = ModelConfig(**{**self.config, "input_dim": tr.covariates.shape[1], "seed": seed})
        model, _ = fit(SurvedModel(cfg), tr, va)
        return predict(model, te.features())


# -- grid -------------------------------------------------------------------

GRID_COLUMNS = (
    "experiment", "target", "size", "n_events", "event_fraction", "predictor", "fold",
    "n_plus_ee", "n_minus_ee", "n_tie_ee", "n_plus_ec", "n_minus_ec", "n_tie_ec", "n_ee", "n_ec",
    "ci", "ci_ee", "ci_ec", "alpha", "alpha_star", "alpha_deviation",
)
SUMMARY_METRICS = ("ci", "ci_ee", "ci_ec", "alpha", "alpha_star", "alpha_deviation", "abs_alpha_deviation")


def cell_seed(seed, spec, fold, stream=0):
    """Seed for one grid cell, independent of evaluation order."""
    ss = np.random.SeedSequence(
        [int(seed), KINDS.index(spec.kind), round_half_up(spec.target * 10**6), int(spec.seed), int(fold), stream]
    )
    return int(ss.generate_state(1)[0])


def run_experiment_grid(data, specs, predictors, n_folds=100, train_frac=0.9, test_frac=0.3, seed=0):
    """Evaluate every predictor on every manipulated dataset and fold.

    For each spec the manipulated dataset is split once into a hold-out test
    set and a training pool; each fold resamples (subtrain, validation) from
    the pool, asks each predictor for test predictions and decomposes the
    C-index on the test set.  ``predictors`` maps names to callables
    ``(train, validation, test, seed) -> predictions``.  Returns one dict per
    (spec, predictor, fold) with the keys in GRID_COLUMNS.
    """
    specs = list(specs)
    if not specs:
        raise ExperimentError("no experiment specs given")
    rows = []
    for spec in specs:
        d = apply_experiment(data, spec)
        pool_idx, test_idx = split_indices(len(d), test_frac, cell_seed(seed, spec, 0, stream=1))
        pool, test = d.subset(pool_idx), d.subset(test_idx)
        folds = resample_folds(pool, n_folds, train_frac, cell_seed(seed, spec, 0, stream=2))
        for fold, (sub, val) in enumerate(folds):
            cs = cell_seed(seed, spec, fold)
            for name, predictor in predictors.items():
                pred = predictor(pool.subset(sub), pool.subset(val), test, cs)
                counts = count_pairs_fast(test, pred)
                row = {
                    "experiment": spec.kind,
                    "target": spec.target,
                    "size": len(d),
                    "n_events": d.n_events,
                    "event_fraction": d.event_fraction,
                    "predictor": name,
                    "fold": fold,
                }
                row.update(counts.to_dict())
                row.update(decompose(counts).to_dict())
                rows.append(row)
    return rows


def summarize_grid(rows):
    """Median and 2.5/97.5% quantiles per (experiment, target, predictor)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["target"], r["predictor"]), []).append(r)
    out = []
    for (kind, target, name), rs in groups.items():
        entry = {
            "experiment": kind,
            "target": target,
            "predictor": name,
            "size": rs[0]["size"],
            "event_fraction": rs[0]["event_fraction"],
            "n_folds": len(rs),
        }
        for metric in SUMMARY_METRICS:
            if metric == "abs_alpha_deviation":
                vals = [abs(r["alpha_deviation"]) for r in rs]
            else:
                vals = [r[metric] for r in rs if r[metric] is not None]
            if vals:
                med, lo, hi = quantile_summary(vals)
                entry[metric] = {"median": med, "q025": lo, "q975": hi}
            else:
                entry[metric] = None
        out.append(entry)
    return out


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def grid_csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(GRID_COLUMNS)
    for r in rows:
        writer.writerow([_csv_cell(r[c]) for c in GRID_COLUMNS])
    return out.getvalue()


def write_grid_csv(rows, path):
    atomic_write(path, grid_csv(rows))


def write_summary_json(summary, path, config=None):
    atomic_write(path, json.dumps({"config": config or {}, "summary": summary}, sort_keys=True, indent=2) + "\n")


def read_results_csv(path):
    """Rows of a grid CSV (or any CSV with metric columns), numeric cells parsed."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    parsed = []
    for r in rows:
        p = {}
        for k, v in r.items():
            if v == "":
                p[k] = None
                continue
            try:
                p[k] = int(v)
            except ValueError:
                try:
                    p[k] = float(v)
                except ValueError:
                    p[k] = v
        parsed.append(p)
    return parsed


# -- model comparison -------------------------------------------------------

COMPARE_METRICS = ("ci", "ci_ee", "ci_ec", "abs_alpha_deviation")
_LOWER_IS_BETTER = {"abs_alpha_deviation"}


@dataclass
class ComparisonSummary:
    folds: dict
    median: dict
    q025: dict
    q975: dict
    p_values: dict = field(default_factory=dict)
    significant: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)
    tallies: dict = field(default_factory=dict)
    level: float = 0.05

    def to_dict(self):
        return {
            "level": self.level,
            "median": self.median,
            "q025": self.q025,
            "q975": self.q975,
            "comparisons": [
                {
                    "model_a": a,
                    "model_b": b,
                    "metric": m,
                    "p_value": p,
                    "significant": self.significant[(a, b, m)],
                    "outcome_a": self.outcomes[(a, b, m)],
                }
                for (a, b, m), p in self.p_values.items()
            ],
            "tallies": self.tallies,
        }


def fold_metrics(rows):
    """Per-metric fold value lists from result rows (adds |alpha deviation|)."""
    out = {m: [] for m in COMPARE_METRICS}
    for r in rows:
        for m in COMPARE_METRICS:
            if m == "abs_alpha_deviation":
                v = r.get("alpha_deviation")
                out[m].append(None if v is None else abs(v))
            else:
                out[m].append(r.get(m))
    return out


def compare_models(results, level=0.05):
    """Pairwise Wilcoxon comparisons with win/lose/draw per metric.

    ``results`` maps model name -> metric -> list of fold values; all models
    must have the same number of folds.  A comparison is a win for the model
    with the better median when p < ``level``, otherwise a draw.
    """
    names = list(results)
    if len(names) < 2:
        raise ExperimentError("need at least two models to compare")
    lengths = {len(v) for r in results.values() for v in r.values()}
    if len(lengths) != 1:
        raise ExperimentError(f"misaligned folds: fold counts {sorted(lengths)}")
    median, q025, q975 = {}, {}, {}
    for name in names:
        median[name], q025[name], q975[name] = {}, {}, {}
        for m in COMPARE_METRICS:
            vals = [v for v in results[name].get(m, []) if v is not None]
            if vals:
                median[name][m], q025[name][m], q975[name][m] = quantile_summary(vals)
    summary = ComparisonSummary(results, median, q025, q975, level=level)
    summary.tallies = {n: {m: {"win": 0, "lose": 0, "draw": 0} for m in COMPARE_METRICS} for n in names}
    for a, b in itertools.combinations(names, 2):
        for m in COMPARE_METRICS:
            va, vb = results[a].get(m, []), results[b].get(m, [])
            paired = [(x, y) for x, y in zip(va, vb) if x is not None and y is not None]
            if not paired:
                continue
            p = wilcoxon_rank_sum([x for x, _ in paired], [y for _, y in paired])
            sig = p < level
            if sig:
                ma = float(np.median([x for x, _ in paired]))
                mb = float(np.median([y for _, y in paired]))
                if ma == mb:
                    outcome = "draw"
                else:
                    a_better = ma < mb if m in _LOWER_IS_BETTER else ma > mb
                    outcome = "win" if a_better else "lose"
            else:
                outcome = "draw"
            summary.p_values[(a, b, m)] = p
            summary.significant[(a, b, m)] = sig
            summary.outcomes[(a, b, m)] = outcome
            summary.tallies[a][m][outcome] += 1
            summary.tallies[b][m][{"win": "lose", "lose": "win", "draw": "draw"}[outcome]] += 1
    return summary
