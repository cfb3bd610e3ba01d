import numpy as np
import pytest

from survdecomp.dataset import SurvivalDataset

# filled by the acceptance tests, echoed after the run
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def worked_example():
    """Four subjects: two events, two censored; predictions [1, 3, 2, 5]."""
    data = SurvivalDataset([1.0, 2.0, 3.0, 1.5], [True, True, False, False])
    return data, np.array([1.0, 3.0, 2.0, 5.0])


def brute_force_counts(time, event, pred, equal_time_comparable=True):
    """Pure-Python pair enumeration straight from the definitions.

    Returns a dict keyed like PairCounts fields.
    """
    c = dict(n_plus_ee=0, n_minus_ee=0, n_tie_ee=0, n_plus_ec=0, n_minus_ec=0, n_tie_ec=0)
    n = len(time)
    for i in range(n):
        for j in range(i + 1, n):
            ti, tj, ei, ej = time[i], time[j], bool(event[i]), bool(event[j])
            if ti == tj:
                if ei and ej or not (ei or ej) or not equal_time_comparable:
                    continue
                a, b = (i, j) if ei else (j, i)
            else:
                a, b = (i, j) if ti < tj else (j, i)
            if not event[a]:
                continue
            cls = "ee" if event[b] else "ec"
            if pred[a] < pred[b]:
                c[f"n_plus_{cls}"] += 1
            elif pred[a] > pred[b]:
                c[f"n_minus_{cls}"] += 1
            else:
                c[f"n_tie_{cls}"] += 1
    return c


def random_instance(rng, n_max=200, tie_time=True, tie_pred=True):
    """Random (time, event, pred) with censoring 10-90% and forced tie clusters."""
    n = int(rng.integers(2, n_max + 1))
    censor = rng.uniform(0.1, 0.9)
    if tie_time and rng.random() < 0.5:
        time = rng.integers(0, max(2, n // 3), size=n).astype(float)
    else:
        time = rng.exponential(10.0, size=n)
    event = rng.random(n) >= censor
    if tie_pred and rng.random() < 0.5:
        pred = rng.integers(0, int(rng.integers(2, 8)), size=n).astype(float)
    else:
        pred = rng.normal(size=n)
        k = int(rng.integers(0, n // 4 + 1))
        if k:
            pred[rng.choice(n, size=k, replace=False)] = pred[0]
    return time, event, pred


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x (copied)."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-6):
    """max |a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries absolute."""
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
