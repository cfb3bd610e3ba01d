"""Concordance counting and the C-index decomposition into CI_ee, CI_ec and alpha.

A pair is comparable when the earlier time is an observed event.  Comparable
pairs split into event-event (ee) and event-censored (ec) pairs; each is
concordant when the subject with the earlier time also has the smaller
predicted time.  Tied event times are not comparable, tied predictions earn
half credit.  An event and a censored subject recorded at the same time form
an ec pair by default (the event is taken to precede censoring).

All counts are Python ints.  The decomposition is formed from the integer
numerators ``2*N+ + N=`` as exact fractions and converted to float last.
"""

import enum
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np


class ConcordanceError(ValueError):
    """No comparable pairs, or a degenerate decomposition."""


class PairClass(enum.Enum):
    EVENT_EVENT = "ee"
    EVENT_CENSORED = "ec"
    NOT_COMPARABLE = "nc"


def classify_pair(rec_i, rec_j, equal_time_comparable=True):
    """Comparability class of two records (anything with ``time`` and ``event``)."""
    ti, tj = rec_i.time, rec_j.time
    ei, ej = bool(rec_i.event), bool(rec_j.event)
    if ti == tj:
        if ei and ej:
            return PairClass.NOT_COMPARABLE
        if ei != ej and equal_time_comparable:
            return PairClass.EVENT_CENSORED
        return PairClass.NOT_COMPARABLE
    early_event, late_event = (ei, ej) if ti < tj else (ej, ei)
    if not early_event:
        return PairClass.NOT_COMPARABLE
    return PairClass.EVENT_EVENT if late_event else PairClass.EVENT_CENSORED


@dataclass(frozen=True)
class PairCounts:
    n_plus_ee: int = 0
    n_minus_ee: int = 0
    n_tie_ee: int = 0
    n_plus_ec: int = 0
    n_minus_ec: int = 0
    n_tie_ec: int = 0

    @property
    def n_ee(self):
        return self.n_plus_ee + self.n_minus_ee + self.n_tie_ee

    @property
    def n_ec(self):
        return self.n_plus_ec + self.n_minus_ec + self.n_tie_ec

    @property
    def n_comparable(self):
        return self.n_ee + self.n_ec

    def to_dict(self):
        d = asdict(self)
        d["n_ee"] = self.n_ee
        d["n_ec"] = self.n_ec
        return d


@dataclass(frozen=True)
class CIndexDecomposition:
    ci: float
    ci_ee: float | None
    ci_ec: float | None
    alpha: float
    alpha_star: float
    alpha_deviation: float

    def to_dict(self):
        return asdict(self)


def _outcome_arrays(data, pred):
    time = np.asarray(data.time, dtype=float)
    event = np.asarray(data.event, dtype=bool)
    pred = np.asarray(pred, dtype=float).reshape(-1)
    if pred.shape[0] != time.shape[0]:
        raise ConcordanceError(f"{pred.shape[0]} predictions for {time.shape[0]} subjects")
    if np.any(np.isnan(pred)):
        raise ConcordanceError("predictions contain NaN")
    return time, event, pred


def count_pairs_exact(data, pred, equal_time_comparable=True):
    """Count concordant/discordant/tied pairs by visiting every unordered pair.

    ``data`` needs ``time`` and ``event`` arrays.  This is the reference
    implementation; each row is compared against all later rows at once.
    """
    time, event, pred = _outcome_arrays(data, pred)
    n = time.shape[0]
    c = dict(pe=0, me=0, te=0, pc=0, mc=0, tc=0)
    for i in range(n - 1):
        tj, ej, pj = time[i + 1 :], event[i + 1 :], pred[i + 1 :]
        ti, ei, pi = time[i], event[i], pred[i]
        # orient each pair so "a" is the subject with the earlier time
        i_first = ti < tj
        j_first = tj < ti
        same = ti == tj
        if equal_time_comparable:
            # equal times: the event member is the earlier one
            i_first = i_first | (same & ei & ~ej)
            j_first = j_first | (same & ej & ~ei)
        ea = np.where(i_first, ei, ej)
        eb = np.where(i_first, ej, ei)
        pa = np.where(i_first, pi, pj)
        pb = np.where(i_first, pj, pi)
        comparable = (i_first | j_first) & ea
        ee = comparable & eb
        ec = comparable & ~eb
        plus, minus, tie = pa < pb, pa > pb, pa == pb
        c["pe"] += int(np.count_nonzero(ee & plus))
        c["me"] += int(np.count_nonzero(ee & minus))
        c["te"] += int(np.count_nonzero(ee & tie))
        c["pc"] += int(np.count_nonzero(ec & plus))
        c["mc"] += int(np.count_nonzero(ec & minus))
        c["tc"] += int(np.count_nonzero(ec & tie))
    counts = PairCounts(c["pe"], c["me"], c["te"], c["pc"], c["mc"], c["tc"])
    if counts.n_comparable == 0:
        raise ConcordanceError("no comparable pairs")
    return counts


class FenwickTree:
    """Binary indexed tree of integer counts over positions 0..size-1."""

    def __init__(self, size):
        self.size = size
        self.tree = [0] * (size + 1)
        self.total = 0

    def add(self, pos, value=1):
        self.total += value
        j = pos + 1
        tree = self.tree
        while j <= self.size:
            tree[j] += value
            j += j & -j

    def prefix(self, pos):
        """Sum of counts at positions < pos."""
        s = 0
        j = pos
        tree = self.tree
        while j > 0:
            s += tree[j]
            j -= j & -j
        return s


def count_pairs_fast(data, pred, equal_time_comparable=True):
    """Same counts as count_pairs_exact in O(n log n).

    Subjects are swept in decreasing time.  Two Fenwick trees over prediction
    ranks hold the events and the censored subjects already passed (strictly
    later times).  Each event queries both trees for how many later subjects
    have larger, smaller and equal predictions.  Within one time group,
    censored members enter their tree before the events query it when
    equal-time pairs are comparable; events enter after, so tied event times
    never meet.
    """
    time, event, pred = _outcome_arrays(data, pred)
    n = time.shape[0]
    _, rank = np.unique(pred, return_inverse=True)
    rank = rank.reshape(-1).tolist()
    m = max(rank) + 1 if n else 1
    events_tree, censored_tree = FenwickTree(m), FenwickTree(m)

    order = np.argsort(-time, kind="stable").tolist()
    times = time.tolist()
    flags = event.tolist()
    pe = me = te = pc = mc = tc = 0
    k = 0
    while k < n:
        t = times[order[k]]
        end = k
        while end < n and times[order[end]] == t:
            end += 1
        group = order[k:end]
        group_events = [i for i in group if flags[i]]
        group_censored = [i for i in group if not flags[i]]
        if equal_time_comparable:
            for i in group_censored:
                censored_tree.add(rank[i])
        for i in group_events:
            r = rank[i]
            below = events_tree.prefix(r)
            at = events_tree.prefix(r + 1) - below
            pe += events_tree.total - below - at
            me += below
            te += at
            below = censored_tree.prefix(r)
            at = censored_tree.prefix(r + 1) - below
            pc += censored_tree.total - below - at
            mc += below
            tc += at
        for i in group_events:
            events_tree.add(rank[i])
        if not equal_time_comparable:
            for i in group_censored:
                censored_tree.add(rank[i])
        k = end
    counts = PairCounts(pe, me, te, pc, mc, tc)
    if counts.n_comparable == 0:
        raise ConcordanceError("no comparable pairs")
    return counts


def count_pairs(data, pred, mode="fast", equal_time_comparable=True):
    if mode == "fast":
        return count_pairs_fast(data, pred, equal_time_comparable)
    if mode == "exact":
        return count_pairs_exact(data, pred, equal_time_comparable)
    raise ValueError(f"unknown pairs mode {mode!r}")


def decompose_fractions(counts):
    """Every decomposition quantity as an exact Fraction (None where undefined)."""
    if counts.n_comparable == 0:
        raise ConcordanceError("no comparable pairs")
    # doubled numerators: 2*N+ + N= keeps the half-credit integral
    num_ee = 2 * counts.n_plus_ee + counts.n_tie_ee
    num_ec = 2 * counts.n_plus_ec + counts.n_tie_ec
    n_ee, n_ec = counts.n_ee, counts.n_ec
    ci = Fraction(num_ee + num_ec, 2 * (n_ee + n_ec))
    ci_ee = Fraction(num_ee, 2 * n_ee) if n_ee else None
    ci_ec = Fraction(num_ec, 2 * n_ec) if n_ec else None
    alpha_star = Fraction(n_ee, n_ee + n_ec)
    if n_ec == 0:
        alpha = Fraction(1)
    elif n_ee == 0:
        alpha = Fraction(0)
    elif num_ee + num_ec == 0:
        # nothing ordered correctly: P(ee | o) is 0/0; report the balanced value
        alpha = alpha_star
    else:
        alpha = Fraction(num_ee, num_ee + num_ec)
    return {
        "ci": ci,
        "ci_ee": ci_ee,
        "ci_ec": ci_ec,
        "alpha": alpha,
        "alpha_star": alpha_star,
        "alpha_deviation": alpha - alpha_star,
    }


def decompose(counts):
    exact = decompose_fractions(counts)
    return CIndexDecomposition(**{k: None if v is None else float(v) for k, v in exact.items()})


def concordance(data, pred, mode="fast", equal_time_comparable=True):
    """Shortcut: count pairs and decompose.  Returns (PairCounts, CIndexDecomposition)."""
    counts = count_pairs(data, pred, mode, equal_time_comparable)
    return counts, decompose(counts)


def verify_identity(d):
    """Residual of 1/CI = alpha/CI_ee + (1 - alpha)/CI_ec."""
    if d.ci_ee is None or d.ci_ec is None:
        raise ConcordanceError("identity needs both ee and ec pairs")
    if d.ci_ee <= 0 or d.ci_ec <= 0 or d.ci <= 0:
        raise ConcordanceError("identity undefined when a C-index is zero")
    return abs(1.0 / d.ci - d.alpha / d.ci_ee - (1.0 - d.alpha) / d.ci_ec)


def comparable_pairs(time, event, equal_time_comparable=True):
    """Index arrays (late, early) of all comparable pairs, early being the event.

    Quadratic in memory; intended for mini-batches.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    # early[a, b]: subject a precedes subject b and is an event
    early = time[:, None] < time[None, :]
    if equal_time_comparable:
        early |= (time[:, None] == time[None, :]) & ~event[None, :]
    early &= event[:, None]
    a, b = np.nonzero(early)
    return b, a


def report(counts, d):
    """Flat snake_case dict of counts, decomposition and identity residual."""
    out = counts.to_dict()
    out.update(d.to_dict())
    try:
        out["identity_residual"] = verify_identity(d)
    except ConcordanceError:
        out["identity_residual"] = None
    return out


def report_json(counts, d, **extra):
    out = dict(extra)
    out.update(report(counts, d))
    return json.dumps(out, sort_keys=True)


def read_predictions(path):
    """Prediction vector from a file of one decimal per line, or an id,prediction CSV.

    In the CSV form the ``id`` column gives the dataset row (0-based) and the
    first other column holds the prediction.
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines and "," in lines[0]:
        header = [h.strip() for h in lines[0].split(",")]
        if "id" not in header:
            raise ValueError(f"{path}: CSV predictions need an 'id' column")
        id_pos = header.index("id")
        val_pos = next(k for k in range(len(header)) if k != id_pos)
        pairs = []
        for r, ln in enumerate(lines[1:], start=1):
            cells = ln.split(",")
            try:
                pairs.append((int(cells[id_pos]), float(cells[val_pos])))
            except (ValueError, IndexError):
                raise ValueError(f"{path}: malformed prediction row {r}") from None
        pairs.sort()
        if [p[0] for p in pairs] != list(range(len(pairs))):
            raise ValueError(f"{path}: ids must cover 0..n-1 exactly once")
        return np.array([p[1] for p in pairs], dtype=float)
    try:
        return np.array([float(ln) for ln in lines], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def format_predictions(pred):
    """One shortest-round-trip decimal per line."""
    return "".join(repr(float(p)) + "\n" for p in pred)
