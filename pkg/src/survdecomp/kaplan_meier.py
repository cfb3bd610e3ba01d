"""Product-limit (Kaplan-Meier) survival curves."""

import io
from dataclasses import dataclass

import numpy as np

from ._util import atomic_write


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous step function; S(t) = 1 before ``times[0]``."""

    times: np.ndarray
    probs: np.ndarray

    def __call__(self, t):
        return km_eval(self, t)

    def to_csv(self, path=None):
        out = io.StringIO()
        out.write("time,survival\n")
        for t, s in zip(self.times, self.probs):
            out.write(f"{float(t)!r},{float(s)!r}\n")
        text = out.getvalue()
        if path is not None:
            atomic_write(path, text)
        return text


def km_estimate(times, events=None):
    """Kaplan-Meier estimate from observed times and event flags.

    At a time shared by events and censorings the events are processed first:
    censored subjects count in the risk set of their own time.  Steps are
    placed only at event times.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0:
        raise ValueError("km_estimate needs at least one observation")
    events = np.ones(times.shape, dtype=bool) if events is None else np.asarray(events, dtype=bool)
    if events.shape != times.shape:
        raise ValueError("times and events differ in length")

    uniq, inverse = np.unique(times, return_inverse=True)
    deaths = np.bincount(inverse, weights=events, minlength=uniq.size)
    leaving = np.bincount(inverse, minlength=uniq.size)
    # subjects still under observation just before each distinct time
    at_risk = times.size - np.concatenate(([0], np.cumsum(leaving)[:-1]))
    hit = deaths > 0
    factors = 1.0 - deaths[hit] / at_risk[hit]
    return StepSurvival(uniq[hit], np.cumprod(factors))


def km_eval(curve, t):
    """S(t) for scalar or array ``t``."""
    t_arr = np.asarray(t, dtype=float)
    pos = np.searchsorted(curve.times, t_arr, side="right")
    padded = np.concatenate(([1.0], curve.probs))
    out = padded[pos]
    return float(out) if out.ndim == 0 else out
