"""The four SurVED objective terms and their derivatives.

Predictions are the raw decoder outputs on the (power-transformed) time
scale.  At the kinks of |x| and max(0, x) the derivative is taken as 0.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


class EmptyGroupWarning(UserWarning):
    """A batch has no event rows (or no censored rows); the term is 0."""


@dataclass(frozen=True)
class LossWeights:
    lambda_e: float = 1.0
    lambda_c: float = 1.0
    lambda_kl: float = 1.0
    lambda_lb: float = 1.0

    def __post_init__(self):
        for name in ("lambda_e", "lambda_c", "lambda_kl", "lambda_lb"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class GaussianLatent:
    """Diagonal Gaussian; ``mu`` and ``log_var`` are (dim,) or (batch, dim)."""

    mu: np.ndarray
    log_var: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    l_e: float
    l_c: float
    l_kl: float
    c_lb: float
    total: float

    def to_dict(self):
        return {"l_e": self.l_e, "l_c": self.l_c, "l_kl": self.l_kl, "c_lb": self.c_lb, "total": self.total}


def _stack_latents(latents):
    if isinstance(latents, GaussianLatent):
        mu, lv = np.atleast_2d(latents.mu), np.atleast_2d(latents.log_var)
    else:
        latents = list(latents)
        if not latents:
            raise ValueError("no latents given")
        mu = np.vstack([np.atleast_2d(g.mu) for g in latents])
        lv = np.vstack([np.atleast_2d(g.log_var) for g in latents])
    mu, lv = np.asarray(mu, dtype=float), np.asarray(lv, dtype=float)
    if mu.shape != lv.shape:
        raise ValueError("mu and log_var shapes differ")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(lv))):
        raise ValueError("non-finite latent parameters")
    return mu, lv


def _vectors(pred, true_t, is_event):
    pred = np.asarray(pred, dtype=float).reshape(-1)
    true_t = np.asarray(true_t, dtype=float).reshape(-1)
    is_event = np.asarray(is_event, dtype=bool).reshape(-1)
    if not pred.shape == true_t.shape == is_event.shape:
        raise ValueError("pred, true_t and is_event must have equal lengths")
    return pred, true_t, is_event


def l_event(pred, true_t, is_event):
    """Mean absolute error over event rows."""
    pred, true_t, is_event = _vectors(pred, true_t, is_event)
    if not is_event.any():
        warnings.warn("no event rows; L_e set to 0", EmptyGroupWarning, stacklevel=2)
        return 0.0
    return float(np.mean(np.abs(true_t[is_event] - pred[is_event])))


def l_censored(pred, true_t, is_event):
    """Mean over censored rows of max(0, t - pred)."""
    pred, true_t, is_event = _vectors(pred, true_t, is_event)
    cens = ~is_event
    if not cens.any():
        warnings.warn("no censored rows; L_c set to 0", EmptyGroupWarning, stacklevel=2)
        return 0.0
    return float(np.mean(np.maximum(0.0, true_t[cens] - pred[cens])))


def kl_std_normal(latents):
    """Mean over samples of KL(N(mu, exp(log_var)) || N(0, I))."""
    mu, lv = _stack_latents(latents)
    # expm1 keeps exp(lv) - 1 - lv >= 0 for tiny lv
    per_sample = 0.5 * np.sum(mu**2 + np.maximum(np.expm1(lv) - lv, 0.0), axis=1)
    return float(per_sample.mean())


def log_sigmoid(x):
    """log(1 / (1 + exp(-x))) without overflow."""
    x = np.asarray(x, dtype=float)
    return -np.logaddexp(0.0, -x)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.exp(log_sigmoid(x))


def c_lb(pred, pairs):
    """Mean over (late, early) pairs of 1 + log2(sigmoid(pred_late - pred_early))."""
    pred = np.asarray(pred, dtype=float).reshape(-1)
    late, early = (np.asarray(a, dtype=np.int64) for a in _pair_arrays(pairs))
    if late.size == 0:
        raise ValueError("c_lb needs at least one comparable pair")
    return float(np.mean(1.0 + log_sigmoid(pred[late] - pred[early]) / LN2))


def _pair_arrays(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 1:
        return pairs
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def total_loss(weights, l_e, l_c, l_kl, c_lb_value):
    total = (
        weights.lambda_e * l_e
        + weights.lambda_c * l_c
        + weights.lambda_kl * l_kl
        - weights.lambda_lb * c_lb_value
    )
    return LossBreakdown(float(l_e), float(l_c), float(l_kl), float(c_lb_value), float(total))


def l_event_grad(pred, true_t, is_event):
    """d L_e / d pred: sign(pred - t) / n_events on event rows, 0 elsewhere."""
    pred, true_t, is_event = _vectors(pred, true_t, is_event)
    g = np.zeros_like(pred)
    n_e = int(is_event.sum())
    if n_e:
        g[is_event] = np.sign(pred[is_event] - true_t[is_event]) / n_e
    return g


def l_censored_grad(pred, true_t, is_event):
    """d L_c / d pred: -1 / n_censored where the hinge is active."""
    pred, true_t, is_event = _vectors(pred, true_t, is_event)
    g = np.zeros_like(pred)
    cens = ~is_event
    n_c = int(cens.sum())
    if n_c:
        g[cens] = np.where(true_t[cens] - pred[cens] > 0, -1.0, 0.0) / n_c
    return g


def kl_grad(latents):
    """(d KL / d mu, d KL / d log_var), each shaped (batch, dim)."""
    mu, lv = _stack_latents(latents)
    m = mu.shape[0]
    return mu / m, 0.5 * np.expm1(lv) / m


def c_lb_grad(pred, pairs):
    """d C_lb / d pred, accumulated over pairs."""
    pred = np.asarray(pred, dtype=float).reshape(-1)
    late, early = (np.asarray(a, dtype=np.int64) for a in _pair_arrays(pairs))
    g = np.zeros_like(pred)
    if late.size:
        # d/dd log2(sigmoid(d)) = sigmoid(-d) / ln 2
        w = sigmoid(-(pred[late] - pred[early])) / (LN2 * late.size)
        np.add.at(g, late, w)
        np.add.at(g, early, -w)
    return g


def loss_gradients(pred, true_t, is_event, latents, weights, pairs):
    """Total loss and its gradient w.r.t. every prediction and latent parameter.

    ``latents`` is a batch GaussianLatent (one row per prediction); ``pairs`` a
    (late, early) pair of index arrays, possibly empty (then C_lb = 0).
    Returns (LossBreakdown, d_pred, d_mu, d_log_var).  Empty event or
    censored groups contribute 0 without a warning: small training batches
    routinely lack one of them.
    """
    pred, true_t, is_event = _vectors(pred, true_t, is_event)
    late, early = (np.asarray(a, dtype=np.int64) for a in _pair_arrays(pairs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyGroupWarning)
        le = l_event(pred, true_t, is_event)
        lc = l_censored(pred, true_t, is_event)
    lkl = kl_std_normal(latents)
    lb = c_lb(pred, (late, early)) if late.size else 0.0

    d_pred = (
        weights.lambda_e * l_event_grad(pred, true_t, is_event)
        + weights.lambda_c * l_censored_grad(pred, true_t, is_event)
        - weights.lambda_lb * c_lb_grad(pred, (late, early))
    )
    d_mu, d_lv = kl_grad(latents)
    return total_loss(weights, le, lc, lkl, lb), d_pred, weights.lambda_kl * d_mu, weights.lambda_kl * d_lv
