"""Synthetic censored datasets with known latent event times."""

import numpy as np

from ._util import scaled_count
from .dataset import Column, SurvivalDataset


def _censor(latent, n_censored, rng):
    """Censor ``n_censored`` random subjects at a uniform time before their event."""
    n = latent.shape[0]
    event = np.ones(n, dtype=bool)
    idx = rng.choice(n, size=n_censored, replace=False)
    event[idx] = False
    observed = latent.copy()
    observed[idx] = rng.uniform(0.0, latent[idx])
    return observed, event


def make_nonlinear(n=2000, censor_frac=0.3, seed=0):
    """Two features, T = exp(sin x1 + x2^2) + |noise|, random censoring.

    Returns (dataset, latent event times).
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.5, 1.5, size=(n, 2))
    latent = np.exp(np.sin(X[:, 0]) + X[:, 1] ** 2) + np.abs(rng.normal(0.0, 0.3, size=n))
    time, event = _censor(latent, scaled_count(censor_frac, n), rng)
    return SurvivalDataset(time, event, X, (Column("x1"), Column("x2"))), latent


def make_linear(n=100, n_features=3, seed=0, censor_frac=0.0):
    """T = exp(X @ w / (2 sqrt(p))) plus tiny noise; an easy, nearly separable problem."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    w = rng.uniform(0.5, 1.0, size=n_features)
    latent = np.exp(0.5 * (X @ w) / np.sqrt(n_features)) + 0.01 * rng.random(n)
    time, event = _censor(latent, scaled_count(censor_frac, n), rng)
    schema = tuple(Column(f"x{k + 1}") for k in range(n_features))
    return SurvivalDataset(time, event, X, schema), latent


def make_support_like(n=9105, n_events=6201, n_features=5, seed=0):
    """A dataset shaped like SUPPORT: 9105 subjects, 6201 events, 2904 censored."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    w = rng.normal(size=n_features) / np.sqrt(n_features)
    latent = rng.exponential(np.exp(X @ w)) * 365.0 + 1e-3
    time, event = _censor(latent, n - n_events, rng)
    schema = tuple(Column(f"x{k + 1}") for k in range(n_features))
    return SurvivalDataset(time, event, X, schema), latent
