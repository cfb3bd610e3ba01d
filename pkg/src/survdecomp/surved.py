"""SurVED: a variational encoder-decoder that generates event times.

The encoder is a tanh MLP with two linear heads giving the mean and the log
variance of a diagonal Gaussian latent.  The decoder is one linear unit from
the latent to a time on the transformed scale.  Sampling n latents per subject
gives n event times; their mean is the point prediction and their
Kaplan-Meier curve the survival function.

Gradients are derived by hand (reparameterized, pathwise) and the model is
trained with mini-batch SGD with optional momentum.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .concordance import comparable_pairs, count_pairs_fast, decompose
from .kaplan_meier import km_estimate
from .losses import GaussianLatent, LossBreakdown, LossWeights, loss_gradients

CHECKPOINT_FORMAT = "survdecomp.surved"
CHECKPOINT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    """Loss or parameters became non-finite; ``state`` holds the diagnostics."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state

    def dump(self, path):
        state = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.state.items()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(state, fh, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class ModelConfig:
    input_dim: int
    hidden_widths: tuple = (32, 32)
    latent_dim: int = 4
    n_samples: int = 200
    weights: LossWeights = field(default_factory=lambda: LossWeights(lambda_kl=0.01))
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    # accepted for config compatibility; only 0 is supported
    dropout: float = 0.0

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.input_dim < 1 or self.latent_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("all layer sizes must be at least 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.dropout != 0.0:
            raise ValueError("dropout is not supported; leave it at 0")

    def to_dict(self):
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        return d


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class SurvedModel:
    """Parameters live in ``params``, an ordered dict of float arrays."""

    def __init__(self, config, params=None):
        self.config = config
        if params is None:
            params = self._init_params(np.random.default_rng(config.seed))
        self.params = {k: np.array(v, dtype=float) for k, v in params.items()}
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._check_shapes()

    def _init_params(self, rng):
        c = self.config
        params = {}
        width = c.input_dim
        for k, h in enumerate(c.hidden_widths):
            params[f"hidden_{k}_w"] = _glorot(rng, width, h)
            params[f"hidden_{k}_b"] = np.zeros(h)
            width = h
        params["mu_w"] = _glorot(rng, width, c.latent_dim)
        params["mu_b"] = np.zeros(c.latent_dim)
        params["log_var_w"] = _glorot(rng, width, c.latent_dim)
        params["log_var_b"] = np.zeros(c.latent_dim)
        params["dec_w"] = _glorot(rng, c.latent_dim, 1).reshape(-1)
        params["dec_b"] = np.zeros(1)
        return params

    def _check_shapes(self):
        c = self.config
        width = c.input_dim
        expected = {}
        for k, h in enumerate(c.hidden_widths):
            expected[f"hidden_{k}_w"] = (width, h)
            expected[f"hidden_{k}_b"] = (h,)
            width = h
        expected.update(
            mu_w=(width, c.latent_dim),
            mu_b=(c.latent_dim,),
            log_var_w=(width, c.latent_dim),
            log_var_b=(c.latent_dim,),
            dec_w=(c.latent_dim,),
            dec_b=(1,),
        )
        if set(expected) != set(self.params):
            raise ValueError("parameter names do not match the configuration")
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ValueError(f"{k} has shape {self.params[k].shape}, expected {shape}")

    def copy(self):
        other = SurvedModel(self.config, self.params)
        other.velocity = {k: v.copy() for k, v in self.velocity.items()}
        return other

    # -- forward ----------------------------------------------------------

    def _encode(self, X):
        p = self.params
        acts = [X]
        h = X
        for k in range(len(self.config.hidden_widths)):
            h = np.tanh(h @ p[f"hidden_{k}_w"] + p[f"hidden_{k}_b"])
            acts.append(h)
        mu = h @ p["mu_w"] + p["mu_b"]
        log_var = h @ p["log_var_w"] + p["log_var_b"]
        return mu, log_var, acts

    def decode(self, z):
        return z @ self.params["dec_w"] + self.params["dec_b"][0]


def _as_batch(model, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.config.input_dim:
        raise ValueError(f"expected {model.config.input_dim} covariates, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("covariates must be finite")
    return X, single


def encode(model, x):
    """Gaussian latent for one covariate vector (or a batch of rows)."""
    X, single = _as_batch(model, x)
    mu, log_var, _ = model._encode(X)
    if single:
        return GaussianLatent(mu[0], log_var[0])
    return GaussianLatent(mu, log_var)


def reparameterize(latent, eps):
    """z = mu + exp(log_var / 2) * eps."""
    mu = np.asarray(latent.mu, dtype=float)
    log_var = np.asarray(latent.log_var, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != mu.shape[-1]:
        raise ValueError("noise and latent dimensions differ")
    return mu + np.exp(0.5 * log_var) * eps


def sample_event_times(model, x, n, rng):
    """n non-negative sampled times for ``x``; shape (n,) or (rows, n) for a batch."""
    if n < 1:
        raise ValueError("n must be at least 1")
    X, single = _as_batch(model, x)
    mu, log_var, _ = model._encode(X)
    eps = rng.standard_normal((X.shape[0], n, model.config.latent_dim))
    z = mu[:, None, :] + np.exp(0.5 * log_var)[:, None, :] * eps
    t = np.maximum(model.decode(z), 0.0)
    return t[0] if single else t


def expected_event_time(model, x, n=None, rng=None):
    """Mean of n sampled times; ``rng`` defaults to one seeded from the config."""
    n = model.config.n_samples if n is None else n
    rng = np.random.default_rng([model.config.seed, 1]) if rng is None else rng
    return sample_event_times(model, x, n, rng).mean(axis=-1)


def predict(model, X, n=None, seed=None):
    """Expected event times for every row of ``X`` with a reproducible noise stream."""
    seed = model.config.seed if seed is None else seed
    return np.atleast_1d(expected_event_time(model, X, n, np.random.default_rng([seed, 1])))


def survival_function(model, x, n=None, rng=None):
    """Kaplan-Meier curve of n sampled times for a single covariate vector."""
    n = model.config.n_samples if n is None else n
    rng = np.random.default_rng([model.config.seed, 1]) if rng is None else rng
    samples = sample_event_times(model, np.asarray(x, dtype=float).reshape(-1), n, rng)
    return km_estimate(samples)


# -- training -------------------------------------------------------------


def loss_and_grads(model, X, t, e, eps):
    """Total loss on a batch and its gradient for every parameter.

    ``eps`` is the (rows, latent_dim) standard-normal noise; fixing it makes
    the loss a deterministic function of the parameters.
    """
    p = model.params
    mu, log_var, acts = model._encode(X)
    std = np.exp(0.5 * log_var)
    z = mu + std * eps
    pred = model.decode(z)
    pairs = comparable_pairs(t, e)
    breakdown, d_pred, d_mu, d_lv = loss_gradients(
        pred, t, e, GaussianLatent(mu, log_var), model.config.weights, pairs
    )

    grads = {"dec_w": z.T @ d_pred, "dec_b": np.array([d_pred.sum()])}
    d_z = np.outer(d_pred, p["dec_w"])
    d_mu = d_mu + d_z
    d_lv = d_lv + d_z * eps * 0.5 * std

    h = acts[-1]
    grads["mu_w"] = h.T @ d_mu
    grads["mu_b"] = d_mu.sum(axis=0)
    grads["log_var_w"] = h.T @ d_lv
    grads["log_var_b"] = d_lv.sum(axis=0)
    d_h = d_mu @ p["mu_w"].T + d_lv @ p["log_var_w"].T
    for k in reversed(range(len(model.config.hidden_widths))):
        h, h_in = acts[k + 1], acts[k]
        d_a = d_h * (1.0 - h**2)
        grads[f"hidden_{k}_w"] = h_in.T @ d_a
        grads[f"hidden_{k}_b"] = d_a.sum(axis=0)
        d_h = d_a @ p[f"hidden_{k}_w"].T
    return breakdown, grads


def train_step(model, X, t, e, rng):
    """One SGD(+momentum) update on a batch with a fresh latent draw per row.

    Updates ``model`` in place and returns (model, LossBreakdown).
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=bool)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(X)):
        raise ValueError("batch covariates must be finite")
    eps = rng.standard_normal((X.shape[0], model.config.latent_dim))
    # overflow is reported through TrainingDiverged below, not numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        breakdown, grads = loss_and_grads(model, X, t, e, eps)
    if not math.isfinite(breakdown.total):
        raise TrainingDiverged(
            f"non-finite loss {breakdown.total}",
            {"loss": breakdown.to_dict(), "params": model.params, "batch_time": t, "batch_event": e},
        )
    lr, mom = model.config.learning_rate, model.config.momentum
    with np.errstate(over="ignore", invalid="ignore"):
        for k, g in grads.items():
            v = model.velocity[k]
            v *= mom
            v -= lr * g
            model.params[k] += v
    bad = [k for k, v in model.params.items() if not np.all(np.isfinite(v))]
    if bad:
        raise TrainingDiverged(
            f"non-finite parameters in {bad}",
            {"loss": breakdown.to_dict(), "params": model.params},
        )
    return model, breakdown


def validation_ci(model, data):
    pred = predict(model, data.features())
    return decompose(count_pairs_fast(data, pred)).ci


def fit(model, train, validation):
    """Mini-batch training with early stopping on the validation C-index.

    ``train`` and ``validation`` are preprocessed (all-numeric) datasets.
    Returns (best model, history), history holding one dict per epoch with
    the mean loss terms and the validation C-index.
    """
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation must be nonempty")
    c = model.config
    X, t, e = train.features(), train.time, train.event
    rng = np.random.default_rng([c.seed, 0])
    best = model.copy()
    best_ci = -math.inf
    wait = 0
    history = []
    for epoch in range(1, c.max_epochs + 1):
        order = rng.permutation(len(train))
        parts = []
        for start in range(0, len(order), c.batch_size):
            idx = order[start : start + c.batch_size]
            _, b = train_step(model, X[idx], t[idx], e[idx], rng)
            parts.append((b, len(idx)))
        total_rows = sum(w for _, w in parts)
        means = {
            key: sum(getattr(b, key) * w for b, w in parts) / total_rows
            for key in ("l_e", "l_c", "l_kl", "c_lb", "total")
        }
        ci = validation_ci(model, validation)
        history.append({"epoch": epoch, **means, "val_ci": ci})
        if ci > best_ci:
            best_ci, best, wait = ci, model.copy(), 0
        else:
            wait += 1
            if wait >= c.patience:
                break
    return best, history


# -- persistence ------------------------------------------------------------


def checkpoint_dict(model, extra=None):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in model.params.items()},
        "extra": extra or {},
    }


def dumps_checkpoint(model, extra=None):
    return json.dumps(checkpoint_dict(model, extra), sort_keys=True)


def loads_checkpoint(text):
    """(model, extra) from a JSON checkpoint string."""
    d = json.loads(text)
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a SurVED checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    cfg = dict(d["config"])
    cfg["weights"] = LossWeights(**cfg["weights"])
    config = ModelConfig(**cfg)
    params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
    return SurvedModel(config, params), d.get("extra", {})


__all__ = [
    "LossBreakdown",
    "ModelConfig",
    "SurvedModel",
    "TrainingDiverged",
    "encode",
    "reparameterize",
    "sample_event_times",
    "expected_event_time",
    "predict",
    "survival_function",
    "loss_and_grads",
    "train_step",
    "fit",
    "dumps_checkpoint",
    "loads_checkpoint",
]
