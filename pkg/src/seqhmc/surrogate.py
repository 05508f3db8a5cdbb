"""Differentiable surrogate fitness models.

Each model is a dense tanh encoder over the flattened ``(L, S)`` relaxed
one-hot input, with two small heads on top of the latent vector: one
regressing the structural-distance label, one regressing fitness.  Training
runs in two stages (encoder + structure head, then the fitness head on the
frozen encoder).  Reverse-mode derivatives are written out by hand for this
fixed architecture; the sampler needs gradients with respect to the *input*.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

HEADS = ("struct", "fit")
CHECKPOINT_MAGIC = "seqhmc-surrogate 1"


@dataclass(frozen=True)
class ModelConfig:
    input_shape: tuple
    hidden_width: int = 64
    encoder_depth: int = 2

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if self.hidden_width < 1 or self.encoder_depth < 1:
            raise ValueError("hidden_width and encoder_depth must be positive")

    @property
    def input_dim(self) -> int:
        L, S = self.input_shape
        return L * S


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    patience: int = 3
    batch_size: int = 128
    max_epochs: int = 400
    full_batch_limit: int = 1024
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass
class TrainingExample:
    q: np.ndarray
    fitness: float
    structure_distance: float

    def __post_init__(self):
        if not np.isfinite(self.fitness):
            raise ValueError("fitness label must be finite")
        if not self.structure_distance >= 0:
            raise ValueError("structure_distance must be >= 0")


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.losses)


def _param_names(cfg: ModelConfig) -> list:
    names = []
    for layer in range(cfg.encoder_depth):
        names += [f"enc.W{layer}", f"enc.b{layer}"]
    for head in HEADS:
        names += [f"{head}.W1", f"{head}.b1", f"{head}.W2", f"{head}.b2"]
    return names


class SurrogateModel:
    """Encoder plus structure and fitness heads.

    ``params`` is an insertion-ordered dict; that order is also the
    checkpoint order (encoder layers, structure head, fitness head).
    """

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        missing = set(_param_names(config)) - set(params)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in _param_names(config)}

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "SurrogateModel":
        width = config.hidden_width
        params = {}

        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        fan_in = config.input_dim
        for layer in range(config.encoder_depth):
            params[f"enc.W{layer}"] = glorot(fan_in, width)
            params[f"enc.b{layer}"] = np.zeros(width)
            fan_in = width
        for head in HEADS:
            params[f"{head}.W1"] = glorot(width, width)
            params[f"{head}.b1"] = np.zeros(width)
            params[f"{head}.W2"] = glorot(width, 1)
            params[f"{head}.b2"] = np.zeros(1)
        return cls(config, params)

    def copy(self) -> "SurrogateModel":
        return SurrogateModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def encoder_params(self) -> dict:
        return {k: v for k, v in self.params.items() if k.startswith("enc.")}

    def head_params(self, head: str) -> dict:
        return {k: v for k, v in self.params.items() if k.startswith(head + ".")}

    # -- forward / backward ------------------------------------------------

    def _flatten(self, q) -> tuple:
        q = np.asarray(q, dtype=np.float64)
        shape = self.config.input_shape
        if q.shape == shape:
            return q.reshape(1, -1), True
        if q.ndim == 3 and q.shape[1:] == shape:
            return q.reshape(q.shape[0], -1), False
        if q.ndim == 2 and q.shape[1] == self.config.input_dim:
            return q, False
        raise ValueError(f"input shape {q.shape} does not match model input {shape}")

    def _encode(self, X: np.ndarray) -> list:
        acts = [X]
        h = X
        for layer in range(self.config.encoder_depth):
            h = np.tanh(h @ self.params[f"enc.W{layer}"] + self.params[f"enc.b{layer}"])
            acts.append(h)
        return acts

    def _head(self, head: str, H: np.ndarray) -> tuple:
        p = self.params
        a = np.tanh(H @ p[f"{head}.W1"] + p[f"{head}.b1"])
        return a, (a @ p[f"{head}.W2"])[:, 0] + p[f"{head}.b2"][0]

    def _head_backward(self, head: str, H, a, dy, grads: Optional[dict]):
        p = self.params
        if grads is not None:
            grads[f"{head}.W2"] = a.T @ dy[:, None]
            grads[f"{head}.b2"] = np.array([dy.sum()])
        dz = (dy[:, None] * p[f"{head}.W2"][:, 0]) * (1.0 - a * a)
        if grads is not None:
            grads[f"{head}.W1"] = H.T @ dz
            grads[f"{head}.b1"] = dz.sum(axis=0)
        return dz @ p[f"{head}.W1"].T

    def _encoder_backward(self, acts, dH, grads: Optional[dict]):
        dh = dH
        for layer in reversed(range(self.config.encoder_depth)):
            h_out = acts[layer + 1]
            dz = dh * (1.0 - h_out * h_out)
            if grads is not None:
                grads[f"enc.W{layer}"] = acts[layer].T @ dz
                grads[f"enc.b{layer}"] = dz.sum(axis=0)
            dh = dz @ self.params[f"enc.W{layer}"].T
        return dh

    def predict(self, q, head: str = "fit"):
        X, single = self._flatten(q)
        _, out = self._head(head, self._encode(X)[-1])
        return float(out[0]) if single else out

    def latent(self, q) -> np.ndarray:
        X, single = self._flatten(q)
        H = self._encode(X)[-1]
        return H[0] if single else H

    def fitness_and_input_grad(self, q):
        """Fitness prediction and its gradient with respect to ``q``."""
        X, single = self._flatten(q)
        acts = self._encode(X)
        H = acts[-1]
        a, f = self._head("fit", H)
        dH = self._head_backward("fit", H, a, np.ones_like(f), None)
        dX = self._encoder_backward(acts, dH, None)
        if single:
            return float(f[0]), dX[0].reshape(self.config.input_shape)
        return f, dX.reshape((X.shape[0],) + self.config.input_shape)

    def potential_and_grad(self, q):
        """U(q) = -log sigmoid(f(q)) and dU/dq."""
        f, df = self.fitness_and_input_grad(q)
        u = softplus(-np.asarray(f))
        dudf = -sigmoid(-np.asarray(f))
        g = df * (dudf[..., None, None] if np.ndim(dudf) else dudf)
        if np.ndim(u) == 0:
            return float(u), g
        return u, g

    def mse_grads(self, X, y, head: str, include_encoder: bool, H_cached=None):
        """Mean-squared-error loss and parameter gradients for one head."""
        if H_cached is None:
            acts = self._encode(X)
            H = acts[-1]
        else:
            acts, H = None, H_cached
        a, pred = self._head(head, H)
        resid = pred - y
        loss = float(np.mean(resid * resid))
        dy = 2.0 * resid / len(y)
        grads: dict = {}
        dH = self._head_backward(head, H, a, dy, grads)
        if include_encoder:
            self._encoder_backward(acts, dH, grads)
        return loss, grads


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


def forward_fitness(model: SurrogateModel, q) -> float:
    return model.predict(q, "fit")


def potential_energy(model: SurrogateModel, q):
    return softplus(-np.asarray(model.predict(q, "fit")))


def grad_potential(model: SurrogateModel, q) -> np.ndarray:
    return model.potential_and_grad(q)[1]


# -- training ----------------------------------------------------------------


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            params[k] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


def _stack(data) -> tuple:
    if not data:
        raise ValueError("training data is empty")
    X = np.stack([np.asarray(d.q, dtype=np.float64).reshape(-1) for d in data])
    fit = np.array([d.fitness for d in data], dtype=np.float64)
    struct = np.array([d.structure_distance for d in data], dtype=np.float64)
    return X, fit, struct


def fit_head(model: SurrogateModel, X: np.ndarray, y: np.ndarray, head: str,
             train_encoder: bool, cfg: TrainConfig,
             rng: Optional[np.random.Generator] = None) -> TrainResult:
    """Adam on MSE with early stopping on the epoch training loss.

    Stops once the loss has failed to improve on its best value for
    ``cfg.patience`` consecutive epochs, or at ``cfg.max_epochs``.
    """
    if len(X) == 0:
        raise ValueError("training data is empty")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    trainable = dict(model.head_params(head))
    if train_encoder:
        trainable.update(model.encoder_params())
    opt = Adam(trainable, cfg)
    H_frozen = None if train_encoder else model._encode(X)[-1]

    n = len(X)
    full_batch = n <= cfg.full_batch_limit
    if not full_batch and rng is None:
        raise ValueError("minibatch training needs a random stream")

    result = TrainResult()
    best = np.inf
    stale = 0
    for _ in range(cfg.max_epochs):
        if full_batch:
            loss, grads = model.mse_grads(X, y, head, train_encoder, H_frozen)
            opt.step(model.params, grads)
        else:
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                Hb = None if H_frozen is None else H_frozen[idx]
                batch_loss, grads = model.mse_grads(X[idx], y[idx], head, train_encoder, Hb)
                opt.step(model.params, grads)
                total += batch_loss * len(idx)
            loss = total / n
        result.losses.append(loss)
        if loss < best:
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                result.stopped_early = True
                break
    return result


def train_stage1(model: SurrogateModel, data, cfg: TrainConfig,
                 rng: Optional[np.random.Generator] = None) -> TrainResult:
    """Fit encoder and structure head to structural-distance labels."""
    X, _, struct = _stack(data)
    return fit_head(model, X, struct, "struct", True, cfg, rng)


def train_stage2(model: SurrogateModel, data, cfg: TrainConfig,
                 rng: Optional[np.random.Generator] = None,
                 freeze_encoder: bool = True) -> TrainResult:
    """Fit the fitness head; the encoder is left untouched unless
    ``freeze_encoder`` is False (the no-structure ablation)."""
    X, fit, _ = _stack(data)
    return fit_head(model, X, fit, "fit", not freeze_encoder, cfg, rng)


def minmax(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


# -- ensemble ------------------------------------------------------------------


class SurrogateEnsemble:
    def __init__(self, members: list):
        if not members:
            raise ValueError("ensemble needs at least one member")
        cfg = members[0].config
        if any(m.config != cfg for m in members):
            raise ValueError("ensemble members must share an architecture")
        self.members = list(members)

    def __len__(self):
        return len(self.members)

    @classmethod
    def initialize(cls, config: ModelConfig, seeds) -> "SurrogateEnsemble":
        return cls([SurrogateModel.initialize(config, np.random.default_rng(s)) for s in seeds])

    def copy(self) -> "SurrogateEnsemble":
        return SurrogateEnsemble([m.copy() for m in self.members])

    def member_predictions(self, q) -> np.ndarray:
        return np.array([m.predict(q, "fit") for m in self.members])

    def fit(self, X, fitness, structure, cfg: TrainConfig, use_structure: bool = True,
            rngs=None) -> list:
        """Two-stage training of every member on the same data.

        Structure labels are min-max normalised here.  Returns per-member
        ``(stage1, stage2)`` training results (stage1 is None when skipped).
        """
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        struct = minmax(structure)
        results = []
        for i, model in enumerate(self.members):
            rng = None if rngs is None else rngs[i]
            r1 = fit_head(model, X, struct, "struct", True, cfg, rng) if use_structure else None
            r2 = fit_head(model, X, fitness, "fit", not use_structure, cfg, rng)
            results.append((r1, r2))
        return results


def ensemble_predict(ens: SurrogateEnsemble, q):
    """Mean and population standard deviation of member predictions."""
    preds = ens.member_predictions(q)
    mean = preds.mean(axis=0)
    std = preds.std(axis=0)
    if np.ndim(mean) == 0:
        return float(mean), float(std)
    return mean, std


def ucb_score(ens: SurrogateEnsemble, q):
    mean, std = ensemble_predict(ens, q)
    return mean + std


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(model: SurrogateModel, path, seed: Optional[int] = None) -> None:
    """Text checkpoint: magic line, JSON header, then one block per parameter
    in fixed order, values written with ``float.hex`` so a reload is bit-exact."""
    header = asdict(model.config)
    header["input_shape"] = list(model.config.input_shape)
    header["seed"] = seed
    lines = [CHECKPOINT_MAGIC, json.dumps(header, sort_keys=True)]
    for name, value in model.params.items():
        flat = value.reshape(-1)
        lines.append(f"param {name} {' '.join(str(d) for d in value.shape)}")
        lines.append(" ".join(float(x).hex() for x in flat))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> SurrogateModel:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a surrogate checkpoint")
    header = json.loads(text[1])
    header.pop("seed", None)
    cfg = ModelConfig(**header)
    params = {}
    body = text[2:]
    for i in range(0, len(body) - 1, 2):
        tag, name, *shape = body[i].split()
        if tag != "param":
            raise ValueError(f"{path}: malformed parameter line {i + 3}")
        values = [float.fromhex(tok) for tok in body[i + 1].split()]
        params[name] = np.array(values, dtype=np.float64).reshape(tuple(int(d) for d in shape))
    return SurrogateModel(cfg, params)
