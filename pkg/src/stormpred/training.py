"""MSE training loop: Adam, seeded minibatching, and model persistence.

Each epoch shuffles the training samples, draws fresh dropout masks per
sequence, averages gradients over every minibatch, and applies one Adam
update per batch. Validation always runs with dropout off. Everything is
deterministic given the config seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ModelFormatError, NumericsError, ValidationError
from .ioutil import atomic_write_text, dump_json, load_json
from .lstm import (ModelParams, Gradients, init_params, sample_masks,
                   ones_masks, forward, backward, param_blocks,
                   params_from_blocks, zero_gradients)
from .storm_data import Sample, Scaler, scaler_to_json, scaler_from_json

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    p_input: float
    seed: int
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    p_recurrent: float = 0.1

    def __post_init__(self):
        for name in ("p_input", "p_recurrent", "beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"{name} must be in [0, 1), got {value}")
        if self.learning_rate <= 0.0:
            raise ValidationError(
                f"learning_rate must be positive, got {self.learning_rate}")
        if self.epsilon <= 0.0:
            raise ValidationError(
                f"epsilon must be positive, got {self.epsilon}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(
                f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class AdamState:
    """First/second moment accumulators per parameter block, plus step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(m={n: np.zeros_like(a) for n, a in param_blocks(params)},
                   v={n: np.zeros_like(a) for n, a in param_blocks(params)},
                   t=0)


@dataclass
class TrainHistory:
    """Mean train and validation MSE per epoch."""

    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_mse)

    def to_csv_text(self) -> str:
        lines = ["epoch,train_mse,val_mse"]
        for i, (tr, va) in enumerate(zip(self.train_mse, self.val_mse), 1):
            lines.append(f"{i},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        atomic_write_text(path, self.to_csv_text())


def mse(pred, label) -> float:
    """Mean over output components of squared error."""
    p = np.asarray(pred, dtype=np.float64)
    l = np.asarray(label, dtype=np.float64)
    return float(np.mean((p - l) ** 2))


def adam_step(params: ModelParams, grads: Gradients, state: AdamState,
              config: TrainConfig) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update. Functional: returns new params/state."""
    t = state.t + 1
    new_blocks: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    grad_blocks = dict(param_blocks(grads))
    for name, theta in param_blocks(params):
        g = grad_blocks[name]
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in block {name}")
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        new_blocks[name] = theta - config.learning_rate * m_hat / (
            np.sqrt(v_hat) + config.epsilon)
        new_m[name] = m
        new_v[name] = v
    return params_from_blocks(new_blocks), AdamState(m=new_m, v=new_v, t=t)


def evaluate_mse(params: ModelParams, samples: list[Sample]) -> float:
    """Mean MSE over samples with dropout off. Pure: consumes no rng."""
    if not samples:
        raise ValidationError("cannot evaluate on an empty sample list")
    masks = ones_masks(params)
    losses = [mse(forward(s, params, masks), s.label) for s in samples]
    return float(np.mean(losses))


def train(train_samples: list[Sample], val_samples: list[Sample],
          config: TrainConfig) -> tuple[ModelParams, TrainHistory]:
    """Train from scratch; returns final parameters and per-epoch history."""
    if not train_samples:
        raise ValidationError("training sample set is empty")
    if not val_samples:
        raise ValidationError("validation sample set is empty")

    n_x = train_samples[0].input.shape[1]
    params = init_params(config.seed, n_x=n_x)
    # Distinct stream from the init draws so masks and weights stay independent.
    rng = np.random.default_rng([config.seed, 1])
    state = AdamState.zeros(params)
    history = TrainHistory()

    for _ in range(config.epochs):
        order = rng.permutation(len(train_samples))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = zero_gradients(params)
            acc_blocks = dict(param_blocks(acc))
            for idx in batch:
                sample = train_samples[idx]
                masks = sample_masks(rng, config.p_input, config.p_recurrent,
                                     params)
                loss, grads = backward(sample, sample.label, params, masks)
                if not math.isfinite(loss):
                    raise NumericsError(f"non-finite training loss {loss}")
                epoch_losses.append(loss)
                for name, g in param_blocks(grads):
                    acc_blocks[name] += g
            inv = 1.0 / len(batch)
            for arr in acc_blocks.values():
                arr *= inv
            params, state = adam_step(params, acc, state, config)
        history.train_mse.append(float(np.mean(epoch_losses)))
        history.val_mse.append(evaluate_mse(params, val_samples))
    return params, history


def save_model(params: ModelParams, scaler: Scaler, config: TrainConfig,
               path: str) -> None:
    """Write the model JSON artifact atomically. Numbers survive bit-exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": {
            "n_x": params.n_x,
            "n_h1": params.layer1.n_hidden,
            "n_h2": params.layer2.n_hidden,
            "n_y": params.n_y,
        },
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in param_blocks(params)
        },
        "train_config": asdict(config),
        "scaler": scaler_to_json(scaler),
    }
    atomic_write_text(path, dump_json(doc))


def load_model(path: str) -> tuple[ModelParams, Scaler, TrainConfig]:
    """Read a model artifact back; inverse of save_model."""
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: model artifact is not a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format_version {version!r}, expected "
            f"{MODEL_FORMAT_VERSION}")
    try:
        blocks = {}
        for name, entry in doc["params"].items():
            arr = np.asarray(entry["data"], dtype=np.float64)
            blocks[name] = arr.reshape(entry["shape"])
        params = params_from_blocks(blocks)
        arch = doc["architecture"]
        if (params.n_x != arch["n_x"] or params.layer1.n_hidden != arch["n_h1"]
                or params.layer2.n_hidden != arch["n_h2"]
                or params.n_y != arch["n_y"]):
            raise ModelFormatError(
                f"{path}: architecture does not match stored shapes")
        config = TrainConfig(**doc["train_config"])
        scaler = scaler_from_json(doc["scaler"])
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model artifact: {exc}")
    return params, scaler, config
