"""Multilayer perceptron trained with Adam and early stopping.

Architecture per hidden layer: affine -> batch normalization -> activation
(relu/selu/elu) -> dropout; sigmoid output trained on binary cross
entropy with optional L2 on the weight matrices. Training runs for up to
300 epochs and stops when the validation loss has not improved for 12
epochs, restoring the best epoch's weights and batch-norm running
statistics. All arithmetic is float64 and seeded, so training is
deterministic; inference uses running statistics with dropout off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from ..util import sigmoid, stable_matmul, stable_matvec

MAX_EPOCHS = 300
PATIENCE = 12
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        return np.where(z > 0, z, np.expm1(z))
    if name == "selu":
        return SELU_LAMBDA * np.where(z > 0, z, SELU_ALPHA * np.expm1(z))
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "elu":
        return np.where(z > 0, 1.0, np.exp(z))
    if name == "selu":
        return SELU_LAMBDA * np.where(z > 0, 1.0, SELU_ALPHA * np.exp(z))
    raise ValueError(f"unknown activation {name!r}")


def _bce_with_logits(logits: np.ndarray, y: np.ndarray) -> float:
    return float(
        np.mean(np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits))))
    )


@dataclass
class MLPState:
    """Inference-time network parameters (best epoch)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gammas: list[np.ndarray]
    betas: list[np.ndarray]
    run_means: list[np.ndarray]
    run_vars: list[np.ndarray]
    out_weights: np.ndarray
    out_bias: float
    activation: str
    best_epoch: int = 0
    epoch_val_losses: list[float] = field(default_factory=list)

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for w, b, gamma, beta, mu, var in zip(
            self.weights, self.biases, self.gammas, self.betas, self.run_means, self.run_vars
        ):
            a = stable_matmul(h, w, bias=b)
            an = (a - mu) / np.sqrt(var + BN_EPS)
            h = _activate(self.activation, gamma * an + beta)
        logits = stable_matvec(h, self.out_weights, bias=self.out_bias)
        return sigmoid(np.atleast_1d(logits))

    def to_jsonable(self) -> dict:
        return {
            "model": "mlp",
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "gammas": [g.tolist() for g in self.gammas],
            "betas": [b.tolist() for b in self.betas],
            "run_means": [m.tolist() for m in self.run_means],
            "run_vars": [v.tolist() for v in self.run_vars],
            "out_weights": self.out_weights.tolist(),
            "out_bias": self.out_bias,
            "best_epoch": self.best_epoch,
            "epoch_val_losses": self.epoch_val_losses,
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "MLPState":
        as_arrays = lambda items: [np.asarray(v, dtype=np.float64) for v in items]
        return cls(
            weights=as_arrays(payload["weights"]),
            biases=as_arrays(payload["biases"]),
            gammas=as_arrays(payload["gammas"]),
            betas=as_arrays(payload["betas"]),
            run_means=as_arrays(payload["run_means"]),
            run_vars=as_arrays(payload["run_vars"]),
            out_weights=np.asarray(payload["out_weights"], dtype=np.float64),
            out_bias=payload["out_bias"],
            activation=payload["activation"],
            best_epoch=payload["best_epoch"],
            epoch_val_losses=payload["epoch_val_losses"],
        )


class MLPNetwork:
    """Training-time network with explicit parameters and gradients."""

    def __init__(self, d_in: int, hidden_units: int, n_layers: int, activation: str,
                 dropout: float, l2: float, seed: int):
        self.activation = activation
        self.dropout = dropout
        self.l2 = l2
        self.n_layers = n_layers
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        fan_in = d_in
        for i in range(n_layers):
            bound = np.sqrt(3.0 / fan_in)  # fan-in-scaled uniform
            self.params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, hidden_units))
            self.params[f"b{i}"] = np.zeros(hidden_units)
            self.params[f"gamma{i}"] = np.ones(hidden_units)
            self.params[f"beta{i}"] = np.zeros(hidden_units)
            fan_in = hidden_units
        bound = np.sqrt(3.0 / fan_in)
        self.params["W_out"] = rng.uniform(-bound, bound, size=fan_in)
        self.params["b_out"] = np.zeros(1)
        self.run_means = [np.zeros(hidden_units) for _ in range(n_layers)]
        self.run_vars = [np.ones(hidden_units) for _ in range(n_layers)]

    def param_names(self) -> list[str]:
        return sorted(self.params)

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.param_names()])

    def set_flat_params(self, flat: np.ndarray):
        offset = 0
        for k in self.param_names():
            size = self.params[k].size
            self.params[k] = flat[offset : offset + size].reshape(self.params[k].shape).copy()
            offset += size

    def loss_and_grads(
        self,
        x: np.ndarray,
        y: np.ndarray,
        dropout_rng: np.random.Generator | None = None,
        update_running_stats: bool = False,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Training-mode loss (batch statistics) and exact parameter gradients."""
        n = x.shape[0]
        h = np.asarray(x, dtype=np.float64)
        cache = []
        for i in range(self.n_layers):
            w, b = self.params[f"W{i}"], self.params[f"b{i}"]
            gamma, beta = self.params[f"gamma{i}"], self.params[f"beta{i}"]
            a = h @ w + b
            mu = a.mean(axis=0)
            var = a.var(axis=0)
            ivar = 1.0 / np.sqrt(var + BN_EPS)
            an = (a - mu) * ivar
            z = gamma * an + beta
            act = _activate(self.activation, z)
            if self.dropout > 0.0 and dropout_rng is not None:
                mask = (dropout_rng.random(act.shape) >= self.dropout).astype(np.float64)
                out = act * mask / (1.0 - self.dropout)
            else:
                mask = None
                out = act
            if update_running_stats:
                self.run_means[i] = BN_MOMENTUM * self.run_means[i] + (1 - BN_MOMENTUM) * mu
                self.run_vars[i] = BN_MOMENTUM * self.run_vars[i] + (1 - BN_MOMENTUM) * var
            cache.append((h, an, ivar, z, mask))
            h = out
        logits = h @ self.params["W_out"] + self.params["b_out"][0]
        p = sigmoid(logits)
        loss = _bce_with_logits(logits, y)
        for i in range(self.n_layers):
            loss += self.l2 * float(np.sum(self.params[f"W{i}"] ** 2))
        loss += self.l2 * float(np.sum(self.params["W_out"] ** 2))

        grads: dict[str, np.ndarray] = {}
        dlogits = (p - y) / n
        grads["W_out"] = h.T @ dlogits + 2.0 * self.l2 * self.params["W_out"]
        grads["b_out"] = np.array([dlogits.sum()])
        dh = np.outer(dlogits, self.params["W_out"])
        for i in reversed(range(self.n_layers)):
            h_prev, an, ivar, z, mask = cache[i]
            if mask is not None:
                dact = dh * mask / (1.0 - self.dropout)
            else:
                dact = dh
            dz = dact * _activate_grad(self.activation, z)
            gamma = self.params[f"gamma{i}"]
            grads[f"gamma{i}"] = np.sum(dz * an, axis=0)
            grads[f"beta{i}"] = np.sum(dz, axis=0)
            dan = dz * gamma
            m = dz.shape[0]
            da = (ivar / m) * (
                m * dan - dan.sum(axis=0) - an * np.sum(dan * an, axis=0)
            )
            grads[f"W{i}"] = h_prev.T @ da + 2.0 * self.l2 * self.params[f"W{i}"]
            grads[f"b{i}"] = da.sum(axis=0)
            dh = da @ self.params[f"W{i}"].T
        return loss, grads

    def validation_loss(self, x: np.ndarray, y: np.ndarray) -> float:
        """Data loss in inference mode (running stats, no dropout, no L2)."""
        h = np.asarray(x, dtype=np.float64)
        for i in range(self.n_layers):
            a = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            an = (a - self.run_means[i]) / np.sqrt(self.run_vars[i] + BN_EPS)
            h = _activate(self.activation, self.params[f"gamma{i}"] * an + self.params[f"beta{i}"])
        logits = h @ self.params["W_out"] + self.params["b_out"][0]
        return _bce_with_logits(logits, y)

    def snapshot(self) -> dict:
        return {
            "params": {k: v.copy() for k, v in self.params.items()},
            "run_means": [m.copy() for m in self.run_means],
            "run_vars": [v.copy() for v in self.run_vars],
        }

    def restore(self, snap: dict):
        self.params = {k: v.copy() for k, v in snap["params"].items()}
        self.run_means = [m.copy() for m in snap["run_means"]]
        self.run_vars = [v.copy() for v in snap["run_vars"]]

    def to_state(self, best_epoch: int, val_losses: list[float]) -> MLPState:
        return MLPState(
            weights=[self.params[f"W{i}"] for i in range(self.n_layers)],
            biases=[self.params[f"b{i}"] for i in range(self.n_layers)],
            gammas=[self.params[f"gamma{i}"] for i in range(self.n_layers)],
            betas=[self.params[f"beta{i}"] for i in range(self.n_layers)],
            run_means=self.run_means,
            run_vars=self.run_vars,
            out_weights=self.params["W_out"],
            out_bias=float(self.params["b_out"][0]),
            activation=self.activation,
            best_epoch=best_epoch,
            epoch_val_losses=val_losses,
        )


def fit_mlp(hp: dict, x: np.ndarray, y: np.ndarray, x_val, y_val, seed: int) -> MLPState:
    net = MLPNetwork(
        d_in=x.shape[1],
        hidden_units=int(hp["hidden_units"]),
        n_layers=int(hp["n_layers"]),
        activation=str(hp["activation"]),
        dropout=float(hp["dropout"]),
        l2=float(hp["l2"]),
        seed=seed,
    )
    batch_size = int(hp["batch_size"])
    lr = float(hp["learning_rate"])
    n = x.shape[0]
    shuffle_rng = np.random.default_rng(seed + 1)
    dropout_rng = np.random.default_rng(seed + 2)

    adam_m = {k: np.zeros_like(v) for k, v in net.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in net.params.items()}
    adam_t = 0

    best_loss = np.inf
    best_epoch = -1
    best_snapshot = net.snapshot()
    stale = 0
    val_losses: list[float] = []
    has_validation = x_val is not None and y_val is not None and len(y_val) > 0

    for epoch in range(MAX_EPOCHS):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = perm[start : start + batch_size]
            loss, grads = net.loss_and_grads(
                x[batch], y[batch], dropout_rng=dropout_rng, update_running_stats=True
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite training loss", epoch)
            adam_t += 1
            for k, g in grads.items():
                adam_m[k] = ADAM_BETA1 * adam_m[k] + (1 - ADAM_BETA1) * g
                adam_v[k] = ADAM_BETA2 * adam_v[k] + (1 - ADAM_BETA2) * g * g
                m_hat = adam_m[k] / (1 - ADAM_BETA1**adam_t)
                v_hat = adam_v[k] / (1 - ADAM_BETA2**adam_t)
                net.params[k] = net.params[k] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if not has_validation:
            continue
        val_loss = net.validation_loss(x_val, y_val)
        val_losses.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_snapshot = net.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= PATIENCE:
                break

    if has_validation and best_epoch >= 0:
        net.restore(best_snapshot)
    else:
        best_epoch = MAX_EPOCHS - 1
    return net.to_state(best_epoch, val_losses)
