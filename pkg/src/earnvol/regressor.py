"""Small supervised learners: closed-form ridge and a two-layer perceptron.

Both operate on float64 numpy arrays. The perceptron is trained by plain
mini-batch gradient descent with hand-written backpropagation;
:func:`gradient_check` verifies that backpropagation against central
finite differences.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, SingularDesign

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float | np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        if np.ndim(self.bias):
            object.__setattr__(self, "bias", _frozen(self.bias))
        else:
            object.__setattr__(self, "bias", float(self.bias))
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite linear model parameters")

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"type": "linear", "weights": self.weights.tolist(),
                "bias": np.asarray(self.bias).tolist(), "ridge": self.ridge}


def _check_design(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"design must be a non-empty 2-D array, got shape {X.shape}")
    if y.shape[0] != X.shape[0]:
        raise DataError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite entries in design or targets")
    return X, y


def _spd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A x = B for symmetric positive-definite A via Cholesky."""
    scale = max(float(np.max(np.abs(np.diag(A)))), 1.0)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise SingularDesign("normal equations not positive definite; use ridge > 0") from None
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOL * scale:
        raise SingularDesign("normal equations numerically singular; use ridge > 0")
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


def ridge_fit(X, y, ridge: float = 0.0) -> LinearModel:
    """Minimise ||y - Xw - b||^2 + ridge ||w||^2 with an unpenalised intercept.

    ``y`` may be a vector or an (n, k) matrix of k independent targets.

    Raises:
        SingularDesign: ``ridge == 0`` and the centred design is rank deficient.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    X, y = _check_design(X, y)
    n, d = X.shape
    x_mean = X.mean(axis=0)
    y_mean = y.mean(axis=0)
    if n == 1:
        warnings.warn("ridge_fit on a single sample: returning the interpolating constant", stacklevel=2)
        return LinearModel(np.zeros((d,) + y.shape[1:]), y_mean, ridge)
    Xc = X - x_mean
    yc = y - y_mean
    A = Xc.T @ Xc + ridge * np.eye(d)
    w = _spd_solve(A, Xc.T @ yc)
    return LinearModel(w, y_mean - x_mean @ w, ridge)


def ridge_objective(model: LinearModel, X, y, ridge: float | None = None) -> float:
    ridge = model.ridge if ridge is None else ridge
    resid = np.asarray(y) - model.predict(X)
    return float(np.sum(resid ** 2) + ridge * np.sum(model.weights ** 2))


# -- perceptron ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 10
    seed: int = 2021
    patience: int = 3
    hidden: int = 512
    activation: str = "relu"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValueError("training hyperparameters must be positive")
        if self.hidden <= 0:
            raise ValueError("hidden must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0).astype(np.float64)


def _identity_grad(z):
    return np.ones_like(z)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "identity": (lambda z: z, _identity_grad),
}


@dataclass(frozen=True, eq=False)
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    activation: str = "relu"

    def __post_init__(self):
        for name in ("W1", "b1", "W2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "b2", float(self.b2))
        h = self.W1.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (h,):
            raise ValueError("inconsistent MLP parameter shapes")
        if not all(np.all(np.isfinite(p)) for p in self.params()):
            raise ValueError("non-finite MLP parameters")

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, np.array([self.b2])]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        act, _ = ACTIVATIONS[self.activation]
        return act(X @ self.W1.T + self.b1) @ self.W2 + self.b2

    def to_dict(self) -> dict:
        return {"type": "mlp", "W1": self.W1.tolist(), "b1": self.b1.tolist(),
                "W2": self.W2.tolist(), "b2": self.b2, "activation": self.activation}


def init_mlp(n_inputs: int, hidden: int = 512, seed: int = 2021, activation: str = "relu",
             output_bias: float = 0.0, zero_output: bool = False) -> MlpModel:
    """Glorot-uniform weights, zero hidden biases."""
    rng = np.random.default_rng(seed)
    lim1 = math.sqrt(6.0 / (n_inputs + hidden))
    W1 = rng.uniform(-lim1, lim1, size=(hidden, n_inputs))
    lim2 = math.sqrt(6.0 / (hidden + 1))
    W2 = np.zeros(hidden) if zero_output else rng.uniform(-lim2, lim2, size=hidden)
    return MlpModel(W1, np.zeros(hidden), W2, output_bias, activation)


def _loss_and_grads(W1, b1, W2, b2, X, y, activation):
    act, dact = ACTIVATIONS[activation]
    z = X @ W1.T + b1
    a = act(z)
    err = a @ W2 + b2 - y
    n = X.shape[0]
    loss = float(err @ err) / n
    g = 2.0 * err / n
    dW2 = a.T @ g
    db2 = float(np.sum(g))
    dz = np.outer(g, W2) * dact(z)
    dW1 = dz.T @ X
    db1 = dz.sum(axis=0)
    return loss, (dW1, db1, dW2, db2)


def mse_loss(model: MlpModel, X, y) -> float:
    resid = model.predict(X) - np.asarray(y, dtype=np.float64)
    return float(np.mean(resid ** 2))


def mlp_train(X, y, X_val, y_val, config: TrainConfig = TrainConfig(), init: MlpModel | None = None) -> MlpModel:
    """Mini-batch gradient descent on mean squared error with early stopping.

    The output bias starts at the mean training target unless ``init`` is
    given. Returns the parameters of the epoch (counting the initial state as
    epoch 0) with the lowest validation MSE.
    """
    X, y = _check_design(X, y)
    if len(X_val) == 0:
        raise DataError("empty validation set")
    X_val, y_val = _check_design(X_val, y_val)
    model = init or init_mlp(X.shape[1], config.hidden, config.seed, config.activation,
                             output_bias=float(np.mean(y)))
    W1, b1, W2, b2 = model.W1.copy(), model.b1.copy(), model.W2.copy(), model.b2
    rng = np.random.default_rng(config.seed)

    best = model
    best_val = mse_loss(model, X_val, y_val)
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(X.shape[0])
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            _, (dW1, db1, dW2, db2) = _loss_and_grads(W1, b1, W2, b2, X[idx], y[idx], config.activation)
            W1 -= config.learning_rate * dW1
            b1 -= config.learning_rate * db1
            W2 -= config.learning_rate * dW2
            b2 -= config.learning_rate * db2
        if not (np.all(np.isfinite(W1)) and np.all(np.isfinite(W2)) and math.isfinite(b2)):
            logger.warning("mlp_train diverged at epoch %d; keeping best epoch", epoch)
            break
        current = MlpModel(W1, b1, W2, b2, config.activation)
        val = mse_loss(current, X_val, y_val)
        logger.debug("epoch %d val mse %.6g", epoch, val)
        if val < best_val:
            best, best_val, stale = current, val, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best


def gradient_check(model: MlpModel, x, y, epsilon: float = 1e-5) -> float:
    """Max relative discrepancy between backprop and central differences.

    The loss is the mean squared error over the rows of ``x``. Relative error
    is ``|a - n| / max(|a|, |n|)``, taken as 0 when both are exactly 0.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    params = [model.W1.copy(), model.b1.copy(), model.W2.copy(), np.array([model.b2])]

    def loss(ps):
        return _loss_and_grads(ps[0], ps[1], ps[2], ps[3][0], X, Y, model.activation)[0]

    _, grads = _loss_and_grads(params[0], params[1], params[2], params[3][0], X, Y, model.activation)
    grads = [np.asarray(g, dtype=np.float64).reshape(p.shape) for g, p in zip(grads, params)]
    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss(params)
            flat[i] = orig - epsilon
            down = loss(params)
            flat[i] = orig
            num = (up - down) / (2 * epsilon)
            denom = max(abs(gflat[i]), abs(num))
            if denom == 0.0:
                continue
            worst = max(worst, abs(gflat[i] - num) / denom)
    return worst


# -- persistence --------------------------------------------------------------

def model_to_json(model, config: TrainConfig | None = None) -> str:
    doc = model.to_dict()
    if config is not None:
        doc["config"] = asdict(config)
    return json.dumps(doc, indent=2)


def model_from_json(text: str):
    doc = json.loads(text)
    kind = doc.get("type")
    if kind == "linear":
        bias = doc["bias"]
        return LinearModel(np.array(doc["weights"], dtype=np.float64),
                           np.array(bias) if isinstance(bias, list) else bias, doc.get("ridge", 0.0))
    if kind == "mlp":
        return MlpModel(np.array(doc["W1"]), np.array(doc["b1"]), np.array(doc["W2"]), doc["b2"],
                        doc.get("activation", "relu"))
    raise DataError(f"unknown model type {kind!r}")
