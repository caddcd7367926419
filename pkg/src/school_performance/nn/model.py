"""Dense ReLU/sigmoid network with manual backpropagation.

The network is a stack of fully connected layers: ReLU on every hidden layer
and a single sigmoid output unit. Parameters and gradients are immutable
values; every update returns a new object.
"""
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from school_performance.utils.defence import (
    _check_binary_vector,
    _check_positive,
    _check_same_length,
    _type_defence,
)

# probability clamp before taking logs
EPS = 1e-7


class _LayerStack:
    """Ordered (weight, bias) pairs with weights shaped (out, in)."""

    def __init__(
        self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]
    ) -> None:
        _check_same_length(weights, biases, "weights", "biases")
        if len(weights) == 0:
            raise ValueError("At least one layer is required.")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(weights, biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise ValueError(
                    f"Layer {i}: weight shape {w.shape} and bias shape "
                    f"{b.shape} are incompatible."
                )
            if i and w.shape[1] != ws[-1].shape[0]:
                raise ValueError(
                    f"Layer {i} expects {w.shape[1]} inputs but layer {i - 1} "
                    f"has {ws[-1].shape[0]} outputs."
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"Layer {i} holds non-finite values.")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        self._weights = tuple(ws)
        self._biases = tuple(bs)

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        """Weight matrices, shaped (out, in) per layer."""
        return self._weights

    @property
    def biases(self) -> Tuple[np.ndarray, ...]:
        """Bias vectors per layer."""
        return self._biases

    @property
    def layer_dims(self) -> List[int]:
        """Input width followed by every layer's output width."""
        dims = [self._weights[0].shape[1]]
        return dims + [w.shape[0] for w in self._weights]

    def flat(self) -> np.ndarray:
        """All entries as one vector, layer by layer, weights then bias."""
        return np.concatenate(
            [
                np.concatenate([w.ravel(), b])
                for w, b in zip(self._weights, self._biases)
            ]
        )

    def max_abs_diff(self, other: "_LayerStack") -> float:
        """Max-norm distance to a congruent stack."""
        _check_congruent(self, other, "self", "other")
        return float(np.max(np.abs(self.flat() - other.flat())))

    def __eq__(self, other) -> bool:
        if not isinstance(other, type(self)):
            return NotImplemented
        return self.layer_dims == other.layer_dims and all(
            np.array_equal(a, b)
            for a, b in zip(
                self._weights + self._biases, other._weights + other._biases
            )
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(layer_dims={self.layer_dims})"


class ModelParams(_LayerStack):
    """Weights and biases of the network, exchanged by server and clients."""


class Gradients(_LayerStack):
    """Gradient of a scalar loss, congruent with the model it came from."""


def _check_congruent(
    first: _LayerStack, second: _LayerStack, first_nm: str, second_nm: str
) -> None:
    """Raise ValueError unless two layer stacks have identical shapes."""
    _type_defence(first, first_nm, _LayerStack)
    _type_defence(second, second_nm, _LayerStack)
    if first.layer_dims != second.layer_dims:
        raise ValueError(
            f"`{first_nm}` has layer dims {first.layer_dims} but "
            f"`{second_nm}` has {second.layer_dims}."
        )


def init_model(layer_dims: Sequence[int], seed: int = 42) -> ModelParams:
    """Initialise a network with Glorot-uniform weights and zero biases.

    Parameters
    ----------
    layer_dims : Sequence[int]
        Input width followed by each layer's width, e.g. [54, 64, 32, 1].
    seed : int, optional
        Random seed, by default 42.

    Returns
    -------
    ModelParams
        Weights drawn from U(-sqrt(6 / (in + out)), sqrt(6 / (in + out))).

    Raises
    ------
    ValueError
        Fewer than 2 dims, a non-positive dim or a final dim other than 1.

    """
    _type_defence(seed, "seed", int)
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError(f"`layer_dims` needs >= 2 entries. Got {dims}")
    for d in dims:
        if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
            raise TypeError(f"`layer_dims` must hold integers. Got {d!r}")
        if d < 1:
            raise ValueError(f"`layer_dims` must be positive. Got {dims}")
    if dims[-1] != 1:
        raise ValueError(
            f"`layer_dims` must end with a single output unit. Got {dims}"
        )
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _as_batch(model: _LayerStack, batch) -> np.ndarray:
    """Coerce a batch to a float matrix of the model's input width."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"`batch` expected a 2-d matrix. Got {x.ndim} dims.")
    if x.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"`batch` has width {x.shape[1]}, the model expects "
            f"{model.layer_dims[0]}."
        )
    return x


def _forward_pass(
    model: ModelParams, x: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Return the layer inputs and pre-activations of a forward pass."""
    if model.layer_dims[-1] != 1:
        raise ValueError(
            "`model` must have a single output unit. Got "
            f"{model.layer_dims[-1]}"
        )
    inputs, pre = [], []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
    return inputs, pre


def forward(model: ModelParams, batch) -> np.ndarray:
    """Predict class-1 probabilities for a batch.

    Outputs are clamped to [EPS, 1 - EPS] so they lie strictly inside
    (0, 1).

    Parameters
    ----------
    model : ModelParams
        Network parameters; the last layer must have one unit.
    batch : array-like
        Matrix of shape (rows, input width).

    Returns
    -------
    np.ndarray
        One probability per row.

    Raises
    ------
    ValueError
        The batch width does not match the model or it has more than one
        output unit.

    """
    _type_defence(model, "model", ModelParams)
    x = _as_batch(model, batch)
    _, pre = _forward_pass(model, x)
    return np.clip(expit(pre[-1][:, 0]), EPS, 1.0 - EPS)


def bce_loss(probabilities, labels) -> float:
    """Mean binary cross-entropy.

    Probabilities are clamped to [EPS, 1 - EPS] before the log.

    Raises
    ------
    ValueError
        Lengths differ or the inputs are empty.

    Examples
    --------
    >>> round(bce_loss([0.9, 0.1], [1, 0]), 6)
    0.105361

    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_same_length(p, y, "probabilities", "labels")
    if p.size == 0:
        raise ValueError("`probabilities` must not be empty.")
    p = np.clip(p, EPS, 1.0 - EPS)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def backward(model: ModelParams, batch, labels) -> Gradients:
    """Gradient of the mean binary cross-entropy of a batch.

    Backpropagates through the logits, so the output error is exactly
    sigmoid(z) - y and vanishes when a saturated prediction equals its label.
    The ReLU subgradient at 0 is 0.

    Parameters
    ----------
    model : ModelParams
        Network parameters.
    batch : array-like
        Matrix of shape (rows, input width).
    labels : array-like
        Binary labels, one per row.

    Returns
    -------
    Gradients
        Gradients congruent with `model`.

    Raises
    ------
    ValueError
        Shapes are inconsistent.

    """
    _type_defence(model, "model", ModelParams)
    x = _as_batch(model, batch)
    y = _check_binary_vector(labels, "labels").astype(np.float64)
    _check_same_length(x, y, "batch", "labels")
    if len(y) == 0:
        raise ValueError("`batch` must not be empty.")

    inputs, pre = _forward_pass(model, x)
    delta = (expit(pre[-1]) - y[:, None]) / len(y)
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ inputs[i]
        grad_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0)
    return Gradients(grad_w, grad_b)


def sgd_step(model: ModelParams, grads: _LayerStack, lr: float) -> ModelParams:
    """Plain gradient descent step, w <- w - lr * g.

    Raises
    ------
    ValueError
        Shapes differ or `lr` is not positive.

    """
    _type_defence(model, "model", ModelParams)
    _check_congruent(model, grads, "model", "grads")
    _check_positive(lr, "lr")
    return ModelParams(
        [w - lr * g for w, g in zip(model.weights, grads.weights)],
        [b - lr * g for b, g in zip(model.biases, grads.biases)],
    )


def proximal_grad(
    model: ModelParams, anchor: ModelParams, mu: float
) -> Gradients:
    """Gradient of (mu / 2) * ||w - anchor||^2, i.e. mu * (w - anchor).

    Raises
    ------
    ValueError
        Shapes differ or `mu` is negative.

    """
    _check_congruent(model, anchor, "model", "anchor")
    _check_positive(mu, "mu", allow_zero=True)
    return Gradients(
        [mu * (w - a) for w, a in zip(model.weights, anchor.weights)],
        [mu * (b - a) for b, a in zip(model.biases, anchor.biases)],
    )
