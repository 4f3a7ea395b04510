"""Small dense decoder network with manual forward/backward passes.

Layers are affine maps followed by relu, sigmoid, identity, or a final
softmax. Inputs are batched row-wise: x has shape (B, in_features).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DecoderError(ValueError):
    """Raised for invalid architectures or mismatched shapes."""

ACTIVATIONS = ("relu", "sigmoid", "identity", "softmax")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str


@dataclass
class DecoderNetwork:
    """Dense network with an optional fixed normalization of its input.

    ``input_scale`` multiplies the raw input and ``center_input`` subtracts
    the per-sample mean afterwards. Both are fixed (non-trainable) parts of
    the architecture: raw measurements grow with the scene size and share a
    large common offset across shots, which swamps Glorot-scaled first-layer
    weights unless removed up front.
    """

    layers: list
    input_scale: float = 1.0
    center_input: bool = False

    @property
    def input_size(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_size(self) -> int:
        return self.layers[-1].weights.shape[0]

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def parameters(self):
        """Flat list of parameter arrays, weights then bias per layer."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out


def init_network(
    layer_sizes,
    activations,
    rng: np.random.Generator,
    input_scale: float = 1.0,
    center_input: bool = False,
) -> DecoderNetwork:
    """Glorot-uniform weights, zero biases; softmax allowed only at the output."""
    if len(layer_sizes) < 2:
        raise DecoderError("need at least an input and an output size")
    if len(activations) != len(layer_sizes) - 1:
        raise DecoderError(
            f"{len(layer_sizes) - 1} layers need {len(layer_sizes) - 1} activations, "
            f"got {len(activations)}"
        )
    layers = []
    for i, act in enumerate(activations):
        if act not in ACTIVATIONS:
            raise DecoderError(f"unknown activation {act!r}")
        if act == "softmax" and i != len(activations) - 1:
            raise DecoderError("softmax is only allowed as the final activation")
        fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(DenseLayer(weights, np.zeros(fan_out), act))
    return DecoderNetwork(layers, input_scale, center_input)


def _softmax(z: np.ndarray) -> np.ndarray:
    # log-sum-exp shift for numerical stability
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net: DecoderNetwork, x: np.ndarray):
    """Run the network; returns (output, cache) with cache feeding backward."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.input_size:
        raise DecoderError(
            f"input width {x.shape[1]} does not match network input {net.input_size}"
        )
    cache = {"inputs": [], "preacts": [], "outputs": []}
    h = x * net.input_scale
    if net.center_input:
        h = h - h.mean(axis=1, keepdims=True)
    for layer in net.layers:
        cache["inputs"].append(h)
        z = h @ layer.weights.T + layer.bias
        cache["preacts"].append(z)
        if layer.activation == "relu":
            h = np.maximum(z, 0.0)
        elif layer.activation == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-z))
        elif layer.activation == "identity":
            h = z
        else:  # softmax
            h = _softmax(z)
        cache["outputs"].append(h)
    return h, cache


def backward(net: DecoderNetwork, cache, upstream: np.ndarray):
    """Reverse-mode gradients. Returns (per-layer [(dW, db), ...], grad_input).

    ``upstream`` is the gradient with respect to the network output, except
    when the final activation is softmax: there it is taken with respect to
    the logits (the fused softmax/cross-entropy convention).
    """
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if len(cache["inputs"]) != len(net.layers):
        raise DecoderError("cache does not match this network")
    grads = [None] * len(net.layers)
    delta = upstream
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        z = cache["preacts"][i]
        if delta.shape != z.shape:
            raise DecoderError(
                f"upstream shape {delta.shape} does not match layer output {z.shape}"
            )
        if layer.activation == "relu":
            delta = delta * (z > 0.0)
        elif layer.activation == "sigmoid":
            out = cache["outputs"][i]
            delta = delta * out * (1.0 - out)
        # identity and softmax: delta already at the logits
        grads[i] = (delta.T @ cache["inputs"][i], delta.sum(axis=0))
        delta = delta @ layer.weights
    # undo the fixed input normalization (mean removal is symmetric)
    if net.center_input:
        delta = delta - delta.mean(axis=1, keepdims=True)
    delta = delta * net.input_scale
    return grads, delta


def mse_loss(prediction: np.ndarray, target: np.ndarray):
    """Mean squared difference over all entries; grad is w.r.t. the prediction."""
    prediction = np.atleast_2d(np.asarray(prediction, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if prediction.shape != target.shape:
        raise DecoderError(
            f"prediction shape {prediction.shape} != target shape {target.shape}"
        )
    diff = prediction - target
    value = float((diff**2).mean())
    grad = 2.0 * diff / diff.size
    return value, grad


def cross_entropy_loss(probabilities: np.ndarray, targets):
    """Mean negative log-likelihood of the target classes.

    The returned gradient is the fused softmax form (p - onehot) / B and must
    be fed to ``backward`` of a softmax-terminated network, where it applies
    at the logits.
    """
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    targets = np.asarray(targets)
    if targets.ndim == 2:  # one-hot
        idx = targets.argmax(axis=1)
    else:
        idx = np.atleast_1d(targets).astype(int)
    b, k = p.shape
    if idx.size != b:
        raise DecoderError(f"{b} predictions but {idx.size} targets")
    if np.any(idx < 0) or np.any(idx >= k):
        raise DecoderError("class index out of range")
    picked = p[np.arange(b), idx]
    value = float(-np.log(np.clip(picked, 1e-300, None)).mean())
    grad = p.copy()
    grad[np.arange(b), idx] -= 1.0
    grad /= b
    return value, grad


def loss(kind: str, prediction, target):
    if kind == "mse":
        return mse_loss(prediction, target)
    if kind == "cross_entropy":
        return cross_entropy_loss(prediction, target)
    raise DecoderError(f"unknown loss kind {kind!r}")


def predict_class(output: np.ndarray) -> int:
    """Argmax with ties broken toward the lowest index."""
    output = np.asarray(output).ravel()
    if output.size == 0:
        raise DecoderError("empty output vector")
    return int(np.argmax(output))


def predict_classes(outputs: np.ndarray) -> np.ndarray:
    return np.argmax(np.atleast_2d(outputs), axis=1)
