"""Minimal dense numerical core: MLPs with manual backprop and Adam.

Weights and activations are stored as row-major float32 numpy arrays. The
layer vocabulary is fixed (Linear, ReLU, optional tanh-Gaussian head handled
by the SAC agent), which keeps every gradient auditable against finite
differences. No autodiff framework is involved.

Two forward flavors exist on purpose:

* ``forward``        batch path used by training, float32 BLAS throughout.
* ``policy_forward`` single-observation path used for acting, evaluation and
  as the reference semantics for exported models. It accumulates each matvec
  in float64 over the float32 operands and rounds to float32 at every layer
  boundary, so the sparse inference kernel can reproduce it bit-for-bit up to
  reduction order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericError(RuntimeError):
    """A NaN or Inf reached a place where the math must stay finite."""


OUTPUT_HEADS = ("identity", "tanh_gaussian")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully-connected ReLU network.

    ``output_dim`` is the width of the last linear layer. For the
    ``tanh_gaussian`` head that is 2 * action_dim (mean and log-std rows);
    the head math itself lives with the SAC agent and the inference engine.
    """

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"
    output_head: str = "identity"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported activation {self.hidden_activation!r}")
        if self.output_head not in OUTPUT_HEADS:
            raise ValueError(f"unsupported output head {self.output_head!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per linear layer, input to output."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


class LinearLayer:
    """Dense layer y = W x + b with W of shape [out, in]."""

    __slots__ = ("weight", "bias")

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        if bias.shape != (weight.shape[0],):
            raise ValueError(
                f"bias length {bias.shape} does not match weight rows {weight.shape}"
            )
        self.weight = weight
        self.bias = bias


def he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform fan-in scaled init, bound sqrt(6 / fan_in), for ReLU stacks."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(np.float32)


class Mlp:
    """Stack of linear layers with ReLU between them, linear output."""

    def __init__(self, spec: MlpSpec, layers: list[LinearLayer]):
        self.spec = spec
        self.layers = layers

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        layers = [
            LinearLayer(he_uniform(rng, fi, fo), np.zeros(fo, dtype=np.float32))
            for fi, fo in spec.layer_dims
        ]
        return cls(spec, layers)

    # -- parameter access ------------------------------------------------

    def weights(self) -> list[np.ndarray]:
        return [l.weight for l in self.layers]

    def biases(self) -> list[np.ndarray]:
        return [l.bias for l in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Flat list [w0, b0, w1, b1, ...], aliased (not copied)."""
        out: list[np.ndarray] = []
        for l in self.layers:
            out.append(l.weight)
            out.append(l.bias)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            self.spec,
            [LinearLayer(l.weight.copy(), l.bias.copy()) for l in self.layers],
        )

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.layers, other.layers):
            dst.weight[...] = src.weight
            dst.bias[...] = src.bias

    # -- forward / backward ----------------------------------------------

    def forward(self, x: np.ndarray, weight_transform=None):
        """Batch forward. x has shape (batch, input_dim).

        ``weight_transform(layer_index, w) -> w_eff`` lets callers swap in
        fake-quantized weights; the cache records the effective weights so
        backward differentiates the network that actually ran.

        Returns (output, cache).
        """
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"expected input of shape (batch, {self.spec.input_dim}), got {x.shape}"
            )
        cache = []
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            w = layer.weight if weight_transform is None else weight_transform(i, layer.weight)
            z = h @ w.T + layer.bias
            cache.append((h, z, w))
            h = np.maximum(z, 0) if i < last else z
        return h, cache

    def backward(self, cache, grad_out: np.ndarray):
        """Backprop through a cached forward.

        Returns (param_grads, grad_input) where param_grads is a list of
        (dW, db) pairs ordered like ``self.layers`` and dW is taken with
        respect to the effective weights recorded in the cache.
        """
        if not cache:
            raise RuntimeError("backward called without a forward cache")
        x0, z0, _ = cache[-1]
        if grad_out.shape != z0.shape:
            raise ValueError(
                f"upstream grad shape {grad_out.shape} does not match output {z0.shape}"
            )
        param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(cache)
        g = grad_out
        last = len(cache) - 1
        for i in range(last, -1, -1):
            h, z, w = cache[i]
            if i < last:
                g = g * (z > 0)
            dw = g.T @ h
            db = g.sum(axis=0)
            param_grads[i] = (dw, db)
            g = g @ w
        return param_grads, g

    def policy_forward(self, obs: np.ndarray, weight_transform=None) -> np.ndarray:
        """Single-observation forward with float64 accumulation.

        This is the reference semantics matched by the sparse inference
        engine: each matvec accumulates in float64 over float32 operands and
        is rounded to float32 (together with the bias add) per layer.
        """
        if obs.shape != (self.spec.input_dim,):
            raise ValueError(
                f"expected observation of shape ({self.spec.input_dim},), got {obs.shape}"
            )
        h = obs.astype(np.float32, copy=False)
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            w = layer.weight if weight_transform is None else weight_transform(i, layer.weight)
            z = (w @ h.astype(np.float64) + layer.bias.astype(np.float64)).astype(np.float32)
            h = np.maximum(z, 0) if i < last else z
        return h


# -- Adam -----------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter Adam accumulator with decoupled weight decay."""

    learning_rate: float
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_param(cls, param: np.ndarray, learning_rate: float, **kwargs) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m=np.zeros_like(param),
            v=np.zeros_like(param),
            **kwargs,
        )


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """One Adam update, in place.

    Decoupled weight decay shrinks the parameter before the Adam delta:
    param <- param * (1 - lr * wd), then the bias-corrected moment update.
    """
    if grad.shape != param.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient in adam_step")
    state.step += 1
    if state.weight_decay:
        param *= 1.0 - state.learning_rate * state.weight_decay
    state.m += (1.0 - state.beta1) * (grad - state.m)
    state.v += (1.0 - state.beta2) * (grad * grad - state.v)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class Adam:
    """Adam over a list of parameter arrays (updated in place)."""

    params: list[np.ndarray]
    states: list[AdamState] = field(default_factory=list)

    @classmethod
    def create(cls, params: list[np.ndarray], learning_rate: float, **kwargs) -> "Adam":
        return cls(
            params=params,
            states=[AdamState.for_param(p, learning_rate, **kwargs) for p in params],
        )

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list length mismatch")
        for p, g, s in zip(self.params, grads, self.states):
            adam_step(p, g, s)
