"""Minimal dense-network core with hand-derived reverse-mode gradients.

Every learned model in the package (embeddings, dynamics models, classifier,
actor, value heads) is a `DenseNet`: a stack of fully-connected layers with a
per-net hidden activation and an output transform, parameterized by a single
flat float64 vector. Gradients are computed by explicit backprop rather than a
graph-based autodiff; at desk scale this keeps the whole system dependency-free
and makes finite-difference verification cheap.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

ACTIVATIONS = ("tanh", "relu")
OUTPUT_TRANSFORMS = ("identity", "sigmoid", "bounded_gaussian_head")

# Logits fed to the sigmoid transform are clamped so outputs stay strictly
# inside (0, 1) and cross-entropy terms stay finite.
SIGMOID_LOGIT_CLAMP = 20.0
# Log-std half of a bounded_gaussian_head is clamped to keep sampling safe.
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


class DimensionError(ValueError):
    """Raised when an input or upstream vector has the wrong width."""


class NonFiniteError(FloatingPointError):
    """Raised when a non-finite value enters a numeric update."""


@dataclass
class DenseNet:
    """A dense multilayer function approximator with flat parameter storage.

    ``layer_widths`` includes the input and output widths, so a 2-4-1 net has
    ``layer_widths == (2, 4, 1)``. ``activation`` applies to every hidden
    layer; the final layer is linear followed by ``output_transform``.
    """

    layer_widths: tuple
    activation: str
    output_transform: str
    params: np.ndarray

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(int(w) <= 0 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.output_transform not in OUTPUT_TRANSFORMS:
            raise ValueError(f"unknown output transform {self.output_transform!r}")
        if self.output_transform == "bounded_gaussian_head" and self.layer_widths[-1] % 2:
            raise ValueError("bounded_gaussian_head needs an even output width")
        self.layer_widths = tuple(int(w) for w in self.layer_widths)
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.layer_widths),):
            raise ValueError(
                f"params has shape {self.params.shape}, "
                f"expected ({param_count(self.layer_widths)},)"
            )

    @property
    def in_width(self):
        return self.layer_widths[0]

    @property
    def out_width(self):
        return self.layer_widths[-1]

    def with_params(self, params: np.ndarray) -> "DenseNet":
        return replace(self, params=np.asarray(params, dtype=np.float64))


def param_count(layer_widths) -> int:
    """Total parameter count: sum of (fan_in + 1) * fan_out over layers."""
    return sum(
        (fan_in + 1) * fan_out
        for fan_in, fan_out in zip(layer_widths[:-1], layer_widths[1:])
    )


def layer_slices(layer_widths):
    """Yield (weight_slice, bias_slice, fan_in, fan_out) into the flat vector."""
    offset = 0
    for fan_in, fan_out in zip(layer_widths[:-1], layer_widths[1:]):
        w = slice(offset, offset + fan_in * fan_out)
        offset += fan_in * fan_out
        b = slice(offset, offset + fan_out)
        offset += fan_out
        yield w, b, fan_in, fan_out


def init_dense_net(layer_widths, activation, output_transform, rng) -> DenseNet:
    """Create a net with uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    params = np.zeros(param_count(layer_widths), dtype=np.float64)
    for w, _b, fan_in, fan_out in layer_slices(layer_widths):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[w] = rng.uniform(-limit, limit, size=fan_in * fan_out)
    return DenseNet(tuple(layer_widths), activation, output_transform, params)


def _apply_activation(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_grad(z, a, kind):
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(np.float64)


def _apply_transform(z, transform):
    if transform == "identity":
        return z
    if transform == "sigmoid":
        zc = np.clip(z, -SIGMOID_LOGIT_CLAMP, SIGMOID_LOGIT_CLAMP)
        return 1.0 / (1.0 + np.exp(-zc))
    half = z.shape[-1] // 2
    out = z.copy()
    out[..., half:] = np.clip(z[..., half:], LOG_STD_MIN, LOG_STD_MAX)
    return out


def _transform_grad(z, out, upstream, transform):
    """Chain an upstream (w.r.t. transformed output) back to pre-transform z."""
    if transform == "identity":
        return upstream
    if transform == "sigmoid":
        mask = (np.abs(z) < SIGMOID_LOGIT_CLAMP).astype(np.float64)
        return upstream * out * (1.0 - out) * mask
    half = z.shape[-1] // 2
    delta = upstream.copy()
    logstd = z[..., half:]
    inside = (logstd > LOG_STD_MIN) & (logstd < LOG_STD_MAX)
    delta[..., half:] = upstream[..., half:] * inside
    return delta


def _forward_cached(net: DenseNet, x: np.ndarray):
    """Run the net on a batch, keeping pre-activations for backprop."""
    acts = [x]
    pre = []
    h = x
    n_layers = len(net.layer_widths) - 1
    for i, (ws, bs, fan_in, fan_out) in enumerate(layer_slices(net.layer_widths)):
        weight = net.params[ws].reshape(fan_in, fan_out)
        bias = net.params[bs]
        z = h @ weight + bias
        pre.append(z)
        if i < n_layers - 1:
            h = _apply_activation(z, net.activation)
        else:
            h = _apply_transform(z, net.output_transform)
        acts.append(h)
    return h, acts, pre


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate the net on one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != net.in_width:
        raise DimensionError(
            f"input width {x.shape[-1]} != expected {net.in_width}"
        )
    out, _, _ = _forward_cached(net, x)
    return out[0] if single else out


def backward(net: DenseNet, x, upstream):
    """Gradients of <upstream, forward(net, x)>.

    Returns ``(param_grad, input_grad)``. For a batch of rows the param
    gradient sums over the batch and the input gradient keeps one row per
    input.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        upstream = upstream[None, :]
    if x.shape[-1] != net.in_width:
        raise DimensionError(f"input width {x.shape[-1]} != expected {net.in_width}")
    if upstream.shape != (x.shape[0], net.out_width):
        raise DimensionError(
            f"upstream shape {upstream.shape} != {(x.shape[0], net.out_width)}"
        )
    _, acts, pre = _forward_cached(net, x)
    param_grad = np.zeros_like(net.params)
    delta = _transform_grad(pre[-1], acts[-1], upstream, net.output_transform)
    slices = list(layer_slices(net.layer_widths))
    for i in range(len(slices) - 1, -1, -1):
        ws, bs, fan_in, fan_out = slices[i]
        h_in = acts[i]
        param_grad[ws] = (h_in.T @ delta).ravel()
        param_grad[bs] = delta.sum(axis=0)
        weight = net.params[ws].reshape(fan_in, fan_out)
        delta = delta @ weight.T
        if i > 0:
            delta = delta * _activation_grad(pre[i - 1], acts[i], net.activation)
    input_grad = delta
    return param_grad, input_grad[0] if single else input_grad


@dataclass
class OptimizerState:
    """Adaptive-moment optimizer state for one flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    step_size: float
    moment_decays: tuple = (0.9, 0.999)
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, step_size: float, moment_decays=(0.9, 0.999),
              epsilon: float = 1e-8) -> "OptimizerState":
        return cls(
            first_moment=np.zeros(n_params, dtype=np.float64),
            second_moment=np.zeros(n_params, dtype=np.float64),
            step_count=0,
            step_size=float(step_size),
            moment_decays=tuple(moment_decays),
            epsilon=float(epsilon),
        )


def adam_step(params, grads, opt: OptimizerState):
    """One bias-corrected adaptive-moment update; returns (new_params, new_opt)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != opt.first_moment.shape:
        raise DimensionError("params, grads and optimizer moments must match")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient passed to adam_step")
    b1, b2 = opt.moment_decays
    t = opt.step_count + 1
    m = b1 * opt.first_moment + (1.0 - b1) * grads
    v = b2 * opt.second_moment + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new_params = params - opt.step_size * m_hat / (np.sqrt(v_hat) + opt.epsilon)
    new_opt = OptimizerState(m, v, t, opt.step_size, opt.moment_decays, opt.epsilon)
    return new_params, new_opt


@dataclass
class GradCheckReport:
    max_relative_error: float
    per_parameter_errors: np.ndarray
    tolerance: float
    passed: bool


def relative_errors(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """Per-component relative error with a guarded 0/0 convention of 0."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = np.abs(analytic - numeric) / scale
    both_zero = (analytic == 0.0) & (numeric == 0.0)
    err[both_zero] = 0.0
    return err


def finite_difference_grad(fn, params, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + step
        up = fn(bumped)
        bumped[i] = params[i] - step
        down = fn(bumped)
        grad[i] = (up - down) / (2.0 * step)
    return grad


def grad_check(net: DenseNet, loss_fn, x, tolerance: float,
               step: float = 1e-5) -> GradCheckReport:
    """Compare backprop against central finite differences for one loss.

    ``loss_fn`` maps the net's output vector to ``(scalar_loss,
    dloss_doutput)``. The analytic gradient is ``backward`` fed with the
    returned upstream; the numeric gradient perturbs each parameter in turn.
    Never raises on mismatch; the report carries the verdict.
    """
    x = np.asarray(x, dtype=np.float64)
    out = forward(net, x)
    _, upstream = loss_fn(out)
    analytic, _ = backward(net, x, upstream)

    def loss_of(params):
        value, _ = loss_fn(forward(net.with_params(params), x))
        return value

    numeric = finite_difference_grad(loss_of, net.params, step=step)
    errs = relative_errors(analytic, numeric)
    worst = float(errs.max()) if errs.size else 0.0
    return GradCheckReport(
        max_relative_error=worst,
        per_parameter_errors=errs,
        tolerance=float(tolerance),
        passed=worst <= tolerance,
    )


# Parameter snapshots: a small binary header (layer widths, activation and
# transform codes) followed by a length-prefixed little-endian float64 array.

_SNAPSHOT_MAGIC = b"IRDNET1\n"


def save_net(net: DenseNet, path):
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(net.layer_widths)))
        fh.write(struct.pack(f"<{len(net.layer_widths)}I", *net.layer_widths))
        fh.write(struct.pack("<BB", ACTIVATIONS.index(net.activation),
                             OUTPUT_TRANSFORMS.index(net.output_transform)))
        fh.write(struct.pack("<Q", net.params.size))
        fh.write(np.ascontiguousarray(net.params, dtype="<f8").tobytes())


def load_net(path) -> DenseNet:
    with open(path, "rb") as fh:
        magic = fh.read(len(_SNAPSHOT_MAGIC))
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a parameter snapshot")
        (n_widths,) = struct.unpack("<I", fh.read(4))
        widths = struct.unpack(f"<{n_widths}I", fh.read(4 * n_widths))
        act_code, tf_code = struct.unpack("<BB", fh.read(2))
        (n_params,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(8 * n_params)
        if len(raw) != 8 * n_params:
            raise ValueError(f"{path}: truncated snapshot")
        params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return DenseNet(widths, ACTIVATIONS[act_code], OUTPUT_TRANSFORMS[tf_code], params)
