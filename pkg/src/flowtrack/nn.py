"""Hand-chained neural-net kernels: conv2d, batchnorm, activations, bilinear
sampling, SGD, and a finite-difference gradient checker.

There is no autograd graph. Every forward op has a matching backward that the
caller chains explicitly. Ops follow the dtype of their inputs, so the
gradient checker can run the same code in float64 while the production path
stays float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class ShapeError(ValueError):
    """Raised when an op receives tensors with incompatible shapes."""


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

@dataclass
class ConvLayer:
    """2D cross-correlation layer.

    weights: [out_ch, in_ch, kh, kw], bias: [out_ch]. Output spatial size is
    floor((in + 2*padding - k) / stride) + 1 on each axis.
    """

    weights: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    def params(self) -> list[Tensor]:
        return [self.weights, self.bias]


def make_conv(out_ch: int, in_ch: int, kh: int, kw: int, stride: int = 1,
              padding: int = 0, rng: np.random.Generator | None = None) -> ConvLayer:
    """Conv layer with weights uniform in +-1/sqrt(fan_in), bias zero."""
    fan_in = in_ch * kh * kw
    bound = 1.0 / np.sqrt(fan_in)
    if rng is None:
        w = np.zeros((out_ch, in_ch, kh, kw), dtype=np.float32)
    else:
        w = rng.uniform(-bound, bound, size=(out_ch, in_ch, kh, kw)).astype(np.float32)
    return ConvLayer(w, np.zeros(out_ch, dtype=np.float32), stride, padding)


def _conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(x: Tensor, kh: int, kw: int, stride: int, padding: int) -> Tensor:
    """[N,C,H,W] -> [N, C*kh*kw, out_h*out_w] patch matrix."""
    n, c, _, _ = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # [N,C,oh,ow,kh,kw]
    oh, ow = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def _col2im(cols: Tensor, x_shape: tuple, kh: int, kw: int,
            stride: int, padding: int) -> Tensor:
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    return out[:, :, padding:hp - padding, padding:wp - padding]


def conv2d_forward(x: Tensor, layer: ConvLayer) -> Tensor:
    """Cross-correlation with bias over a [N,C,H,W] batch."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [N,C,H,W] input, got shape {x.shape}")
    out_ch, in_ch, kh, kw = layer.weights.shape
    if x.shape[1] != in_ch:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape} vs weights {layer.weights.shape}"
        )
    oh = _conv_out_size(x.shape[2], kh, layer.stride, layer.padding)
    ow = _conv_out_size(x.shape[3], kw, layer.stride, layer.padding)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv2d input {x.shape} too small for kernel {(kh, kw)} "
            f"with stride {layer.stride}, padding {layer.padding}"
        )
    cols = _im2col(x, kh, kw, layer.stride, layer.padding)
    w_flat = layer.weights.reshape(out_ch, -1)
    y = np.einsum("ok,nkl->nol", w_flat, cols, optimize=True)
    y += layer.bias.reshape(1, out_ch, 1)
    return y.reshape(x.shape[0], out_ch, oh, ow)


def conv2d_backward(x: Tensor, layer: ConvLayer, grad_out: Tensor):
    """Gradients of conv2d_forward: (grad_input, grad_weights, grad_bias)."""
    out_ch, in_ch, kh, kw = layer.weights.shape
    if x.shape[1] != in_ch:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape} vs weights {layer.weights.shape}"
        )
    oh = _conv_out_size(x.shape[2], kh, layer.stride, layer.padding)
    ow = _conv_out_size(x.shape[3], kw, layer.stride, layer.padding)
    if grad_out.shape != (x.shape[0], out_ch, oh, ow):
        raise ShapeError(
            f"conv2d grad_out shape {grad_out.shape} does not match forward "
            f"output {(x.shape[0], out_ch, oh, ow)}"
        )
    cols = _im2col(x, kh, kw, layer.stride, layer.padding)
    g_flat = grad_out.reshape(x.shape[0], out_ch, oh * ow)
    grad_bias = g_flat.sum(axis=(0, 2))
    grad_w = np.einsum("nol,nkl->ok", g_flat, cols, optimize=True).reshape(layer.weights.shape)
    w_flat = layer.weights.reshape(out_ch, -1)
    grad_cols = np.einsum("ok,nol->nkl", w_flat, g_flat, optimize=True)
    grad_x = _col2im(grad_cols, x.shape, kh, kw, layer.stride, layer.padding)
    return grad_x, grad_w, grad_bias


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormLayer:
    """Per-channel batch normalization over [N,C,H,W].

    Train mode normalizes with batch statistics (biased variance) and folds
    them into the running estimates by ``momentum``; eval mode uses the
    running statistics only.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    epsilon: float = 1e-5
    momentum: float = 0.1
    mode: str = "eval"

    def params(self) -> list[Tensor]:
        return [self.gamma, self.beta]


def make_batchnorm(channels: int, mode: str = "eval") -> BatchNormLayer:
    return BatchNormLayer(
        gamma=np.ones(channels, dtype=np.float32),
        beta=np.zeros(channels, dtype=np.float32),
        running_mean=np.zeros(channels, dtype=np.float32),
        running_var=np.ones(channels, dtype=np.float32),
        mode=mode,
    )


def _bn_check(x: Tensor, layer: BatchNormLayer) -> None:
    if x.ndim != 4:
        raise ShapeError(f"batchnorm expects [N,C,H,W] input, got shape {x.shape}")
    if x.shape[1] != layer.gamma.shape[0]:
        raise ShapeError(
            f"batchnorm channel mismatch: input {x.shape} vs {layer.gamma.shape[0]} channels"
        )


def batchnorm_forward(x: Tensor, layer: BatchNormLayer, update_running: bool = True) -> Tensor:
    _bn_check(x, layer)
    ch = x.shape[1]
    if layer.mode == "train":
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise ShapeError(
                "batchnorm train mode needs at least 2 elements per channel "
                f"(got {n}); variance is undefined"
            )
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update_running:
            m = layer.momentum
            unbiased = var * (n / (n - 1))
            layer.running_mean[:] = (1 - m) * layer.running_mean + m * mean
            layer.running_var[:] = (1 - m) * layer.running_var + m * unbiased
    elif layer.mode == "eval":
        mean = layer.running_mean
        var = layer.running_var
    else:
        raise ValueError(f"unknown batchnorm mode {layer.mode!r}")
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    shape = (1, ch, 1, 1)
    x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    return layer.gamma.reshape(shape) * x_hat + layer.beta.reshape(shape)


def batchnorm_backward(x: Tensor, layer: BatchNormLayer, grad_out: Tensor):
    """Gradients of batchnorm_forward: (grad_input, grad_gamma, grad_beta).

    Train mode differentiates through the batch statistics; eval mode is a
    per-channel affine map.
    """
    _bn_check(x, layer)
    if grad_out.shape != x.shape:
        raise ShapeError(f"batchnorm grad_out shape {grad_out.shape} != input {x.shape}")
    ch = x.shape[1]
    shape = (1, ch, 1, 1)
    if layer.mode == "eval":
        inv_std = 1.0 / np.sqrt(layer.running_var + layer.epsilon)
        x_hat = (x - layer.running_mean.reshape(shape)) * inv_std.reshape(shape)
        grad_x = grad_out * (layer.gamma * inv_std).reshape(shape)
        grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
        grad_beta = grad_out.sum(axis=(0, 2, 3))
        return grad_x, grad_gamma, grad_beta
    n = x.shape[0] * x.shape[2] * x.shape[3]
    if n < 2:
        raise ShapeError("batchnorm train backward needs at least 2 elements per channel")
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    centered = x - mean.reshape(shape)
    x_hat = centered * inv_std.reshape(shape)
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    g_hat = grad_out * layer.gamma.reshape(shape)
    sum_g = g_hat.sum(axis=(0, 2, 3)).reshape(shape)
    sum_gx = (g_hat * x_hat).sum(axis=(0, 2, 3)).reshape(shape)
    grad_x = (inv_std.reshape(shape) / n) * (n * g_hat - sum_g - x_hat * sum_gx)
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def sigmoid(x: Tensor) -> Tensor:
    return 1.0 / (1.0 + np.exp(-x))


def softshrink(x: Tensor, lam: float) -> Tensor:
    """Elementwise shrink toward zero with dead zone [-lam, lam]."""
    if lam < 0:
        raise ValueError(f"softshrink lambda must be >= 0, got {lam}")
    return np.where(x > lam, x - lam, np.where(x < -lam, x + lam, np.zeros_like(x)))


def softshrink_grad_mask(x: Tensor, lam: float) -> Tensor:
    # boundary ties take the dead-zone branch
    return ((x > lam) | (x < -lam)).astype(x.dtype)


def activation_forward_backward(kind: str, x: Tensor, grad_out: Tensor,
                                lam: float = 0.5):
    """Forward value and input gradient for relu / sigmoid / softshrink.

    Non-differentiable points (relu at 0, softshrink at +-lam) use the
    zero branch of the derivative.
    """
    if kind == "relu":
        y = relu(x)
        grad_x = grad_out * (x > 0)
    elif kind == "sigmoid":
        y = sigmoid(x)
        grad_x = grad_out * y * (1.0 - y)
    elif kind == "softshrink":
        y = softshrink(x, lam)
        grad_x = grad_out * softshrink_grad_mask(x, lam)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return y, grad_x


# ---------------------------------------------------------------------------
# Bilinear sampling
# ---------------------------------------------------------------------------

def bilinear_sample(feature: Tensor, i: float, j: float) -> Tensor:
    """Sample a [C,H,W] map at fractional (row i, col j); returns [C].

    The four taps are weighted by the fractional offsets; taps outside
    [0,H)x[0,W) contribute zero.
    """
    if feature.ndim != 3:
        raise ShapeError(f"bilinear_sample expects [C,H,W], got shape {feature.shape}")
    out = bilinear_sample_map(feature, np.asarray([[i]], dtype=np.float64),
                              np.asarray([[j]], dtype=np.float64))
    return out[:, 0, 0]


def _bilinear_taps(shape: tuple, rows: Tensor, cols: Tensor):
    """Shared tap bookkeeping: corner indices, weights, in-bounds masks."""
    h, w = shape
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    sr = rows - r0
    sc = cols - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    taps = []
    for dr, dc, wgt in (
        (0, 0, (1 - sr) * (1 - sc)),
        (0, 1, (1 - sr) * sc),
        (1, 0, sr * (1 - sc)),
        (1, 1, sr * sc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        taps.append((np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1), wgt, valid))
    return taps


def bilinear_sample_map(feature: Tensor, rows: Tensor, cols: Tensor) -> Tensor:
    """Vectorized bilinear sampling of a [C,H,W] map at per-cell coordinates.

    rows/cols share a shape S; the result is [C, *S]. Out-of-bounds taps are
    zero-padded.
    """
    c = feature.shape[0]
    grid_shape = rows.shape
    out = np.zeros((c,) + grid_shape, dtype=np.result_type(feature.dtype, rows.dtype))
    for rr, cc, wgt, valid in _bilinear_taps(feature.shape[1:], rows, cols):
        vals = feature[:, rr, cc] * (wgt * valid)
        out += vals
    return out


def bilinear_sample_map_backward(feature_shape: tuple, rows: Tensor, cols: Tensor,
                                 grad_out: Tensor) -> Tensor:
    """Gradient of bilinear_sample_map w.r.t. the feature map."""
    c, h, w = feature_shape
    grad = np.zeros((c, h * w), dtype=grad_out.dtype)
    for rr, cc, wgt, valid in _bilinear_taps((h, w), rows, cols):
        flat = (rr * w + cc).ravel()
        contrib = (grad_out * (wgt * valid)).reshape(c, -1)
        np.add.at(grad.T, flat, contrib.T)
    return grad.reshape(c, h, w)


# ---------------------------------------------------------------------------
# SGD with momentum
# ---------------------------------------------------------------------------

@dataclass
class SgdState:
    velocity: list[Tensor] = field(default_factory=list)


def sgd_step(params: list[Tensor], grads: list[Tensor], lr: float,
             momentum: float, state: SgdState) -> list[Tensor]:
    """In-place update: v <- momentum*v + g; p <- p - lr*v."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} vs grad shape {g.shape}")
        v *= momentum
        v += g
        p -= (lr * v).astype(p.dtype, copy=False)
    return params


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    passed: bool
    worst_param: int = -1
    worst_coord: int = -1


def finite_difference_check(fn, params: list[Tensor], h: float = 1e-3,
                            tolerance: float = 1e-4,
                            max_coords_per_param: int | None = None,
                            rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare fn's analytic gradients against central differences.

    ``fn(params) -> (value, grads)`` must be a scalar-valued deterministic
    composition; evaluation happens in float64. A kinked activation whose
    breakpoint falls inside the +-h window makes the central difference
    meaningless, so coordinates that miss the tolerance are retried with a
    smaller step before being reported as failures.
    """
    params64 = [np.asarray(p, dtype=np.float64).copy() for p in params]
    _, grads = fn(params64)
    ladder = [h, h / 10, h / 100, h / 1000]

    def value_at(pi: int, idx: int, delta: float) -> float:
        flat = params64[pi].ravel()
        orig = flat[idx]
        flat[idx] = orig + delta
        v, _ = fn(params64)
        flat[idx] = orig
        return float(v)

    max_rel = 0.0
    worst = (-1, -1)
    checked = 0
    for pi, grad in enumerate(grads):
        grad_flat = np.asarray(grad, dtype=np.float64).ravel()
        n = grad_flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        for idx in coords:
            analytic = grad_flat[idx]
            rel = np.inf
            for step in ladder:
                numeric = (value_at(pi, idx, step) - value_at(pi, idx, -step)) / (2 * step)
                rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
                if rel <= tolerance:
                    break
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (pi, int(idx))
    return GradCheckReport(max_rel_error=max_rel, checked=checked,
                           passed=max_rel <= tolerance,
                           worst_param=worst[0], worst_coord=worst[1])
