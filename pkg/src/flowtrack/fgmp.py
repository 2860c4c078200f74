"""Flow-guided motion prediction.

A three-conv network maps the 3x3 flow neighborhood of an object center to
the object's center offset for the next frame. Every conv is followed by
batch normalization and a Softshrink with dead zone +-lambda (0.5), the
second conv carries a residual shortcut, and the final 3x3 valid conv
collapses the spatial extent so the output is exactly (dx, dy) in flow-map
pixels. Training minimizes ``|dx-gx| + |dy-gy|`` by SGD.

Also implements the box-statistics baseline (mean of flow inside the box)
and the coordinate plumbing between image pixels and flow-map pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, tensor
from .flow import FlowMap, crop3x3
from .nn import BatchNormLayer, ConvLayer, ShapeError, SgdState
from .tensor import Tensor

CROP_SHAPE = (2, 3, 3)
HIDDEN_CHANNELS = 16


@dataclass
class MotionDelta:
    """Predicted center offset, in the pixels of whatever grid produced it."""

    dx: float
    dy: float


@dataclass
class MotionPredictionNet:
    conv1: ConvLayer
    bn1: BatchNormLayer
    conv2: ConvLayer
    bn2: BatchNormLayer
    conv3: ConvLayer
    bn3: BatchNormLayer
    lam: float = 0.5

    def params(self) -> list[Tensor]:
        out = []
        for conv, bn in ((self.conv1, self.bn1), (self.conv2, self.bn2),
                         (self.conv3, self.bn3)):
            out += [conv.weights, conv.bias, bn.gamma, bn.beta]
        return out

    def set_mode(self, mode: str) -> None:
        self.bn1.mode = self.bn2.mode = self.bn3.mode = mode


def make_mpn(rng: np.random.Generator | None = None, lam: float = 0.5) -> MotionPredictionNet:
    h = HIDDEN_CHANNELS
    return MotionPredictionNet(
        conv1=nn.make_conv(h, 2, 3, 3, padding=1, rng=rng),
        bn1=nn.make_batchnorm(h),
        conv2=nn.make_conv(h, h, 3, 3, padding=1, rng=rng),
        bn2=nn.make_batchnorm(h),
        conv3=nn.make_conv(2, h, 3, 3, padding=0, rng=rng),
        bn3=nn.make_batchnorm(2),
        lam=lam,
    )


def _check_crops(crops: Tensor) -> Tensor:
    crops = np.asarray(crops)
    if crops.ndim == 3:
        crops = crops[None]
    if crops.ndim != 4 or crops.shape[1:] != CROP_SHAPE:
        raise ShapeError(f"expected crops shaped [N,2,3,3], got {crops.shape}")
    return crops


def _mpn_forward(net: MotionPredictionNet, crops: Tensor, update_running: bool = False):
    """Shared forward over [N,2,3,3]; returns (out [N,2], cache for backward)."""
    c1 = nn.conv2d_forward(crops, net.conv1)
    b1 = nn.batchnorm_forward(c1, net.bn1, update_running)
    h1 = nn.softshrink(b1, net.lam)
    c2 = nn.conv2d_forward(h1, net.conv2)
    b2 = nn.batchnorm_forward(c2, net.bn2, update_running)
    s2 = h1 + b2  # residual shortcut around the second conv
    h2 = nn.softshrink(s2, net.lam)
    c3 = nn.conv2d_forward(h2, net.conv3)
    b3 = nn.batchnorm_forward(c3, net.bn3, update_running)
    out = nn.softshrink(b3, net.lam)
    cache = (crops, c1, b1, h1, c2, s2, h2, c3, b3)
    return out.reshape(out.shape[0], 2), cache


def _mpn_backward(net: MotionPredictionNet, cache, grad_out: Tensor):
    """Gradients for _mpn_forward: (grad_crops, grads in net.params() order)."""
    crops, c1, b1, h1, c2, s2, h2, c3, b3 = cache
    g = grad_out.reshape(-1, 2, 1, 1) * nn.softshrink_grad_mask(b3, net.lam)
    g_c3, g_gamma3, g_beta3 = nn.batchnorm_backward(c3, net.bn3, g)
    g_h2, g_w3, g_b3 = nn.conv2d_backward(h2, net.conv3, g_c3)
    g_s2 = g_h2 * nn.softshrink_grad_mask(s2, net.lam)
    g_c2, g_gamma2, g_beta2 = nn.batchnorm_backward(c2, net.bn2, g_s2)
    g_h1_conv, g_w2, g_b2 = nn.conv2d_backward(h1, net.conv2, g_c2)
    g_h1 = g_s2 + g_h1_conv
    g_b1 = g_h1 * nn.softshrink_grad_mask(b1, net.lam)
    g_c1, g_gamma1, g_beta1 = nn.batchnorm_backward(c1, net.bn1, g_b1)
    g_crops, g_w1, g_b1c = nn.conv2d_backward(crops, net.conv1, g_c1)
    grads = [g_w1, g_b1c, g_gamma1, g_beta1,
             g_w2, g_b2, g_gamma2, g_beta2,
             g_w3, g_b3, g_gamma3, g_beta3]
    return g_crops, grads


def mpn_forward(net: MotionPredictionNet, crop: Tensor) -> MotionDelta:
    """Predict the center offset for one [2,3,3] flow crop (eval-mode BN)."""
    crops = _check_crops(crop)
    if crops.shape[0] != 1:
        raise ShapeError(f"mpn_forward takes a single crop, got {crops.shape[0]}")
    out = mpn_forward_batch(net, crops)
    return MotionDelta(float(out[0, 0]), float(out[0, 1]))


def mpn_forward_batch(net: MotionPredictionNet, crops: Tensor) -> Tensor:
    """Eval-mode forward over [N,2,3,3]; returns [N,2] offsets."""
    crops = _check_crops(crops)
    net.set_mode("eval")
    out, _ = _mpn_forward(net, crops)
    return out


def mpn_loss_forward_backward(net: MotionPredictionNet, crops: Tensor,
                              targets: Tensor, train: bool = True,
                              update_running: bool = False):
    """Mean L1 loss over a batch plus its gradients.

    Loss per sample is ``|dx-gx| + |dy-gy|``; returns
    (loss, predictions [N,2], grad_crops, param grads in net.params() order).
    """
    crops = _check_crops(crops)
    targets = np.asarray(targets).reshape(crops.shape[0], 2)
    net.set_mode("train" if train else "eval")
    out, cache = _mpn_forward(net, crops, update_running=update_running)
    diff = out - targets
    loss = float(np.abs(diff).sum(axis=1).mean())
    grad_out = np.sign(diff) / crops.shape[0]
    grad_crops, grads = _mpn_backward(net, cache, grad_out)
    return loss, out, grad_crops, grads


def train_mpn(net: MotionPredictionNet, dataset, epochs: int, lr: float,
              momentum: float, batch_size: int, seed: int = 0,
              lr_decay_at: float = 0.75, lr_decay: float = 0.1,
              refresh_stats: bool = True):
    """SGD training on (crop, gx, gy) samples; returns (net, per-epoch loss curve).

    Deterministic for a fixed seed. The learning rate drops by ``lr_decay``
    for the final quarter of the epochs (train-mode batch statistics at the
    two-channel output put a noise floor under plain constant-rate SGD), and
    the running statistics are re-estimated from the whole dataset at the
    end. Minibatches of one sample run against the running statistics, since
    a 1x1 output layer has no batch variance to normalize with.
    """
    if not dataset:
        raise ValueError("train_mpn needs a non-empty dataset")
    crops = np.stack([np.asarray(s[0], dtype=np.float32) for s in dataset])
    targets = np.array([[s[1], s[2]] for s in dataset], dtype=np.float32)
    if crops.shape[1:] != CROP_SHAPE:
        raise ShapeError(f"dataset crops must be [2,3,3], got {crops.shape[1:]}")
    rng = np.random.default_rng(seed)
    state = SgdState()
    curve = []
    n = len(dataset)
    decay_epoch = int(epochs * lr_decay_at)
    for epoch in range(epochs):
        cur_lr = lr if epoch < decay_epoch else lr * lr_decay
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            weight = len(idx)
            # a single sample has no batch variance at the 1x1 output layer;
            # fall back to running statistics for that batch
            train = len(idx) > 1
            loss, _, _, grads = mpn_loss_forward_backward(
                net, crops[idx], targets[idx], train=train, update_running=train)
            nn.sgd_step(net.params(), grads, cur_lr, momentum, state)
            epoch_loss += loss * weight
        curve.append(epoch_loss / n)
    if refresh_stats and n >= 2:
        refresh_batchnorm_stats(net, crops)
    net.set_mode("eval")
    return net, curve


def refresh_batchnorm_stats(net: MotionPredictionNet, crops: Tensor) -> None:
    """Replace running statistics with exact full-dataset statistics."""
    crops = _check_crops(crops)
    if crops.shape[0] < 2:
        raise ShapeError("statistics refresh needs at least 2 crops")

    def set_stats(bn: BatchNormLayer, acts: Tensor) -> None:
        count = acts[:, 0].size
        bn.running_mean[:] = acts.mean(axis=(0, 2, 3))
        bn.running_var[:] = np.maximum(
            acts.var(axis=(0, 2, 3)) * (count / (count - 1)), 1e-8)

    c1 = nn.conv2d_forward(crops, net.conv1)
    set_stats(net.bn1, c1)
    net.bn1.mode = "eval"
    h1 = nn.softshrink(nn.batchnorm_forward(c1, net.bn1, update_running=False), net.lam)
    c2 = nn.conv2d_forward(h1, net.conv2)
    set_stats(net.bn2, c2)
    net.bn2.mode = "eval"
    h2 = nn.softshrink(
        h1 + nn.batchnorm_forward(c2, net.bn2, update_running=False), net.lam)
    c3 = nn.conv2d_forward(h2, net.conv3)
    set_stats(net.bn3, c3)
    net.set_mode("eval")


def validate_mpn(net: MotionPredictionNet, dataset) -> float:
    """Mean L1 error (flow pixels) of eval-mode predictions over a dataset."""
    crops = np.stack([np.asarray(s[0], dtype=np.float32) for s in dataset])
    targets = np.array([[s[1], s[2]] for s in dataset], dtype=np.float32)
    out = mpn_forward_batch(net, crops)
    return float(np.abs(out - targets).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# Position plumbing between image and flow coordinates
# ---------------------------------------------------------------------------

def predict_position(track_center_img, flow: FlowMap, net: MotionPredictionNet,
                     img_size) -> tuple[float, float]:
    """Next-frame center estimate: previous center plus the predicted offset.

    The center is mapped into flow coordinates, the 3x3 neighborhood is fed
    to the network, and the offset is scaled back to image pixels. Box
    width/height are not touched by motion prediction.
    """
    img_w, img_h = img_size
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"image size must be positive, got {img_size}")
    cx, cy = track_center_img
    fx = cx * flow.width / img_w
    fy = cy * flow.height / img_h
    delta = mpn_forward(net, crop3x3(flow, fx, fy))
    return (cx + delta.dx * img_w / flow.width,
            cy + delta.dy * img_h / flow.height)


def mean_of_flow(box_img, flow: FlowMap, img_size) -> MotionDelta:
    """Baseline offset: average flow over the box, returned in image pixels.

    Averages u and v across flow pixels whose centers fall inside the box
    mapped to flow coordinates; an empty footprint falls back to the single
    pixel nearest the box center.
    """
    x, y, w, h = box_img
    if w <= 0 or h <= 0:
        raise ValueError(f"box must have positive extent, got {box_img}")
    img_w, img_h = img_size
    sx = flow.width / img_w
    sy = flow.height / img_h
    x0, x1 = x * sx, (x + w) * sx
    y0, y1 = y * sy, (y + h) * sy
    c_lo = max(int(np.ceil(x0 - 0.5)), 0)
    c_hi = min(int(np.ceil(x1 - 0.5)), flow.width)
    r_lo = max(int(np.ceil(y0 - 0.5)), 0)
    r_hi = min(int(np.ceil(y1 - 0.5)), flow.height)
    if c_lo >= c_hi or r_lo >= r_hi:
        c = int(np.clip(np.floor((x0 + x1) / 2), 0, flow.width - 1))
        r = int(np.clip(np.floor((y0 + y1) / 2), 0, flow.height - 1))
        mean_u = float(flow.u[r, c])
        mean_v = float(flow.v[r, c])
    else:
        mean_u = float(flow.u[r_lo:r_hi, c_lo:c_hi].mean())
        mean_v = float(flow.v[r_lo:r_hi, c_lo:c_hi].mean())
    return MotionDelta(mean_u / sx, mean_v / sy)


# ---------------------------------------------------------------------------
# Weight serialization
# ---------------------------------------------------------------------------

def _named_tensors(net: MotionPredictionNet) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for name, conv, bn in (("conv1", net.conv1, net.bn1),
                           ("conv2", net.conv2, net.bn2),
                           ("conv3", net.conv3, net.bn3)):
        out[f"{name}.weights"] = conv.weights
        out[f"{name}.bias"] = conv.bias
        bn_name = name.replace("conv", "bn")
        out[f"{bn_name}.gamma"] = bn.gamma
        out[f"{bn_name}.beta"] = bn.beta
        out[f"{bn_name}.running_mean"] = bn.running_mean
        out[f"{bn_name}.running_var"] = bn.running_var
    out["lambda"] = np.array([net.lam], dtype=np.float32)
    return out


def save_mpn(path, net: MotionPredictionNet) -> None:
    tensor.save_named_ftns(path, _named_tensors(net))


def load_mpn(path) -> MotionPredictionNet:
    data = tensor.load_named_ftns(path)
    net = make_mpn(lam=float(data["lambda"][0]))
    template = _named_tensors(net)
    for name, placeholder in template.items():
        if name == "lambda":
            continue
        if name not in data:
            raise tensor.TensorError(f"weights file missing tensor {name!r}")
        if data[name].shape != placeholder.shape:
            raise tensor.TensorError(
                f"tensor {name!r} has shape {data[name].shape}, "
                f"expected {placeholder.shape}"
            )
        placeholder[...] = data[name]
    net.set_mode("eval")
    return net
