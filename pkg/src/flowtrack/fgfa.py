"""Flow-guided feature augmentation.

The previous frame's feature map is warped along the optical flow so that
moved content lines up with the current frame, then the warped and current
maps are fused through two conv branches: a 1x1 attention branch scoring
every spatial position, and a 3x3 fusion branch producing candidate
features. The output is ``F_fuse * F_att + F_cur``, so attention near zero
degrades gracefully to the unaugmented current feature.

On a feature pyramid the block runs per stage with the full-resolution flow
resampled (values rescaled) to each stage's grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .flow import FlowMap, resample_rescale
from .nn import BatchNormLayer, ConvLayer, ShapeError
from .tensor import Tensor


@dataclass
class FgfaBlock:
    """One augmentation stage: attention (1x1, 2c->1) and fusion (3x3, 2c->c)."""

    attention_conv: ConvLayer
    fusion_conv: ConvLayer
    fusion_bn: BatchNormLayer

    @property
    def channels(self) -> int:
        return self.fusion_conv.out_channels

    def params(self) -> list[Tensor]:
        return (self.attention_conv.params() + self.fusion_conv.params()
                + self.fusion_bn.params())


def make_fgfa_block(channels: int, rng: np.random.Generator | None = None) -> FgfaBlock:
    """Block with fan-in uniform weights, zero biases, identity-stat BN (eval)."""
    return FgfaBlock(
        attention_conv=nn.make_conv(1, 2 * channels, 1, 1, rng=rng),
        fusion_conv=nn.make_conv(channels, 2 * channels, 3, 3, padding=1, rng=rng),
        fusion_bn=nn.make_batchnorm(channels, mode="eval"),
    )


def _warp_grid(flow_stage: FlowMap):
    rows = np.arange(flow_stage.height, dtype=np.float64)[:, None]
    cols = np.arange(flow_stage.width, dtype=np.float64)[None, :]
    # Backward warp: the content now at (r, c) moved by (u, v) since the
    # previous frame, so it is fetched from (r - v, c - u).
    return rows - flow_stage.v, cols - flow_stage.u


def warp_previous(f_prev: Tensor, flow_stage: FlowMap) -> Tensor:
    """Warp a [C,H,W] feature map along the flow; out-of-bounds reads are zero."""
    if f_prev.ndim != 3:
        raise ShapeError(f"warp_previous expects [C,H,W], got shape {f_prev.shape}")
    if f_prev.shape[1] != flow_stage.height or f_prev.shape[2] != flow_stage.width:
        raise ShapeError(
            f"feature spatial size {f_prev.shape[1:]} does not match flow "
            f"{flow_stage.height}x{flow_stage.width}"
        )
    rows, cols = _warp_grid(flow_stage)
    return nn.bilinear_sample_map(f_prev, rows, cols).astype(f_prev.dtype, copy=False)


def naive_feature_warp(f_prev: Tensor, f_cur: Tensor, flow_stage: FlowMap) -> Tensor:
    """Ablation baseline: the warped previous feature alone, current discarded."""
    if f_prev.shape != f_cur.shape:
        raise ShapeError(f"feature shapes differ: {f_prev.shape} vs {f_cur.shape}")
    return warp_previous(f_prev, flow_stage)


def _check_augment_shapes(f_prev: Tensor, f_cur: Tensor, block: FgfaBlock) -> None:
    if f_prev.shape != f_cur.shape:
        raise ShapeError(f"feature shapes differ: {f_prev.shape} vs {f_cur.shape}")
    c = f_prev.shape[-3]
    if block.channels != c:
        raise ShapeError(f"block built for {block.channels} channels, features have {c}")
    if block.attention_conv.in_channels != 2 * c or block.attention_conv.out_channels != 1:
        raise ShapeError("attention conv must map 2c channels to 1")
    if block.fusion_conv.in_channels != 2 * c:
        raise ShapeError("fusion conv must take 2c channels")


def augment(f_prev: Tensor, f_cur: Tensor, flow_stage: FlowMap, block: FgfaBlock) -> Tensor:
    """Warp-and-fuse one stage. Accepts [C,H,W] or a batch [N,C,H,W]
    (the flow is shared across batch items)."""
    _check_augment_shapes(f_prev, f_cur, block)
    squeeze = f_prev.ndim == 3
    if squeeze:
        f_prev = f_prev[None]
        f_cur = f_cur[None]
    n, c, h, w = f_prev.shape
    rows, cols = _warp_grid(flow_stage)
    f_sample = nn.bilinear_sample_map(
        f_prev.reshape(n * c, h, w), rows, cols
    ).reshape(n, c, h, w).astype(f_prev.dtype, copy=False)
    z = np.concatenate([f_sample, f_cur], axis=1)
    f_att = nn.sigmoid(nn.conv2d_forward(z, block.attention_conv))
    fuse_pre = nn.batchnorm_forward(nn.conv2d_forward(z, block.fusion_conv),
                                    block.fusion_bn, update_running=False)
    f_fuse = nn.relu(fuse_pre)
    out = f_fuse * f_att + f_cur
    return out[0] if squeeze else out


def augment_forward_backward(f_prev: Tensor, f_cur: Tensor, flow_stage: FlowMap,
                             block: FgfaBlock, grad_out: Tensor):
    """Forward value plus gradients for fine-tuning the block.

    Returns (f_aug, grads) where grads holds d/d f_prev, d/d f_cur, and the
    block parameters in ``block.params()`` order.
    """
    _check_augment_shapes(f_prev, f_cur, block)
    squeeze = f_prev.ndim == 3
    if squeeze:
        f_prev = f_prev[None]
        f_cur = f_cur[None]
        grad_out = grad_out[None]
    n, c, h, w = f_prev.shape
    rows, cols = _warp_grid(flow_stage)
    f_sample = nn.bilinear_sample_map(f_prev.reshape(n * c, h, w), rows, cols)
    f_sample = f_sample.reshape(n, c, h, w).astype(f_prev.dtype, copy=False)
    z = np.concatenate([f_sample, f_cur], axis=1)
    att_pre = nn.conv2d_forward(z, block.attention_conv)
    f_att = nn.sigmoid(att_pre)
    conv_f = nn.conv2d_forward(z, block.fusion_conv)
    fuse_pre = nn.batchnorm_forward(conv_f, block.fusion_bn, update_running=False)
    f_fuse = nn.relu(fuse_pre)
    f_aug = f_fuse * f_att + f_cur

    g_fuse = grad_out * f_att
    g_att = (grad_out * f_fuse).sum(axis=1, keepdims=True)
    g_att_pre = g_att * f_att * (1.0 - f_att)
    g_z_att, g_wa, g_ba = nn.conv2d_backward(z, block.attention_conv, g_att_pre)
    g_fuse_pre = g_fuse * (fuse_pre > 0)
    g_conv_f, g_gamma, g_beta = nn.batchnorm_backward(conv_f, block.fusion_bn, g_fuse_pre)
    g_z_fuse, g_wf, g_bf = nn.conv2d_backward(z, block.fusion_conv, g_conv_f)
    g_z = g_z_att + g_z_fuse
    g_sample = g_z[:, :c]
    g_cur = g_z[:, c:] + grad_out
    g_prev = nn.bilinear_sample_map_backward(
        (n * c, h, w), rows, cols, g_sample.reshape(n * c, h, w)
    ).reshape(n, c, h, w)

    if squeeze:
        f_aug, g_prev, g_cur = f_aug[0], g_prev[0], g_cur[0]
    grads = [g_prev, g_cur, g_wa, g_ba, g_wf, g_bf, g_gamma, g_beta]
    return f_aug, grads


def augment_pyramid(f_prev_stages: list[Tensor], f_cur_stages: list[Tensor],
                    flow_full: FlowMap, blocks: list[FgfaBlock]) -> list[Tensor]:
    """Run augmentation per pyramid stage, resampling the full-resolution flow
    to each stage's grid first. Stage spatial sizes must strictly decrease."""
    if not (len(f_prev_stages) == len(f_cur_stages) == len(blocks)):
        raise ShapeError(
            f"stage-count mismatch: {len(f_prev_stages)} prev, "
            f"{len(f_cur_stages)} cur, {len(blocks)} blocks"
        )
    sizes = [(f.shape[-2], f.shape[-1]) for f in f_cur_stages]
    for (h0, w0), (h1, w1) in zip(sizes, sizes[1:]):
        if not (h1 < h0 and w1 < w0):
            raise ShapeError(f"stage sizes must strictly decrease, got {sizes}")
    out = []
    for f_prev, f_cur, block in zip(f_prev_stages, f_cur_stages, blocks):
        stage_flow = resample_rescale(flow_full, f_cur.shape[-1], f_cur.shape[-2])
        out.append(augment(f_prev, f_cur, stage_flow, block))
    return out
