"""Dense optical-flow maps: Middlebury .flo codec, resolution rescaling, and
local crops for the motion predictor.

Coordinate convention used everywhere in this package: x runs along the width
axis (columns), y along the height axis (rows). Flow channel 0 is u (the
x-offset), channel 1 is v (the y-offset), both measured in flow-map pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

FLO_MAGIC = 202021.25


class FloError(ValueError):
    """Raised for malformed .flo streams."""


@dataclass
class FlowMap:
    """Per-pixel displacement field; u and v are [height, width] float32."""

    width: int
    height: int
    u: Tensor
    v: Tensor

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float32).reshape(self.height, self.width)
        self.v = np.ascontiguousarray(self.v, dtype=np.float32).reshape(self.height, self.width)
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise FloError("flow map contains NaN or Inf")

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowMap":
        return cls(width, height,
                   np.zeros((height, width), dtype=np.float32),
                   np.zeros((height, width), dtype=np.float32))

    @classmethod
    def uniform(cls, width: int, height: int, du: float, dv: float) -> "FlowMap":
        return cls(width, height,
                   np.full((height, width), du, dtype=np.float32),
                   np.full((height, width), dv, dtype=np.float32))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlowMap):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v))


def read_flo(data: bytes) -> FlowMap:
    """Parse a Middlebury .flo byte stream."""
    if len(data) < 4 or struct.unpack("<f", data[:4])[0] != FLO_MAGIC:
        raise FloError("not a flo file")
    if len(data) < 12:
        raise FloError("unexpected end of flow data")
    width, height = struct.unpack_from("<ii", data, 4)
    if width <= 0 or height <= 0:
        raise FloError(f"non-positive flow dimensions {width}x{height}")
    count = 2 * width * height
    if len(data) - 12 < 4 * count:
        raise FloError("unexpected end of flow data")
    interleaved = np.frombuffer(data, dtype="<f4", count=count, offset=12)
    interleaved = interleaved.reshape(height, width, 2)
    return FlowMap(width, height, interleaved[:, :, 0].copy(), interleaved[:, :, 1].copy())


def write_flo(flow: FlowMap) -> bytes:
    """Inverse of read_flo, bit-exact."""
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    interleaved = np.empty((flow.height, flow.width, 2), dtype="<f4")
    interleaved[:, :, 0] = flow.u
    interleaved[:, :, 1] = flow.v
    return header + interleaved.tobytes(order="C")


def load_flo(path) -> FlowMap:
    with open(path, "rb") as fh:
        return read_flo(fh.read())


def save_flo(path, flow: FlowMap) -> None:
    with open(path, "wb") as fh:
        fh.write(write_flo(flow))


def _resize_bilinear(channel: Tensor, new_w: int, new_h: int) -> Tensor:
    """Pixel-center-aligned bilinear resize with edge clamping."""
    h, w = channel.shape
    src_x = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    src_y = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    src_x = np.clip(src_x, 0, w - 1)
    src_y = np.clip(src_y, 0, h - 1)
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = channel[y0][:, x0] * (1 - fx) + channel[y0][:, x1] * fx
    bot = channel[y1][:, x0] * (1 - fx) + channel[y1][:, x1] * fx
    return (top * (1 - fy)[:, None] + bot * fy[:, None]).astype(np.float32)


def resample_rescale(flow: FlowMap, new_w: int, new_h: int) -> FlowMap:
    """Resample a flow map to a new grid and rescale its values to match.

    The displacement values are multiplied by the per-axis scale factors
    (new_w/width for u, new_h/height for v) so that a displacement keeps
    pointing at the same relative location on the resized grid.
    """
    if new_w <= 0 or new_h <= 0:
        raise ValueError(f"target size must be positive, got {new_w}x{new_h}")
    sx = new_w / flow.width
    sy = new_h / flow.height
    if new_w == flow.width and new_h == flow.height:
        return FlowMap(new_w, new_h, flow.u.copy(), flow.v.copy())
    u = _resize_bilinear(flow.u, new_w, new_h) * np.float32(sx)
    v = _resize_bilinear(flow.v, new_w, new_h) * np.float32(sy)
    return FlowMap(new_w, new_h, u, v)


def crop3x3(flow: FlowMap, cx: float, cy: float) -> Tensor:
    """3x3 flow neighborhood around (cx, cy) as a [2,3,3] tensor.

    The center is rounded to the nearest pixel (ties toward +inf);
    out-of-bounds cells are zero. Channel 0 is u, channel 1 is v.
    """
    col = int(np.floor(cx + 0.5))
    row = int(np.floor(cy + 0.5))
    out = np.zeros((2, 3, 3), dtype=np.float32)
    r_lo = max(row - 1, 0)
    r_hi = min(row + 2, flow.height)
    c_lo = max(col - 1, 0)
    c_hi = min(col + 2, flow.width)
    if r_lo < r_hi and c_lo < c_hi:
        dst_r = slice(r_lo - (row - 1), r_hi - (row - 1))
        dst_c = slice(c_lo - (col - 1), c_hi - (col - 1))
        out[0, dst_r, dst_c] = flow.u[r_lo:r_hi, c_lo:c_hi]
        out[1, dst_r, dst_c] = flow.v[r_lo:r_hi, c_lo:c_hi]
    return out


def flow_filename(frame: int) -> str:
    """Flow file naming: frame t's file holds flow from t-1 to t (1-indexed,
    so frame 1 has no flow file)."""
    return f"{frame:06d}.flo"
