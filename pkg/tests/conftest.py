import math

import pytest

from flowtrack import bench
from flowtrack.synthetic import DetectionNoise, MotionProgram, ObjectSpec, SceneSpec


@pytest.fixture(scope="session")
def trained_net():
    """Benchmark motion net shared by the slower tests (trained once)."""
    net, curve, dataset = bench.train_benchmark_mpn(seed=123)
    return net, curve, dataset


def bounce_spec(amp: float = 30.0, period: float = 16.0, gap: float = 24.0,
                seed: int = 0, frames: int = 40) -> SceneSpec:
    """Two boxes approach head-on, decelerate, and bounce back without
    crossing; a constant-velocity extrapolation overshoots into the other
    object's lane at the reversal."""
    mid_x, y = 160.0, 120.0
    w, h = 20.0, 18.0
    a = ObjectSpec(box=(mid_x - gap / 2 - 2 * amp - w / 2, y - h / 2, w, h),
                   program=MotionProgram(kind="sinusoidal", amplitude=(amp, 0.0),
                                         period=period, phase=(-math.pi / 2, 0.0)))
    b = ObjectSpec(box=(mid_x + gap / 2 + 2 * amp - w / 2, y - h / 2, w, h),
                   program=MotionProgram(kind="sinusoidal", amplitude=(-amp, 0.0),
                                         period=period, phase=(-math.pi / 2, 0.0)))
    return SceneSpec(seed=seed, frame_count=frames, img_size=(320, 240),
                     flow_size=(160, 120), objects=[a, b],
                     noise=DetectionNoise.none())
