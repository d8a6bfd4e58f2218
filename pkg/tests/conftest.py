"""
测试公共设置
把 src/ 加入导入路径，并提供有限差分梯度检查与小尺寸模型配置
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from config import Config  # noqa: E402
from dtrd_model import TrackerConfig  # noqa: E402
from rgbd import RgbdFrame  # noqa: E402


def numerical_gradient(f, array, step=1e-6):
    """
    中心差分梯度

    参数:
        f: 无参函数，返回标量 float（会读取 array 的当前值）
        array: 原地扰动的 numpy 数组
        step: 差分步长

    返回:
        与 array 同形的梯度数组
    """
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = array[idx]
        array[idx] = original + step
        plus = f()
        array[idx] = original - step
        minus = f()
        array[idx] = original
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def relative_error(analytic, numeric, floor=1e-2):
    """逐元素相对误差的最大值，分母下限为 floor"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_config():
    """训练与梯度检查用的小模型"""
    return TrackerConfig(template_size=16, search_size=32, stride=4, channels=8, model_dim=16,
                         encoder_blocks=1, decoder_blocks=1, heads=2, ffn_dim=16)


def synthetic_frame(box, width=64, height=48, color=(0.8, 0.2, 0.1), depth=2.0,
                    background=(0.5, 0.5, 0.5), background_depth=6.0):
    """
    合成帧：均匀背景上画一个纯色矩形

    参数:
        box: 矩形的归一化 BoundingBox
        color, depth: 矩形的颜色与深度
        background, background_depth: 背景颜色与深度

    返回:
        RgbdFrame
    """
    rgb = np.empty((height, width, 3))
    rgb[:] = background
    depth_map = np.full((height, width), background_depth)
    c1, c2 = int(round(box.x1 * width)), int(round(box.x2 * width))
    r1, r2 = int(round(box.y1 * height)), int(round(box.y2 * height))
    rgb[r1:r2, c1:c2] = color
    depth_map[r1:r2, c1:c2] = depth
    return RgbdFrame(rgb, depth_map)


@pytest.fixture
def fast_config():
    """缩小场景的配置：目标路径 6 米，计时固定"""
    config = Config()
    config["scenario.rect_length"] = 2.0
    config["scenario.rect_width"] = 1.0
    config["scenario.first_cross_arc"] = 1.5
    config["scenario.second_cross_arc"] = 4.0
    config["scenario.parallel_cut_arc"] = 0.5
    config["harness.clock"] = "fixed"
    config["harness.timeout"] = 30.0
    return config
