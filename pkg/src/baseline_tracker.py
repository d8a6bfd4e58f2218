"""
外观基线跟踪器模块
功能：只使用彩色图像的模板匹配跟踪器（归一化互相关），代表仅用 RGB 的二维跟踪器
深度通道被完全忽略
"""

import math
from dataclasses import dataclass

import numpy as np

from errors import ContractError
from rgbd import box_inside_frame, search_window


HIST_BINS = 8


def color_histogram(patch, bins=HIST_BINS):
    """
    RGB 联合直方图

    参数:
        patch: h×w×3 数组，取值 [0,1]

    返回:
        bins×bins×bins 数组，总和为 1
    """
    idx = np.minimum(np.floor(patch * bins).astype(int), bins - 1).reshape(-1, 3)
    flat = idx[:, 0] * bins * bins + idx[:, 1] * bins + idx[:, 2]
    counts = np.bincount(flat, minlength=bins ** 3).astype(np.float64)
    return (counts / counts.sum()).reshape(bins, bins, bins)


def box_pixel_rect(box, frame_width, frame_height):
    """框覆盖的整数像素区域 (c1, r1, c2, r2)，至少 1 像素"""
    c1 = min(int(math.floor(box.x1 * frame_width)), frame_width - 1)
    r1 = min(int(math.floor(box.y1 * frame_height)), frame_height - 1)
    c2 = max(int(math.ceil(box.x2 * frame_width)), c1 + 1)
    r2 = max(int(math.ceil(box.y2 * frame_height)), r1 + 1)
    return c1, r1, min(c2, frame_width), min(r2, frame_height)


@dataclass
class AppearanceTemplate:
    """初始框内的 RGB 图块（原生像素分辨率）及其颜色直方图"""
    patch: np.ndarray
    color_histogram: np.ndarray

    def __post_init__(self):
        if abs(float(self.color_histogram.sum()) - 1.0) > 1e-9:
            raise ValueError("颜色直方图总和必须为 1")


@dataclass
class BaselineState:
    template: AppearanceTemplate
    init_box: object
    init_origin: tuple
    origin: tuple
    previous_box: object


def baseline_init(frame, box):
    """
    用初始框建立外观模板

    参数:
        frame: RgbdFrame（只读取 rgb）
        box: 帧内的归一化框

    返回:
        BaselineState
    """
    if not box_inside_frame(box):
        raise ContractError(f"初始框不在帧内: {box}")
    c1, r1, c2, r2 = box_pixel_rect(box, frame.width, frame.height)
    patch = frame.rgb[r1:r2, c1:c2].copy()
    template = AppearanceTemplate(patch=patch, color_histogram=color_histogram(patch))
    return BaselineState(template=template, init_box=box, init_origin=(c1, r1),
                         origin=(c1, r1), previous_box=box)


def _search_region(state, frame):
    window = search_window(state.previous_box, frame.width, frame.height)
    ph, pw = state.template.patch.shape[:2]
    sx0 = int(math.floor(window.x0))
    sy0 = int(math.floor(window.y0))
    sx1 = max(int(math.ceil(window.x0 + window.side)), sx0 + pw)
    sy1 = max(int(math.ceil(window.y0 + window.side)), sy0 + ph)
    if sx1 > frame.width:
        sx0, sx1 = max(frame.width - (sx1 - sx0), 0), frame.width
    if sy1 > frame.height:
        sy0, sy1 = max(frame.height - (sy1 - sy0), 0), frame.height
    return sx0, sy0, sx1, sy1


def _window_sums(values, ph, pw):
    """所有 ph×pw 窗口内的和（积分图）"""
    integral = np.zeros((values.shape[0] + 1, values.shape[1] + 1))
    integral[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    return integral[ph:, pw:] - integral[:-ph, pw:] - integral[ph:, :-pw] + integral[:-ph, :-pw]


def match_scores(region, patch):
    """
    图块在区域内每个有效偏移处的归一化互相关

    参数:
        region: Rh×Rw×3
        patch: ph×pw×3，ph ≤ Rh, pw ≤ Rw

    返回:
        (Rh−ph+1)×(Rw−pw+1) 分数，取值 [−1, 1]；图块无方差时退化为负均方差
    """
    ph, pw = patch.shape[:2]
    rh, rw = region.shape[:2]
    n = ph * pw * 3
    centered = patch - patch.mean()
    patch_norm = math.sqrt(float((centered ** 2).sum()))

    if patch_norm < 1e-12:
        sq = _window_sums((region ** 2).sum(axis=2), ph, pw)
        lin = _window_sums(region.sum(axis=2), ph, pw)
        level = float(patch.mean())
        return -(sq - 2.0 * level * lin + n * level * level) / n

    spectrum = np.zeros((rh - ph + 1, rw - pw + 1))
    for c in range(3):
        f_region = np.fft.rfft2(region[..., c])
        f_patch = np.fft.rfft2(centered[..., c], s=(rh, rw))
        corr = np.fft.irfft2(f_region * np.conj(f_patch), s=(rh, rw))
        spectrum += corr[:rh - ph + 1, :rw - pw + 1]

    lin = _window_sums(region.sum(axis=2), ph, pw)
    sq = _window_sums((region ** 2).sum(axis=2), ph, pw)
    region_var = np.maximum(sq - lin * lin / n, 0.0)
    denom = np.sqrt(region_var) * patch_norm
    scores = np.where(denom > 1e-12, spectrum / np.where(denom > 1e-12, denom, 1.0), 0.0)
    return np.clip(scores, -1.0, 1.0)


def baseline_track_step(state, frame):
    """
    跟踪一帧：在搜索区域内做模板匹配，框大小保持不变

    返回:
        (BoundingBox, 置信度 ∈ [0,1])
    """
    if not isinstance(state, BaselineState):
        raise ContractError("baseline_track_step 之前必须调用 baseline_init")
    sx0, sy0, sx1, sy1 = _search_region(state, frame)
    scores = match_scores(frame.rgb[sy0:sy1, sx0:sx1], state.template.patch)
    v, u = np.unravel_index(int(np.argmax(scores)), scores.shape)
    peak = float(scores[v, u])

    origin = (sx0 + int(u), sy0 + int(v))
    dx = (origin[0] - state.init_origin[0]) / frame.width
    dy = (origin[1] - state.init_origin[1]) / frame.height
    box = state.init_box if origin == state.init_origin else state.init_box.shifted(dx, dy)
    state.origin = origin
    state.previous_box = box
    if state.template.patch.std() < 1e-12:
        confidence = 1.0 / (1.0 + max(-peak, 0.0))
    else:
        confidence = (peak + 1.0) / 2.0
    return box, float(min(max(confidence, 0.0), 1.0))


class BaselineTracker:
    """统一跟踪器接口的外观基线"""

    name = "baseline"

    def __init__(self):
        self.state = None

    def initialize(self, frame, box):
        self.state = baseline_init(frame, box)

    def track(self, frame):
        if self.state is None:
            raise ContractError("基线跟踪器尚未初始化")
        return baseline_track_step(self.state, frame)
