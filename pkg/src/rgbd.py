"""
RGB-D 帧模块
功能：同步的彩色/深度栅格、4通道融合，以及模板/搜索区域的裁剪几何
"""

import math
from dataclasses import dataclass

import numpy as np

from bbox import BoundingBox


D_MAX = 10.0


@dataclass
class RgbdFrame:
    """同步的 RGB 栅格 (H×W×3, [0,1]) 与深度栅格 (H×W, 米)"""
    rgb: np.ndarray
    depth: np.ndarray
    timestamp: float = 0.0
    d_max: float = D_MAX

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"rgb 应为 H×W×3，得到 {rgb.shape}")
        if depth.shape != rgb.shape[:2]:
            raise ValueError(f"深度尺寸 {depth.shape} 与彩色尺寸 {rgb.shape[:2]} 不一致")
        if self.d_max <= 0:
            raise ValueError(f"d_max 必须为正: {self.d_max}")
        self.rgb = np.clip(rgb, 0.0, 1.0)
        self.depth = np.clip(depth, 0.0, self.d_max)

    @property
    def height(self):
        return self.rgb.shape[0]

    @property
    def width(self):
        return self.rgb.shape[1]


def fuse_rgbd(frame, use_depth=True):
    """
    把 RGB 与深度融合为 4 通道图像

    参数:
        frame: RgbdFrame
        use_depth: 为 False 时深度通道置零（深度消融）

    返回:
        H×W×4 数组：通道 0-2 为 rgb，通道 3 为 depth/d_max
    """
    fused = np.empty((frame.height, frame.width, 4), dtype=np.float64)
    fused[..., :3] = frame.rgb
    fused[..., 3] = frame.depth / frame.d_max if use_depth else 0.0
    return fused


@dataclass(frozen=True)
class CropWindow:
    """帧像素坐标中的正方形裁剪窗口 [x0, x0+side)×[y0, y0+side)"""
    x0: float
    y0: float
    side: float
    frame_width: int
    frame_height: int

    def pixel_indices(self, size):
        """最近邻采样的源像素行/列下标，越界处复制边缘像素"""
        offsets = (np.arange(size) + 0.5) * (self.side / size)
        cols = np.clip(np.floor(self.x0 + offsets).astype(int), 0, self.frame_width - 1)
        rows = np.clip(np.floor(self.y0 + offsets).astype(int), 0, self.frame_height - 1)
        return rows, cols

    def sample(self, image, size):
        """把窗口重采样为 size×size（保留通道维）"""
        rows, cols = self.pixel_indices(size)
        return image[rows[:, None], cols[None, :]]

    def inside_frame(self):
        return (self.x0 >= 0 and self.y0 >= 0
                and self.x0 + self.side <= self.frame_width
                and self.y0 + self.side <= self.frame_height)

    def box_to_crop(self, box):
        """归一化帧坐标的框 → 裁剪窗口内的归一化坐标 (x1, y1, x2, y2)"""
        w, h = self.frame_width, self.frame_height
        return np.array([
            (box.x1 * w - self.x0) / self.side,
            (box.y1 * h - self.y0) / self.side,
            (box.x2 * w - self.x0) / self.side,
            (box.y2 * h - self.y0) / self.side,
        ])

    def crop_to_frame(self, coords):
        """裁剪窗口内的归一化坐标 → 归一化帧坐标数组"""
        u1, v1, u2, v2 = coords
        w, h = self.frame_width, self.frame_height
        return np.array([
            (self.x0 + u1 * self.side) / w,
            (self.y0 + v1 * self.side) / h,
            (self.x0 + u2 * self.side) / w,
            (self.y0 + v2 * self.side) / h,
        ])


def template_window(box, frame_width, frame_height):
    """以框为中心、边长 max(w, h) 的正方形窗口（超出帧的部分由边缘复制填充）"""
    cx, cy = box.center
    side = max(box.width * frame_width, box.height * frame_height)
    return CropWindow(cx * frame_width - side / 2, cy * frame_height - side / 2, side,
                      frame_width, frame_height)


def search_window(box, frame_width, frame_height, factor=4.0):
    """
    以上一帧框为中心的搜索窗口

    参数:
        box: 上一帧的归一化框
        factor: 搜索区域系数，边长 = factor·√(框面积)

    返回:
        CropWindow，边长不超过帧短边且整体位于帧内
    """
    cx, cy = box.center
    side = factor * math.sqrt(box.width * frame_width * box.height * frame_height)
    side = min(side, float(min(frame_width, frame_height)))
    x0 = min(max(cx * frame_width - side / 2, 0.0), frame_width - side)
    y0 = min(max(cy * frame_height - side / 2, 0.0), frame_height - side)
    return CropWindow(x0, y0, side, frame_width, frame_height)


def box_inside_frame(box):
    return isinstance(box, BoundingBox) and box.is_normalized()


def median_depth(frame, box, central_fraction=0.5):
    """
    框中心区域的深度中位数

    参数:
        frame: RgbdFrame
        box: 归一化框
        central_fraction: 取框中心该比例的宽高

    返回:
        float: 深度中位数（米）
    """
    cx, cy = box.center
    half_w = 0.5 * central_fraction * box.width
    half_h = 0.5 * central_fraction * box.height
    c1 = int(math.floor((cx - half_w) * frame.width))
    c2 = int(math.ceil((cx + half_w) * frame.width))
    r1 = int(math.floor((cy - half_h) * frame.height))
    r2 = int(math.ceil((cy + half_h) * frame.height))
    c1, r1 = max(c1, 0), max(r1, 0)
    c2 = min(max(c2, c1 + 1), frame.width)
    r2 = min(max(r2, r1 + 1), frame.height)
    c1, r1 = min(c1, c2 - 1), min(r1, r2 - 1)
    return float(np.median(frame.depth[r1:r2, c1:c2]))
