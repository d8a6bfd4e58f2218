"""
边界框模块
功能：左上/右下角点表示的轴对齐边界框，及 IOU / GIoU 计算
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """轴对齐边界框，坐标一般为归一化图像坐标"""
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"边界框坐标必须有限: {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"退化的边界框: {coords}")

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self):
        return 0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)

    def to_array(self):
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    @classmethod
    def from_array(cls, values):
        x1, y1, x2, y2 = (float(v) for v in values)
        return cls(x1, y1, x2, y2)

    def is_normalized(self):
        return 0.0 <= self.x1 and 0.0 <= self.y1 and self.x2 <= 1.0 and self.y2 <= 1.0

    def shifted(self, dx, dy):
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def top_fraction(self, fraction):
        """框顶部 fraction 高度的子框（用于人脸区域）"""
        return BoundingBox(self.x1, self.y1, self.x2, self.y1 + fraction * self.height)


def intersection_area(a, b):
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a, b):
    """
    交并比

    参数:
        a, b: BoundingBox

    返回:
        float: area(a∩b)/area(a∪b)，不相交时为 0
    """
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def giou(a, b):
    """广义交并比：IOU − (外接框面积 − 并集面积)/外接框面积"""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    enclosure = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    return inter / union - (enclosure - union) / enclosure
