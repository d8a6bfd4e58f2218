"""
DTRD 跟踪器模块
功能：IOU+L1 训练损失、模板初始化与逐帧跟踪
"""

import math
from dataclasses import dataclass

import numpy as np

from bbox import BoundingBox
from dtrd_model import DTRDModel, TrackerConfig, corners_to_box, ordered_corners
from errors import ContractError
from rgbd import box_inside_frame, fuse_rgbd, search_window, template_window
from tensor import Tensor, maximum, minimum, no_grad, relu, tensor_abs, tensor_mean


def box_loss(pred, gt, lambda_iou=2.0, lambda_l1=5.0):
    """
    训练损失 λ_iou·(1 − GIoU) + λ_l1·mean|角点差|

    参数:
        pred: 预测框（BoundingBox 或 [4] 张量，张量会先做可微的角点排序）
        gt: 真实框 BoundingBox
        lambda_iou, lambda_l1: 两项权重

    返回:
        标量 Tensor
    """
    if isinstance(pred, BoundingBox):
        pred = Tensor(pred.to_array())
    p = ordered_corners(pred)
    px1, py1, px2, py2 = p[0], p[1], p[2], p[3]
    gx1, gy1, gx2, gy2 = gt.x1, gt.y1, gt.x2, gt.y2

    inter_w = relu(minimum(px2, gx2) - maximum(px1, gx1))
    inter_h = relu(minimum(py2, gy2) - maximum(py1, gy1))
    inter = inter_w * inter_h
    area_p = (px2 - px1) * (py2 - py1)
    area_g = (gx2 - gx1) * (gy2 - gy1)
    union = area_p + area_g - inter
    enclosure = (maximum(px2, gx2) - minimum(px1, gx1)) * (maximum(py2, gy2) - minimum(py1, gy1))
    giou = inter / union - (enclosure - union) / enclosure

    l1 = tensor_mean(tensor_abs(p - Tensor(gt.to_array())))
    return lambda_iou * (1.0 - giou) + lambda_l1 * l1


@dataclass
class TrackState:
    """单个跟踪目标的状态；模板初始化后不再更新"""
    template: np.ndarray
    previous_box: BoundingBox
    model: DTRDModel
    config: TrackerConfig
    use_depth: bool = True
    confidence: float = 1.0


def init_track(frame, box, config, model, use_depth=True):
    """
    用初始框裁剪模板

    参数:
        frame: RgbdFrame
        box: 帧内的归一化框
        config: TrackerConfig
        model: DTRDModel
        use_depth: 为 False 时深度通道置零（消融）

    返回:
        TrackState
    """
    if not box_inside_frame(box):
        raise ContractError(f"初始框不在帧内: {box}")
    window = template_window(box, frame.width, frame.height)
    template = window.sample(fuse_rgbd(frame, use_depth), config.template_size)
    return TrackState(template=template, previous_box=box, model=model, config=config, use_depth=use_depth)


def track_step(state, frame):
    """
    跟踪一帧

    参数:
        state: init_track 返回的 TrackState
        frame: 当前 RgbdFrame

    返回:
        (BoundingBox, 置信度)；置信度 = exp(−相邻两次预测的 L1 距离)，仅作诊断记录
    """
    if not isinstance(state, TrackState):
        raise ContractError("track_step 之前必须调用 init_track")
    cfg = state.config
    window = search_window(state.previous_box, frame.width, frame.height, cfg.search_area_factor)
    search = window.sample(fuse_rgbd(frame, state.use_depth), cfg.search_size)
    with no_grad():
        raw = state.model.forward(state.template, search)
    crop_box = corners_to_box(raw.data, cfg.min_box_size)
    box = corners_to_box(window.crop_to_frame(crop_box.to_array()), cfg.min_box_size)
    distance = float(np.abs(box.to_array() - state.previous_box.to_array()).sum())
    state.confidence = math.exp(-distance)
    state.previous_box = box
    return box, state.confidence


class DTRDTracker:
    """实验驱动使用的统一跟踪器接口"""

    def __init__(self, model, config, use_depth=True, name=None):
        self.model = model
        self.config = config
        self.use_depth = use_depth
        self.name = name or ("dtrd" if use_depth else "dtrd_nodepth")
        self.state = None

    def initialize(self, frame, box):
        self.state = init_track(frame, box, self.config, self.model, self.use_depth)

    def track(self, frame):
        if self.state is None:
            raise ContractError(f"跟踪器 {self.name} 尚未初始化")
        return track_step(self.state, frame)
