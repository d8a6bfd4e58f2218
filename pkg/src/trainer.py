"""
训练模块
功能：模板/搜索样本构建（含中心与尺度抖动）、AdamW 两组学习率训练、留出集 IOU 评估
"""

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from bbox import BoundingBox, iou
from dtrd_model import DTRDModel, corners_to_box
from dtrd_tracker import box_loss
from errors import ContractError
from optimizer import AdamW
from rgbd import fuse_rgbd, search_window, template_window
from tensor import backward, no_grad


@dataclass
class TrainingPair:
    """同一序列中的两帧：模板帧+框，搜索帧+框"""
    template_frame: object
    template_box: BoundingBox
    search_frame: object
    search_box: BoundingBox


@dataclass
class TrainingResult:
    model: DTRDModel
    epoch_losses: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)


def make_sample(pair, config, rng=None, center_jitter=0.0, scale_jitter=0.0, use_depth=True):
    """
    把一个训练对转换成网络输入

    参数:
        pair: TrainingPair
        config: TrackerConfig
        rng: numpy Generator；为 None 时不抖动
        center_jitter: 搜索中心抖动幅度（以 √(框面积) 像素为单位）
        scale_jitter: 搜索尺度抖动幅度（相对值）
        use_depth: 是否保留深度通道

    返回:
        (模板 H_z×W_z×4, 搜索 H_x×W_x×4, 搜索窗口内的目标框)；目标框落在窗口外时返回 None
    """
    tf, sf = pair.template_frame, pair.search_frame
    template = template_window(pair.template_box, tf.width, tf.height).sample(
        fuse_rgbd(tf, use_depth), config.template_size)

    center = pair.search_box
    if rng is not None and (center_jitter > 0 or scale_jitter > 0):
        w, h = center.width, center.height
        side_px = math.sqrt(w * sf.width * h * sf.height)
        dx, dy = rng.uniform(-center_jitter, center_jitter, size=2) * side_px
        scale = 1.0 + rng.uniform(-scale_jitter, scale_jitter)
        cx, cy = center.center
        cx += dx / sf.width
        cy += dy / sf.height
        center = BoundingBox(cx - 0.5 * w * scale, cy - 0.5 * h * scale,
                             cx + 0.5 * w * scale, cy + 0.5 * h * scale)
    window = search_window(center, sf.width, sf.height, config.search_area_factor)
    search = window.sample(fuse_rgbd(sf, use_depth), config.search_size)

    coords = np.clip(window.box_to_crop(pair.search_box), 0.0, 1.0)
    if coords[2] - coords[0] <= config.min_box_size or coords[3] - coords[1] <= config.min_box_size:
        return None
    return template, search, BoundingBox.from_array(coords)


def build_samples(dataset, config, rng=None, center_jitter=0.0, scale_jitter=0.0):
    samples = []
    for pair in dataset:
        sample = make_sample(pair, config, rng, center_jitter, scale_jitter)
        if sample is not None:
            samples.append(sample)
    return samples


def train(dataset, config, epochs=10, lr_model=1e-4, lr_backbone=1e-5, seed=0, model=None,
          batch_size=8, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8,
          lambda_iou=2.0, lambda_l1=5.0, center_jitter=0.0, scale_jitter=0.0,
          first_layer_in_model_group=True, verbose=False):
    """
    训练 DTRD

    参数:
        dataset: TrainingPair 列表
        config: TrackerConfig
        epochs: 训练轮数（默认 10）
        lr_model, lr_backbone: 模型组与骨干组学习率
        seed: 随机种子（模型初始化、样本顺序与抖动）
        model: 已有模型；为 None 时用 seed 新建
        batch_size: 每步的样本数，损失取批内平均
        center_jitter, scale_jitter: 搜索窗口抖动
        first_layer_in_model_group: 第一层卷积是否用模型学习率
        verbose: 是否打印每轮损失

    返回:
        TrainingResult（模型、每轮平均损失、每步损失）
    """
    if not dataset:
        raise ContractError("训练数据集为空")
    if epochs < 1 or batch_size < 1:
        raise ValueError(f"epochs 与 batch_size 必须为正: {epochs}, {batch_size}")

    rng = np.random.default_rng(seed)
    model = model if model is not None else DTRDModel(config, seed=seed)
    groups = model.parameter_groups(first_layer_in_model_group)
    optimizer = AdamW(groups, lr={"model": lr_model, "backbone": lr_backbone},
                      beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)
    result = TrainingResult(model=model)

    for epoch in range(1, epochs + 1):
        samples = build_samples(dataset, config, rng, center_jitter, scale_jitter)
        if not samples:
            raise ContractError("没有可用的训练样本（目标框全部落在搜索窗口外）")
        order = rng.permutation(len(samples))
        epoch_total = 0.0
        for start in range(0, len(order), batch_size):
            batch = [samples[i] for i in order[start:start + batch_size]]
            losses = [box_loss(model.forward(t, s), target, lambda_iou, lambda_l1)
                      for t, s, target in batch]
            total = losses[0]
            for item in losses[1:]:
                total = total + item
            batch_loss = total / float(len(batch))
            optimizer.zero_grad()
            backward(batch_loss)
            optimizer.step()
            result.step_losses.append(batch_loss.item())
            epoch_total += sum(item.item() for item in losses)
        result.epoch_losses.append(epoch_total / len(samples))
        if verbose:
            print(f"  第 {epoch}/{epochs} 轮: 平均损失 {result.epoch_losses[-1]:.4f}")
    return result


def predict_crop_box(model, template, search):
    """推理：搜索窗口内的预测框"""
    with no_grad():
        raw = model.forward(template, search)
    return corners_to_box(raw.data, model.config.min_box_size)


def evaluate_mean_iou(model, dataset, config, seed=0, center_jitter=0.0, scale_jitter=0.0):
    """
    在数据集上计算平均 IOU（搜索窗口坐标内比较）

    固定 seed 的抖动让训练前后的评估使用完全相同的裁剪
    """
    rng = np.random.default_rng(seed)
    samples = build_samples(dataset, config, rng, center_jitter, scale_jitter)
    if not samples:
        return float("nan")
    scores = [iou(predict_crop_box(model, t, s), target) for t, s, target in samples]
    return float(np.mean(scores))


def save_loss_history(path, epoch_losses):
    """写出 `epoch,mean_loss` CSV"""
    df = pd.DataFrame({"epoch": np.arange(1, len(epoch_losses) + 1), "mean_loss": epoch_losses})
    df.to_csv(path, index=False, float_format="%.6f")
    return df


def save_eval_metrics(path, before, after):
    """写出 `phase,mean_iou` CSV"""
    df = pd.DataFrame({"phase": ["before", "after"], "mean_iou": [before, after]})
    df.to_csv(path, index=False, float_format="%.6f")
    return df
