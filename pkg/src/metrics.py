"""
评估指标模块
功能：单次试验的逐帧日志，以及距离误差 DE、跟随成功率 FS、帧率 FPS
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
import pandas as pd

from bbox import BoundingBox, iou
from errors import ContractError


FS_UPPER = 1.0 - 1e-9
COLUMNS = ["frame", "time", "confidence", "est_depth", "true_distance", "target_arc", "processing_time",
           "x1", "y1", "x2", "y2", "gt_x1", "gt_y1", "gt_x2", "gt_y2"]


@dataclass
class FrameRecord:
    """跟踪阶段一帧的记录；框缺失时对应坐标为 NaN"""
    frame: int
    time: float
    box: BoundingBox = None
    confidence: float = math.nan
    gt_box: BoundingBox = None
    est_depth: float = math.nan
    true_distance: float = math.nan
    target_arc: float = 0.0
    processing_time: float = math.nan


@dataclass
class TrialLog:
    """
    一次试验的日志

    属性:
        frames: FrameRecord 列表（跟踪器初始化之后的帧）
        path_length: 目标在该场景中的总路径长度
        start_arc: 初始化时目标已走过的弧长
        failed: 身份初始化是否始终失败
    """
    frames: list = field(default_factory=list)
    path_length: float = 0.0
    start_arc: float = 0.0
    failed: bool = False

    def append(self, record):
        self.frames.append(record)

    def to_dataframe(self):
        rows = []
        for rec in self.frames:
            row = {f.name: getattr(rec, f.name) for f in fields(FrameRecord) if f.name not in ("box", "gt_box")}
            for prefix, box in (("", rec.box), ("gt_", rec.gt_box)):
                coords = box.to_array() if box is not None else [math.nan] * 4
                row.update({f"{prefix}{k}": float(v) for k, v in zip(("x1", "y1", "x2", "y2"), coords)})
            rows.append(row)
        df = pd.DataFrame(rows, columns=COLUMNS)
        df.attrs.update(path_length=self.path_length, start_arc=self.start_arc, failed=self.failed)
        return df

    def save(self, path):
        """写出 CSV；首行注释保存路径长度等元数据"""
        df = self.to_dataframe()
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"# path_length={self.path_length!r} start_arc={self.start_arc!r} failed={int(self.failed)}\n")
            df.to_csv(f, index=False)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            header = f.readline().lstrip("#").split()
            meta = dict(item.split("=", 1) for item in header)
            df = pd.read_csv(f)
        return cls.from_dataframe(df, float(meta["path_length"]), float(meta["start_arc"]), bool(int(meta["failed"])))

    @classmethod
    def from_dataframe(cls, df, path_length, start_arc=0.0, failed=False):
        log = cls(path_length=path_length, start_arc=start_arc, failed=failed)
        for row in df.itertuples(index=False):
            log.append(FrameRecord(
                frame=int(row.frame), time=float(row.time),
                box=_row_box(row, ""), confidence=float(row.confidence),
                gt_box=_row_box(row, "gt_"), est_depth=float(row.est_depth),
                true_distance=float(row.true_distance), target_arc=float(row.target_arc),
                processing_time=float(row.processing_time),
            ))
        return log


def _row_box(row, prefix):
    coords = [getattr(row, f"{prefix}{k}") for k in ("x1", "y1", "x2", "y2")]
    if any(math.isnan(c) for c in coords):
        return None
    return BoundingBox(*(float(c) for c in coords))


def compute_de(log):
    """
    距离误差：在跟踪器输出框的帧上，|估计距离 − 真实距离| 的平均值（米）
    """
    if not log.frames:
        raise ContractError("试验日志为空")
    errors = [abs(rec.est_depth - rec.true_distance) for rec in log.frames
              if rec.box is not None and not math.isnan(rec.est_depth)]
    if not errors:
        raise ContractError("试验日志中没有跟踪器输出框的帧")
    return float(np.mean(errors))


def compute_fs(log, iou_threshold=0.3, grace_frames=40):
    """
    跟随成功率：正确跟随期间目标走过的路径长度 / 总路径长度，限制在 [0, 1)

    参数:
        log: TrialLog
        iou_threshold: 跟踪框与目标真值框 IOU 不低于该值视为正确跟随
        grace_frames: 连续失败达到该帧数后，余下部分全部计为未跟随

    返回:
        float ∈ [0, 1)
    """
    if log.failed:
        return 0.0
    if log.path_length <= 0:
        raise ContractError(f"目标路径长度必须为正: {log.path_length}")
    credited, previous_arc, misses = 0.0, log.start_arc, 0
    for rec in log.frames:
        following = (rec.box is not None and rec.gt_box is not None
                     and iou(rec.box, rec.gt_box) >= iou_threshold)
        if following:
            misses = 0
            credited += rec.target_arc - previous_arc
        else:
            misses += 1
            if misses >= grace_frames:
                break
        previous_arc = rec.target_arc
    return float(min(max(credited / log.path_length, 0.0), FS_UPPER))


def compute_fps(log):
    """帧率 = 帧数 / 跟踪器累计处理时间（不含渲染与世界推进）"""
    times = [rec.processing_time for rec in log.frames if not math.isnan(rec.processing_time)]
    if not times:
        raise ContractError("没有已处理的帧")
    total = float(np.sum(times))
    if total <= 0:
        raise ContractError(f"累计处理时间必须为正: {total}")
    return len(times) / total
