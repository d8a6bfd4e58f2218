"""
序列数据模块
功能：录制序列的读写（.rgbd 帧文件、gt.csv 标注、world.csv 动捕日志），
按序列划分 70/30 训练/评估集，并抽取模板/搜索训练对

.rgbd 帧格式（小端）: 魔数 "RGBD" | u32 宽 | u32 高 | H×W×3 u8 RGB | H×W u16 深度（毫米）
"""

import struct
from pathlib import Path

import numpy as np
import pandas as pd

from bbox import BoundingBox
from errors import FormatError, StartupError
from rgbd import D_MAX, RgbdFrame
from trainer import TrainingPair


FRAME_MAGIC = b"RGBD"
GT_COLUMNS = ["frame", "agent", "x1", "y1", "x2", "y2", "visible"]
WORLD_COLUMNS = ["frame", "body", "x", "y", "theta"]


def encode_frame(frame):
    """RgbdFrame → .rgbd 字节串（RGB 量化到 8 位，深度量化到毫米）"""
    rgb = np.round(frame.rgb * 255.0).astype("<u1")
    depth = np.round(np.clip(frame.depth, 0.0, 65.535) * 1000.0).astype("<u2")
    return FRAME_MAGIC + struct.pack("<II", frame.width, frame.height) + rgb.tobytes() + depth.tobytes()


def decode_frame(blob, timestamp=0.0, d_max=D_MAX, source="<bytes>"):
    if blob[:4] != FRAME_MAGIC:
        raise FormatError(f"{source} 不是 RGBD 帧（魔数 {blob[:4]!r}）")
    width, height = struct.unpack_from("<II", blob, 4)
    n = width * height
    expected = 12 + 3 * n + 2 * n
    if len(blob) != expected:
        raise FormatError(f"{source} 长度 {len(blob)} 与 {width}×{height} 帧应有的 {expected} 字节不符")
    rgb = np.frombuffer(blob, dtype="<u1", count=3 * n, offset=12).reshape(height, width, 3)
    depth = np.frombuffer(blob, dtype="<u2", count=n, offset=12 + 3 * n).reshape(height, width)
    return RgbdFrame(rgb=rgb / 255.0, depth=depth / 1000.0, timestamp=timestamp, d_max=d_max)


def write_frame(path, frame):
    Path(path).write_bytes(encode_frame(frame))


def read_frame(path, timestamp=0.0, d_max=D_MAX):
    return decode_frame(Path(path).read_bytes(), timestamp, d_max, source=str(path))


class SequenceWriter:
    """逐帧写出一个录制序列"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"无法创建序列目录 {self.out_dir}: {exc}") from exc
        self.gt_rows = []
        self.world_rows = []
        self.frame_count = 0

    def add_frame(self, frame, gt_boxes, positions):
        """
        追加一帧

        参数:
            frame: RgbdFrame
            gt_boxes: 每个人的真值框（不可见为 None）
            positions: [(名称, x, y, theta), ...]，机器人在首位
        """
        index = self.frame_count
        write_frame(self.out_dir / f"{index:06d}.rgbd", frame)
        for agent, box in enumerate(gt_boxes):
            coords = box.to_array() if box is not None else np.zeros(4)
            self.gt_rows.append([index, agent, *coords, int(box is not None)])
        for body, x, y, theta in positions:
            self.world_rows.append([index, body, x, y, theta])
        self.frame_count += 1

    def close(self):
        pd.DataFrame(self.gt_rows, columns=GT_COLUMNS).to_csv(
            self.out_dir / "gt.csv", index=False, float_format="%.6f")
        pd.DataFrame(self.world_rows, columns=WORLD_COLUMNS).to_csv(
            self.out_dir / "world.csv", index=False, float_format="%.6f")
        return self.out_dir


class SequenceReader:
    """录制序列读取器"""

    def __init__(self, seq_dir, d_max=D_MAX, verbose=False):
        """
        初始化读取器

        参数:
            seq_dir: 序列目录
            d_max: 深度上限
            verbose: 是否打印序列信息
        """
        self.seq_dir = Path(seq_dir)
        self.d_max = d_max
        self.frame_paths = sorted(self.seq_dir.glob("*.rgbd"))
        if not self.frame_paths:
            raise FormatError(f"{self.seq_dir} 中没有 .rgbd 帧")
        self.gt = pd.read_csv(self.seq_dir / "gt.csv")
        world_path = self.seq_dir / "world.csv"
        self.world = pd.read_csv(world_path) if world_path.exists() else None
        if verbose:
            print(f"序列加载成功: {self.seq_dir.name}")
            print(f"  - 帧数: {self.frame_count}")
            print(f"  - 人数: {self.agent_count}")

    @property
    def frame_count(self):
        return len(self.frame_paths)

    @property
    def agent_count(self):
        return int(self.gt["agent"].nunique())

    def frame(self, index):
        return read_frame(self.frame_paths[index], d_max=self.d_max)

    def box(self, index, agent=0):
        """某帧某人的真值框；不可见时返回 None"""
        row = self.gt[(self.gt["frame"] == index) & (self.gt["agent"] == agent)]
        if row.empty or not int(row["visible"].iloc[0]):
            return None
        x1, y1, x2, y2 = row[["x1", "y1", "x2", "y2"]].iloc[0]
        return BoundingBox(float(x1), float(y1), float(x2), float(y2))

    def visible_frames(self, agent=0):
        rows = self.gt[(self.gt["agent"] == agent) & (self.gt["visible"] == 1)]
        return sorted(int(f) for f in rows["frame"])


def list_sequences(corpus_dir):
    """语料目录下的所有序列目录（含 gt.csv）"""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise StartupError(f"数据目录不存在: {corpus_dir}")
    sequences = sorted(p for p in corpus_dir.iterdir() if (p / "gt.csv").exists())
    if not sequences:
        raise StartupError(f"数据目录为空: {corpus_dir}")
    return sequences


def split_sequences(sequences, train_fraction=0.7, seed=0):
    """
    按序列随机划分训练/评估集（避免同一序列的帧同时出现在两边）

    返回:
        (训练序列列表, 评估序列列表)
    """
    sequences = list(sequences)
    order = np.random.default_rng(seed).permutation(len(sequences))
    n_train = int(round(len(sequences) * train_fraction))
    return [sequences[i] for i in order[:n_train]], [sequences[i] for i in order[n_train:]]


def build_pairs(reader, count, max_gap=50, rng=None):
    """
    在一个序列内抽取训练对：两帧目标都可见且相距不超过 max_gap 帧

    返回:
        TrainingPair 列表
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    visible = reader.visible_frames()
    if len(visible) < 2:
        return []
    cache = {}

    def load(index):
        if index not in cache:
            cache[index] = reader.frame(index)
        return cache[index]

    pairs = []
    for _ in range(count):
        i = int(rng.choice(visible))
        candidates = [j for j in visible if j != i and abs(j - i) <= max_gap]
        if not candidates:
            continue
        j = int(rng.choice(candidates))
        pairs.append(TrainingPair(load(i), reader.box(i), load(j), reader.box(j)))
    return pairs


def load_pairs(sequences, count_per_sequence, max_gap=50, seed=0, d_max=D_MAX):
    """从多个序列抽取训练对（顺序与随机性由 seed 决定）"""
    rng = np.random.default_rng(seed)
    pairs = []
    for seq_dir in sequences:
        pairs.extend(build_pairs(SequenceReader(seq_dir, d_max), count_per_sequence, max_gap, rng))
    return pairs
