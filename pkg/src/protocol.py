"""
实验协议模块
功能：按 受试者 × 跟踪器 × 场景 × 试验 的嵌套循环运行闭环跟随实验，
计算 DE / FS / FPS 并汇总为 MetricsReport（可保存为 UCFR 二进制）
"""

import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass
from itertools import repeat
from pathlib import Path

import numpy as np
import pandas as pd

from baseline_tracker import BaselineTracker
from controller import controllers_from_config, follow_control
from dtrd_model import TrackerConfig
from dtrd_tracker import DTRDTracker
from errors import FormatError, StartupError
from metrics import FrameRecord, TrialLog, compute_de, compute_fps, compute_fs
from perception import FaceEmbedding, IdentityGallery, initialize_target, load_gallery
from renderer import CameraModel, ground_truth_bbox, render_from_config
from rgbd import median_depth
from world import SCENARIOS, make_world, scenario, step_world


TRACKERS = ("baseline", "dtrd", "dtrd_nodepth")
SUBJECTS = ("A", "B")
REPORT_MAGIC = b"UCFR"
REPORT_VERSION = 1


@dataclass(frozen=True)
class ExperimentSpec:
    """实验循环的取值范围"""
    subjects: tuple = ("A", "B")
    trackers: tuple = ("baseline", "dtrd")
    distractor_counts: tuple = (0, 1, 2)
    two_distractor_variants: tuple = ("cross", "parallel")
    trials: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("subjects", "trackers", "distractor_counts", "two_distractor_variants"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.trials < 1:
            raise ValueError(f"trials 必须 ≥ 1: {self.trials}")
        if not self.trackers:
            raise ValueError("跟踪器列表不能为空")
        for tracker in self.trackers:
            if tracker not in TRACKERS:
                raise ValueError(f"未知跟踪器: {tracker}（可选 {', '.join(TRACKERS)}）")
        for subject in self.subjects:
            if subject.upper() not in SUBJECTS:
                raise ValueError(f"未知受试者: {subject}")
        for count in self.distractor_counts:
            if count not in (0, 1, 2):
                raise ValueError(f"干扰者数量只能是 0、1、2: {count}")
        for variant in self.two_distractor_variants:
            if variant not in ("cross", "parallel"):
                raise ValueError(f"未知双干扰者变体: {variant}")

    @classmethod
    def from_config(cls, config):
        e = config.section("experiment")
        return cls(subjects=e["subjects"], trackers=e["trackers"], distractor_counts=e["distractor_counts"],
                   two_distractor_variants=e["two_distractor_variants"], trials=e["trials"], seed=e["seed"])

    def scenarios(self):
        names = []
        for count in self.distractor_counts:
            if count == 0:
                names.append("none")
            elif count == 1:
                names.append("one_cross")
            else:
                names.extend(f"two_{variant}" for variant in self.two_distractor_variants)
        return names

    def cells(self):
        """按 受试者 → 跟踪器 → 场景 → 试验 的顺序列出所有试验"""
        return [TrialCell(subject, tracker, name, trial)
                for subject in self.subjects
                for tracker in self.trackers
                for name in self.scenarios()
                for trial in range(1, self.trials + 1)]


@dataclass(frozen=True)
class TrialCell:
    subject: str
    tracker: str
    scenario: str
    trial: int

    def seed_sequence(self, seed):
        """试验种子与跟踪器无关，所有跟踪器面对完全相同的世界与噪声"""
        return np.random.SeedSequence([int(seed), SUBJECTS.index(self.subject.upper()),
                                       SCENARIOS.index(self.scenario), int(self.trial)])


@dataclass(frozen=True)
class TrialResult:
    subject: str
    tracker: str
    scenario: str
    trial: int
    de: float
    fs: float
    fps: float
    failed: bool = False


class FrameClock:
    """跟踪器处理时间的计时方式：wall 为真实时间，fixed 为固定值（报告可逐字节复现）"""

    def __init__(self, mode="wall", fixed_frame_time=0.025):
        if mode not in ("wall", "fixed"):
            raise ValueError(f"未知计时方式: {mode}")
        if fixed_frame_time <= 0:
            raise ValueError(f"固定帧时间必须为正: {fixed_frame_time}")
        self.mode = mode
        self.fixed_frame_time = fixed_frame_time

    def measure(self, fn, *args):
        if self.mode == "fixed":
            return fn(*args), self.fixed_frame_time
        start = time.perf_counter()
        result = fn(*args)
        return result, time.perf_counter() - start


def make_tracker(name, model, tracker_config):
    if name == "baseline":
        return BaselineTracker()
    if model is None:
        raise StartupError(f"跟踪器 {name} 需要已训练的 DTRD 检查点")
    return DTRDTracker(model, tracker_config, use_depth=(name == "dtrd"), name=name)


def run_trial(cell, spec, config, model=None):
    """
    运行一次试验

    参数:
        cell: TrialCell
        spec: ExperimentSpec（提供种子）
        config: Config
        model: DTRDModel（基线跟踪器不需要）

    返回:
        (TrialResult, TrialLog)
    """
    world_seq, render_seq, percept_seq = cell.seed_sequence(spec.seed).spawn(3)
    render_rng = np.random.default_rng(render_seq)
    percept_rng = np.random.default_rng(percept_seq)

    gallery_path = config["data.gallery"]
    gallery_latent = None
    if gallery_path:
        gallery_latent = load_gallery(gallery_path, config["perception.threshold"]).target_embedding.values
    scn = scenario(cell.scenario, config, cell.subject)
    world = make_world(scn, np.random.default_rng(world_seq), config, target_latent=gallery_latent)
    gallery = IdentityGallery(FaceEmbedding(world.target.latent), config["perception.threshold"])

    camera = CameraModel.from_config(config)
    tracker = make_tracker(cell.tracker, model, TrackerConfig.from_config(config))
    linear, angular = controllers_from_config(config)
    clock = FrameClock(config["harness.clock"], config["harness.fixed_frame_time"])
    dt = config["scenario.dt"]
    trigger = config["scenario.follow_trigger_steps"]
    desired = config["control.desired_distance"]
    central = config["control.depth_central_fraction"]
    visible_fraction = config["render.visible_fraction"]

    log = TrialLog(path_length=world.target.path.length)
    for _ in range(config["harness.init_attempts"]):
        frame = render_from_config(world, camera, config, render_rng)
        box = initialize_target(world, camera, gallery, percept_rng, config)
        if box is not None:
            tracker.initialize(frame, box)
            break
        world = step_world(world, dt, command=(0.0, 0.0), trigger_steps=trigger)
    else:
        log.failed = True
        return TrialResult(cell.subject, cell.tracker, cell.scenario, cell.trial,
                           math.nan, 0.0, math.nan, failed=True), log

    log.start_arc = world.target.arc
    v, omega = 0.0, 0.0
    index = 0
    while not world.target.finished and world.time < config["harness.timeout"]:
        world = step_world(world, dt, command=(v, omega), trigger_steps=trigger)
        frame = render_from_config(world, camera, config, render_rng)
        (box, confidence), elapsed = clock.measure(tracker.track, frame)
        depth = median_depth(frame, box, central) if box is not None else math.nan
        v, omega = follow_control(box, depth, linear, angular, dt, desired)
        gt = ground_truth_bbox(world, camera, world.target_index, visible_fraction=visible_fraction)
        log.append(FrameRecord(frame=index, time=world.time, box=box, confidence=confidence, gt_box=gt,
                               est_depth=depth, true_distance=world.target_distance(),
                               target_arc=world.target.arc, processing_time=elapsed))
        index += 1

    has_box = any(rec.box is not None for rec in log.frames)
    de = compute_de(log) if has_box else math.nan
    fs = compute_fs(log, config["metrics.fs_iou_threshold"], config["metrics.fs_grace_frames"])
    fps = compute_fps(log) if log.frames else math.nan
    return TrialResult(cell.subject, cell.tracker, cell.scenario, cell.trial, de, fs, fps), log


def _run_cell(cell, spec, config, model, logs_dir, verbose):
    result, log = run_trial(cell, spec, config, model)
    if logs_dir is not None:
        log.save(Path(logs_dir) / f"{cell.subject}_{cell.tracker}_{cell.scenario}_{cell.trial}.csv")
    if verbose:
        status = "初始化失败" if result.failed else f"DE={result.de:.3f} m, FS={result.fs:.3f}, FPS={result.fps:.1f}"
        print(f"  [{cell.subject}|{cell.tracker}|{cell.scenario}|试验{cell.trial}] {status}")
    return result


def run_protocol(spec, config, model=None, logs_dir=None, workers=1, verbose=False):
    """
    运行完整实验协议

    参数:
        spec: ExperimentSpec
        config: Config
        model: 已训练的 DTRDModel（列表中有 DTRD 跟踪器时必须提供）
        logs_dir: 逐帧日志输出目录（可选）
        workers: 并行进程数；结果按协议顺序合并
        verbose: 是否打印每次试验的指标

    返回:
        MetricsReport
    """
    if model is None and any(t != "baseline" for t in spec.trackers):
        raise StartupError("实验包含 DTRD 跟踪器，但没有提供检查点")
    if logs_dir is not None:
        Path(logs_dir).mkdir(parents=True, exist_ok=True)
    cells = spec.cells()
    if verbose:
        print(f"共 {len(cells)} 次试验（{len(spec.subjects)} 受试者 × {len(spec.trackers)} 跟踪器 × "
              f"{len(spec.scenarios())} 场景 × {spec.trials} 试验）")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells, repeat(spec), repeat(config), repeat(model),
                                    repeat(logs_dir), repeat(verbose)))
    else:
        results = [_run_cell(cell, spec, config, model, logs_dir, verbose) for cell in cells]
    return MetricsReport(results, seed=spec.seed, fps_realtime=config["metrics.fps_realtime"])


class MetricsReport:
    """逐试验指标与按 (跟踪器, 场景) / (受试者, 跟踪器, 场景) 的汇总"""

    def __init__(self, rows, seed=0, fps_realtime=20.0):
        self.rows = list(rows)
        self.seed = seed
        self.fps_realtime = fps_realtime
        for row in self.rows:
            if not 0.0 <= row.fs < 1.0:
                raise ValueError(f"FS 必须在 [0, 1) 内: {row}")

    def trials_dataframe(self):
        df = pd.DataFrame([astuple(r) for r in self.rows],
                          columns=["subject", "tracker", "scenario", "trial", "de", "fs", "fps", "failed"])
        df["realtime"] = df["fps"] >= self.fps_realtime
        return df

    def aggregate(self, by=("tracker", "scenario")):
        """
        按分组求各指标的均值与标准差（总体标准差，失败试验的 NaN 被忽略）

        返回:
            DataFrame，分组顺序与试验出现顺序一致
        """
        df = self.trials_dataframe()
        grouped = df.groupby(list(by), sort=False)
        out = grouped[["de", "fs", "fps"]].agg(["mean", lambda s: s.std(ddof=0)])
        out.columns = [f"{metric}_{'mean' if stat == 'mean' else 'std'}" for metric, stat in out.columns]
        out["trials"] = grouped.size()
        out["failed"] = grouped["failed"].sum().astype(int)
        out["realtime"] = out["fps_mean"] >= self.fps_realtime
        return out.reset_index()

    def slow_trackers(self):
        """平均帧率低于实时要求的跟踪器"""
        fps = self.trials_dataframe().groupby("tracker", sort=False)["fps"].mean()
        return [name for name, value in fps.items() if not value >= self.fps_realtime]


def _pack_str(text):
    encoded = text.encode("utf-8")
    return struct.pack("<H", len(encoded)) + encoded


def _unpack_str(blob, offset):
    (n,) = struct.unpack_from("<H", blob, offset)
    return blob[offset + 2:offset + 2 + n].decode("utf-8"), offset + 2 + n


def save_report(path, report):
    """
    保存报告（小端）:
        魔数 "UCFR" | 版本 u32 | 种子 i64 | 实时帧率阈值 f64 | 行数 u32
        每行: 受试者/跟踪器/场景字符串 (u16 长度 + UTF-8) | 试验 u32 | DE f64 | FS f64 | FPS f64 | 失败 u8
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [REPORT_MAGIC, struct.pack("<IqdI", REPORT_VERSION, report.seed, report.fps_realtime, len(report.rows))]
    for r in report.rows:
        chunks += [_pack_str(r.subject), _pack_str(r.tracker), _pack_str(r.scenario),
                   struct.pack("<IdddB", r.trial, r.de, r.fs, r.fps, int(r.failed))]
    path.write_bytes(b"".join(chunks))


def load_report(path):
    path = Path(path)
    if not path.exists():
        raise StartupError(f"报告文件不存在: {path}")
    blob = path.read_bytes()
    if blob[:4] != REPORT_MAGIC:
        raise FormatError(f"{path} 不是 UCFR 报告（魔数 {blob[:4]!r}）")
    header = struct.Struct("<IqdI")
    row_struct = struct.Struct("<IdddB")
    rows = []
    try:
        version, seed, fps_realtime, count = header.unpack_from(blob, 4)
        if version != REPORT_VERSION:
            raise FormatError(f"{path} 的报告版本 {version} 不受支持")
        offset = 4 + header.size
        for _ in range(count):
            subject, offset = _unpack_str(blob, offset)
            tracker, offset = _unpack_str(blob, offset)
            name, offset = _unpack_str(blob, offset)
            trial, de, fs, fps, failed = row_struct.unpack_from(blob, offset)
            offset += row_struct.size
            rows.append(TrialResult(subject, tracker, name, trial, de, fs, fps, bool(failed)))
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} 已截断或损坏") from exc
    if offset != len(blob):
        raise FormatError(f"{path} 末尾有 {len(blob) - offset} 字节多余数据")
    return MetricsReport(rows, seed=seed, fps_realtime=fps_realtime)
