"""
配置模块
功能：读取 `section.key = value` 格式的 UTF-8 配置文件，与默认值合并
环境变量 UCF_SEED 覆盖 experiment.seed
"""

import os
from pathlib import Path

from errors import ConfigError


DEFAULTS = {
    # 实验协议
    "experiment.seed": 0,
    "experiment.subjects": ["A", "B"],
    "experiment.trackers": ["baseline", "dtrd"],
    "experiment.distractor_counts": [0, 1, 2],
    "experiment.two_distractor_variants": ["cross", "parallel"],
    "experiment.trials": 3,

    # 受试者预设（目标体型与步行速度）
    "subjects.a_height": 1.7,
    "subjects.a_width": 0.5,
    "subjects.a_speed": 0.8,
    "subjects.b_height": 1.62,
    "subjects.b_width": 0.46,
    "subjects.b_speed": 0.7,

    # DTRD 模型尺寸
    "tracker.template_size": 32,
    "tracker.search_size": 64,
    "tracker.stride": 8,
    "tracker.channels": 64,
    "tracker.model_dim": 128,
    "tracker.encoder_blocks": 6,
    "tracker.decoder_blocks": 6,
    "tracker.heads": 4,
    "tracker.ffn_dim": 256,
    "tracker.search_area_factor": 4.0,
    "tracker.positional_embedding": True,
    "tracker.min_box_size": 1e-4,
    "tracker.d_max": 10.0,

    # 训练配方
    "train.epochs": 10,
    "train.lr_model": 1e-4,
    "train.lr_backbone": 1e-5,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.weight_decay": 1e-4,
    "train.lambda_iou": 2.0,
    "train.lambda_l1": 5.0,
    "train.batch_size": 8,
    "train.pairs_per_sequence": 20,
    "train.max_frame_gap": 50,
    "train.train_fraction": 0.7,
    "train.center_jitter": 0.5,
    "train.scale_jitter": 0.15,
    "train.first_layer_in_model_group": True,
    "train.seed": 0,

    # 路径
    "data.corpus_dir": "data/corpus",
    "data.corpus_size": 45,
    "data.checkpoint": "results/dtrd.ckpt",
    "data.results_dir": "results",
    "data.gallery": "",

    # 录制
    "record.frame_stride": 5,

    # 相机
    "camera.width": 128,
    "camera.height": 96,
    "camera.hfov": 1.5,
    "camera.mount_height": 1.0,

    # 渲染
    "render.noise": True,
    "render.sigma_rgb": 0.01,
    "render.sigma_depth": 0.02,
    "render.background": [0.62, 0.62, 0.58],
    "render.clothing": [0.15, 0.25, 0.55],
    "render.hair": [0.10, 0.08, 0.06],
    "render.visible_fraction": 0.05,

    # 场景几何（米 / 秒）
    "scenario.rect_width": 4.0,
    "scenario.rect_length": 6.0,
    "scenario.start_distance": 2.0,
    "scenario.distractor_speed": 0.8,
    "scenario.target_start_delay": 1.0,
    "scenario.dt": 0.05,
    "scenario.follow_trigger_steps": 10,
    "scenario.cross_half_span": 2.5,
    "scenario.first_cross_arc": 3.5,
    "scenario.first_cross_gap": 0.9,
    "scenario.second_cross_arc": 8.5,
    "scenario.second_cross_gap": 0.4,
    "scenario.parallel_offset": 0.8,
    "scenario.parallel_cut_arc": 3.0,
    "scenario.parallel_gaps": [0.9, 0.45],

    # 身份初始化
    "perception.threshold": 0.9,
    "perception.face_sigma": 0.05,
    "perception.face_max_distance": 4.0,
    "perception.face_fraction": 0.2,
    "perception.head_visible_fraction": 0.5,
    "perception.person_jitter": 0.02,

    # PI 控制
    "control.desired_distance": 2.0,
    "control.kp_linear": 0.8,
    "control.ki_linear": 0.5,
    "control.v_min": -0.3,
    "control.v_max": 1.2,
    "control.integral_limit_linear": 4.0,
    "control.kp_angular": 2.0,
    "control.ki_angular": 0.2,
    "control.omega_limit": 1.5,
    "control.integral_limit_angular": 2.0,
    "control.depth_central_fraction": 0.5,

    # 指标
    "metrics.fs_iou_threshold": 0.3,
    "metrics.fs_grace_frames": 40,
    "metrics.fps_realtime": 20.0,

    # 实验驱动
    "harness.timeout": 120.0,
    "harness.init_attempts": 100,
    "harness.clock": "wall",
    "harness.fixed_frame_time": 0.025,
    "harness.workers": 1,
}


def _parse_scalar(text, kind, key):
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key} 需要布尔值，得到 '{text}'")
    if kind is int:
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{key} 需要整数，得到 '{text}'") from exc
    if kind is float:
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key} 需要实数，得到 '{text}'") from exc
    return text


def _parse_value(key, text):
    default = DEFAULTS[key]
    if isinstance(default, list):
        kind = type(default[0]) if default else str
        items = [item.strip() for item in text.split(",") if item.strip()]
        return [_parse_scalar(item, kind, key) for item in items]
    return _parse_scalar(text, type(default), key)


class Config:
    """扁平的配置字典，键为 `section.key`"""

    def __init__(self, values=None):
        self.values = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}
        for key, value in (values or {}).items():
            self[key] = value

    def __getitem__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"未知配置键: {key}") from None

    def __setitem__(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"未知配置键: {key}")
        self.values[key] = value

    def section(self, name):
        """返回某一节的 {key: value}（去掉节名前缀）"""
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def copy(self):
        return Config(self.values)


def parse_config_text(text, source="<string>"):
    """解析配置文本，返回 {键: 值}"""
    parsed = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno} 缺少 '=': {raw.strip()}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno} 未知配置键: {key}")
        parsed[key] = _parse_value(key, value)
    return parsed


def load_config(path=None, environ=None):
    """
    加载配置

    参数:
        path: 配置文件路径；为 None 时只用默认值
        environ: 环境变量字典（默认 os.environ），UCF_SEED 覆盖 experiment.seed

    返回:
        Config
    """
    config = Config()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"配置文件不存在: {path}")
        for key, value in parse_config_text(path.read_text(encoding="utf-8"), str(path)).items():
            config[key] = value
    environ = os.environ if environ is None else environ
    if environ.get("UCF_SEED"):
        config["experiment.seed"] = _parse_scalar(environ["UCF_SEED"], int, "UCF_SEED")
    return config
