"""
渲染模块
功能：针孔相机把每个人渲染成直立的公告板矩形，按由远到近的画家算法处理遮挡，
输出 RGB-D 帧与真值边界框
"""

import math
from dataclasses import dataclass

import numpy as np

from bbox import BoundingBox
from errors import ContractError
from rgbd import D_MAX, RgbdFrame


NEAR_PLANE = 0.1
HEAD_FRACTION = 0.2
FACING_COS = 0.5


@dataclass(frozen=True)
class CameraModel:
    """安装在机器人上、朝向机器人前方的针孔相机"""
    width: int = 128
    height: int = 96
    hfov: float = 1.5
    mount_height: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.hfov < math.pi:
            raise ValueError(f"水平视场角必须在 (0, π) 内: {self.hfov}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"图像尺寸必须为正: {self.width}×{self.height}")

    @classmethod
    def from_config(cls, config):
        return cls(**config.section("camera"))

    @property
    def focal(self):
        return 0.5 * self.width / math.tan(0.5 * self.hfov)

    def to_camera(self, robot, x, y):
        """世界点 → (右向偏移, 前向深度)"""
        dx, dy = x - robot.x, y - robot.y
        forward = dx * math.cos(robot.theta) + dy * math.sin(robot.theta)
        right = dx * math.sin(robot.theta) - dy * math.cos(robot.theta)
        return right, forward


def project_agent(state, camera, index):
    """
    人的公告板在图像上的投影（未裁剪）

    返回:
        (u1, v1, u2, v2, z) 像素坐标与平面深度；在相机后方时返回 None
    """
    agent = state.agents[index]
    right, z = camera.to_camera(state.robot, agent.x, agent.y)
    if z <= NEAR_PLANE:
        return None
    f = camera.focal
    cx, cy = 0.5 * camera.width, 0.5 * camera.height
    u1 = cx + f * (right - 0.5 * agent.width) / z
    u2 = cx + f * (right + 0.5 * agent.width) / z
    v1 = cy - f * (agent.height - camera.mount_height) / z
    v2 = cy + f * camera.mount_height / z
    return u1, v1, u2, v2, z


def agent_range(state, camera, index):
    """相机到人的公告板中心的水平直线距离（与动捕真值同一度量）"""
    agent = state.agents[index]
    right, z = camera.to_camera(state.robot, agent.x, agent.y)
    return math.hypot(right, z)


def _pixel_span(lo, hi, limit):
    """像素中心落在 [lo, hi) 内的整数下标区间"""
    start = int(min(max(math.ceil(lo - 0.5), 0), limit))
    stop = int(min(max(math.ceil(hi - 0.5), 0), limit))
    return start, stop


def is_facing_camera(state, index):
    agent = state.agents[index]
    dx, dy = state.robot.x - agent.x, state.robot.y - agent.y
    dist = math.hypot(dx, dy)
    if dist == 0:
        return False
    return (math.cos(agent.facing) * dx + math.sin(agent.facing) * dy) / dist > FACING_COS


def identity_tint(latent):
    """由身份向量决定的脸部颜色"""
    scaled = np.asarray(latent[:3]) * math.sqrt(len(latent))
    return np.clip(0.72 + 0.08 * scaled, 0.0, 1.0)


@dataclass
class Raster:
    """无噪声的渲染结果：颜色、深度、每像素的人编号（背景为 −1）、头部带掩码"""
    rgb: np.ndarray
    depth: np.ndarray
    ids: np.ndarray
    head: np.ndarray


def rasterize(state, camera, background=(0.62, 0.62, 0.58), hair=(0.10, 0.08, 0.06), d_max=D_MAX):
    """
    画家算法光栅化：按距离由远到近绘制，近处覆盖远处；
    深度栅格记录每个像素上可见的人到相机的距离

    返回:
        Raster
    """
    h, w = camera.height, camera.width
    rgb = np.empty((h, w, 3))
    rgb[...] = background
    depth = np.full((h, w), float(d_max))
    ids = np.full((h, w), -1, dtype=int)
    head = np.zeros((h, w), dtype=bool)

    projections = []
    for i in range(len(state.agents)):
        proj = project_agent(state, camera, i)
        if proj is not None:
            projections.append((agent_range(state, camera, i), i, proj))
    for dist, i, (u1, v1, u2, v2, _) in sorted(projections, key=lambda item: (-item[0], item[1])):
        c1, c2 = _pixel_span(u1, u2, w)
        r1, r2 = _pixel_span(v1, v2, h)
        if c1 >= c2 or r1 >= r2:
            continue
        agent = state.agents[i]
        band_end = _pixel_span(v1, v1 + HEAD_FRACTION * (v2 - v1), h)[1]
        rgb[r1:r2, c1:c2] = agent.clothing
        face = identity_tint(agent.latent) if is_facing_camera(state, i) else hair
        rgb[r1:band_end, c1:c2] = face
        depth[r1:r2, c1:c2] = min(dist, d_max)
        ids[r1:r2, c1:c2] = i
        head[r1:r2, c1:c2] = False
        head[r1:band_end, c1:c2] = True
    return Raster(rgb=rgb, depth=depth, ids=ids, head=head)


def render_rgbd(state, camera, rng=None, sigma_rgb=0.01, sigma_depth=0.02,
                background=(0.62, 0.62, 0.58), hair=(0.10, 0.08, 0.06), d_max=D_MAX):
    """
    渲染一帧 RGB-D

    参数:
        state: WorldState
        camera: CameraModel
        rng: numpy Generator；为 None 时不加噪声
        sigma_rgb, sigma_depth: 高斯像素噪声标准差

    返回:
        RgbdFrame（timestamp = 世界时间）
    """
    raster = rasterize(state, camera, background, hair, d_max)
    rgb, depth = raster.rgb, raster.depth
    if rng is not None:
        if sigma_rgb > 0:
            rgb = rgb + rng.normal(0.0, sigma_rgb, size=rgb.shape)
        if sigma_depth > 0:
            depth = depth + rng.normal(0.0, sigma_depth, size=depth.shape)
    return RgbdFrame(rgb=rgb, depth=depth, timestamp=state.time, d_max=d_max)


def render_from_config(state, camera, config, rng=None):
    """按配置中的颜色与噪声参数渲染"""
    r = config.section("render")
    return render_rgbd(state, camera, rng=rng if r["noise"] else None,
                       sigma_rgb=r["sigma_rgb"], sigma_depth=r["sigma_depth"],
                       background=tuple(r["background"]), hair=tuple(r["hair"]),
                       d_max=config["tracker.d_max"])


def ground_truth_bbox(state, camera, agent_index, raster=None, visible_fraction=0.05):
    """
    人的可见范围对应的真值框

    参数:
        agent_index: 人的编号
        raster: 已有的光栅化结果（缺省时重新光栅化）
        visible_fraction: 可见像素占完整投影像素的最低比例

    返回:
        归一化 BoundingBox；可见比例不足时返回 None
    """
    if not 0 <= agent_index < len(state.agents):
        raise ContractError(f"人的编号越界: {agent_index}（共 {len(state.agents)} 人）")
    proj = project_agent(state, camera, agent_index)
    if proj is None:
        return None
    u1, v1, u2, v2, _ = proj
    full = (u2 - u1) * (v2 - v1)
    raster = raster if raster is not None else rasterize(state, camera)
    rows, cols = np.nonzero(raster.ids == agent_index)
    if rows.size == 0 or rows.size < visible_fraction * full:
        return None
    return BoundingBox(cols.min() / camera.width, rows.min() / camera.height,
                       (cols.max() + 1) / camera.width, (rows.max() + 1) / camera.height)


def head_visibility(state, camera, agent_index, raster):
    """头部带可见像素占完整头部带投影的比例"""
    proj = project_agent(state, camera, agent_index)
    if proj is None:
        return 0.0
    u1, v1, u2, v2, _ = proj
    full = (u2 - u1) * HEAD_FRACTION * (v2 - v1)
    visible = np.count_nonzero((raster.ids == agent_index) & raster.head)
    return float(visible / full) if full > 0 else 0.0
