"""
仿真世界模块
功能：差速机器人、按脚本行走的目标与干扰者、四种实验场景、动捕真值读取

坐标系（俯视）: x 向右，y 向上；机器人从 (0, 0) 出发朝向 +y
"""

import copy
import math
from dataclasses import dataclass

import numpy as np

from config import Config
from errors import ContractError


SCENARIOS = ("none", "one_cross", "two_cross", "two_parallel")
EMBEDDING_DIM = 128


@dataclass(frozen=True)
class AgentPath:
    """折线路径：按 speed 匀速行走，start_delay 秒后出发"""
    waypoints: tuple
    speed: float
    start_delay: float = 0.0
    stop_when_followed: bool = False

    def __post_init__(self):
        points = tuple((float(x), float(y)) for x, y in self.waypoints)
        object.__setattr__(self, "waypoints", points)
        if len(points) < 2:
            raise ValueError(f"路径至少需要 2 个路点，得到 {len(points)}")
        if self.speed <= 0:
            raise ValueError(f"速度必须为正: {self.speed}")
        if self.start_delay < 0:
            raise ValueError(f"出发延迟不能为负: {self.start_delay}")

    @property
    def segment_lengths(self):
        return [math.dist(a, b) for a, b in zip(self.waypoints[:-1], self.waypoints[1:])]

    @property
    def length(self):
        return float(sum(self.segment_lengths))

    def position_at(self, arc):
        """
        路径上弧长 arc 处的位置与行进方向

        返回:
            (x, y, heading)；arc 超出总长时停在终点（终点坐标精确返回）
        """
        arc = max(arc, 0.0)
        for (a, b), seg in zip(zip(self.waypoints[:-1], self.waypoints[1:]), self.segment_lengths):
            heading = math.atan2(b[1] - a[1], b[0] - a[0])
            if arc < seg:
                t = arc / seg
                return a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), heading
            arc -= seg
        a, b = self.waypoints[-2], self.waypoints[-1]
        return b[0], b[1], math.atan2(b[1] - a[1], b[0] - a[0])


@dataclass(frozen=True)
class SubjectPreset:
    """受试者预设：目标体型与步行速度"""
    name: str
    height: float
    width: float
    speed: float


def subject_preset(name, config=None):
    """读取受试者 A/B 的预设"""
    key = name.lower()
    if key not in ("a", "b"):
        raise ContractError(f"未知受试者: {name}")
    config = config if config is not None else Config()
    return SubjectPreset(name=name.upper(), height=config[f"subjects.{key}_height"],
                         width=config[f"subjects.{key}_width"], speed=config[f"subjects.{key}_speed"])


@dataclass
class Agent:
    """场景中的一个人（目标或干扰者）"""
    path: AgentPath
    width: float
    height: float
    clothing: tuple
    latent: np.ndarray
    is_target: bool = False
    initial_facing: float = None
    arc: float = 0.0
    x: float = 0.0
    y: float = 0.0
    facing: float = 0.0
    stopped: bool = False
    follow_steps: int = 0

    def __post_init__(self):
        x, y, heading = self.path.position_at(self.arc)
        self.x, self.y = x, y
        self.facing = heading if self.initial_facing is None else self.initial_facing

    @property
    def finished(self):
        return self.arc >= self.path.length


@dataclass
class RobotState:
    """机器人位姿 (x, y, θ) 与当前指令 (v, ω)"""
    x: float = 0.0
    y: float = 0.0
    theta: float = math.pi / 2
    v: float = 0.0
    omega: float = 0.0


@dataclass
class WorldState:
    time: float
    robot: RobotState
    agents: list
    steps: int = 0
    uniform_crowd: bool = True

    def __post_init__(self):
        targets = [a for a in self.agents if a.is_target]
        if len(targets) != 1:
            raise ValueError(f"必须恰好有一个目标，得到 {len(targets)}")
        if self.uniform_crowd and len({tuple(a.clothing) for a in self.agents}) > 1:
            raise ValueError("统一着装模式下所有人的衣服颜色必须相同")

    @property
    def target_index(self):
        return next(i for i, a in enumerate(self.agents) if a.is_target)

    @property
    def target(self):
        return self.agents[self.target_index]

    def target_distance(self):
        t = self.target
        return math.hypot(t.x - self.robot.x, t.y - self.robot.y)


@dataclass
class Scenario:
    """场景：各人的路径、机器人初始位姿和受试者"""
    name: str
    paths: list
    robot_pose: tuple
    subject: SubjectPreset
    target_facing: float = -math.pi / 2


def _cross_path(target_path, arc, gap, half_span, distractor_speed, target_delay):
    """在目标路径弧长 arc 处、目标身后 gap 米横穿的干扰者路径，到达交叉点的时刻与目标同步"""
    x, y, heading = target_path.position_at(arc)
    cx, cy = x - gap * math.cos(heading), y - gap * math.sin(heading)
    nx, ny = -math.sin(heading), math.cos(heading)
    start = (cx - half_span * nx, cy - half_span * ny)
    end = (cx + half_span * nx, cy + half_span * ny)
    meet_time = target_delay + arc / target_path.speed
    delay = max(meet_time - half_span / distractor_speed, 0.0)
    return AgentPath((start, end), distractor_speed, delay, stop_when_followed=True)


def _parallel_path(target_path, side, offset, cut_arc, gap, target_delay):
    """
    与目标并排同速行走，在 cut_arc 处斜插到目标身后 gap 米穿过目标路线

    斜插段长度 D 满足 D² = offset² + (D − gap)²，使干扰者与目标同时到达
    """
    x0, y0, heading = target_path.position_at(0.0)
    fx, fy = math.cos(heading), math.sin(heading)
    nx, ny = -math.sin(heading) * side, math.cos(heading) * side
    start = (x0 + offset * nx, y0 + offset * ny)
    turn = (start[0] + cut_arc * fx, start[1] + cut_arc * fy)
    advance = (offset ** 2 + gap ** 2) / (2.0 * gap)
    along = cut_arc + advance - gap
    cross = (x0 + along * fx, y0 + along * fy)
    end = (cross[0] + (cross[0] - turn[0]), cross[1] + (cross[1] - turn[1]))
    return AgentPath((start, turn, cross, end), target_path.speed, target_delay, stop_when_followed=True)


def scenario(name, config=None, subject="A"):
    """
    构建实验场景

    参数:
        name: none / one_cross / two_cross / two_parallel
        config: Config（缺省用默认值）
        subject: 受试者 A 或 B

    返回:
        Scenario；paths[0] 是目标沿矩形一圈的闭合路径
    """
    if name not in SCENARIOS:
        raise ContractError(f"未知场景: {name}（可选 {', '.join(SCENARIOS)}）")
    config = config if config is not None else Config()
    preset = subject_preset(subject, config)
    sc = config.section("scenario")

    d, length, width = sc["start_distance"], sc["rect_length"], sc["rect_width"]
    corners = ((0.0, d), (0.0, d + length), (width, d + length), (width, d), (0.0, d))
    delay = sc["target_start_delay"]
    target = AgentPath(corners, preset.speed, delay, stop_when_followed=False)
    paths = [target]

    if name in ("one_cross", "two_cross"):
        paths.append(_cross_path(target, sc["first_cross_arc"], sc["first_cross_gap"],
                                 sc["cross_half_span"], sc["distractor_speed"], delay))
    if name == "two_cross":
        paths.append(_cross_path(target, sc["second_cross_arc"], sc["second_cross_gap"],
                                 sc["cross_half_span"], sc["distractor_speed"], delay))
    if name == "two_parallel":
        for side, gap in zip((1, -1), sc["parallel_gaps"]):
            paths.append(_parallel_path(target, side, sc["parallel_offset"], sc["parallel_cut_arc"], gap, delay))

    return Scenario(name=name, paths=paths, robot_pose=(0.0, 0.0, math.pi / 2), subject=preset)


def random_latent(rng, orthogonal_to=()):
    """单位长度的 128 维身份向量，可要求与给定向量正交"""
    v = rng.normal(size=EMBEDDING_DIM)
    for u in orthogonal_to:
        v = v - np.dot(v, u) * u
    return v / np.linalg.norm(v)


def make_world(scn, rng, config=None, target_latent=None):
    """
    从场景创建初始世界状态

    参数:
        scn: Scenario
        rng: numpy Generator（生成身份向量）
        target_latent: 目标身份向量；缺省时随机生成

    返回:
        WorldState
    """
    config = config if config is not None else Config()
    clothing = tuple(config["render.clothing"])
    if target_latent is None:
        target_latent = random_latent(rng)
    target_latent = np.asarray(target_latent, dtype=np.float64)
    latents = [target_latent]
    agents = []
    for i, path in enumerate(scn.paths):
        if i > 0:
            latents.append(random_latent(rng, orthogonal_to=[target_latent]))
        agents.append(Agent(path=path, width=scn.subject.width, height=scn.subject.height,
                            clothing=clothing, latent=latents[i], is_target=(i == 0),
                            initial_facing=scn.target_facing if i == 0 else None))
    x, y, theta = scn.robot_pose
    return WorldState(time=0.0, robot=RobotState(x=x, y=y, theta=theta), agents=agents)


def followed_agent(state):
    """机器人朝向射线方向上夹角最小的人（只考虑前方），没有时返回 None"""
    r = state.robot
    best, best_angle = None, math.inf
    for i, agent in enumerate(state.agents):
        dx, dy = agent.x - r.x, agent.y - r.y
        forward = dx * math.cos(r.theta) + dy * math.sin(r.theta)
        if forward <= 0:
            continue
        angle = abs(math.atan2(-dx * math.sin(r.theta) + dy * math.cos(r.theta), forward))
        if angle < best_angle:
            best, best_angle = i, angle
    return best


def step_world(state, dt, command=None, trigger_steps=10):
    """
    推进一个时间步

    参数:
        state: WorldState（不会被修改）
        dt: 时间步长（秒）
        command: (v, ω) 指令；缺省沿用 state.robot 中的指令
        trigger_steps: 干扰者连续多少步被机器人"跟随"后永久停下

    返回:
        新的 WorldState
    """
    if dt <= 0:
        raise ValueError(f"dt 必须为正: {dt}")
    new = copy.deepcopy(state)
    r = new.robot
    if command is not None:
        r.v, r.omega = float(command[0]), float(command[1])
    r.x += r.v * math.cos(r.theta) * dt
    r.y += r.v * math.sin(r.theta) * dt
    r.theta += r.omega * dt

    t_old, t_new = state.time, state.time + dt
    for agent in new.agents:
        if agent.stopped or agent.finished:
            continue
        moving = max(t_new - agent.path.start_delay, 0.0) - max(t_old - agent.path.start_delay, 0.0)
        if moving <= 0:
            continue
        agent.arc = min(agent.arc + agent.path.speed * moving, agent.path.length)
        agent.x, agent.y, agent.facing = agent.path.position_at(agent.arc)

    followed = followed_agent(new)
    for i, agent in enumerate(new.agents):
        if i == followed and not agent.is_target and agent.path.stop_when_followed:
            agent.follow_steps += 1
            if agent.follow_steps >= trigger_steps:
                agent.stopped = True
        else:
            agent.follow_steps = 0

    new.time = t_new
    new.steps += 1
    return new


def optitrack(state):
    """动捕真值：机器人与所有人的精确位置 [(x, y), ...]，机器人在首位"""
    return [(state.robot.x, state.robot.y)] + [(a.x, a.y) for a in state.agents]
