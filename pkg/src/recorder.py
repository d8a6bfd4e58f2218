"""
录制模块
功能：用真值伺服的脚本跟随者运行仿真，把 RGB-D 帧与标注写成训练语料
"""

from pathlib import Path

import numpy as np

from bbox import BoundingBox
from controller import controllers_from_config, follow_control
from renderer import CameraModel, agent_range, ground_truth_bbox, project_agent, rasterize, render_from_config
from sequence_io import SequenceWriter
from world import SCENARIOS, make_world, scenario, step_world


def _servo_box(world, camera):
    """目标投影框（未裁剪、无视遮挡），用于真值伺服"""
    proj = project_agent(world, camera, world.target_index)
    if proj is None:
        return None, None
    u1, v1, u2, v2, _ = proj
    box = BoundingBox(u1 / camera.width, v1 / camera.height, u2 / camera.width, v2 / camera.height)
    return box, agent_range(world, camera, world.target_index)


def record_command(scenario_name, seed, out_dir, config, subject="A", verbose=False):
    """
    录制一个序列

    参数:
        scenario_name: 场景名
        seed: 随机种子（身份向量与渲染噪声）
        out_dir: 输出目录
        config: Config
        subject: 受试者 A/B
        verbose: 是否打印进度

    返回:
        (输出目录, 录制帧数)
    """
    root = np.random.SeedSequence([int(seed), 0 if subject.upper() == "A" else 1])
    world_seq, render_seq = root.spawn(2)
    render_rng = np.random.default_rng(render_seq)

    scn = scenario(scenario_name, config, subject)
    world = make_world(scn, np.random.default_rng(world_seq), config)
    camera = CameraModel.from_config(config)
    linear, angular = controllers_from_config(config)
    dt = config["scenario.dt"]
    stride = max(int(config["record.frame_stride"]), 1)
    timeout = config["harness.timeout"]
    writer = SequenceWriter(out_dir)

    while True:
        if world.steps % stride == 0:
            raster = rasterize(world, camera)
            frame = render_from_config(world, camera, config, render_rng)
            boxes = [ground_truth_bbox(world, camera, i, raster=raster,
                                       visible_fraction=config["render.visible_fraction"])
                     for i in range(len(world.agents))]
            positions = [("robot", world.robot.x, world.robot.y, world.robot.theta)]
            positions += [(f"agent{i}", a.x, a.y, a.facing) for i, a in enumerate(world.agents)]
            writer.add_frame(frame, boxes, positions)
        if world.target.finished or world.time >= timeout:
            break
        box, depth = _servo_box(world, camera)
        v, omega = follow_control(box, depth, linear, angular, dt, config["control.desired_distance"])
        world = step_world(world, dt, command=(v, omega), trigger_steps=config["scenario.follow_trigger_steps"])

    writer.close()
    if verbose:
        print(f"  已录制 {Path(out_dir).name}: {writer.frame_count} 帧, {len(world.agents)} 人")
    return Path(out_dir), writer.frame_count


def corpus_plan(count=45):
    """场景轮换，每轮完四种场景后换受试者，使每个 (场景, 受试者) 组合都出现"""
    return [(i, SCENARIOS[i % len(SCENARIOS)], "AB"[(i // len(SCENARIOS)) % 2]) for i in range(count)]


def generate_corpus(out_dir, config, count=45, verbose=False):
    """
    生成默认语料：按 corpus_plan 录制，种子 0..count−1

    返回:
        序列目录列表
    """
    out_dir = Path(out_dir)
    sequences = []
    for i, name, subject in corpus_plan(count):
        seq_dir, _ = record_command(name, i, out_dir / f"seq_{i:03d}_{name}_{subject}", config,
                                    subject=subject, verbose=verbose)
        sequences.append(seq_dir)
    return sequences
