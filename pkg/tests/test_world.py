"""
仿真世界测试
场景几何、运动学积分、干扰者停止规则与动捕读取
"""

import math

import numpy as np
import pytest

from world import (
    SCENARIOS, Agent, AgentPath, RobotState, WorldState, followed_agent, make_world, optitrack,
    random_latent, scenario, step_world,
)


def static_agent(x, y, rng, is_target=False, facing=-math.pi / 2, stop_when_followed=False, speed=0.1):
    path = AgentPath(((x, y), (x, y + 10.0)), speed, stop_when_followed=stop_when_followed)
    return Agent(path=path, width=0.5, height=1.7, clothing=(0.1, 0.2, 0.5), latent=random_latent(rng),
                 is_target=is_target, initial_facing=facing)


def distance_to_route(point, route):
    """点到折线路径的最短距离"""
    p = np.asarray(point)
    best = math.inf
    for a, b in zip(route.waypoints[:-1], route.waypoints[1:]):
        a, b = np.asarray(a), np.asarray(b)
        t = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (a + t * (b - a)))))
    return best


def crosses_route(path, route):
    """路径端点离开目标路线，且中途经过目标路线"""
    samples = [path.position_at(s)[:2] for s in np.linspace(0.0, path.length, 2001)]
    gaps = [distance_to_route(p, route) for p in samples]
    return min(gaps) < 1e-2 and gaps[0] > 0.3 and gaps[-1] > 0.3


class TestScenarios:
    """场景构建"""

    def test_none_is_closed_rectangle(self):
        scn = scenario("none")
        assert len(scn.paths) == 1
        target = scn.paths[0]
        assert len(target.waypoints) == 5
        assert target.waypoints[0] == target.waypoints[-1]

    def test_agent_counts(self):
        assert [len(scenario(name).paths) for name in SCENARIOS] == [1, 2, 3, 3]

    def test_distractors_cross_target_route(self):
        for name in ("one_cross", "two_cross", "two_parallel"):
            target, *distractors = scenario(name).paths
            open_route = AgentPath(target.waypoints[:-1], target.speed)
            for path in distractors:
                assert crosses_route(path, open_route), name

    def test_initial_distance(self, rng):
        for name in SCENARIOS:
            world = make_world(scenario(name), rng)
            assert world.target_distance() == 2.0

    def test_unknown_scenario(self):
        with pytest.raises(Exception, match="three_cross"):
            scenario("three_cross")

    def test_cross_timing(self):
        scn = scenario("one_cross")
        target, distractor = scn.paths
        meet_time = target.start_delay + 3.5 / target.speed
        half_span = distractor.length / 2
        assert distractor.start_delay + half_span / distractor.speed == pytest.approx(meet_time)
        mid = distractor.position_at(half_span)
        assert mid[:2] == pytest.approx((0.0, 2.0 + 3.5 - 0.9))

    def test_parallel_cut_arrives_behind_target(self):
        target, *distractors = scenario("two_parallel").paths
        for path, gap in zip(distractors, (0.9, 0.45)):
            assert path.start_delay == target.start_delay
            arc = path.segment_lengths[0] + path.segment_lengths[1]
            x, y, _ = path.position_at(arc)
            tx, ty, _ = target.position_at(arc)
            assert x == pytest.approx(0.0, abs=1e-12)
            assert ty - y == pytest.approx(gap)

    def test_subject_presets(self):
        assert scenario("none", subject="B").paths[0].speed == 0.7
        assert scenario("none", subject="A").subject.height == 1.7


class TestWorldState:
    """世界状态约束"""

    def test_exactly_one_target(self, rng):
        with pytest.raises(ValueError):
            WorldState(0.0, RobotState(), [static_agent(0, 2, rng), static_agent(1, 2, rng)])
        with pytest.raises(ValueError):
            WorldState(0.0, RobotState(), [static_agent(0, 2, rng, True), static_agent(1, 2, rng, True)])

    def test_uniform_clothing(self, rng):
        other = static_agent(1, 2, rng)
        other.clothing = (0.9, 0.1, 0.1)
        with pytest.raises(ValueError):
            WorldState(0.0, RobotState(), [static_agent(0, 2, rng, True), other])

    def test_latents_are_unit_and_orthogonal(self, rng):
        world = make_world(scenario("two_cross"), rng)
        target = world.target.latent
        for agent in world.agents:
            assert np.linalg.norm(agent.latent) == pytest.approx(1.0, abs=1e-12)
        for agent in world.agents[1:]:
            assert abs(np.dot(agent.latent, target)) < 1e-12


class TestStepWorld:
    """运动学积分"""

    def test_straight_line(self, rng):
        world = WorldState(0.0, RobotState(theta=0.0), [static_agent(0, 5, rng, True)])
        new = step_world(world, 1.0, command=(1.0, 0.0))
        assert new.robot.x == 1.0
        assert new.robot.y == 0.0
        assert world.robot.x == 0.0

    def test_pure_rotation(self, rng):
        world = WorldState(0.0, RobotState(x=1.0, y=2.0, theta=0.0), [static_agent(0, 5, rng, True)])
        new = step_world(world, 1.0, command=(0.0, math.pi))
        assert new.robot.theta == pytest.approx(math.pi)
        assert (new.robot.x, new.robot.y) == (1.0, 2.0)

    def test_agent_segment_timing(self, rng):
        path = AgentPath(((0.0, 3.0), (4.0, 3.0)), 0.8)
        agent = Agent(path=path, width=0.5, height=1.7, clothing=(0.1, 0.2, 0.5),
                      latent=random_latent(rng), is_target=True)
        world = WorldState(0.0, RobotState(), [agent])
        for _ in range(99):
            world = step_world(world, 0.05)
        assert world.target.arc < 4.0 - 0.03
        world = step_world(world, 0.05)
        assert world.time == pytest.approx(5.0)
        assert world.target.arc == pytest.approx(4.0, abs=1e-9)

    def test_start_delay(self, rng):
        path = AgentPath(((0.0, 3.0), (4.0, 3.0)), 1.0, start_delay=1.0)
        agent = Agent(path=path, width=0.5, height=1.7, clothing=(0.1, 0.2, 0.5),
                      latent=random_latent(rng), is_target=True)
        world = WorldState(0.0, RobotState(), [agent])
        for _ in range(10):
            world = step_world(world, 0.1)
        assert world.target.arc == pytest.approx(0.0, abs=1e-12)
        world = step_world(world, 0.5)
        assert world.target.arc == pytest.approx(0.5)

    def test_target_path_closes(self, rng):
        world = make_world(scenario("none"), rng)
        start = (world.target.x, world.target.y)
        path = world.target.path
        x, y, _ = path.position_at(path.length + 1.0)
        assert math.dist((x, y), start) < 1e-6

    def test_followed_distractor_stops(self, rng):
        target = static_agent(1.5, 2.0, rng, is_target=True)
        distractor = static_agent(0.0, 3.0, rng, stop_when_followed=True, speed=0.5)
        world = WorldState(0.0, RobotState(), [target, distractor])
        assert followed_agent(world) == 1
        for _ in range(10):
            world = step_world(world, 0.05, trigger_steps=10)
        assert world.agents[1].stopped
        y = world.agents[1].y
        world = step_world(world, 0.05)
        assert world.agents[1].y == y

    def test_target_never_stops(self, rng):
        world = WorldState(0.0, RobotState(), [static_agent(0.0, 3.0, rng, is_target=True)])
        for _ in range(20):
            world = step_world(world, 0.05, trigger_steps=5)
        assert not world.target.stopped

    def test_invalid_dt(self, rng):
        world = WorldState(0.0, RobotState(), [static_agent(0, 5, rng, True)])
        with pytest.raises(ValueError):
            step_world(world, 0.0)


class TestOptitrack:
    """动捕真值"""

    def test_positions(self, rng):
        world = make_world(scenario("two_cross"), rng)
        world = step_world(world, 0.05, command=(0.3, 0.1))
        positions = optitrack(world)
        assert len(positions) == 1 + len(world.agents)
        assert positions[0] == (world.robot.x, world.robot.y)
        start = optitrack(make_world(scenario("none"), rng))
        assert math.dist(start[0], start[1]) == 2.0
