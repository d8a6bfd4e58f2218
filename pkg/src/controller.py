"""
运动控制模块
功能：两个 PI 控制器 u = Kp·e + Ki·∫e dt，分别输出线速度与角速度
"""

from dataclasses import dataclass


@dataclass
class PIController:
    """带积分限幅（抗饱和）与输出限幅的 PI 控制器"""
    kp: float
    ki: float
    output_min: float
    output_max: float
    integral_limit: float
    integral: float = 0.0

    def __post_init__(self):
        if self.output_min >= self.output_max:
            raise ValueError(f"输出下限必须小于上限: [{self.output_min}, {self.output_max}]")
        if self.integral_limit < 0:
            raise ValueError(f"积分限幅不能为负: {self.integral_limit}")
        if abs(self.integral) > self.integral_limit:
            raise ValueError(f"初始积分 {self.integral} 超出限幅 {self.integral_limit}")

    @classmethod
    def symmetric(cls, kp, ki, output_limit, integral_limit):
        return cls(kp, ki, -output_limit, output_limit, integral_limit)

    def reset(self):
        self.integral = 0.0


def pi_update(ctrl, e, dt):
    """
    更新一次控制器

    参数:
        ctrl: PIController（积分状态被修改）
        e: 当前误差
        dt: 时间步长（秒）

    返回:
        限幅后的控制量 u
    """
    if dt <= 0:
        raise ValueError(f"dt 必须为正: {dt}")
    ctrl.integral = min(max(ctrl.integral + e * dt, -ctrl.integral_limit), ctrl.integral_limit)
    u = ctrl.kp * e + ctrl.ki * ctrl.integral
    return min(max(u, ctrl.output_min), ctrl.output_max)


def follow_control(tracked_box, depth_at_box, linear, angular, dt, desired_distance=2.0):
    """
    根据跟踪框计算速度指令

    参数:
        tracked_box: 跟踪框；为 None 时停车且积分保持不变
        depth_at_box: 框中心区域的深度中位数（米）
        linear, angular: 线速度 / 角速度控制器
        dt: 控制周期
        desired_distance: 期望跟随距离

    返回:
        (v, ω)；ω 为正表示逆时针（向左转）
    """
    if tracked_box is None:
        return 0.0, 0.0
    e_linear = depth_at_box - desired_distance
    e_angular = 0.5 - tracked_box.center[0]
    return pi_update(linear, e_linear, dt), pi_update(angular, e_angular, dt)


def controllers_from_config(config):
    """从配置构建 (线速度控制器, 角速度控制器)"""
    c = config.section("control")
    linear = PIController(c["kp_linear"], c["ki_linear"], c["v_min"], c["v_max"], c["integral_limit_linear"])
    angular = PIController.symmetric(c["kp_angular"], c["ki_angular"], c["omega_limit"],
                                     c["integral_limit_angular"])
    return linear, angular
