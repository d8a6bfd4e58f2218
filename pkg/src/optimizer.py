"""
优化器模块
功能：解耦权重衰减的自适应矩估计优化器（AdamW），支持多个参数组各自的学习率
"""

from dataclasses import dataclass, field

import numpy as np

from errors import ContractError


@dataclass
class AdamWState:
    """AdamW 的超参数与一阶/二阶矩"""
    lr: dict
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"beta 必须在 (0, 1) 内: beta1={self.beta1}, beta2={self.beta2}")
        if self.eps <= 0:
            raise ValueError(f"eps 必须为正: {self.eps}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay 不能为负: {self.weight_decay}")
        for group, lr in self.lr.items():
            if lr <= 0:
                raise ValueError(f"参数组 {group} 的学习率必须为正: {lr}")
        if self.step_count < 0:
            raise ValueError("step_count 不能为负")


def adamw_step(param_groups, state):
    """
    执行一步 AdamW 更新

    参数:
        param_groups: {组名: [(参数名, Tensor), ...]}
        state: AdamWState，其 lr 以组名为键

    说明:
        权重衰减直接作用于参数 (p ← p·(1 − lr·wd))，不经过矩估计；
        矩估计做偏差修正；step_count 加一
    """
    for group, params in param_groups.items():
        for name, param in params:
            if param.grad is None:
                raise ContractError(f"参数 {name} 缺少梯度")

    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for group, params in param_groups.items():
        lr = state.lr[group]
        for name, param in params:
            grad = param.grad
            m = state.first_moment.get(name)
            v = state.second_moment.get(name)
            if m is None:
                m = np.zeros_like(param.data)
                v = np.zeros_like(param.data)
            m = state.beta1 * m + (1.0 - state.beta1) * grad
            v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
            state.first_moment[name] = m
            state.second_moment[name] = v

            param.data *= 1.0 - lr * state.weight_decay
            param.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


class AdamW:
    """按参数组管理学习率的 AdamW 优化器"""

    def __init__(self, param_groups, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4):
        """
        初始化优化器

        参数:
            param_groups: {组名: [(参数名, Tensor), ...]}
            lr: {组名: 学习率}
            beta1, beta2, eps, weight_decay: AdamW 超参数
        """
        missing = set(param_groups) - set(lr)
        if missing:
            raise ValueError(f"参数组缺少学习率: {sorted(missing)}")
        self.param_groups = param_groups
        self.state = AdamWState(
            lr=dict(lr), beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay
        )

    def step(self):
        adamw_step(self.param_groups, self.state)

    def zero_grad(self):
        for params in self.param_groups.values():
            for _, param in params:
                param.zero_grad()
