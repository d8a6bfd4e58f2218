"""
张量模块
功能：float64 n维张量与反向模式自动微分
每次前向计算在结果张量上记录父节点与局部梯度函数（计算带），
backward 按拓扑逆序回放，把梯度累加到叶子张量的 grad 上
"""

import threading
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import ShapeError, ContractError


_grad_mode = threading.local()


def is_grad_enabled():
    """当前线程是否记录计算带"""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """推理用上下文：其中的运算不记录计算带"""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """带梯度槽的 n 维数组"""

    def __init__(self, data, requires_grad=False):
        """
        初始化张量

        参数:
            data: 数值或数组，会被复制为 float64
            requires_grad: 是否需要梯度
        """
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._grad_fn = None
        self._op = ""

    @classmethod
    def _from_op(cls, data, parents, grad_fn, op):
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out._op = op
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._grad_fn = None
        return out

    # ---------- 基本属性 ----------

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return int(self.data.size)

    def numpy(self):
        return self.data.copy()

    def item(self):
        if self.size != 1:
            raise ContractError(f"item() 只适用于单元素张量，当前形状 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op='{self._op}')"

    # ---------- 运算符 ----------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_constant_like(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_constant_like(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def abs(self):
        return tensor_abs(self)

    def backward(self):
        backward(self)


def _constant_like(value, like):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(like.shape, float(value)))


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op} 形状不匹配: {a.shape} 与 {b.shape}")


# ---------- 逐元素运算 ----------

def add(a, b):
    """加法；b 可以是同形张量、常数，或长度等于 a 最后一维的偏置向量"""
    b = _constant_like(b, a)
    if a.shape == b.shape:
        return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        width = b.shape[0]

        def grad_fn(g):
            return g, g.reshape(-1, width).sum(axis=0)

        return Tensor._from_op(a.data + b.data, (a, b), grad_fn, "add_bias")
    raise ShapeError(f"add 形状不匹配: {a.shape} 与 {b.shape}（仅支持最后一维偏置广播）")


def sub(a, b):
    b = _constant_like(b, a)
    _same_shape(a, b, "sub")
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    b = _constant_like(b, a)
    _same_shape(a, b, "mul")
    a_data, b_data = a.data, b.data
    return Tensor._from_op(a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data), "mul")


def div(a, b):
    b = _constant_like(b, a)
    _same_shape(a, b, "div")
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        return g / b_data, -g * a_data / (b_data * b_data)

    return Tensor._from_op(a_data / b_data, (a, b), grad_fn, "div")


def neg(a):
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a):
    mask = a.data > 0
    return Tensor._from_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a):
    """logistic 函数，用 tanh 形式计算，对 ±1e6 也不会溢出"""
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._from_op(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def exp(a):
    e = np.exp(a.data)
    return Tensor._from_op(e, (a,), lambda g: (g * e,), "exp")


def tensor_abs(a):
    sign = np.sign(a.data)
    return Tensor._from_op(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def maximum(a, b):
    """逐元素最大值；相等时梯度归 a"""
    b = _constant_like(b, a)
    _same_shape(a, b, "maximum")
    pick_a = a.data >= b.data
    data = np.where(pick_a, a.data, b.data)
    return Tensor._from_op(data, (a, b), lambda g: (g * pick_a, g * ~pick_a), "maximum")


def minimum(a, b):
    """逐元素最小值；相等时梯度归 a"""
    b = _constant_like(b, a)
    _same_shape(a, b, "minimum")
    pick_a = a.data <= b.data
    data = np.where(pick_a, a.data, b.data)
    return Tensor._from_op(data, (a, b), lambda g: (g * pick_a, g * ~pick_a), "minimum")


# ---------- 规约与形状 ----------

def tensor_sum(a):
    shape = a.shape
    return Tensor._from_op(np.sum(a.data), (a,), lambda g: (np.full(shape, g),), "sum")


def tensor_mean(a):
    shape, n = a.shape, a.size
    return Tensor._from_op(np.mean(a.data), (a,), lambda g: (np.full(shape, g / n),), "mean")


def reshape(a, shape):
    old_shape = a.shape
    try:
        data = a.data.reshape(shape).copy()
    except ValueError as exc:
        raise ShapeError(f"reshape 无法把 {old_shape} 变为 {tuple(shape)}") from exc
    return Tensor._from_op(data, (a,), lambda g: (g.reshape(old_shape),), "reshape")


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = a.data.transpose(axes).copy()
    return Tensor._from_op(data, (a,), lambda g: (g.transpose(inverse),), "transpose")


def take(a, index):
    """取下标或切片，梯度散回原位置"""
    shape = a.shape
    data = np.array(a.data[index], dtype=np.float64)

    def grad_fn(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(data, (a,), grad_fn, "take")


def concat(tensors, axis=0):
    """沿指定轴拼接"""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat 需要至少一个张量")
    ndim = tensors[0].ndim
    for t in tensors:
        if t.ndim != ndim:
            raise ShapeError(f"concat 维数不一致: {[t.shape for t in tensors]}")
        for ax in range(ndim):
            if ax != axis % ndim and t.shape[ax] != tensors[0].shape[ax]:
                raise ShapeError(f"concat 形状不匹配: {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._from_op(data, tensors, grad_fn, "concat")


def stack_scalars(tensors):
    """把若干标量张量合成一维向量"""
    return concat([reshape(t, (1,)) for t in tensors], axis=0)


# ---------- 线性代数与网络算子 ----------

def matmul(a, b):
    """
    矩阵乘法

    参数:
        a: [m×k] 张量
        b: [k×n] 张量

    返回:
        [m×n] 张量；反向: dA = dC·Bᵀ, dB = Aᵀ·dC
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul 维度不匹配: {a.shape} 与 {b.shape}")
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        return g @ b_data.T, a_data.T @ g

    return Tensor._from_op(a_data @ b_data, (a, b), grad_fn, "matmul")


def conv2d(x, kernels, stride=1, padding=0):
    """
    二维卷积（互相关约定），通过 im2col 展开后做一次矩阵乘法

    参数:
        x: 输入 [C_in×H×W]
        kernels: 卷积核 [C_out×C_in×k×k]
        stride: 步长（正整数）
        padding: 零填充宽度（非负整数）

    返回:
        [C_out×H'×W']，H' = floor((H + 2·padding − k)/stride) + 1
    """
    if x.ndim != 3 or kernels.ndim != 4:
        raise ShapeError(f"conv2d 需要 [C×H×W] 输入与 [C_out×C_in×k×k] 卷积核，得到 {x.shape} 与 {kernels.shape}")
    c_in, height, width = x.shape
    c_out, k_in, k_h, k_w = kernels.shape
    if k_in != c_in or k_h != k_w:
        raise ShapeError(f"conv2d 通道或卷积核不匹配: 输入 {x.shape}, 卷积核 {kernels.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d 步长必须为正、填充必须非负: stride={stride}, padding={padding}")
    k = k_h
    h_out = (height + 2 * padding - k) // stride + 1
    w_out = (width + 2 * padding - k) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv2d 输出尺寸非正: 输入 {x.shape}, k={k}, stride={stride}, padding={padding}")

    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :h_out, :w_out]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c_in * k * k, h_out * w_out)
    flat_kernels = kernels.data.reshape(c_out, -1)
    out = (flat_kernels @ cols).reshape(c_out, h_out, w_out)

    def grad_fn(g):
        g2 = g.reshape(c_out, -1)
        grad_kernels = (g2 @ cols.T).reshape(kernels.shape)
        grad_cols = (flat_kernels.T @ g2).reshape(c_in, k, k, h_out, w_out)
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += grad_cols[:, i, j]
        grad_x = grad_padded[:, padding:padding + height, padding:padding + width]
        return grad_x, grad_kernels

    return Tensor._from_op(out, (x, kernels), grad_fn, "conv2d")


def _softmax_rows(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


def attention_weights(query, key):
    """返回 softmax(QKᵀ/√d) 权重矩阵（numpy），用于诊断"""
    d = query.shape[1]
    return _softmax_rows(query.data @ key.data.T / np.sqrt(d))


def attention(query, key, value):
    """
    缩放点积注意力 softmax(QKᵀ/√d)·V

    参数:
        query: [L_q×d]
        key: [L_k×d]
        value: [L_k×d_v]

    返回:
        [L_q×d_v] 张量
    """
    if query.ndim != 2 or key.ndim != 2 or value.ndim != 2:
        raise ShapeError(f"attention 需要二维输入: {query.shape}, {key.shape}, {value.shape}")
    if query.shape[1] != key.shape[1]:
        raise ShapeError(f"attention 的 query 与 key 维度不一致: {query.shape} 与 {key.shape}")
    if key.shape[0] != value.shape[0]:
        raise ShapeError(f"attention 的 key 与 value 长度不一致: {key.shape} 与 {value.shape}")
    scale = 1.0 / np.sqrt(query.shape[1])
    q, k, v = query.data, key.data, value.data
    weights = _softmax_rows(q @ k.T * scale)

    def grad_fn(g):
        grad_v = weights.T @ g
        grad_w = g @ v.T
        grad_s = weights * (grad_w - (grad_w * weights).sum(axis=1, keepdims=True))
        grad_q = grad_s @ k * scale
        grad_k = grad_s.T @ q * scale
        return grad_q, grad_k, grad_v

    return Tensor._from_op(weights @ v, (query, key, value), grad_fn, "attention")


def layernorm(x, gain, bias, eps=1e-5):
    """
    层归一化：最后一维零均值、单位方差后做仿射变换

    参数:
        x: [...×d]
        gain, bias: [d]
        eps: 方差保护项

    返回:
        与 x 同形的张量
    """
    if x.ndim < 1 or x.shape[-1] == 0:
        raise ShapeError(f"layernorm 的最后一维必须为正: {x.shape}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layernorm 参数形状应为 ({d},)，得到 {gain.shape} 与 {bias.shape}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    normalized = centered * rstd
    g_data = gain.data

    def grad_fn(g):
        grad_norm = g * g_data
        grad_x = rstd * (
            grad_norm
            - grad_norm.mean(axis=-1, keepdims=True)
            - normalized * (grad_norm * normalized).mean(axis=-1, keepdims=True)
        )
        grad_gain = (g * normalized).reshape(-1, d).sum(axis=0)
        grad_bias = g.reshape(-1, d).sum(axis=0)
        return grad_x, grad_gain, grad_bias

    return Tensor._from_op(normalized * g_data + bias.data, (x, gain, bias), grad_fn, "layernorm")


# ---------- 反向传播 ----------

def _topological_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """
    从标量损失反向传播

    参数:
        loss: 形状为 () 或单元素的张量

    说明:
        梯度累加到所有可达的 requires_grad 叶子张量；未清零时重复调用会相加。
        回放结束后释放途经节点记录的计算图，同一计算图不能反向传播两次
    """
    if loss.size != 1:
        raise ContractError(f"backward 只接受标量损失，得到形状 {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("损失不依赖任何 requires_grad 张量")
    order = _topological_order(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        parents, grad_fn = node._parents, node._grad_fn
        node._parents, node._grad_fn = (), None
        if g is None:
            continue
        if grad_fn is None:
            if node._op:
                raise ContractError(f"{node._op} 的计算图已在上一次 backward 之后释放")
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, parent_grad in zip(parents, grad_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
