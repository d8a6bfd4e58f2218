"""
DTRD 网络模块
功能：RGB-D 4通道输入 → 卷积骨干 → 展平拼接 → 编码器-解码器 Transformer → 三层全连接角点回归
"""

import math
from dataclasses import dataclass

import numpy as np

from bbox import BoundingBox
from checkpoint import load_checkpoint, save_checkpoint
from errors import FormatError, ShapeError
from tensor import (
    Tensor, attention, concat, conv2d, layernorm, matmul, minimum, maximum,
    relu, reshape, sigmoid, stack_scalars, transpose,
)


@dataclass(frozen=True)
class TrackerConfig:
    """DTRD 的尺寸与裁剪参数"""
    template_size: int = 32
    search_size: int = 64
    stride: int = 8
    channels: int = 64
    model_dim: int = 128
    encoder_blocks: int = 6
    decoder_blocks: int = 6
    heads: int = 4
    ffn_dim: int = 256
    search_area_factor: float = 4.0
    positional_embedding: bool = True
    min_box_size: float = 1e-4
    d_max: float = 10.0

    def __post_init__(self):
        s = self.stride
        if s < 2 or s & (s - 1):
            raise ValueError(f"stride 必须是不小于 2 的 2 的幂: {s}")
        if self.template_size % s or self.search_size % s:
            raise ValueError(f"模板/搜索尺寸必须能被 stride 整除: {self.template_size}, {self.search_size}, s={s}")
        if self.model_dim % self.heads or self.model_dim % 4:
            raise ValueError(f"model_dim={self.model_dim} 必须能被 heads={self.heads} 和 4 整除")
        if min(self.channels, self.encoder_blocks, self.decoder_blocks, self.heads, self.ffn_dim) < 1:
            raise ValueError("通道数、块数、头数必须为正")
        if self.search_area_factor <= 0:
            raise ValueError(f"search_area_factor 必须为正: {self.search_area_factor}")

    @classmethod
    def from_config(cls, config):
        section = config.section("tracker")
        return cls(**section)

    @property
    def template_grid(self):
        return self.template_size // self.stride, self.template_size // self.stride

    @property
    def search_grid(self):
        return self.search_size // self.stride, self.search_size // self.stride

    def token_count(self):
        """(H_x/s)(W_x/s) + (H_z/s)(W_z/s)"""
        hx, wx = self.search_grid
        hz, wz = self.template_grid
        return hx * wx + hz * wz

    def backbone_layers(self):
        return int(round(math.log2(self.stride)))


def sinusoidal_table(grid_h, grid_w, dim, row_offset=0):
    """
    二维正弦位置编码表

    参数:
        grid_h, grid_w: 网格尺寸
        dim: 编码维度（前一半编码行，后一半编码列）
        row_offset: 行号偏移，使模板组与搜索组使用互不重叠的位置

    返回:
        [grid_h·grid_w × dim] 数组（行优先）
    """
    quarter = dim // 4
    freqs = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    rows, cols = np.meshgrid(np.arange(grid_h) + row_offset, np.arange(grid_w), indexing="ij")
    rows = rows.reshape(-1, 1) * freqs
    cols = cols.reshape(-1, 1) * freqs
    return np.concatenate([np.sin(rows), np.cos(rows), np.sin(cols), np.cos(cols)], axis=1)


def corners_to_box(values, min_size=1e-4):
    """
    把 4 个回归输出整理为合法边界框：裁剪到 [0,1]、排序、保证最小宽高

    参数:
        values: (x1, y1, x2, y2) 序列
        min_size: 最小宽高

    返回:
        BoundingBox
    """
    a, b, c, d = (min(max(float(v), 0.0), 1.0) for v in values)
    x1, x2 = min(a, c), max(a, c)
    y1, y2 = min(b, d), max(b, d)
    x1, x2 = _widen(x1, x2, min_size)
    y1, y2 = _widen(y1, y2, min_size)
    return BoundingBox(x1, y1, x2, y2)


def _widen(lo, hi, min_size):
    if hi - lo >= min_size:
        return lo, hi
    mid = 0.5 * (lo + hi)
    lo, hi = mid - 0.5 * min_size, mid + 0.5 * min_size
    if lo < 0.0:
        lo, hi = 0.0, min_size
    elif hi > 1.0:
        lo, hi = 1.0 - min_size, 1.0
    return lo, hi


def ordered_corners(raw):
    """可微的角点排序：x1=min, x2=max"""
    x1 = minimum(raw[0], raw[2])
    x2 = maximum(raw[0], raw[2])
    y1 = minimum(raw[1], raw[3])
    y2 = maximum(raw[1], raw[3])
    return stack_scalars([x1, y1, x2, y2])


class DTRDModel:
    """DTRD 跟踪网络及其参数"""

    HEAD_LAYERS = ("head.fc0", "head.fc1", "head.fc2")

    def __init__(self, config, seed=0):
        """
        初始化网络，所有权重从种子生成（不加载预训练权重）

        参数:
            config: TrackerConfig
            seed: 初始化随机种子
        """
        self.config = config
        self.params = {}
        self._positional_cache = {}
        rng = np.random.default_rng(seed)
        self._build(rng)

    # ---------- 参数构建 ----------

    def _add(self, name, array):
        self.params[name] = Tensor(array, requires_grad=True)

    def _add_linear(self, rng, name, fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        self._add(f"{name}.weight", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        self._add(f"{name}.bias", np.zeros(fan_out))

    def _add_norm(self, name, dim):
        self._add(f"{name}.gain", np.ones(dim))
        self._add(f"{name}.bias", np.zeros(dim))

    def _add_attention(self, rng, name, dim):
        for proj in ("q", "k", "v", "o"):
            self._add_linear(rng, f"{name}.{proj}", dim, dim)

    def _add_ffn(self, rng, name, dim, hidden):
        self._add_linear(rng, f"{name}.fc1", dim, hidden)
        self._add_linear(rng, f"{name}.fc2", hidden, dim)

    def _build(self, rng):
        cfg = self.config
        for i, (c_in, c_out) in enumerate(self.backbone_channels()):
            bound = math.sqrt(6.0 / (c_in * 9))
            self._add(f"backbone.conv{i}.weight", rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3)))
            self._add(f"backbone.conv{i}.bias", np.zeros(c_out))
        d = cfg.model_dim
        self._add_linear(rng, "input_proj", cfg.channels, d)
        for i in range(cfg.encoder_blocks):
            self._add_norm(f"encoder.{i}.norm1", d)
            self._add_attention(rng, f"encoder.{i}.attn", d)
            self._add_norm(f"encoder.{i}.norm2", d)
            self._add_ffn(rng, f"encoder.{i}.ffn", d, cfg.ffn_dim)
        self._add_norm("encoder.norm", d)
        self._add("decoder.query", rng.normal(0.0, 1.0, size=(1, d)))
        for i in range(cfg.decoder_blocks):
            self._add_norm(f"decoder.{i}.norm1", d)
            self._add_attention(rng, f"decoder.{i}.self_attn", d)
            self._add_norm(f"decoder.{i}.norm2", d)
            self._add_attention(rng, f"decoder.{i}.cross_attn", d)
            self._add_norm(f"decoder.{i}.norm3", d)
            self._add_ffn(rng, f"decoder.{i}.ffn", d, cfg.ffn_dim)
        self._add_norm("decoder.norm", d)
        self._add_linear(rng, "head.fc0", d, d)
        self._add_linear(rng, "head.fc1", d, d)
        self._add_linear(rng, "head.fc2", d, 4)

    def backbone_channels(self):
        """每层卷积的 (输入通道, 输出通道)；第一层接收 4 通道"""
        n = self.config.backbone_layers()
        outs = [min(self.config.channels, 16 * 2 ** i) for i in range(n - 1)] + [self.config.channels]
        ins = [4] + outs[:-1]
        return list(zip(ins, outs))

    # ---------- 参数访问 ----------

    def named_parameters(self):
        return list(self.params.items())

    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    def parameter_groups(self, first_layer_in_model_group=True):
        """
        划分两个参数组

        参数:
            first_layer_in_model_group: 第一层卷积（4通道，从头训练）是否使用模型学习率

        返回:
            {"model": [...], "backbone": [...]}
        """
        groups = {"model": [], "backbone": []}
        for name, param in self.params.items():
            is_backbone = name.startswith("backbone.")
            if is_backbone and first_layer_in_model_group and name.startswith("backbone.conv0."):
                is_backbone = False
            groups["backbone" if is_backbone else "model"].append((name, param))
        return groups

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def state_dict(self):
        return {name: param.data.copy() for name, param in self.params.items()}

    def load_state_dict(self, arrays):
        if set(arrays) != set(self.params):
            missing = sorted(set(self.params) - set(arrays))
            extra = sorted(set(arrays) - set(self.params))
            raise FormatError(f"检查点参数与模型不一致，缺少 {missing[:3]}，多余 {extra[:3]}")
        for name, param in self.params.items():
            if arrays[name].shape != param.shape:
                raise ShapeError(f"参数 {name} 形状 {arrays[name].shape} 与模型 {param.shape} 不一致")
            param.data = np.array(arrays[name], dtype=np.float64)

    def save(self, path):
        save_checkpoint(path, self.params)

    @classmethod
    def load(cls, path, config):
        model = cls(config)
        model.load_state_dict(load_checkpoint(path))
        return model

    # ---------- 前向计算 ----------

    def _linear(self, x, name):
        return matmul(x, self.params[f"{name}.weight"]) + self.params[f"{name}.bias"]

    def _norm(self, x, name):
        return layernorm(x, self.params[f"{name}.gain"], self.params[f"{name}.bias"])

    def backbone_forward(self, img4):
        """
        卷积骨干

        参数:
            img4: H×W×4 数组或张量

        返回:
            [H/s × W/s × C] 特征图张量
        """
        x = img4 if isinstance(img4, Tensor) else Tensor(img4)
        if x.ndim != 3 or x.shape[2] != 4:
            raise ShapeError(f"骨干网络需要 H×W×4 输入，得到 {x.shape}")
        height, width = x.shape[:2]
        s = self.config.stride
        if height % s or width % s:
            raise ShapeError(f"输入尺寸 {height}×{width} 不能被 stride={s} 整除")
        x = transpose(x, (2, 0, 1))
        layers = self.config.backbone_layers()
        for i in range(layers):
            x = conv2d(x, self.params[f"backbone.conv{i}.weight"], stride=2, padding=1)
            x = transpose(x, (1, 2, 0)) + self.params[f"backbone.conv{i}.bias"]
            if i < layers - 1:
                x = transpose(relu(x), (2, 0, 1))
        return x

    def flatten_concat(self, f_z, f_x):
        """
        展平并拼接特征图：搜索区域 token 在前，模板 token 在后，各自行优先

        返回:
            [L × C] token 序列，L = (H_x/s)(W_x/s) + (H_z/s)(W_z/s)
        """
        if f_z.ndim != 3 or f_x.ndim != 3:
            raise ShapeError(f"特征图应为三维: {f_z.shape}, {f_x.shape}")
        if f_z.shape[2] != f_x.shape[2]:
            raise ShapeError(f"模板与搜索特征通道数不一致: {f_z.shape[2]} 与 {f_x.shape[2]}")
        c = f_x.shape[2]
        search_tokens = reshape(f_x, (f_x.shape[0] * f_x.shape[1], c))
        template_tokens = reshape(f_z, (f_z.shape[0] * f_z.shape[1], c))
        return concat([search_tokens, template_tokens], axis=0)

    def positional_table(self, grids):
        key = tuple(grids)
        if key not in self._positional_cache:
            tables, offset = [], 0
            for grid_h, grid_w in grids:
                tables.append(sinusoidal_table(grid_h, grid_w, self.config.model_dim, row_offset=offset))
                offset += grid_h
            self._positional_cache[key] = np.concatenate(tables, axis=0)
        return self._positional_cache[key]

    def _attention_block(self, name, query_in, memory):
        heads = self.config.heads
        dh = self.config.model_dim // heads
        q = self._linear(query_in, f"{name}.q")
        k = self._linear(memory, f"{name}.k")
        v = self._linear(memory, f"{name}.v")
        outputs = []
        for h in range(heads):
            cols = (slice(None), slice(h * dh, (h + 1) * dh))
            outputs.append(attention(q[cols], k[cols], v[cols]))
        merged = outputs[0] if heads == 1 else concat(outputs, axis=1)
        return self._linear(merged, f"{name}.o")

    def _ffn(self, x, name):
        return self._linear(relu(self._linear(x, f"{name}.fc1")), f"{name}.fc2")

    def transformer_forward(self, tokens, grids=None):
        """
        编码器-解码器 Transformer

        参数:
            tokens: [L × C] token 序列
            grids: 各 token 组的网格尺寸 [(h, w), ...]；缺省时按配置的搜索/模板网格，
                   长度不符时视为单行序列

        返回:
            长度为 d 的嵌入向量（解码器单个查询 token 的最终输出）
        """
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] != self.config.channels:
            raise ShapeError(f"token 序列应为 [L × {self.config.channels}]，得到 {tokens.shape}")
        length = tokens.shape[0]
        if grids is None:
            grids = [self.config.search_grid, self.config.template_grid]
            if length != self.config.token_count():
                grids = [(1, length)]
        x = self._linear(tokens, "input_proj")
        if self.config.positional_embedding:
            x = x + Tensor(self.positional_table(grids))

        for i in range(self.config.encoder_blocks):
            h = self._norm(x, f"encoder.{i}.norm1")
            x = x + self._attention_block(f"encoder.{i}.attn", h, h)
            x = x + self._ffn(self._norm(x, f"encoder.{i}.norm2"), f"encoder.{i}.ffn")
        memory = self._norm(x, "encoder.norm")

        q = self.params["decoder.query"]
        for i in range(self.config.decoder_blocks):
            h = self._norm(q, f"decoder.{i}.norm1")
            q = q + self._attention_block(f"decoder.{i}.self_attn", h, h)
            q = q + self._attention_block(f"decoder.{i}.cross_attn", self._norm(q, f"decoder.{i}.norm2"), memory)
            q = q + self._ffn(self._norm(q, f"decoder.{i}.norm3"), f"decoder.{i}.ffn")
        return reshape(self._norm(q, "decoder.norm"), (self.config.model_dim,))

    def regress_head(self, embedding):
        """三层全连接（前两层后接 ReLU），输出经 logistic 压缩到 [0,1] 的 4 个角点坐标"""
        if embedding.shape != (self.config.model_dim,):
            raise ShapeError(f"嵌入长度应为 {self.config.model_dim}，得到 {embedding.shape}")
        h = reshape(embedding, (1, self.config.model_dim))
        for i, name in enumerate(self.HEAD_LAYERS):
            h = self._linear(h, name)
            if i < len(self.HEAD_LAYERS) - 1:
                h = relu(h)
        return sigmoid(reshape(h, (4,)))

    def regress_box(self, embedding):
        """回归头输出整理为合法的 BoundingBox（裁剪窗口坐标）"""
        return corners_to_box(self.regress_head(embedding).data, self.config.min_box_size)

    def forward(self, template4, search4):
        """
        完整前向计算

        参数:
            template4: H_z×W_z×4 模板
            search4: H_x×W_x×4 搜索区域

        返回:
            [4] 张量：搜索窗口内的归一化角点（未排序）
        """
        f_z = self.backbone_forward(template4)
        f_x = self.backbone_forward(search4)
        tokens = self.flatten_concat(f_z, f_x)
        if tokens.shape[0] != self.config.token_count():
            raise ShapeError(f"token 数 {tokens.shape[0]} 与公式值 {self.config.token_count()} 不符")
        return self.regress_head(self.transformer_forward(tokens))
