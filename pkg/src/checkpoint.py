"""
参数检查点模块
功能：按固定二进制格式保存/加载命名参数，保证逐位一致的往返

格式（小端）:
    魔数 "DTRD" (4字节) | 版本 u32 | 参数个数 u32
    每个参数: 名称长度 u16 + UTF-8 名称 | 秩 u8 | 各维 u32 | 数据 f64
"""

import struct
from pathlib import Path

import numpy as np

from errors import FormatError


MAGIC = b"DTRD"
VERSION = 1


def save_checkpoint(path, named_arrays):
    """
    保存检查点

    参数:
        path: 输出文件路径
        named_arrays: {名称: numpy 数组或 Tensor}，按插入顺序写出
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(named_arrays))]
    for name, value in named_arrays.items():
        array = np.asarray(getattr(value, "data", value), dtype=np.float64)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.astype("<f8").tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path):
    """
    加载检查点

    参数:
        path: 检查点文件路径

    返回:
        dict: {名称: float64 数组}，保持文件中的顺序
    """
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path} 不是 DTRD 检查点（魔数 {blob[:4]!r}）")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
    except struct.error as exc:
        raise FormatError(f"{path} 已截断或损坏") from exc
    if version != VERSION:
        raise FormatError(f"{path} 的检查点版本 {version} 不受支持")
    offset = 12
    arrays = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            arrays[name] = data.astype(np.float64).reshape(shape)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path} 已截断或损坏") from exc
    if offset != len(blob):
        raise FormatError(f"{path} 末尾有 {len(blob) - offset} 字节多余数据")
    return arrays
