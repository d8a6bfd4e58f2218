"""
身份初始化模块
功能：模拟人脸检测与 128 维人脸特征、欧氏距离阈值验证、人体检测、人脸与人体按 IOU 匹配
检测器由仿真真值加噪声代替
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bbox import BoundingBox, iou
from errors import ContractError, FormatError
from renderer import ground_truth_bbox, head_visibility, is_facing_camera, rasterize


EMBEDDING_DIM = 128


@dataclass(frozen=True)
class FaceEmbedding:
    """单位长度的 128 维人脸特征"""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (EMBEDDING_DIM,):
            raise ValueError(f"人脸特征长度必须为 {EMBEDDING_DIM}，得到 {values.shape}")
        if abs(float(np.linalg.norm(values)) - 1.0) >= 1e-9:
            raise ValueError(f"人脸特征必须是单位向量，范数 {np.linalg.norm(values)}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_vector(cls, vector):
        vector = np.asarray(vector, dtype=np.float64)
        return cls(vector / np.linalg.norm(vector))

    def distance(self, other):
        return float(np.linalg.norm(self.values - other.values))


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    kind: str
    agent_id_hidden: int = field(default=-1, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("face", "person"):
            raise ValueError(f"检测类别必须是 face 或 person: {self.kind}")


@dataclass(frozen=True)
class IdentityGallery:
    """已知目标的人脸特征与验证阈值"""
    target_embedding: FaceEmbedding
    threshold: float = 0.9

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError(f"阈值必须为正: {self.threshold}")


def load_gallery(path, threshold=0.9):
    """读取图库文件：一行 128 个以空格分隔的实数"""
    text = Path(path).read_text(encoding="utf-8").split()
    if len(text) != EMBEDDING_DIM:
        raise FormatError(f"{path} 应包含 {EMBEDDING_DIM} 个数，得到 {len(text)}")
    try:
        values = [float(item) for item in text]
    except ValueError as exc:
        raise FormatError(f"{path} 含有非数值内容") from exc
    return IdentityGallery(FaceEmbedding.from_vector(values), threshold)


def save_gallery(path, embedding):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = embedding.values if isinstance(embedding, FaceEmbedding) else np.asarray(embedding)
    path.write_text(" ".join(repr(float(v)) for v in values) + "\n", encoding="utf-8")


def simulate_face_detections(world, camera, rng=None, sigma=0.05, max_distance=4.0,
                             face_fraction=0.2, head_visible_fraction=0.5, raster=None):
    """
    模拟人脸检测器与特征提取器

    参数:
        world: WorldState
        camera: CameraModel
        rng: numpy Generator；为 None 或 sigma=0 时特征等于身份向量
        sigma: 特征噪声标准差
        max_distance: 最远检测距离（米）
        face_fraction: 人脸框占人体框顶部的比例
        head_visible_fraction: 头部带至少可见的比例

    返回:
        [(Detection, FaceEmbedding), ...]
    """
    raster = raster if raster is not None else rasterize(world, camera)
    results = []
    for i, agent in enumerate(world.agents):
        if math.hypot(agent.x - world.robot.x, agent.y - world.robot.y) > max_distance:
            continue
        if not is_facing_camera(world, i):
            continue
        if head_visibility(world, camera, i, raster) < head_visible_fraction:
            continue
        body = ground_truth_bbox(world, camera, i, raster=raster)
        if body is None:
            continue
        if rng is None or sigma == 0:
            embedding = FaceEmbedding(agent.latent)
        else:
            embedding = FaceEmbedding.from_vector(agent.latent + rng.normal(0.0, sigma, size=EMBEDDING_DIM))
        results.append((Detection(body.top_fraction(face_fraction), "face", i), embedding))
    return results


def simulate_person_detections(world, camera, rng=None, jitter=0.02, raster=None):
    """模拟人体检测器：真值框的每条边加 ±jitter（相对框宽/高）的均匀扰动"""
    raster = raster if raster is not None else rasterize(world, camera)
    detections = []
    for i in range(len(world.agents)):
        body = ground_truth_bbox(world, camera, i, raster=raster)
        if body is None:
            continue
        if rng is not None and jitter > 0:
            dx1, dx2 = rng.uniform(-jitter, jitter, size=2) * body.width
            dy1, dy2 = rng.uniform(-jitter, jitter, size=2) * body.height
            coords = np.clip([body.x1 + dx1, body.y1 + dy1, body.x2 + dx2, body.y2 + dy2], 0.0, 1.0)
            body = BoundingBox.from_array(coords)
        detections.append(Detection(body, "person", i))
    return detections


def verify_face(candidate, gallery):
    """欧氏距离严格小于阈值才接受"""
    return candidate.distance(gallery.target_embedding) < gallery.threshold


def match_face_to_body(face_box, person_boxes):
    """
    把人脸框匹配到 IOU 最大的人体框

    返回:
        人体框下标（并列取最小下标）；最大 IOU 为 0 时返回 None
    """
    if not person_boxes:
        raise ContractError("人体框列表为空")
    scores = [iou(face_box, box) for box in person_boxes]
    best = int(np.argmax(scores))
    if scores[best] == 0.0:
        return None
    return best


def initialize_target(world, camera, gallery, rng=None, config=None):
    """
    完整的身份初始化链：人脸检测 → 验证 → 人体检测 → 匹配

    参数:
        world: WorldState
        camera: CameraModel
        gallery: IdentityGallery
        rng: numpy Generator（特征噪声与检测框扰动）
        config: Config（缺省用默认的 perception 参数）

    返回:
        目标的人体框；初始化失败时返回 None
    """
    params = {"face_sigma": 0.05, "face_max_distance": 4.0, "face_fraction": 0.2,
              "head_visible_fraction": 0.5, "person_jitter": 0.02}
    if config is not None:
        params.update({k: v for k, v in config.section("perception").items() if k in params})
    raster = rasterize(world, camera)
    faces = simulate_face_detections(world, camera, rng, params["face_sigma"], params["face_max_distance"],
                                     params["face_fraction"], params["head_visible_fraction"], raster)
    accepted = [(emb.distance(gallery.target_embedding), det) for det, emb in faces if verify_face(emb, gallery)]
    if not accepted:
        return None
    _, face = min(accepted, key=lambda item: item[0])
    people = simulate_person_detections(world, camera, rng, params["person_jitter"], raster)
    if not people:
        return None
    index = match_face_to_body(face.box, [p.box for p in people])
    if index is None:
        return None
    return people[index].box
