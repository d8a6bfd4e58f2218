"""
RGB-D 帧与裁剪几何测试
"""

import numpy as np
import pytest

from bbox import BoundingBox
from rgbd import CropWindow, RgbdFrame, fuse_rgbd, median_depth, search_window, template_window


def ramp_frame(height=48, width=64, depth=2.0):
    rgb = np.zeros((height, width, 3))
    rgb[..., 0] = np.arange(width)[None, :] / width
    rgb[..., 1] = np.arange(height)[:, None] / height
    return RgbdFrame(rgb, np.full((height, width), depth))


class TestFuse:
    """4 通道融合"""

    def test_zero_frame(self):
        fused = fuse_rgbd(RgbdFrame(np.zeros((4, 5, 3)), np.zeros((4, 5))))
        assert fused.shape == (4, 5, 4)
        assert np.all(fused == 0.0)

    def test_depth_normalization(self):
        frame = RgbdFrame(np.zeros((2, 2, 3)), np.array([[2.5, 5.0], [7.5, 10.0]]), d_max=10.0)
        assert np.array_equal(fuse_rgbd(frame)[..., 3], [[0.25, 0.5], [0.75, 1.0]])

    def test_depth_clamped(self):
        frame = RgbdFrame(np.zeros((1, 2, 3)), np.array([[-1.0, 25.0]]))
        assert np.array_equal(frame.depth, [[0.0, 10.0]])

    def test_depth_ablation(self):
        frame = RgbdFrame(np.full((3, 3, 3), 0.5), np.full((3, 3), 4.0))
        fused = fuse_rgbd(frame, use_depth=False)
        assert np.all(fused[..., 3] == 0.0)
        assert np.all(fused[..., :3] == 0.5)

    def test_mismatched_shapes(self):
        with pytest.raises(ValueError):
            RgbdFrame(np.zeros((4, 5, 3)), np.zeros((5, 4)))


class TestCropWindow:
    """裁剪窗口"""

    def test_full_frame_identity(self):
        frame = ramp_frame(32, 32)
        window = template_window(BoundingBox(0, 0, 1, 1), 32, 32)
        assert np.array_equal(window.sample(frame.rgb, 32), frame.rgb)

    def test_uniform_region(self):
        rgb = np.full((40, 40, 3), 0.3)
        window = template_window(BoundingBox(0.2, 0.2, 0.6, 0.5), 40, 40)
        assert np.all(window.sample(rgb, 16) == 0.3)

    def test_nearest_neighbour_oracle(self):
        frame = ramp_frame()
        window = CropWindow(10.3, 5.7, 20.0, frame.width, frame.height)
        crop = window.sample(frame.rgb, 8)
        for i in range(8):
            for j in range(8):
                row = min(max(int(np.floor(5.7 + (i + 0.5) * 2.5)), 0), frame.height - 1)
                col = min(max(int(np.floor(10.3 + (j + 0.5) * 2.5)), 0), frame.width - 1)
                assert np.max(np.abs(crop[i, j] - frame.rgb[row, col])) < 1e-9

    def test_edge_replication(self):
        frame = ramp_frame()
        window = CropWindow(-10.0, -10.0, 20.0, frame.width, frame.height)
        crop = window.sample(frame.rgb, 4)
        assert np.array_equal(crop[0, 0], frame.rgb[0, 0])

    def test_mapping_round_trip(self):
        window = CropWindow(12.5, 3.25, 30.0, 64, 48)
        box = BoundingBox(0.3, 0.2, 0.5, 0.6)
        back = window.crop_to_frame(window.box_to_crop(box))
        assert np.max(np.abs(back - box.to_array())) < 1e-9

    def test_search_window_clamped_at_corner(self):
        window = search_window(BoundingBox(0.0, 0.0, 0.1, 0.1), 64, 48)
        assert window.inside_frame()
        rows, cols = window.pixel_indices(16)
        assert rows.min() >= 0 and cols.min() >= 0

    def test_search_window_side(self):
        window = search_window(BoundingBox(0.4, 0.4, 0.5, 0.5), 100, 100, factor=4.0)
        assert window.side == pytest.approx(40.0)
        assert window.x0 == pytest.approx(25.0)

    def test_search_window_capped_at_short_side(self):
        window = search_window(BoundingBox(0.2, 0.2, 0.8, 0.8), 64, 48)
        assert window.side == 48.0


class TestMedianDepth:
    """框中心深度中位数"""

    def test_plane(self):
        frame = ramp_frame(depth=2.0)
        assert median_depth(frame, BoundingBox(0.4, 0.3, 0.6, 0.9)) == 2.0

    def test_central_region_ignores_border(self):
        depth = np.full((40, 40), 6.0)
        depth[10:30, 10:30] = 2.0
        frame = RgbdFrame(np.zeros((40, 40, 3)), depth)
        assert median_depth(frame, BoundingBox(0.2, 0.2, 0.8, 0.8), central_fraction=0.5) == 2.0
