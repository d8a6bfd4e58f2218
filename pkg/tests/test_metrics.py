"""
评估指标测试
DE / FS / FPS 的定义与试验日志读写
"""

import math

import pytest

from bbox import BoundingBox
from errors import ContractError
from metrics import FS_UPPER, FrameRecord, TrialLog, compute_de, compute_fps, compute_fs


GT = BoundingBox(0.4, 0.2, 0.6, 0.9)
ELSEWHERE = BoundingBox(0.0, 0.2, 0.1, 0.9)


def make_log(pattern, step=0.1, path_length=10.0, frame_time=0.025, distance=2.0, offset=0.0):
    """pattern 中每个字符对应一帧：F 正确跟随，W 框在别处，L 没有框"""
    log = TrialLog(path_length=path_length)
    for i, mark in enumerate(pattern):
        box = {"F": GT, "W": ELSEWHERE, "L": None}[mark]
        log.append(FrameRecord(frame=i, time=i * 0.05, box=box, confidence=1.0 if box else math.nan,
                               gt_box=GT, est_depth=distance - offset if box else math.nan,
                               true_distance=distance, target_arc=(i + 1) * step,
                               processing_time=frame_time))
    return log


class TestDistanceError:
    """距离误差"""

    def test_perfect(self):
        assert compute_de(make_log("F" * 50)) == 0.0

    def test_locked_on_nearer_distractor(self):
        assert compute_de(make_log("W" * 50, offset=1.0)) == pytest.approx(1.0)

    def test_frames_without_box_skipped(self):
        assert compute_de(make_log("FLFL", offset=0.5)) == pytest.approx(0.5)

    def test_empty_log(self):
        with pytest.raises(ContractError):
            compute_de(TrialLog(path_length=1.0))

    def test_no_box_at_all(self):
        with pytest.raises(ContractError):
            compute_de(make_log("LLL"))


class TestFollowingSuccess:
    """跟随成功率"""

    def test_full_following_below_one(self):
        fs = compute_fs(make_log("F" * 100))
        assert fs == FS_UPPER
        assert fs < 1.0

    def test_lost_halfway(self):
        assert compute_fs(make_log("F" * 50 + "L" * 50)) == pytest.approx(0.5)

    def test_wrong_person_is_not_following(self):
        assert compute_fs(make_log("F" * 30 + "W" * 70)) == pytest.approx(0.3)

    def test_short_gap_resumes(self):
        assert compute_fs(make_log("F" * 20 + "L" * 10 + "F" * 70)) == pytest.approx(0.9)

    def test_long_gap_ends_credit(self):
        log = make_log("F" * 20 + "L" * 10 + "F" * 70)
        assert compute_fs(log, grace_frames=5) == pytest.approx(0.2)

    def test_iou_threshold(self):
        log = make_log("F" * 10, path_length=1.0)
        for rec in log.frames:
            rec.box = GT.shifted(0.15, 0.0)
        assert compute_fs(log, iou_threshold=0.3) == 0.0
        assert compute_fs(log, iou_threshold=0.1) == pytest.approx(FS_UPPER)

    def test_start_arc_offset(self):
        log = make_log("F" * 50)
        log.start_arc = 0.1
        assert compute_fs(log) == pytest.approx(0.49)

    def test_more_following_never_lowers_score(self):
        for prefix in ("F" * 10, "FWLLF", "L" * 45, "F" * 20 + "W" * 39, "WLWFFW"):
            before = compute_fs(make_log(prefix))
            for extra in range(1, 30, 7):
                assert compute_fs(make_log(prefix + "F" * extra)) >= before, (prefix, extra)

    def test_failed_initialization(self):
        log = make_log("F" * 100)
        log.failed = True
        assert compute_fs(log) == 0.0

    def test_zero_path_length(self):
        with pytest.raises(ContractError):
            compute_fs(make_log("F", path_length=0.0))


class TestFramesPerSecond:
    """帧率"""

    def test_constant_frame_time(self):
        assert compute_fps(make_log("F" * 100, frame_time=0.025)) == pytest.approx(40.0)

    def test_single_frame(self):
        assert compute_fps(make_log("F", frame_time=0.2)) == pytest.approx(5.0)

    def test_no_processed_frames(self):
        with pytest.raises(ContractError):
            compute_fps(make_log("FF", frame_time=math.nan))

    def test_zero_time(self):
        with pytest.raises(ContractError):
            compute_fps(make_log("FF", frame_time=0.0))


class TestTrialLogFile:
    """逐帧日志 CSV"""

    def test_round_trip(self, tmp_path):
        log = make_log("FWLF", offset=0.3)
        log.start_arc = 0.05
        path = tmp_path / "trial.csv"
        log.save(path)
        loaded = TrialLog.load(path)
        assert loaded.path_length == log.path_length
        assert loaded.start_arc == log.start_arc
        assert not loaded.failed
        assert [rec.box is None for rec in loaded.frames] == [False, False, True, False]
        assert compute_de(loaded) == pytest.approx(compute_de(log))
        assert compute_fs(loaded) == pytest.approx(compute_fs(log))

    def test_failed_flag_survives(self, tmp_path):
        log = TrialLog(path_length=20.0, failed=True)
        path = tmp_path / "failed.csv"
        log.save(path)
        assert TrialLog.load(path).failed

    def test_dataframe_columns(self):
        df = make_log("FL").to_dataframe()
        assert {"x1", "gt_x1", "est_depth", "processing_time"} <= set(df.columns)
        assert math.isnan(df["x1"].iloc[1])
        assert df.attrs["path_length"] == 10.0
