"""
命令行与输出测试
录制、语料生成、报告汇总与错误退出码
"""

import math

import pandas as pd
import pytest

from main import main
from metrics import TrialLog
from protocol import MetricsReport, TrialResult, save_report
from recorder import corpus_plan, generate_corpus, record_command
from sequence_io import SequenceReader, list_sequences
from visualization import Visualizer
from world import SCENARIOS


FAST_CFG = """\
scenario.rect_length = 2.0
scenario.rect_width = 1.0
scenario.first_cross_arc = 1.5
scenario.second_cross_arc = 4.0
scenario.parallel_cut_arc = 0.5
harness.clock = fixed
harness.timeout = 30.0
"""


def sample_report():
    rows = [TrialResult("A", "baseline", "none", 1, 0.2, 0.9, 45.0),
            TrialResult("A", "baseline", "none", 2, 0.4, 0.8, 44.0),
            TrialResult("B", "dtrd", "two_cross", 1, math.nan, 0.0, math.nan, failed=True),
            TrialResult("B", "dtrd", "two_cross", 2, 0.1, 0.7, 12.0)]
    return MetricsReport(rows, seed=3)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST_CFG + f"data.checkpoint = {tmp_path / 'missing.ckpt'}\n", encoding="utf-8")
    return path


class TestRecorder:
    """序列录制"""

    def test_record_writes_sequence(self, fast_config, tmp_path):
        out, count = record_command("one_cross", 4, tmp_path / "seq", fast_config)
        reader = SequenceReader(out)
        assert count > 10
        assert reader.frame_count == count
        assert reader.agent_count == 2
        assert reader.box(0) is not None
        assert set(reader.world["body"]) == {"robot", "agent0", "agent1"}

    def test_record_is_deterministic(self, fast_config, tmp_path):
        a, _ = record_command("none", 1, tmp_path / "a", fast_config)
        b, _ = record_command("none", 1, tmp_path / "b", fast_config)
        assert (a / "gt.csv").read_bytes() == (b / "gt.csv").read_bytes()
        assert (a / "000003.rgbd").read_bytes() == (b / "000003.rgbd").read_bytes()

    def test_corpus_naming(self, fast_config, tmp_path):
        generate_corpus(tmp_path / "corpus", fast_config, count=2)
        names = [p.name for p in list_sequences(tmp_path / "corpus")]
        assert names == ["seq_000_none_A", "seq_001_one_cross_A"]

    def test_default_corpus_covers_every_cell(self):
        plan = corpus_plan()
        assert len(plan) == 45
        cells = {(name, subject) for _, name, subject in plan}
        assert cells == {(name, subject) for name in SCENARIOS for subject in "AB"}
        counts = [sum(1 for _, n, s in plan if (n, s) == cell) for cell in cells]
        assert min(counts) >= 5


class TestVisualizer:
    """图表与汇总表格"""

    def test_summary_files(self, tmp_path):
        summary = Visualizer(tmp_path).create_results_summary(sample_report())
        assert len(summary) == 2
        for name in ("summary.csv", "summary_by_subject.csv", "de.csv", "fs.csv", "fps.csv", "trials.csv"):
            assert (tmp_path / name).exists()
        fs = pd.read_csv(tmp_path / "fs.csv")
        assert list(fs.columns) == ["tracker", "scenario", "mean", "std", "trials"]
        assert fs["mean"].iloc[0] == pytest.approx(0.85)

    def test_plots(self, tmp_path):
        visualizer = Visualizer(tmp_path)
        visualizer.plot_metric_bars(sample_report().trials_dataframe())
        visualizer.plot_loss_curve([1.2, 0.8, 0.5])
        assert (tmp_path / "metrics_comparison.png").exists()
        assert (tmp_path / "training_loss.png").exists()

    def test_trajectory_plot(self, fast_config, tmp_path):
        out, _ = record_command("two_cross", 2, tmp_path / "seq", fast_config)
        Visualizer(tmp_path / "plots").plot_trajectories(pd.read_csv(out / "world.csv"))
        assert (tmp_path / "plots" / "trajectories.png").exists()


class TestCommandLine:
    """命令行入口"""

    def test_report(self, tmp_path):
        save_report(tmp_path / "report.bin", sample_report())
        assert main(["report", "--in", str(tmp_path / "report.bin"), "--out", str(tmp_path / "out")]) == 0
        trials = pd.read_csv(tmp_path / "out" / "trials.csv")
        assert len(trials) == 4
        assert (tmp_path / "out" / "summary.csv").exists()

    def test_report_missing_file(self, tmp_path):
        assert main(["report", "--in", str(tmp_path / "none.bin"), "--out", str(tmp_path / "out")]) == 1

    def test_report_bad_magic(self, tmp_path):
        (tmp_path / "bad.bin").write_bytes(b"NOPE" + bytes(30))
        assert main(["report", "--in", str(tmp_path / "bad.bin"), "--out", str(tmp_path / "out")]) == 1

    def test_run_without_checkpoint(self, cfg_file, tmp_path):
        assert main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "r.bin")]) == 1
        assert not (tmp_path / "r.bin").exists()

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("tracker.layers = 3\n", encoding="utf-8")
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "r.bin")]) == 1

    def test_record(self, cfg_file, tmp_path):
        out = tmp_path / "seq_demo"
        assert main(["record", "--scenario", "none", "--seed", "7", "--out", str(out),
                     "--config", str(cfg_file)]) == 0
        assert (out / "gt.csv").exists()
        assert (out / "world.csv").exists()

    def test_record_unknown_scenario(self, cfg_file, tmp_path):
        assert main(["record", "--scenario", "three_cross", "--seed", "1", "--out", str(tmp_path / "s"),
                     "--config", str(cfg_file)]) == 1

    def test_baseline_run_then_report(self, tmp_path):
        cfg = tmp_path / "baseline.cfg"
        cfg.write_text(FAST_CFG + "experiment.subjects = A\nexperiment.trackers = baseline\n"
                       "experiment.distractor_counts = 0\nexperiment.trials = 1\n", encoding="utf-8")
        logs = tmp_path / "logs"
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r.bin"), "--logs", str(logs)]) == 0
        log = TrialLog.load(logs / "A_baseline_none_1.csv")
        assert log.path_length == pytest.approx(6.0)
        assert main(["report", "--in", str(tmp_path / "r.bin"), "--out", str(tmp_path / "out")]) == 0
