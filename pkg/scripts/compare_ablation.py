"""
深度消融对比脚本
对比外观基线、DTRD 与去掉深度通道的 DTRD 在各场景下的 FS / DE，
并检查统一着装场景中的排序关系
"""

import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent / "src"))

import argparse

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from config import load_config
from dtrd_model import DTRDModel, TrackerConfig
from protocol import ExperimentSpec, run_protocol


def check_orderings(summary):
    """
    检查跟踪器之间的排序关系

    参数:
        summary: MetricsReport.aggregate() 的结果

    返回:
        [(描述, 是否满足), ...]
    """
    def cell(tracker, scenario, metric):
        row = summary[(summary["tracker"] == tracker) & (summary["scenario"] == scenario)]
        return float(row[f"{metric}_mean"].iloc[0]) if not row.empty else float("nan")

    checks = []
    for tracker in ("baseline", "dtrd"):
        checks.append((f"无干扰: {tracker} FS ≥ 0.9", cell(tracker, "none", "fs") >= 0.9))
        checks.append((f"无干扰: {tracker} DE ≤ 0.6 m", cell(tracker, "none", "de") <= 0.6))
    checks.append(("双干扰交叉: baseline FS ≤ 0.4", cell("baseline", "two_cross", "fs") <= 0.4))
    checks.append(("双干扰交叉: DTRD FS ≥ baseline FS + 0.2",
                   cell("dtrd", "two_cross", "fs") >= cell("baseline", "two_cross", "fs") + 0.2))
    for scenario in ("one_cross", "two_cross", "two_parallel"):
        checks.append((f"{scenario}: DTRD DE < baseline DE",
                       cell("dtrd", scenario, "de") < cell("baseline", scenario, "de")))
    checks.append(("双干扰交叉: 去深度使 FS 下降 ≥ 0.1",
                   cell("dtrd", "two_cross", "fs") - cell("dtrd_nodepth", "two_cross", "fs") >= 0.1))
    return checks


def plot_ablation(summary, save_path):
    """FS 与 DE 的分组柱状图"""
    fig, axes = plt.subplots(1, 2, figsize=(14, 5))
    scenarios = list(dict.fromkeys(summary["scenario"]))
    trackers = list(dict.fromkeys(summary["tracker"]))
    x = np.arange(len(scenarios))
    width = 0.8 / len(trackers)

    for ax, metric, label in ((axes[0], "fs", "Following Success"), (axes[1], "de", "Distance Error (m)")):
        for i, tracker in enumerate(trackers):
            rows = summary[summary["tracker"] == tracker].set_index("scenario").reindex(scenarios)
            ax.bar(x + (i - (len(trackers) - 1) / 2) * width, rows[f"{metric}_mean"], width,
                   yerr=rows[f"{metric}_std"], capsize=3, label=tracker, alpha=0.8)
        ax.set_xlabel('Scenario', fontsize=12)
        ax.set_ylabel(label, fontsize=12)
        ax.set_title(f'{label} by Tracker', fontsize=14, fontweight='bold')
        ax.set_xticks(x)
        ax.set_xticklabels(scenarios, rotation=20)
        ax.legend(fontsize=10)
        ax.grid(True, alpha=0.3, axis='y')

    plt.tight_layout()
    plt.savefig(save_path, dpi=150, bbox_inches='tight')
    plt.close()
    print(f"\n对比图已保存: {save_path}")


def main():
    """主函数"""
    parser = argparse.ArgumentParser(description="深度消融与跟踪器排序对比")
    parser.add_argument("--config")
    parser.add_argument("--trials", type=int)
    args = parser.parse_args()

    config = load_config(args.config)
    print("=" * 70)
    print("深度消融与跟踪器排序对比")
    print("=" * 70)

    checkpoint = Path(config["data.checkpoint"])
    if not checkpoint.exists():
        print(f"警告: 检查点不存在 - {checkpoint}")
        print("请先运行 python src/main.py train")
        return 1
    model = DTRDModel.load(checkpoint, TrackerConfig.from_config(config))

    base = ExperimentSpec.from_config(config)
    spec = ExperimentSpec(subjects=base.subjects, trackers=("baseline", "dtrd", "dtrd_nodepth"),
                          distractor_counts=(0, 1, 2), two_distractor_variants=("cross", "parallel"),
                          trials=args.trials or base.trials, seed=base.seed)
    report = run_protocol(spec, config, model=model, workers=config["harness.workers"], verbose=True)
    summary = report.aggregate()

    print("\n" + "=" * 70)
    print("汇总")
    print("=" * 70)
    print(summary.to_string(index=False))

    print("\n" + "=" * 70)
    print("排序检查")
    print("=" * 70)
    for description, passed in check_orderings(summary):
        print(f"  [{'✓' if passed else '✗'}] {description}")

    results_dir = Path(config["data.results_dir"])
    results_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(results_dir / "ablation_summary.csv", index=False)
    plot_ablation(summary, results_dir / "ablation_comparison.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
