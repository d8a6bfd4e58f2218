"""
可视化模块
功能：实验指标柱状图、训练损失曲线、俯视轨迹图，以及汇总 CSV
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import seaborn as sns
import numpy as np
import pandas as pd
from pathlib import Path

# 设置字体和显示参数
plt.rcParams['font.family'] = 'sans-serif'
plt.rcParams['font.sans-serif'] = ['DejaVu Sans', 'Arial', 'Helvetica']
plt.rcParams['axes.unicode_minus'] = False
plt.rcParams['figure.dpi'] = 150
plt.rcParams['savefig.dpi'] = 150

sns.set_style("whitegrid")
sns.set_palette("husl")


METRIC_LABELS = {
    "de": "Distance Error (m)",
    "fs": "Following Success",
    "fps": "Frames per Second",
}


class Visualizer:
    """跟随实验结果可视化器"""

    def __init__(self, output_dir="results"):
        """
        初始化可视化器

        参数:
            output_dir: 图表与表格输出目录
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(exist_ok=True, parents=True)

    def _save(self, save_name):
        plt.tight_layout()
        plt.savefig(self.output_dir / save_name, bbox_inches='tight')
        plt.close()
        print(f"已保存: {save_name}")

    def plot_metric_bars(self, trials_df, fps_realtime=20.0, save_name="metrics_comparison.png"):
        """
        按 场景 × 跟踪器 绘制 DE / FS / FPS 分组柱状图（误差线为标准差）

        参数:
            trials_df: MetricsReport.trials_dataframe() 的结果
            fps_realtime: FPS 子图上的实时参考线
            save_name: 保存文件名
        """
        df = trials_df[~trials_df["failed"]] if "failed" in trials_df else trials_df
        fig, axes = plt.subplots(1, 3, figsize=(16, 5))
        for ax, metric in zip(axes, ("de", "fs", "fps")):
            sns.barplot(data=df, x="scenario", y=metric, hue="tracker",
                        errorbar="sd", capsize=0.1, ax=ax)
            ax.set_xlabel('Scenario', fontsize=11)
            ax.set_ylabel(METRIC_LABELS[metric], fontsize=11)
            ax.set_title(METRIC_LABELS[metric], fontsize=12, fontweight='bold')
            ax.tick_params(axis='x', rotation=20)
            if metric == "fs":
                ax.set_ylim(0, 1)
            if metric == "fps":
                ax.axhline(fps_realtime, color='red', linestyle='--', linewidth=1.5,
                           label=f'Real-time ({fps_realtime:g} FPS)')
            ax.legend(fontsize=9)
        self._save(save_name)

    def plot_loss_curve(self, epoch_losses, save_name="training_loss.png"):
        """绘制每轮平均训练损失"""
        fig, ax = plt.subplots(figsize=(8, 5))
        epochs = np.arange(1, len(epoch_losses) + 1)
        ax.plot(epochs, epoch_losses, 'b-o', linewidth=2, markersize=6, alpha=0.8)
        ax.set_xlabel('Epoch', fontsize=12)
        ax.set_ylabel('Mean Loss (GIoU + L1)', fontsize=12)
        ax.set_title('DTRD Training Loss', fontsize=14, fontweight='bold')
        ax.set_xticks(epochs)
        ax.grid(True, alpha=0.3)
        self._save(save_name)

    def plot_trajectories(self, world_df, save_name="trajectories.png"):
        """
        俯视轨迹图

        参数:
            world_df: world.csv 的内容（frame, body, x, y, theta）
        """
        fig, ax = plt.subplots(figsize=(7, 8))
        for body, group in world_df.groupby("body", sort=False):
            style = 'k-' if body == "robot" else ('b-' if body == "agent0" else 'r--')
            label = {"robot": "Robot", "agent0": "Target"}.get(body, f"Distractor ({body})")
            ax.plot(group["x"], group["y"], style, linewidth=2, alpha=0.8, label=label)
            ax.scatter(group["x"].iloc[0], group["y"].iloc[0], marker='o', s=50, zorder=5)
        ax.set_xlabel('x (m)', fontsize=12)
        ax.set_ylabel('y (m)', fontsize=12)
        ax.set_title('Top View Trajectories', fontsize=14, fontweight='bold')
        ax.set_aspect('equal')
        ax.legend(fontsize=9, loc='best')
        ax.grid(True, alpha=0.3)
        self._save(save_name)

    def create_results_summary(self, report):
        """
        写出汇总表格

        输出:
            summary.csv（按 跟踪器 × 场景）、summary_by_subject.csv、
            de.csv / fs.csv / fps.csv（按 跟踪器 × 场景 分组）、trials.csv

        返回:
            按 跟踪器 × 场景 的汇总 DataFrame
        """
        summary = report.aggregate(("tracker", "scenario"))
        summary.to_csv(self.output_dir / "summary.csv", index=False)
        print("已保存: summary.csv")
        report.aggregate(("subject", "tracker", "scenario")).to_csv(
            self.output_dir / "summary_by_subject.csv", index=False)
        print("已保存: summary_by_subject.csv")

        for metric in ("de", "fs", "fps"):
            table = summary[["tracker", "scenario", f"{metric}_mean", f"{metric}_std", "trials"]]
            table = table.rename(columns={f"{metric}_mean": "mean", f"{metric}_std": "std"})
            table.to_csv(self.output_dir / f"{metric}.csv", index=False)
            print(f"已保存: {metric}.csv")

        report.trials_dataframe().to_csv(self.output_dir / "trials.csv", index=False)
        print("已保存: trials.csv")
        return summary
