"""
主程序
功能：命令行入口，录制语料、训练 DTRD、运行跟随实验协议、生成报告

用法:
    python main.py record --scenario S --seed N --out DIR
    python main.py corpus --out DIR [--count 45]
    python main.py train --config FILE
    python main.py run --config FILE --out report.bin [--logs DIR]
    python main.py report --in report.bin --out DIR
"""

import argparse
import sys
import time
from pathlib import Path

import pandas as pd

from config import load_config
from dtrd_model import DTRDModel, TrackerConfig
from errors import ConfigError, ContractError, FormatError, StartupError
from protocol import ExperimentSpec, load_report, run_protocol, save_report
from recorder import generate_corpus, record_command
from sequence_io import list_sequences, load_pairs, split_sequences
from trainer import evaluate_mean_iou, save_eval_metrics, save_loss_history, train
from visualization import Visualizer


def banner(title):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def train_command(config, verbose=True):
    """
    训练命令：按序列 70/30 划分，抽取训练对，训练并在留出集上评估

    返回:
        (检查点路径, 训练结果)
    """
    t = config.section("train")
    tracker_config = TrackerConfig.from_config(config)
    results_dir = Path(config["data.results_dir"])
    results_dir.mkdir(parents=True, exist_ok=True)

    banner("步骤 1: 加载语料并划分训练/评估集")
    sequences = list_sequences(config["data.corpus_dir"])
    train_seqs, eval_seqs = split_sequences(sequences, t["train_fraction"], t["seed"])
    print(f"  序列总数: {len(sequences)}，训练 {len(train_seqs)}，评估 {len(eval_seqs)}")
    train_pairs = load_pairs(train_seqs, t["pairs_per_sequence"], t["max_frame_gap"], t["seed"],
                             tracker_config.d_max)
    eval_pairs = load_pairs(eval_seqs, t["pairs_per_sequence"], t["max_frame_gap"], t["seed"] + 1,
                            tracker_config.d_max)
    if not train_pairs:
        raise StartupError(f"语料 {config['data.corpus_dir']} 中没有可用的训练对")
    print(f"  训练对: {len(train_pairs)}，评估对: {len(eval_pairs)}")

    banner("步骤 2: 训练 DTRD")
    model = DTRDModel(tracker_config, seed=t["seed"])
    print(f"  参数量: {model.parameter_count():,}")
    eval_jitter = (t["center_jitter"], t["scale_jitter"])
    iou_before = evaluate_mean_iou(model, eval_pairs, tracker_config, t["seed"], *eval_jitter)
    result = train(train_pairs, tracker_config, epochs=t["epochs"], lr_model=t["lr_model"],
                   lr_backbone=t["lr_backbone"], seed=t["seed"], model=model,
                   batch_size=t["batch_size"], weight_decay=t["weight_decay"],
                   betas=(t["beta1"], t["beta2"]), eps=t["eps"],
                   lambda_iou=t["lambda_iou"], lambda_l1=t["lambda_l1"],
                   center_jitter=t["center_jitter"], scale_jitter=t["scale_jitter"],
                   first_layer_in_model_group=t["first_layer_in_model_group"], verbose=verbose)
    iou_after = evaluate_mean_iou(model, eval_pairs, tracker_config, t["seed"], *eval_jitter)

    banner("步骤 3: 保存检查点与训练指标")
    checkpoint = Path(config["data.checkpoint"])
    model.save(checkpoint)
    print(f"已保存: {checkpoint}")
    save_loss_history(results_dir / "loss_history.csv", result.epoch_losses)
    save_eval_metrics(results_dir / "eval_metrics.csv", iou_before, iou_after)
    print(f"  留出集平均 IOU: 训练前 {iou_before:.4f} → 训练后 {iou_after:.4f}")
    Visualizer(results_dir).plot_loss_curve(result.epoch_losses)
    return checkpoint, result


def load_model(config):
    checkpoint = Path(config["data.checkpoint"])
    if not checkpoint.exists():
        raise StartupError(f"检查点不存在: {checkpoint}（请先运行 train）")
    return DTRDModel.load(checkpoint, TrackerConfig.from_config(config))


def run_command(config, out_path, logs_dir=None):
    """运行实验协议并保存 UCFR 报告"""
    spec = ExperimentSpec.from_config(config)
    model = load_model(config) if any(t != "baseline" for t in spec.trackers) else None
    banner("运行跟随实验")
    report = run_protocol(spec, config, model=model, logs_dir=logs_dir,
                          workers=config["harness.workers"], verbose=True)
    save_report(out_path, report)
    print(f"\n已保存报告: {out_path}")
    return report


def report_command(report_path, out_dir, world_csv=None):
    """从 UCFR 报告生成汇总 CSV 与图表"""
    report = load_report(report_path)
    visualizer = Visualizer(out_dir)
    banner("生成汇总表格")
    summary = visualizer.create_results_summary(report)
    print(summary.to_string(index=False))

    banner("生成图表")
    visualizer.plot_metric_bars(report.trials_dataframe(), report.fps_realtime)
    if world_csv is not None:
        visualizer.plot_trajectories(pd.read_csv(world_csv))

    slow = report.slow_trackers()
    if slow:
        print(f"\n警告: 以下跟踪器平均帧率低于 {report.fps_realtime:g} FPS: {', '.join(slow)}")
    return summary


def build_parser():
    parser = argparse.ArgumentParser(description="RGB-D 人员跟随仿真实验")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("record", help="录制一个序列")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subject", default="A")
    p.add_argument("--config")

    p = sub.add_parser("corpus", help="生成默认训练语料")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--config")

    p = sub.add_parser("train", help="训练 DTRD")
    p.add_argument("--config")

    p = sub.add_parser("run", help="运行实验协议")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--logs")

    p = sub.add_parser("report", help="从报告生成汇总")
    p.add_argument("--in", dest="report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--world", help="可选: world.csv，用于绘制轨迹图")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    start_time = time.time()
    try:
        if args.command == "report":
            report_command(args.report, args.out, args.world)
        else:
            config = load_config(args.config)
            if args.command == "record":
                record_command(args.scenario, args.seed, args.out, config, args.subject, verbose=True)
            elif args.command == "corpus":
                count = args.count if args.count is not None else config["data.corpus_size"]
                banner(f"生成语料: {count} 个序列")
                generate_corpus(args.out, config, count, verbose=True)
            elif args.command == "train":
                train_command(config)
            elif args.command == "run":
                run_command(config, args.out, args.logs)
    except (StartupError, ConfigError, ContractError, FormatError) as exc:
        print(f"错误: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"错误: {exc.filename or ''} {exc.strerror or exc}", file=sys.stderr)
        return 1
    print(f"\n总运行时间: {time.time() - start_time:.2f}秒")
    return 0


if __name__ == "__main__":
    sys.exit(main())
