#!/usr/bin/env python3
"""
CRDA 工作流管理器 - 统一管理 模拟数据 → 交叉验证 → 训练 → 预测 → 基准测试 流程

每个输出目录都会写入 run_config.yaml（完整解析后的参数 + 配置），
`rerun` 可以据此逐字节复现全部数值输出。
"""

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
import yaml
from numpy.linalg import LinAlgError

from benchmark_runner import BenchmarkRunner, BenchSettings
from crda_classifier import (discriminants, fit_factors, load_model, normalize_q, predict, save_model,
                             selected_feature_names, selected_features, train, train_soft)
from crda_errors import CrdaError, DataError, UsageError, exit_code_for
from data_model import center_by_class, load_csv, load_features, save_csv
from metrics import test_error
from model_selection import Grid, default_grids, grid_search, light_search, soft_grid_search
from project_config import get_config, use_config_values
from rscm import estimate_alpha_lw
from simgen import describe, generate, setup_spec

ECHO_FILE = "run_config.yaml"


def show_help():
    """显示帮助信息"""
    print("""
CRDA 工作流管理器 - 使用说明

**数据与模型**
  python crda_workflow.py simulate --setup I|II|III [--seed N] [--scale F]   - 生成仿真数据 (训练/验证/测试 + 真实特征)
  python crda_workflow.py cv --train CSV [--alpha cv|lw|<数值>] [--q inf]   - 交叉验证选择 (alpha, K)
  python crda_workflow.py train --train CSV --alpha <数值>|lw --k K          - 训练 CRDA 模型
  python crda_workflow.py train --train CSV --alpha <数值> --delta D         - 训练软阈值基线模型
  python crda_workflow.py predict --model JSON --test CSV [--discriminants] - 预测测试数据

**基准测试**
  python crda_workflow.py bench --setup I --trials 5 --folds 5             - 仿真设置上的蒙特卡洛对比
  python crda_workflow.py bench --data CSV                                 - 真实数据上 75%/25% 随机划分重复 10 次

**通用命令**
  python crda_workflow.py status [DIR]     - 显示运行目录状态和推荐的下一步
  python crda_workflow.py rerun DIR/run_config.yaml [--out DIR] - 按回显配置重新运行
  python crda_workflow.py help             - 显示此帮助信息

退出码: 0 成功, 2 参数错误, 3 数据错误, 4 数值错误
""")


@dataclass
class RunConfig:
    """一次运行的完整解析参数与配置"""

    command: str
    arguments: Dict[str, Any]
    config: Dict[str, Any]

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        arguments = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        return cls(command=args.command, arguments=arguments, config=get_config().as_dict())

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / ECHO_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump({"command": self.command, "arguments": self.arguments, "config": self.config},
                           f, default_flow_style=False, allow_unicode=True, sort_keys=True)
        return path

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if path.is_dir():
            path = path / ECHO_FILE
        if not path.exists():
            raise DataError(f"找不到运行回显文件: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            payload = yaml.safe_load(f) or {}
        if payload.get("command") not in COMMANDS:
            raise UsageError(f"回显文件中的命令无法重新运行: {payload.get('command')}")
        return cls(command=payload["command"], arguments=dict(payload.get("arguments") or {}),
                   config=dict(payload.get("config") or {}))


def _echo(args: argparse.Namespace) -> Path:
    return RunConfig.from_args(args).write(args.out)


def _resolve_common(args: argparse.Namespace, default_name: str):
    """补全 seed / folds / workers / out 的默认值（仅对存在的参数）"""
    config = get_config()
    if hasattr(args, "seed") and args.seed is None:
        args.seed = int(config.get("selection.seed", 0))
    if hasattr(args, "folds") and args.folds is None:
        args.folds = int(config.get("selection.folds", 5))
    if hasattr(args, "workers") and args.workers is None:
        args.workers = config.get_worker_count()
    if args.out is None:
        args.out = str(Path(config.get("output.output_dir", "runs")) / default_name.format(**vars(args)))


def _parse_alpha(text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise UsageError(f"alpha 必须是 cv、lw 或数值，实际: {text}")


def _parse_q(text) -> str:
    try:
        return normalize_q(text)
    except DataError as e:
        raise UsageError(str(e)) from e


def _priors(text: Optional[str]):
    if text in (None, "proportional"):
        return None
    if text == "equal":
        return "equal"
    raise UsageError(f"未知的先验设置: {text}，可选: proportional, equal")


def _load_training(args: argparse.Namespace):
    if args.transpose and not args.labels:
        raise UsageError("--transpose 需要同时给出 --labels 标签文件")
    ds = load_csv(args.train, label_column=args.label_column, transpose=args.transpose, labels_path=args.labels)
    print(f"[INFO] 读取训练数据 {args.train}: n={ds.n}, p={ds.p}, G={ds.G}")
    return ds


def _write_feature_list(model, path: Path):
    indices = selected_features(model)
    frame = pd.DataFrame({"index": [i + 1 for i in indices], "feature": selected_feature_names(model)})
    frame.to_csv(path, index=False, lineterminator="\n")


def cmd_simulate(args: argparse.Namespace) -> int:
    """生成一个仿真设置的三组数据"""
    config = get_config()
    args.setup = str(args.setup).upper()
    if args.scale is None:
        args.scale = float(config.get("simulation.scale", 1.0))
    args.multinomial = bool(args.multinomial or config.get("simulation.multinomial_labels", False))
    _resolve_common(args, "sim_{setup}_seed{seed}")

    spec = setup_spec(args.setup, args.scale)
    info = describe(spec)
    print("=" * 60)
    print(f"生成仿真数据: 设置 {info['setup']} (p={info['p']}, G={info['G']}, seed={args.seed})")
    print("=" * 60)

    data = generate(spec, args.seed, args.multinomial)
    out = Path(args.out)
    for name, ds in (("train", data.train), ("validation", data.validation), ("test", data.test)):
        if ds is None:
            print(f"[SKIP] 设置 {args.setup} 没有 {name} 划分")
            continue
        save_csv(ds, out / f"{name}.csv")
        print(f"[SUCCESS] {name}.csv: {ds.n} x {ds.p}")

    truth = pd.DataFrame({"index": data.truth + 1, "feature": [f"x{i + 1}" for i in data.truth]})
    truth.to_csv(out / "truth.csv", index=False, lineterminator="\n")
    print(f"[SUCCESS] truth.csv: {truth.shape[0]} 个真实差异特征")
    _echo(args)
    print(f"[DONE] 数据保存在 {out}")
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    """交叉验证模型选择"""
    args.k = str(args.k).lower()
    if args.k != "cv":
        raise UsageError("cv 命令的 --k 只接受 cv；指定 K 请使用 train 命令")
    args.alpha = str(args.alpha).lower()
    args.q = _parse_q(args.q)
    _resolve_common(args, "cv")
    ds = _load_training(args)
    priors = _priors(args.priors)
    options = dict(Q=args.folds, seed=args.seed, priors=priors, max_concurrent=args.workers)

    start = time.time()
    if args.soft:
        if args.alpha != "cv":
            raise UsageError("--soft 只支持 --alpha cv")
        print(f"[PROCESS] 软阈值基线 (alpha, delta) 网格搜索，{args.folds} 折")
        report = soft_grid_search(ds, **options)
    elif args.alpha == "cv":
        print(f"[PROCESS] (alpha, K) 网格搜索，q={args.q}，{args.folds} 折")
        report = grid_search(ds, q=args.q, **options)
    elif args.alpha == "lw":
        print(f"[PROCESS] 轻量策略：闭式 alpha + K 交叉验证，q={args.q}，{args.folds} 折")
        report = light_search(ds, q=args.q, **options)
    else:
        alpha = _parse_alpha(args.alpha)
        print(f"[PROCESS] 固定 alpha={alpha}，K 交叉验证，q={args.q}，{args.folds} 折")
        report = grid_search(ds, grid=Grid(alphas=[alpha], ks=default_grids(ds.p).ks), q=args.q, **options)

    grid_path, summary_path = report.write(args.out, "cv")
    summary = report.summary()
    print(f"[STATS] eps_cv={summary['eps_cv']}, eps_thr={summary['eps_thr']:.1f} (n_floor={summary['n_floor']:g})")
    selected = ", ".join(f"{k}={v}" for k, v in summary.items() if k.startswith("selected_"))
    print(f"[STATS] {selected}")
    _echo(args)
    print(f"[DONE] 用时 {time.time() - start:.1f} 秒，结果: {grid_path}, {summary_path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    """训练并保存模型"""
    if (args.k is None) == (args.delta is None):
        raise UsageError("train 需要且只能指定 --k 或 --delta 之一")
    args.alpha = str(args.alpha).lower()
    if args.alpha == "lw" and args.k is None:
        raise UsageError("--alpha lw 只能与 --k 一起使用")
    _resolve_common(args, "train")
    if args.delta is None:
        args.q = _parse_q(args.q)
    ds = _load_training(args)
    priors = _priors(args.priors)

    means, factors = fit_factors(ds)
    if args.alpha == "lw":
        alpha = estimate_alpha_lw(center_by_class(ds, means), factors)
        print(f"[INFO] 闭式估计 alpha = {alpha:.6f}")
    else:
        alpha = _parse_alpha(args.alpha)

    if args.delta is not None:
        model = train_soft(ds, alpha, args.delta, priors, fitted=(means, factors))
    else:
        model = train(ds, alpha, args.k, args.q, priors, fitted=(means, factors))

    out = Path(args.out)
    model_path = save_model(model, out / "model.json")
    _write_feature_list(model, out / "selected_features.csv")
    print(f"[STATS] 选中特征数 NFS = {len(selected_features(model))} / {ds.p}")
    _echo(args)
    print(f"[DONE] 模型保存在 {model_path}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    """用已保存的模型预测测试数据"""
    _resolve_common(args, "predict")
    model = load_model(args.model)
    X, feature_names, labels = load_features(args.test, args.label_column)
    if model.feature_names is not None and len(feature_names) == model.p \
            and tuple(feature_names) != model.feature_names:
        print("[WARNING] 测试数据的特征名与模型不一致，按列位置对齐")

    predicted = predict(model, X)
    frame = pd.DataFrame({"row": np.arange(1, len(predicted) + 1), "predicted": predicted})
    if labels is not None:
        frame["label"] = labels
        count, rate = test_error(predicted, labels)
        print(f"[STATS] 测试误差 TE = {count} / {len(labels)} ({rate:.2%})")
    if args.discriminants:
        scores = discriminants(model, X)
        for g, name in enumerate(model.label_names):
            frame[f"d_{name}"] = scores[:, g]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "predictions.csv", index=False, lineterminator="\n")
    _echo(args)
    print(f"[DONE] {len(predicted)} 条预测保存在 {out / 'predictions.csv'}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    """蒙特卡洛基准测试"""
    config = get_config()
    if args.scale is None:
        args.scale = float(config.get("simulation.scale", 1.0))
    if args.seed is None:
        args.seed = int(config.get("selection.seed", 0))
    args.multinomial = bool(args.multinomial or config.get("simulation.multinomial_labels", False))
    if args.out is None:
        name = f"bench_{args.setup}_seed{args.seed}" if args.setup else f"bench_data_seed{args.seed}"
        args.out = str(Path(config.get("output.output_dir", "runs")) / name)

    settings = BenchSettings(setup=args.setup, data_path=args.data, trials=args.trials, folds=args.folds,
                             seed=args.seed, scale=args.scale,
                             q_list=[q.strip() for q in str(args.q_list).split(",") if q.strip()],
                             tuning=args.tuning, workers=args.workers, out_dir=args.out,
                             multinomial=args.multinomial, label_column=args.label_column)
    runner = BenchmarkRunner(settings)
    resolved = runner.settings
    args.setup, args.trials, args.folds = resolved.setup, resolved.trials, resolved.folds
    args.workers, args.q_list = resolved.workers, ",".join(resolved.q_list)
    _echo(args)
    runner.run_all()
    return 0


def _artifact_rows(run_dir: Path) -> List[tuple]:
    names = ["train.csv", "validation.csv", "test.csv", "truth.csv", "cv_grid.csv", "cv_summary.yaml",
             "model.json", "selected_features.csv", "predictions.csv", "results.csv", "results.md"]
    rows = [(name, (run_dir / name).exists()) for name in names]
    trials_dir = run_dir / "trials"
    if trials_dir.exists():
        rows.append((f"trials/ ({len(list(trials_dir.glob('trial_*.json')))} 个试验)", True))
    return rows


def _recommend(run_dir: Path, echo: RunConfig) -> str:
    """根据已有产物推荐下一条命令"""
    prefix = "python crda_workflow.py"
    if echo.command == "simulate":
        return f"{prefix} cv --train {run_dir / 'train.csv'} --alpha cv --k cv"
    if echo.command == "cv":
        summary_path = run_dir / "cv_summary.yaml"
        if not summary_path.exists():
            return f"{prefix} rerun {run_dir / ECHO_FILE}"
        with open(summary_path, 'r', encoding='utf-8') as f:
            summary = yaml.safe_load(f) or {}
        train_path = echo.arguments.get("train")
        if "selected_delta" in summary:
            return f"{prefix} train --train {train_path} --alpha {summary['selected_alpha']} --delta {summary['selected_delta']}"
        return (f"{prefix} train --train {train_path} --alpha {summary['selected_alpha']} "
                f"--k {summary['selected_K']} --q {summary['q']}")
    if echo.command == "train":
        return f"{prefix} predict --model {run_dir / 'model.json'} --test <测试集CSV>"
    if echo.command == "bench" and not (run_dir / "results.csv").exists():
        return f"{prefix} rerun {run_dir / ECHO_FILE}  (已完成的试验会被跳过)"
    return "该运行已完成"


def show_status(directory: Optional[str] = None) -> int:
    """显示运行目录状态"""
    root = Path(directory or get_config().get("output.output_dir", "runs"))
    print("=" * 60)
    print(f"CRDA 运行状态: {root}")
    print("=" * 60)

    if not root.exists():
        print(f"{root}: 目录不存在")
        print("\n推荐操作:\n  运行: python crda_workflow.py simulate --setup I")
        return 0

    run_dirs = [root] if (root / ECHO_FILE).exists() else sorted(
        p for p in root.iterdir() if p.is_dir() and (p / ECHO_FILE).exists())
    if not run_dirs:
        print("没有找到任何运行记录 (run_config.yaml)")
        return 0

    for run_dir in run_dirs:
        echo = RunConfig.load(run_dir)
        mtime = time.ctime((run_dir / ECHO_FILE).stat().st_mtime)
        print(f"\n{run_dir.name}: {echo.command} ({mtime})")
        for name, present in _artifact_rows(run_dir):
            if present:
                print(f"  [完成] {name}")
        print(f"  推荐操作: {_recommend(run_dir, echo)}")
    return 0


def cmd_status(args: argparse.Namespace) -> int:
    return show_status(args.dir)


def cmd_rerun(args: argparse.Namespace) -> int:
    """按回显的参数和配置重新执行"""
    echo = RunConfig.load(args.path)
    use_config_values(echo.config)
    namespace = argparse.Namespace(command=echo.command, **echo.arguments)
    if args.out is not None:
        namespace.out = args.out
    print(f"[INFO] 重新运行 {echo.command}，输出到 {namespace.out}")
    return COMMANDS[echo.command](namespace)


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "cv": cmd_cv,
    "train": cmd_train,
    "predict": cmd_predict,
    "bench": cmd_bench,
}


def _add_data_options(parser: argparse.ArgumentParser):
    parser.add_argument('--train', required=True, help='训练数据CSV')
    parser.add_argument('--label-column', default=None, help='标签列名（默认取配置 data.label_column）')
    parser.add_argument('--transpose', action='store_true', help='文件按 特征为行 存放')
    parser.add_argument('--labels', default=None, help='转置模式下的单列标签文件')
    parser.add_argument('--priors', default='proportional', help='proportional 或 equal')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crda_workflow.py", description="CRDA 工作流管理器")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="生成仿真数据")
    p.add_argument('--setup', required=True, type=str.upper, choices=["I", "II", "III"])
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--scale', type=float, default=None)
    p.add_argument('--multinomial', action='store_true', help='各类样本数按多项分布抽取')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cv", help="交叉验证模型选择")
    _add_data_options(p)
    p.add_argument('--alpha', default='cv', help='cv、lw 或固定数值')
    p.add_argument('--k', default='cv', help='只接受 cv')
    p.add_argument('--q', default='inf', help='行范数: 1、2 或 inf')
    p.add_argument('--soft', action='store_true', help='软阈值基线的 (alpha, delta) 搜索')
    p.add_argument('--folds', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("train", help="训练模型")
    _add_data_options(p)
    p.add_argument('--alpha', required=True, help='数值或 lw')
    p.add_argument('--k', type=int, default=None, help='保留的特征数 K')
    p.add_argument('--delta', type=float, default=None, help='软阈值 delta')
    p.add_argument('--q', default='inf')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="预测")
    p.add_argument('--model', required=True)
    p.add_argument('--test', required=True)
    p.add_argument('--label-column', default=None)
    p.add_argument('--discriminants', action='store_true', help='同时输出判别值')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="蒙特卡洛基准测试")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--setup', type=str.upper, choices=["I", "II", "III"])
    source.add_argument('--data', default=None, help='真实数据CSV')
    p.add_argument('--label-column', default=None)
    p.add_argument('--trials', type=int, default=None)
    p.add_argument('--folds', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--scale', type=float, default=None)
    p.add_argument('--q-list', default='1,2,inf')
    p.add_argument('--tuning', default='cv', choices=["cv", "holdout"])
    p.add_argument('--multinomial', action='store_true')
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("status", help="显示运行目录状态")
    p.add_argument('dir', nargs='?', default=None)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("rerun", help="按回显配置重新运行")
    p.add_argument('path')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回进程退出码"""
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0].lower() == "help":
        show_help()
        return 0

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CrdaError, OSError, LinAlgError) as e:
        print(f"[ERROR] {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
