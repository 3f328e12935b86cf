#!/usr/bin/env python
# -*- coding: utf-8 -*-

import sys
import argparse
import traceback
from typing import Any, Dict, List, Optional

from src.core.pipeline import STAGES, Pipeline
from src.synth.corpus_generator import generate_corpus, parse_scenario
from src.utils.config_loader import load_config
from src.utils.exceptions import ConfigError, InsiderGraphError, StageError
from src.utils.logger import get_logger, setup_logger

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    """命令行解析器：每个子命令都接受全局参数"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='配置文件路径(.ini 或 .json，manifest.json 也可以)')
    common.add_argument('--seed', type=int, help='主随机种子')
    common.add_argument('--department', action='append',
                        help='只分析该部门，可重复给出以逐部门分析')
    common.add_argument('--out', help='输出目录')
    common.add_argument('--strict', action='store_true', default=None, help='严格模式，畸形行直接报错')
    common.add_argument('--export-forests', action='store_true', default=None,
                        help='把训练好的森林导出为 forests/<run>.json')
    common.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='覆盖任意配置项，可重复给出，如 --set forest.tree_count=200')

    parser = argparse.ArgumentParser(description='基于用户-设备二部图和隔离森林的内部威胁检测')
    subparsers = parser.add_subparsers(dest='command', required=True)

    subparsers.add_parser('ingest', parents=[common], help='读取CSV写入事件存储并生成校验汇总')
    subparsers.add_parser('graph', parents=[common], help='构建二部图，导出边表和度分布')
    subparsers.add_parser('features', parents=[common], help='提取50维特征矩阵')
    subparsers.add_parser('score', parents=[common], help='对特征矩阵训练森林并打分')
    subparsers.add_parser('report', parents=[common], help='由打分结果生成报告')
    run = subparsers.add_parser('run', parents=[common], help='依次执行全部阶段')
    run.add_argument('--use-store', action='store_true', help='先写入事件存储再从存储读取')

    synth = subparsers.add_parser('synth', parents=[common], help='生成带植入异常用户的合成语料')
    synth.add_argument('--users', type=int, default=130, help='用户数，至少2')
    synth.add_argument('--days', type=int, default=90, help='天数，至少5')
    synth.add_argument('--scenario', action='append', default=[],
                       help='植入场景 KIND[:USER[:INTENSITY]]，可重复')
    synth.add_argument('--data-dir', help='语料输出目录，缺省为配置中的 [input] data_dir')
    synth.add_argument('--timestamp-format', choices=('us', 'iso'), default='us', help='时间戳格式')
    return parser


def config_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """把命令行参数转换成配置覆盖项，None 表示未给出；专用参数优先于 --set"""
    overrides: Dict[str, Dict[str, Any]] = {}
    for item in args.set:
        name, sep, value = item.partition('=')
        section, dot, key = name.strip().partition('.')
        if not sep or not dot or not section or not key:
            raise ConfigError(f"--set 参数格式应为 SECTION.KEY=VALUE: {item}")
        overrides.setdefault(section, {})[key] = value.strip()

    flags = {
        'forest': {'seed': args.seed},
        'cohort': {'department': ','.join(args.department) if args.department else None},
        'output': {'out_dir': args.out, 'export_forests': args.export_forests},
        'ingest': {'strict': args.strict},
    }
    for section, values in flags.items():
        for key, value in values.items():
            if value is not None:
                overrides.setdefault(section, {})[key] = value
    return overrides


def cmd_synth(args: argparse.Namespace, config: Dict[str, Any], parser: argparse.ArgumentParser) -> int:
    """生成合成语料，参数错误按 argparse 习惯以状态码2退出"""
    try:
        scenarios = [parse_scenario(text) for text in args.scenario]
        department = args.department[0] if args.department else 'Engineering'
        out_dir = args.data_dir or config['input']['data_dir']
        corpus = generate_corpus(args.users, args.days, scenarios, config['forest']['seed'], out_dir,
                                 department=department, timestamp_format=args.timestamp_format)
    except ValueError as e:
        parser.error(str(e))
    print(f"合成语料已写入 {corpus.out_dir}，植入用户: {', '.join(corpus.ground_truth.users) or '无'}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    cohorts = Pipeline(config).run(use_store=args.use_store)
    for cohort in cohorts:
        label = cohort.department or '全部用户'
        dropped = sum(stats.dropped for stats in cohort.filter_stats.values())
        unknown = sum(stats.unknown_total for stats in cohort.filter_stats.values())
        print(f"[{label}] {len(cohort.users)} 个用户，过滤掉 {dropped} 条记录(其中未知用户 {unknown} 条)，"
              f"输出目录 {cohort.out_dir}")
    return EXIT_OK


def cmd_stage(command: str, config: Dict[str, Any]) -> int:
    pipeline = Pipeline(config)
    if command == 'ingest':
        stats = pipeline.ingest()
        for kind, stat in sorted(stats.items()):
            print(f"{kind}: 读取 {stat.read}, 接受 {stat.accepted}, 拒绝 {stat.rejected_total}")
        return EXIT_OK
    for cohort in pipeline.run_stage(command):
        print(f"[{cohort.department or '全部用户'}] {command} 完成: {', '.join(cohort.outputs)}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """主函数：加载配置、初始化日志并分派子命令

    Returns:
        进程退出状态
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, config_overrides(args))
    except InsiderGraphError as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_FAILURE

    setup_logger(config['logging']['log_path'], config['logging']['log_level'])
    logger = get_logger()
    logger.info(f"执行子命令 {args.command}")

    if args.command == 'synth':
        return cmd_synth(args, config, parser)

    try:
        if args.command == 'run':
            return cmd_run(args, config)
        if args.command in STAGES:
            return cmd_stage(args.command, config)
    except StageError as e:
        logger.error(f"阶段 {e.stage} 失败: {e.cause}\n{traceback.format_exc()}")
        print(f"错误[{e.stage}]: {e.cause}", file=sys.stderr)
        return EXIT_FAILURE
    except (InsiderGraphError, OSError, ValueError) as e:
        logger.error(f"程序异常退出: {e}\n{traceback.format_exc()}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_FAILURE

    parser.error(f"未知子命令: {args.command}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
