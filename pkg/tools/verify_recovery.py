import os
import sys
import argparse
import tempfile
import traceback

# 确保能够导入src包
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.synth.corpus_generator import ScenarioKind, ScenarioSpec, generate_corpus
from src.tasks.recovery_task import verify_ground_truth_recovery
from src.utils.config_loader import load_config
from src.utils.logger import get_logger, setup_logger

SCENARIOS = (ScenarioKind.AFTER_HOURS_LOGON, ScenarioKind.USB_MASS_COPY, ScenarioKind.DEVICE_HOPPER)


def main() -> int:
    parser = argparse.ArgumentParser(description='多种子验收实验：生成合成语料并检查植入用户的排名')
    parser.add_argument('--seeds', type=int, default=20, help='种子个数')
    parser.add_argument('--users', type=int, default=130)
    parser.add_argument('--days', type=int, default=90)
    parser.add_argument('--top-k', type=int, default=5)
    parser.add_argument('--config', help='流水线配置文件')
    args = parser.parse_args()

    setup_logger(None, 'WARNING')
    logger = get_logger()
    hits = 0
    fractions = []

    for seed in range(args.seeds):
        try:
            with tempfile.TemporaryDirectory() as workdir:
                corpus_dir = os.path.join(workdir, 'corpus')
                corpus = generate_corpus(args.users, args.days, [ScenarioSpec(kind) for kind in SCENARIOS],
                                         seed, corpus_dir)
                config = load_config(args.config, {'forest': {'seed': seed},
                                                   'output': {'out_dir': os.path.join(workdir, 'out')}})
                stats = verify_ground_truth_recovery(corpus, None, config, args.top_k)
        except Exception as e:
            logger.error(f"种子 {seed} 执行失败: {e}\n{traceback.format_exc()}")
            return 1

        hits += int(stats.all_in_top_k)
        fractions.append(stats.flagged_fraction)
        ranks = ', '.join(f"{r.user_id}={r.rank}" for r in stats.planted)
        print(f"seed {seed:>3}: 排名 {ranks}; 被标记用户占比 {stats.flagged_fraction:.2%}")

    print(f"\n全部植入用户进入前{args.top_k}: {hits}/{args.seeds} 个种子")
    print(f"被标记用户占比最大值: {max(fractions):.2%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
