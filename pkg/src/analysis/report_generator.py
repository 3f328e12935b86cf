import os
import json
import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
from jinja2 import Environment, FileSystemLoader, select_autoescape

from src.core.anomaly_analyzer import (COMBINED, ORDER_RUNS, RUN_ORDER, DependencyTable, FlagMatrix,
                                       GroupScores)
from src.features import GROUP_ORDER
from src.graph.interaction_graph import DegreeHistogram
from src.utils.logger import get_logger

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'templates')
TOP_USERS = 20


def score_histogram(scores: np.ndarray, bin_width: float = 0.05) -> Dict[str, List[float]]:
    """[0, 1] 上的等宽直方图，最后一个箱包含1.0"""
    bins = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(scores, bins=edges)
    return {'edges': [round(float(edge), 10) for edge in edges], 'counts': [int(count) for count in counts]}


def rank_users(scores: Dict[str, GroupScores]) -> List[str]:
    """按合并分数降序排名，分数相同按用户ID"""
    combined = scores[COMBINED]
    order = sorted(range(len(combined.users)), key=lambda i: (-combined.scores[i], combined.users[i]))
    return [combined.users[i] for i in order]


def build_report(scores: Dict[str, GroupScores], flags: FlagMatrix, case1: DependencyTable,
                 case2: pd.DataFrame, seed: int, config_hash: str, department: str = '',
                 bin_width: float = 0.05) -> Dict[str, Any]:
    """组装 AnomalyReport，不含时间戳，保证同配置重跑逐字节一致"""
    ranking = rank_users(scores)
    rank_of = {user: position + 1 for position, user in enumerate(ranking)}
    flag_frame = flags.to_frame()
    index_of = {user: i for i, user in enumerate(scores[COMBINED].users)}

    users = []
    for user in ranking:
        i = index_of[user]
        user_flags = {name: int(flag_frame.at[user, name]) for name in flags.groups}
        users.append({
            'user_id': user,
            'rank': rank_of[user],
            'scores': {run: float(scores[run].scores[i]) for run in RUN_ORDER if run in scores},
            'flags': user_flags,
            'flag_count': int(sum(user_flags.values())),
        })

    runs = {}
    for run in RUN_ORDER:
        if run not in scores:
            continue
        result = scores[run]
        runs[run] = {
            'width': result.width,
            'seed': result.seed,
            'informative': result.informative,
            'maximum': result.maximum,
            'threshold': flags.thresholds.get(run),
            'histogram': score_histogram(result.scores, bin_width),
        }

    return {
        'department': department,
        'seed': seed,
        'config_hash': config_hash,
        'user_count': len(ranking),
        'informative_groups': flags.groups,
        'excluded_groups': [name for name in GROUP_ORDER if name in scores and not scores[name].informative],
        'users': users,
        'runs': runs,
        'case1': [{'flagged_groups': k, 'users': count, 'percentage': pct}
                  for k, (count, pct) in enumerate(zip(case1.counts, case1.percentages))],
        'case2': case2.to_dict(orient='records'),
    }


class ReportGenerator:
    """把分析结果写成 report.json、CSV 表、直方图数据和 HTML 报告"""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.logger = get_logger()
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write(self, report: Dict[str, Any], scores: Dict[str, GroupScores], flags: FlagMatrix,
              case1: DependencyTable, case2: pd.DataFrame,
              degree_hist: Optional[DegreeHistogram] = None, html: bool = True) -> List[str]:
        """写出全部报告文件

        Returns:
            写出的文件名列表(相对 out_dir)
        """
        written = []

        with open(self._path('report.json'), 'w', encoding='utf-8', newline='\n') as f:
            json.dump(report, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        written.append('report.json')

        flags.to_frame().to_csv(self._path('flags.csv'))
        written.append('flags.csv')

        case1.to_frame().to_csv(self._path('dependency_case1.csv'), index=False)
        written.append('dependency_case1.csv')

        case2_out = case2.copy()
        case2_out['percentage'] = case2_out['percentage'].round(2)
        case2_out.to_csv(self._path('dependency_case2.csv'), index=False)
        written.append('dependency_case2.csv')

        score_frame = pd.DataFrame({run: scores[run].scores for run in RUN_ORDER if run in scores},
                                   index=pd.Index(scores[COMBINED].users, name='user_id'))
        score_frame.to_csv(self._path('scores.csv'), float_format='%.17g')
        written.append('scores.csv')

        rows = []
        for run, detail in report['runs'].items():
            edges, counts = detail['histogram']['edges'], detail['histogram']['counts']
            for i, count in enumerate(counts):
                rows.append({'run': run, 'bin_start': edges[i], 'bin_end': edges[i + 1], 'users': count})
        pd.DataFrame(rows, columns=['run', 'bin_start', 'bin_end', 'users']).to_csv(
            self._path('score_histograms.csv'), index=False)
        written.append('score_histograms.csv')

        if html:
            written.extend(self._write_html(report, scores, degree_hist))

        self.logger.info(f"报告已写入 {self.out_dir}: {', '.join(written)}")
        return written

    def _write_html(self, report: Dict[str, Any], scores: Dict[str, GroupScores],
                    degree_hist: Optional[DegreeHistogram]) -> List[str]:
        charts = []
        written = []

        if degree_hist is not None and degree_hist.counts:
            fig, ax = plt.subplots(figsize=(8, 4))
            ax.bar(degree_hist.bin_edges[:-1], degree_hist.counts,
                   width=degree_hist.bin_edges[1] - degree_hist.bin_edges[0], align='edge', edgecolor='black')
            ax.set_xlabel('用户度')
            ax.set_ylabel('用户数')
            fig.tight_layout()
            fig.savefig(self._path('degree_distribution.png'))
            plt.close(fig)
            charts.append({'title': '用户度分布', 'file': 'degree_distribution.png'})

        combined = scores[COMBINED].scores
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.hist(combined, bins=np.linspace(0, 1, 21), edgecolor='black')
        ax.set_xlabel('合并异常分数')
        ax.set_ylabel('用户数')
        fig.tight_layout()
        fig.savefig(self._path('combined_score_distribution.png'))
        plt.close(fig)
        charts.append({'title': '合并异常分数分布', 'file': 'combined_score_distribution.png'})

        if all(run in scores for run in ORDER_RUNS):
            order = np.argsort(-combined, kind='stable')
            fig, ax = plt.subplots(figsize=(10, 4))
            for run in ORDER_RUNS:
                ax.plot(range(len(order)), scores[run].scores[order], label=run, linewidth=1)
            ax.set_xlabel('用户(按合并分数降序)')
            ax.set_ylabel('异常分数')
            ax.legend()
            fig.tight_layout()
            fig.savefig(self._path('subgraph_order_scores.png'))
            plt.close(fig)
            charts.append({'title': '各阶子图异常分数', 'file': 'subgraph_order_scores.png'})

        written.extend(chart['file'] for chart in charts)

        thresholds = []
        for name in report['informative_groups']:
            detail = report['runs'][name]
            flagged = sum(1 for user in report['users'] if user['flags'].get(name))
            thresholds.append({'group': name, 'maximum': detail['maximum'], 'threshold': detail['threshold'],
                               'flagged': flagged})

        env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), autoescape=select_autoescape(['html', 'j2']))
        html = env.get_template('report.html.j2').render(
            department=report['department'],
            generated_at=datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            user_count=report['user_count'],
            seed=report['seed'],
            config_hash=report['config_hash'],
            informative=report['informative_groups'],
            excluded=report['excluded_groups'],
            case1=report['case1'],
            thresholds=thresholds,
            groups=list(GROUP_ORDER),
            top_users=report['users'][:TOP_USERS],
            charts=charts,
        )
        with open(self._path('report.html'), 'w', encoding='utf-8') as f:
            f.write(html)
        written.append('report.html')
        return written


def write_dependency_summary(case1_by_department: Dict[str, DependencyTable], path: str) -> None:
    """多部门汇总：每部门一行 k=0..6 的百分比"""
    rows = []
    for department, table in case1_by_department.items():
        row = {'department': department}
        row.update({str(k): round(pct, 2) for k, pct in enumerate(table.percentages)})
        rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False)
