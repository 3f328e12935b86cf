import os
import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional

import pandas as pd

from src.analysis.report_generator import ReportGenerator, build_report, write_dependency_summary
from src.core.anomaly_analyzer import (RUN_ORDER, AnomalyAnalyzer, DependencyTable, GroupScores,
                                       build_flag_matrix, case1_dependency, case2_combinations)
from src.features.feature_matrix import FeatureExtractor, FeatureMatrix, read_feature_matrix, write_feature_matrix
from src.graph.ego_subgraphs import subgraph_column_names, subgraph_histograms
from src.graph.interaction_graph import BipartiteGraph, DegreeHistogram, build_graph, degree_histogram
from src.ingest.cert_parser import (FilterStats, corpus_summary, department_members, filter_by_department,
                                    iter_file, summary_table)
from src.ingest.records import AnyRecord, FileKind, IngestStats, RosterRecord, UserId
from src.utils.config_loader import config_hash, departments, input_paths
from src.utils.database import Database
from src.utils.exceptions import InsiderGraphError, SchemaError, StageError
from src.utils.logger import get_logger

STAGES = ('ingest', 'graph', 'features', 'score', 'report')
STORE_NAME = 'events.sqlite'
SCORE_META = 'score_runs.json'
FILTER_STATS = 'filter_stats.json'
EVENT_KINDS = (FileKind.LOGON, FileKind.DEVICE, FileKind.FILE, FileKind.HTTP, FileKind.PSYCHOMETRIC)


@contextmanager
def stage(name: str) -> Iterator[None]:
    """把阶段内的可预期错误包装成带阶段名的 StageError"""
    logger = get_logger()
    logger.info(f"==== 阶段 {name} 开始 ====")
    try:
        yield
    except StageError:
        raise
    except (InsiderGraphError, OSError, ValueError) as e:
        raise StageError(name, e) from e
    logger.info(f"==== 阶段 {name} 完成 ====")


class CsvEventSource:
    """直接从原始CSV流式读取"""

    def __init__(self, config: Dict[str, Any]):
        self.paths = input_paths(config)
        self.strict = config['ingest']['strict']
        self.timestamp_format = config['ingest']['timestamp_format']
        self.stats: Dict[str, IngestStats] = {}
        self._roster: Optional[Dict[UserId, RosterRecord]] = None

    def roster(self) -> Dict[UserId, RosterRecord]:
        if self._roster is None:
            self._roster = {record.user: record for record in self.records(FileKind.ROSTER)}
        return self._roster

    def records(self, file_kind: FileKind) -> Iterator[AnyRecord]:
        return iter_file(file_kind, self.paths[FileKind(file_kind).value], strict=self.strict,
                         timestamp_format=self.timestamp_format, stats_sink=self.stats)


class StoreEventSource:
    """从 ingest 阶段写出的 SQLite 存储读取"""

    def __init__(self, db: Database):
        self.db = db
        self.stats = db.get_ingest_stats()

    def roster(self) -> Dict[UserId, RosterRecord]:
        return self.db.get_roster()

    def records(self, file_kind: FileKind) -> Iterator[AnyRecord]:
        return self.db.iter_records(file_kind)


@dataclass
class CohortArtifacts:
    """一个部门各阶段的中间结果"""
    department: str
    out_dir: str
    users: List[str] = field(default_factory=list)
    graph: Optional[BipartiteGraph] = None
    degree_hist: Optional[DegreeHistogram] = None
    matrix: Optional[FeatureMatrix] = None
    analysis: Dict[str, Any] = field(default_factory=dict)
    filter_stats: Dict[str, FilterStats] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)


def check_inputs(config: Dict[str, Any]) -> Dict[str, str]:
    """所有输入文件必须在运行开始时存在"""
    paths = input_paths(config)
    missing = [path for path in paths.values() if not os.path.isfile(path)]
    if missing:
        raise FileNotFoundError(f"输入文件不存在: {', '.join(missing)}")
    return paths


def source_fingerprint(config: Dict[str, Any]) -> str:
    """输入文件的绝对路径、大小和修改时间"""
    entries = {}
    for kind, path in sorted(input_paths(config).items()):
        stat = os.stat(path)
        entries[kind] = [os.path.abspath(path), stat.st_size, stat.st_mtime_ns]
    return json.dumps(entries, sort_keys=True)


def write_scores(scores: Dict[str, GroupScores], out_dir: str) -> List[str]:
    """写出全部打分任务的分数和元数据，供 report 阶段单独读回"""
    users = next(iter(scores.values())).users if scores else []
    frame = pd.DataFrame({run: scores[run].scores for run in RUN_ORDER if run in scores},
                         index=pd.Index(users, name='user_id'))
    frame.to_csv(os.path.join(out_dir, 'scores.csv'), float_format='%.17g')
    meta = {run: {'width': result.width, 'seed': result.seed, 'informative': result.informative}
            for run, result in scores.items()}
    with open(os.path.join(out_dir, SCORE_META), 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return ['scores.csv', SCORE_META]


def read_scores(out_dir: str) -> Dict[str, GroupScores]:
    """读回 write_scores 的结果；森林不随分数保存"""
    score_path = os.path.join(out_dir, 'scores.csv')
    meta_path = os.path.join(out_dir, SCORE_META)
    if not os.path.exists(score_path) or not os.path.exists(meta_path):
        raise FileNotFoundError(f"缺少打分结果，请先执行 score 阶段: {score_path}")
    frame = pd.read_csv(score_path, dtype={'user_id': str}, float_precision='round_trip').set_index('user_id')
    with open(meta_path, 'r', encoding='utf-8') as f:
        meta = json.load(f)
    users = [str(user) for user in frame.index]
    return {run: GroupScores(run, users, frame[run].to_numpy(dtype=float), bool(meta[run]['informative']),
                             int(meta[run]['width']), int(meta[run]['seed']))
            for run in RUN_ORDER if run in meta}


def url_distribution(unique_counts: Dict[str, int], users: List[str]) -> pd.DataFrame:
    """不同URL数的分布，没有访问记录的用户计为0"""
    values = pd.Series([unique_counts.get(user, 0) for user in users], dtype=int)
    counts = values.value_counts().sort_index()
    return pd.DataFrame({'unique_urls': counts.index.astype(int), 'users': counts.to_numpy(dtype=int)})


class Pipeline:
    """流水线编排：ingest -> graph -> features -> score -> report"""

    def __init__(self, config: Dict[str, Any]):
        """初始化流水线

        Args:
            config: ConfigLoader 合并后的配置字典
        """
        self.config = config
        self.logger = get_logger()
        self.out_dir = config['output']['out_dir']
        self.store_path = config['output']['store_path'] or os.path.join(self.out_dir, STORE_NAME)
        self.departments = departments(config)
        self.seed = int(config['forest']['seed'])
        self.hash = config_hash(config)
        os.makedirs(self.out_dir, exist_ok=True)

    # ------------------------------------------------------------------ 数据源

    def cohort_dir(self, department: str) -> str:
        if len(self.departments) > 1:
            path = os.path.join(self.out_dir, department)
            os.makedirs(path, exist_ok=True)
            return path
        return self.out_dir

    def open_source(self, prefer_store: bool = True):
        """已有存储时从存储读取，否则直接读原始CSV

        存储记录的输入文件与当前配置不一致时先重新 ingest。
        """
        if prefer_store and os.path.exists(self.store_path):
            check_inputs(self.config)
            with Database(self.store_path) as db:
                stored = db.get_meta('source') if db.has_events() else None
            if stored is not None:
                if stored != source_fingerprint(self.config):
                    self.logger.warning(f"事件存储与当前输入不一致，重新导入: {self.store_path}")
                    self.ingest()
                self.logger.info(f"从事件存储读取: {self.store_path}")
                return StoreEventSource(Database(self.store_path))
        check_inputs(self.config)
        self.logger.info(f"直接读取原始CSV: {self.config['input']['data_dir']}")
        return CsvEventSource(self.config)

    def cohort_users(self, source, department: str) -> List[str]:
        """部门成员；没有部门过滤时为人员表全部用户"""
        roster = source.roster()
        users = department_members(roster, department)
        if department and not users:
            raise SchemaError(f"人员表中没有部门 {department!r} 的用户", 'roster')
        return users

    def cohort_records(self, source, cohort: CohortArtifacts, kind: FileKind) -> Iterator[AnyRecord]:
        """按部门过滤一类记录，过滤计数记入 cohort.filter_stats"""
        stats = FilterStats()
        cohort.filter_stats[kind.value] = stats
        return filter_by_department(source.records(kind), source.roster(), cohort.department, stats)

    # ------------------------------------------------------------------ 阶段

    def ingest(self) -> Dict[str, IngestStats]:
        """读取全部输入文件写入事件存储，并写出校验汇总"""
        with stage('ingest'):
            paths = check_inputs(self.config)
            strict = self.config['ingest']['strict']
            timestamp_format = self.config['ingest']['timestamp_format']
            stats: Dict[str, IngestStats] = {}

            unknown: Dict[str, FilterStats] = {}

            with Database(self.store_path) as db:
                db.clear()
                db.store_records(FileKind.ROSTER, iter_file(FileKind.ROSTER, paths['roster'], strict=strict,
                                                            stats_sink=stats))
                db.store_stats(stats[FileKind.ROSTER.value])
                roster = db.get_roster()
                for kind in EVENT_KINDS:
                    # 人员表之外的用户不入库
                    unknown[kind.value] = FilterStats()
                    records = iter_file(kind, paths[kind.value], strict=strict, timestamp_format=timestamp_format,
                                        stats_sink=stats)
                    stored = db.store_records(kind, filter_by_department(records, roster, None, unknown[kind.value]))
                    db.store_stats(stats[kind.value])
                    self.logger.info(f"[{kind.value}] 读取 {stats[kind.value].read} 行, 写入 {stored} 条, "
                                     f"未知用户记录 {unknown[kind.value].unknown_total} 条")
                db.set_meta('source', source_fingerprint(self.config))

            summary = corpus_summary({k: v for k, v in stats.items() if k != FileKind.ROSTER.value}, roster)
            summary_table(summary, roster).to_csv(os.path.join(self.out_dir, 'ingest_summary.csv'))
            report = {kind: stat.to_dict() for kind, stat in stats.items()}
            for kind, filtered in unknown.items():
                report[kind]['unknown_user_records'] = filtered.unknown_total
                report[kind]['unknown_users'] = len(filtered.unknown_users)
            with open(os.path.join(self.out_dir, 'ingest_stats.json'), 'w', encoding='utf-8') as f:
                json.dump(report, f, indent=2, sort_keys=True)
            self.logger.info(f"校验汇总已写入 {self.out_dir}: ingest_summary.csv, ingest_stats.json")
        return stats

    def build_graph(self, source, cohort: CohortArtifacts) -> CohortArtifacts:
        """构建二部图并导出边表和度分布"""
        with stage('graph'):
            if not cohort.users:
                cohort.users = self.cohort_users(source, cohort.department)
            graph_cfg = self.config['graph']
            cohort.graph = build_graph(self.cohort_records(source, cohort, FileKind.LOGON), cohort=cohort.users,
                                       keep_isolated=self.config['cohort']['keep_isolated_users'])
            cohort.graph.write_edge_list(os.path.join(cohort.out_dir, 'edges.csv'))
            cohort.degree_hist = degree_histogram(cohort.graph, graph_cfg['histogram_bin_width'])
            cohort.degree_hist.to_frame().to_csv(os.path.join(cohort.out_dir, 'degree_histogram.csv'), index=False)
            cohort.outputs.extend(['edges.csv', 'degree_histogram.csv'])
        return cohort

    def build_features(self, source, cohort: CohortArtifacts) -> CohortArtifacts:
        """流式消费事件，拼出50维特征矩阵并导出"""
        if cohort.graph is None:
            self.build_graph(source, cohort)
        with stage('features'):
            extractor = FeatureExtractor(self.config)
            for kind in EVENT_KINDS:
                if kind in extractor.source_kinds:
                    count = extractor.consume(kind, self.cohort_records(source, cohort, kind))
                    filtered = cohort.filter_stats[kind.value]
                    self.logger.info(f"[{kind.value}] 特征提取消费 {count} 条记录, 过滤掉 {filtered.dropped} 条"
                                     f"(未知用户 {filtered.unknown_total} 条)")
            cohort.matrix = extractor.build(cohort.users, cohort.graph)
            write_feature_matrix(cohort.matrix, os.path.join(cohort.out_dir, 'feature_matrix.csv'))

            present = [user for user in cohort.matrix.users if cohort.graph.has_user(user)]
            block = cohort.matrix.frame.loc[present, subgraph_column_names()]
            block.to_csv(os.path.join(cohort.out_dir, 'subgraph_features.csv'), float_format='%.17g')
            subgraph_histograms(block).to_csv(os.path.join(cohort.out_dir, 'subgraph_histograms.csv'), index=False)

            unique_counts = extractor.group('web').unique_counts()
            url_distribution(unique_counts, cohort.matrix.users).to_csv(
                os.path.join(cohort.out_dir, 'url_distribution.csv'), index=False)
            with open(os.path.join(cohort.out_dir, FILTER_STATS), 'w', encoding='utf-8') as f:
                json.dump({kind: stats.to_dict() for kind, stats in cohort.filter_stats.items()}, f, indent=2,
                          sort_keys=True)
            cohort.outputs.extend(['feature_matrix.csv', 'subgraph_features.csv', 'subgraph_histograms.csv',
                                   'url_distribution.csv', FILTER_STATS])
        return cohort

    def score(self, cohort: CohortArtifacts) -> CohortArtifacts:
        """对特征矩阵执行全部打分任务"""
        with stage('score'):
            if cohort.matrix is None:
                cohort.matrix = read_feature_matrix(os.path.join(cohort.out_dir, 'feature_matrix.csv'))
            cohort.analysis = AnomalyAnalyzer(self.config).analyze(cohort.matrix)
            cohort.outputs.extend(write_scores(cohort.analysis['scores'], cohort.out_dir))
            if self.config['output']['export_forests']:
                cohort.outputs.extend(self.export_forests(cohort.analysis['scores'], cohort.out_dir))
        return cohort

    def export_forests(self, scores: Dict[str, GroupScores], out_dir: str) -> List[str]:
        forest_dir = os.path.join(out_dir, 'forests')
        os.makedirs(forest_dir, exist_ok=True)
        written = []
        for run, result in scores.items():
            if result.forest is None:
                continue
            with open(os.path.join(forest_dir, f"{run}.json"), 'w', encoding='utf-8') as f:
                f.write(result.forest.to_json())
            written.append(f"forests/{run}.json")
        self.logger.info(f"森林已导出: {forest_dir} ({len(written)} 个)")
        return written

    def report(self, cohort: CohortArtifacts) -> CohortArtifacts:
        """生成报告文件和 manifest.json"""
        with stage('report'):
            if not cohort.analysis:
                scores = read_scores(cohort.out_dir)
                margin = self.config['analysis']['threshold_margin']
                flags = build_flag_matrix(scores, margin)
                cohort.analysis = {'scores': scores, 'flags': flags, 'case1': case1_dependency(flags),
                                   'case2': case2_combinations(flags)}
            if cohort.degree_hist is None:
                cohort.degree_hist = self._read_degree_histogram(cohort.out_dir)

            analysis = cohort.analysis
            bin_width = self.config['analysis']['histogram_bin_width']
            report = build_report(analysis['scores'], analysis['flags'], analysis['case1'], analysis['case2'],
                                  self.seed, self.hash, cohort.department, bin_width)
            generator = ReportGenerator(cohort.out_dir)
            for name in generator.write(report, analysis['scores'], analysis['flags'], analysis['case1'],
                                        analysis['case2'], cohort.degree_hist):
                if name not in cohort.outputs:
                    cohort.outputs.append(name)
            self.write_manifest(cohort)
        return cohort

    def _read_degree_histogram(self, out_dir: str) -> Optional[DegreeHistogram]:
        path = os.path.join(out_dir, 'degree_histogram.csv')
        if not os.path.exists(path):
            return None
        frame = pd.read_csv(path)
        if frame.empty:
            return DegreeHistogram([], [])
        edges = [int(v) for v in frame['bin_start']] + [int(frame['bin_end'].iloc[-1])]
        return DegreeHistogram(edges, [int(v) for v in frame['users']])

    def write_manifest(self, cohort: CohortArtifacts) -> str:
        """manifest 记录配置摘要、种子和全部输出文件，内嵌配置可直接重跑"""
        manifest = {
            'filter_stats': self.filter_summary(cohort),
            'config_hash': self.hash,
            'seed': self.seed,
            'department': cohort.department,
            'outputs': sorted(cohort.outputs),
            'config': self.config,
        }
        path = os.path.join(cohort.out_dir, 'manifest.json')
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(manifest, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        return path

    def filter_summary(self, cohort: CohortArtifacts) -> Dict[str, Dict[str, int]]:
        """部门过滤计数；单独执行 report 阶段时从 features 阶段的输出读回"""
        if cohort.filter_stats:
            return {kind: stats.to_dict() for kind, stats in sorted(cohort.filter_stats.items())}
        path = os.path.join(cohort.out_dir, FILTER_STATS)
        if not os.path.exists(path):
            return {}
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    # ------------------------------------------------------------------ 组合

    def cohorts(self) -> List[CohortArtifacts]:
        names = self.departments or ['']
        return [CohortArtifacts(name, self.cohort_dir(name)) for name in names]

    def run_stage(self, name: str) -> List[CohortArtifacts]:
        """单独执行一个阶段，前序阶段的结果从输出目录或存储读回"""
        if name not in STAGES:
            raise ValueError(f"未知阶段: {name}")
        if name == 'ingest':
            self.ingest()
            return []
        cohorts = self.cohorts()
        source = self.open_source() if name in ('graph', 'features') else None
        try:
            for cohort in cohorts:
                if name == 'graph':
                    self.build_graph(source, cohort)
                elif name == 'features':
                    self.build_features(source, cohort)
                elif name == 'score':
                    self.score(cohort)
                else:
                    self.report(cohort)
        finally:
            if isinstance(source, StoreEventSource):
                source.db.close()
        return cohorts

    def run(self, use_store: bool = False) -> List[CohortArtifacts]:
        """完整执行全部阶段

        Args:
            use_store: True 时先 ingest 进事件存储再从存储读取；否则直接读原始CSV

        Returns:
            每个部门一个 CohortArtifacts
        """
        self.logger.info(f"流水线启动: 部门 {self.departments or ['(全部)']}, 主种子 {self.seed}, "
                         f"配置摘要 {self.hash[:12]}")
        if use_store:
            self.ingest()
        source = self.open_source(prefer_store=use_store)
        cohorts = self.cohorts()
        try:
            for cohort in cohorts:
                self.build_features(source, cohort)
                self.score(cohort)
                self.report(cohort)
        finally:
            if isinstance(source, StoreEventSource):
                source.db.close()

        if len(cohorts) > 1:
            case1_by_department: Dict[str, DependencyTable] = {c.department: c.analysis['case1'] for c in cohorts}
            summary_path = os.path.join(self.out_dir, 'dependency_summary.csv')
            write_dependency_summary(case1_by_department, summary_path)
            self.logger.info(f"多部门汇总已写入 {summary_path}")
        return cohorts


def run_pipeline(config: Dict[str, Any], use_store: bool = False) -> List[CohortArtifacts]:
    """完整流水线的便捷入口"""
    return Pipeline(config).run(use_store=use_store)
