from src.analysis.report_generator import ReportGenerator, build_report, rank_users, write_dependency_summary
