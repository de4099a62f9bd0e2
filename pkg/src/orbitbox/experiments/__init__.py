from .config import EXPERIMENTS, ExperimentConfig, Param, ReportFormat
from .report import Report, report_schema_validate, write_report
from .suites import SUITES, Suite, run_suite, sweep

__all__ = [
    # Configuration
    "EXPERIMENTS",
    "ExperimentConfig",
    "Param",
    "ReportFormat",
    # Reports
    "Report",
    "write_report",
    "report_schema_validate",
    # Suites
    "SUITES",
    "Suite",
    "run_suite",
    "sweep",
]
