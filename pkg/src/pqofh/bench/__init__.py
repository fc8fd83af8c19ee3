"""Link-metric estimators, the experiment matrix runner and plot data."""
from .matrix import (
    CSV_HEADER,
    METRIC_FIELDS,
    NO_KEM,
    CsvWriter,
    ExperimentSpec,
    MetricsRow,
    analytic_handshake_bytes,
    cell_seed,
    load_matrix,
    metrics_row,
    proposal_for,
    read_csv,
    run_matrix,
    write_csv,
)
from .metrics import (
    EmptyTrace,
    InsufficientData,
    compute_delay,
    compute_jitter,
    compute_throughput,
    measure_encryption_time,
    measure_memory,
    nearest_rank,
    rfc3550_jitter,
)
from .plotdata import UnknownMetric, group_rows, render

__all__ = [
    "CSV_HEADER", "METRIC_FIELDS", "NO_KEM", "CsvWriter", "ExperimentSpec", "MetricsRow",
    "analytic_handshake_bytes", "cell_seed", "load_matrix", "metrics_row", "proposal_for",
    "read_csv", "run_matrix", "write_csv", "EmptyTrace", "InsufficientData", "compute_delay",
    "compute_jitter", "compute_throughput", "measure_encryption_time", "measure_memory",
    "nearest_rank", "rfc3550_jitter", "UnknownMetric", "group_rows", "render",
]
