"""Gnuplot-ready columns from a results CSV.

One block per (encr, integ) pair, blocks separated by two blank lines so
gnuplot's ``index`` selects a group. Within a block there is one line per
KEM: ``kem mean min max n``, aggregated over repetitions with status ``ok``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, List, Sequence, Tuple

from .matrix import METRIC_FIELDS, MetricsRow, canonical_order


class UnknownMetric(ValueError):
    pass


def group_rows(rows: Sequence[MetricsRow], metric: str) -> List[Tuple[Tuple[str, str], Dict[str, List[float]]]]:
    if metric not in METRIC_FIELDS:
        raise UnknownMetric(f"unknown metric {metric!r}; choose from {', '.join(METRIC_FIELDS)}")
    groups: Dict[Tuple[str, str], Dict[str, List[float]]] = defaultdict(dict)
    for row in rows:
        series = groups[(row.encr, row.integ)].setdefault(row.kem, [])
        value = getattr(row, metric)
        if row.status == "ok" and value is not None:
            series.append(float(value))
    ordered = sorted(groups, key=lambda key: canonical_order(*key))
    return [(key, dict(sorted(groups[key].items()))) for key in ordered]


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(x)


def render(rows: Sequence[MetricsRow], metric: str) -> str:
    blocks = []
    for (encr, integ), series in group_rows(rows, metric):
        lines = [f"# encr={encr} integ={integ} metric={metric}", "# kem mean min max n"]
        for kem, values in series.items():
            if values:
                stats = (sum(values) / len(values), min(values), max(values))
            else:
                stats = (math.nan,) * 3
            lines.append(" ".join([kem, *map(_fmt, stats), str(len(values))]))
        blocks.append("\n".join(lines) + "\n")
    return "\n\n".join(blocks)
