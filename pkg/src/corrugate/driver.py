"""Stage iteration: drive the metric defect to zero while converging in C^1.

Stage q runs with shrinking budgets delta_q = 4^-q and eta_q = 2^(-q-1) eps,
so sup moves are summable (C^0 control) and derivative moves shrink
geometrically (C^1 control); the defect after stage q is below delta_q plus
the recorded discretization slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corrugation import MAX_NODES, StageReport, run_stage
from .errors import CorrugateError, InputError
from .grid import (
    ImmersionField,
    MetricField,
    is_short,
    pullback_metric,
    resample,
    sup_norm,
)

#: gate on the geometric-mean ratio of successive C^1 increments
CAUCHY_RATIO_GATE = 0.75


@dataclass(frozen=True)
class IterationSchedule:
    """Per-stage budgets: delta_q = 4^-q, eta_q = 2^(-q-1) epsilon."""

    epsilon: float
    stages: int = 4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InputError("epsilon must be positive")
        if self.stages < 0:
            raise InputError("stage count must be nonnegative")

    def delta(self, q: int) -> float:
        return 4.0 ** (-q)

    def eta(self, q: int) -> float:
        return 2.0 ** (-q - 1) * self.epsilon


@dataclass
class RunReport:
    """Per-stage reports plus end-of-run measurements."""

    stage_reports: list[StageReport] = field(default_factory=list)
    final_defect: float = float("nan")
    c0_distance: float = float("nan")

    @property
    def c1_increments(self) -> list[float]:
        return [rep.c1_delta for rep in self.stage_reports]

    def csv_rows(self) -> list[list[str]]:
        return [["stage"] + StageReport.CSV_HEADER] + [
            [str(q + 1)] + rep.csv_row() for q, rep in enumerate(self.stage_reports)]

    @classmethod
    def from_csv_rows(cls, rows) -> "RunReport":
        reports = [StageReport.from_csv_row(row[1:]) for row in rows]
        out = cls(stage_reports=reports)
        if reports:
            out.final_defect = reports[-1].defect_after
        return out


def nash_kuiper_iterate(v0: ImmersionField, g: MetricField,
                        schedule: IterationSchedule, bump_counts=(1, 2, 4),
                        max_nodes: int = MAX_NODES,
                        ) -> tuple[ImmersionField, RunReport]:
    """Iterate corrugation stages with the 4^-q / 2^-q-1 budget schedule.

    Returns the final map and the run report; a failing stage aborts with
    the partial report attached to the raised error as ``partial_report``.
    """
    flag, margin = is_short(v0, g, strict=True)
    if not flag:
        raise InputError(f"driver needs a strictly short start (margin {margin:.3e})")
    report = RunReport()
    cur_w = v0
    cur_g = g
    v0_lifted = v0
    for q in range(1, schedule.stages + 1):
        try:
            z, stage_rep = run_stage(
                cur_w, cur_g, eta=schedule.eta(q), delta=schedule.delta(q),
                bump_counts=bump_counts, max_nodes=max_nodes)
        except CorrugateError as exc:
            report.final_defect = sup_norm(cur_g - pullback_metric(cur_w), 0)
            report.c0_distance = sup_norm(cur_w - v0_lifted, 0)
            exc.partial_report = report
            raise
        if z.grid.shape != cur_g.grid.shape:
            cur_g = resample(cur_g, z.grid)
            v0_lifted = resample(v0_lifted, z.grid)
        cur_w = z
        report.stage_reports.append(stage_rep)
    report.final_defect = sup_norm(cur_g - pullback_metric(cur_w), 0)
    report.c0_distance = sup_norm(cur_w - v0_lifted, 0)
    return cur_w, report


def c1_cauchy_audit(report_or_increments) -> tuple[list[float], bool]:
    """Successive C^1-increment ratios for q >= 2 and the decay verdict.

    Passes when the geometric mean of the ratios is at most 0.75.
    """
    if isinstance(report_or_increments, RunReport):
        increments = report_or_increments.c1_increments
    else:
        increments = [float(v) for v in report_or_increments]
    if len(increments) < 3:
        raise InputError("Cauchy audit needs at least 3 stages")
    ratios = [increments[i] / increments[i - 1] for i in range(1, len(increments))]
    log_terms = [np.log(max(r, 1e-300)) for r in ratios]
    geo_mean = float(np.exp(np.mean(log_terms)))
    return ratios, geo_mean <= CAUCHY_RATIO_GATE
