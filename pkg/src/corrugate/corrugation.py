"""One corrugation stage: spiral perturbations realizing primitive metrics.

Adding w^p = (a/lambda)(nu cos(lambda psi) + b sin(lambda psi)) to an
immersion w with (nu, b) normal to w increases the pullback metric by
a^2 dpsi (x) dpsi up to an O(1/lambda) error while moving the map only
O(1/lambda). A stage decomposes the remaining metric gap into primitives
and adds one spiral per primitive, doubling lambda until the three
inductive estimates hold at measured (not assumed) accuracy.

On a periodic chart the oscillation phase must itself be periodic, so the
linear part of lambda*psi is rounded to the nearest integer frequency
vector; the rounding error is O(1/lambda) and lands inside the same
measured budget as the construction's other first-order error terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .decompose import PrimitiveMetric, global_decompose, overlap_bound
from .errors import (
    CoverageError,
    InputError,
    NonconvergenceError,
    ResolutionError,
    StageError,
)
from .frame import FramePair, normal_pair
from .grid import (
    ImmersionField,
    MetricField,
    PeriodicGrid,
    ScalarField,
    derivative_sup,
    is_short,
    pullback_metric,
    resample,
    sup_norm,
)

LAMBDA_START = 8.0
LAMBDA_CAP = 2.0**14

#: oscillation sampling rule: at least this many nodes per period
SAMPLES_PER_PERIOD = 16

#: desk-scale cap on total grid nodes a lambda search may request
MAX_NODES = 2**22

#: seam mismatch (radians) above which a stage refuses the frame
SEAM_TOL = 1e-6


@dataclass(frozen=True)
class SpiralParams:
    """Accepted oscillation frequency and the budgets it was checked against."""

    lam: float
    eta_budget: float
    delta_budget: float

    def __post_init__(self):
        if self.lam < 1.0:
            raise InputError("lambda must be at least 1")
        if not (self.eta_budget > 0.0 and self.delta_budget > 0.0):
            raise InputError("budgets must be positive")


@dataclass
class StageReport:
    """Measured outcome of one stage."""

    c0_delta: float
    c1_delta: float
    defect_before: float
    defect_after: float
    lambdas: list[float] = field(default_factory=list)
    resolution: tuple[int, ...] = ()
    slack: float = 0.0

    CSV_HEADER = ["resolution", "c0_delta", "c1_delta", "defect_before",
                  "defect_after", "slack", "lambdas"]

    def csv_row(self) -> list[str]:
        return [
            "x".join(str(r) for r in self.resolution),
            f"{self.c0_delta:.17g}", f"{self.c1_delta:.17g}",
            f"{self.defect_before:.17g}", f"{self.defect_after:.17g}",
            f"{self.slack:.17g}",
            ";".join(f"{lam:.17g}" for lam in self.lambdas),
        ]

    @classmethod
    def from_csv_row(cls, row) -> "StageReport":
        res, c0, c1, before, after, slack, lams = row
        return cls(
            c0_delta=float(c0), c1_delta=float(c1),
            defect_before=float(before), defect_after=float(after),
            lambdas=[float(v) for v in lams.split(";")] if lams else [],
            resolution=tuple(int(r) for r in res.split("x")),
            slack=float(slack),
        )


def integer_phase(prim: PrimitiveMetric, lam: float) -> np.ndarray:
    """Nearest integer frequency vector to lambda * psi_linear."""
    return np.rint(lam * prim.psi_linear).astype(int)


def spiral_perturbation(w: ImmersionField, prim: PrimitiveMetric,
                        frame: FramePair, lam: float) -> ImmersionField:
    """The increment (a/lambda)(nu cos(lambda psi) + b sin(lambda psi)).

    The linear part of the phase is rounded to integers per axis so the
    increment is periodic; the grid must carry at least SAMPLES_PER_PERIOD
    nodes per oscillation period on every axis.
    """
    grid = w.grid
    if prim.grid.shape != grid.shape or frame.grid.shape != grid.shape:
        raise InputError("immersion, primitive, and frame must share a grid")
    if lam < 1.0:
        raise InputError("lambda must be at least 1")
    k_vec = integer_phase(prim, lam)
    for a, k in enumerate(k_vec):
        if k and grid.shape[a] < SAMPLES_PER_PERIOD * abs(int(k)):
            raise ResolutionError(
                f"axis {a}: {grid.shape[a]} nodes cannot carry "
                f"{SAMPLES_PER_PERIOD} samples per period at frequency {k}")
    meshes = grid.meshes()
    phase = lam * prim.psi_periodic.values
    for a in range(grid.dim):
        phase = phase + k_vec[a] * meshes[a]
    amp = prim.amplitude.values / lam
    vals = (amp * np.cos(phase))[..., None] * frame.nu \
        + (amp * np.sin(phase))[..., None] * frame.b
    return ImmersionField.from_periodic(grid, vals)


class StageCheck(NamedTuple):
    """Measured triple of the inductive estimates plus pass flags."""

    c0: float
    deriv_sq: float
    incr_err: float
    c0_ok: bool
    deriv_ok: bool
    incr_ok: bool

    @property
    def ok(self) -> bool:
        return self.c0_ok and self.deriv_ok and self.incr_ok

    def failing(self) -> str:
        names = [name for name, flag in
                 [("C0", self.c0_ok), ("derivative", self.deriv_ok),
                  ("increment", self.incr_ok)] if not flag]
        return ",".join(names) if names else "none"


def check_stage_estimates(w_prev: ImmersionField, w_next: ImmersionField,
                          prim: PrimitiveMetric, eta_budget: float,
                          delta_budget: float) -> StageCheck:
    """Measure the three per-primitive estimates.

    C0 move below eta_budget, squared derivative move below twice the
    primitive's sup norm, and metric increment within delta_budget of the
    primitive tensor. Pure measurement; a zero primitive passes with zeros.
    """
    diff = w_next - w_prev
    c0 = sup_norm(diff, 0)
    deriv_sq = derivative_sup(diff, 1) ** 2
    target = prim.tensor()
    bound2 = 2.0 * sup_norm(target, 0)
    incr = pullback_metric(w_next) - pullback_metric(w_prev) - target
    incr_err = sup_norm(incr, 0)
    return StageCheck(
        c0=c0, deriv_sq=deriv_sq, incr_err=incr_err,
        c0_ok=c0 < eta_budget,
        deriv_ok=(deriv_sq < bound2) or (deriv_sq <= 1e-14),
        incr_ok=incr_err < delta_budget,
    )


def resample_primitive(prim: PrimitiveMetric, new_grid: PeriodicGrid) -> PrimitiveMetric:
    """Lift a primitive to a finer grid.

    Trigonometric interpolation can undershoot zero near the support
    boundary of a compactly supported amplitude; undershoots at rounding
    scale are clipped, anything larger is an error.
    """
    amp = resample(prim.amplitude, new_grid).values
    low = float(np.min(amp))
    if low < -1e-6 * max(1.0, float(np.max(amp))):
        raise InputError(f"amplitude resample undershoots zero by {low:.3e}")
    return PrimitiveMetric(
        amplitude=ScalarField(new_grid, np.maximum(amp, 0.0)),
        psi_periodic=resample(prim.psi_periodic, new_grid),
        psi_linear=prim.psi_linear.copy(),
        support_id=prim.support_id,
    )


class StageFields(NamedTuple):
    """Working fields at the grid where a lambda candidate was accepted."""

    w: ImmersionField
    prim: PrimitiveMetric
    frame: FramePair
    grid: PeriodicGrid


def _required_grid(grid: PeriodicGrid, k_vec, max_nodes: int) -> PeriodicGrid:
    shape = []
    for a, k in enumerate(k_vec):
        need = SAMPLES_PER_PERIOD * abs(int(k)) if k else grid.shape[a]
        res = grid.shape[a]
        while res < need:
            res *= 2
        shape.append(res)
    if int(np.prod(shape)) > max_nodes:
        raise NonconvergenceError(
            f"oscillation at frequency {tuple(int(k) for k in k_vec)} needs grid "
            f"{tuple(shape)}, beyond the desk-scale cap of {max_nodes} nodes")
    return PeriodicGrid(tuple(shape))


def choose_lambda(w: ImmersionField, prim: PrimitiveMetric, frame: FramePair,
                  eta_budget: float, delta_budget: float,
                  max_nodes: int = MAX_NODES) -> tuple[SpiralParams, StageFields]:
    """Doubling search from lambda = 8 until the measured estimates pass.

    The grid refines (power-of-two resampling of all working fields, frame
    recomputed) whenever the sampling rule demands it. Returns the first
    passing lambda together with the fields on the grid where it passed.
    """
    lam = LAMBDA_START
    cur = StageFields(w=w, prim=prim, frame=frame, grid=w.grid)
    last_check = None
    while lam <= LAMBDA_CAP:
        k_vec = integer_phase(cur.prim, lam)
        needed = _required_grid(cur.grid, k_vec, max_nodes)
        if needed.shape != cur.grid.shape:
            w_f = resample(cur.w, needed)
            cur = StageFields(
                w=w_f,
                prim=resample_primitive(cur.prim, needed),
                frame=normal_pair(w_f),
                grid=needed,
            )
        wp = spiral_perturbation(cur.w, cur.prim, cur.frame, lam)
        last_check = check_stage_estimates(
            cur.w, cur.w + wp, cur.prim, eta_budget, delta_budget)
        if last_check.ok:
            return SpiralParams(lam, eta_budget, delta_budget), cur
        lam *= 2.0
    raise NonconvergenceError(
        f"no lambda up to {LAMBDA_CAP:.0f} meets the budgets "
        f"(eta {eta_budget:.3e}, delta {delta_budget:.3e}); last failing "
        f"estimate(s): {last_check.failing()} with measured "
        f"(C0 {last_check.c0:.3e}, |D|^2 {last_check.deriv_sq:.3e}, "
        f"increment {last_check.incr_err:.3e})")


def _lift(fieldlike, grid: PeriodicGrid):
    if isinstance(fieldlike, PrimitiveMetric):
        return resample_primitive(fieldlike, grid)
    return resample(fieldlike, grid)


def run_stage(w: ImmersionField, g: MetricField, eta: float, delta: float,
              bump_counts=(1, 2, 4), max_nodes: int = MAX_NODES,
              ) -> tuple[ImmersionField, StageReport]:
    """One full stage: from a strictly short w to a short z with defect < delta.

    Picks delta0 so that h = (1 - delta0) g - w#e is positive definite with
    ||delta0 g|| < delta/2, decomposes h into primitives, and adds spirals
    sequentially, recomputing the normal frame after each addition. The
    per-primitive budgets are eta/K(n) and (delta/2)/K(n).
    """
    if eta <= 0 or delta <= 0:
        raise InputError("stage budgets eta and delta must be positive")
    w.require_immersion()
    flag, margin = is_short(w, g, strict=True)
    if not flag:
        raise InputError(f"stage needs a strictly short start (margin {margin:.3e})")
    grid = w.grid
    norm_g = sup_norm(g, 0)
    delta0 = min(delta / (2.0 * norm_g + 1e-12), 0.5 * margin / norm_g)
    h = (1.0 - delta0) * g - pullback_metric(w)
    if float(np.min(h.eigenvalues_min())) <= 0.0:
        raise StageError("metric gap lost positivity after the delta0 split")

    prims = None
    last_exc = None
    for count in bump_counts:
        try:
            prims = global_decompose(h, bump_count=count)
            break
        except (CoverageError, InputError) as exc:
            last_exc = exc
    if prims is None:
        raise last_exc

    K = overlap_bound(grid.dim)
    eta_budget = eta / K
    delta_budget = (delta / 2.0) / K

    defect_before = sup_norm(g - pullback_metric(w), 0)
    cur_w = w
    cur_g = g
    base_w = w
    pending = list(prims)
    lambdas: list[float] = []

    for j in range(len(pending)):
        frame = normal_pair(cur_w)
        if frame.seam_mismatch > SEAM_TOL:
            raise StageError(
                f"normal frame seam mismatch {frame.seam_mismatch:.3e} rad; "
                "normal bundle not numerically trivial")
        params, fields = choose_lambda(
            cur_w, pending[j], frame, eta_budget, delta_budget, max_nodes)
        if fields.grid.shape != cur_w.grid.shape:
            cur_g = _lift(cur_g, fields.grid)
            base_w = _lift(base_w, fields.grid)
            pending = pending[:j + 1] + [_lift(p, fields.grid) for p in pending[j + 1:]]
        wp = spiral_perturbation(fields.w, fields.prim, fields.frame, params.lam)
        cur_w = fields.w + wp
        lambdas.append(params.lam)
        ok, mid_margin = is_short(cur_w, cur_g)
        if not ok:
            raise StageError(
                f"shortness violated after primitive {j} (margin {mid_margin:.3e}); "
                f"lambdas so far {lambdas}")

    defect_after = sup_norm(cur_g - pullback_metric(cur_w), 0)
    diff = cur_w - base_w
    eps = float(np.finfo(float).eps)
    report = StageReport(
        c0_delta=sup_norm(diff, 0),
        c1_delta=derivative_sup(diff, 1),
        defect_before=defect_before,
        defect_after=defect_after,
        lambdas=lambdas,
        resolution=cur_w.grid.shape,
        slack=10.0 * eps * (norm_g + defect_before) * max(1, len(lambdas)),
    )
    if report.c1_delta**2 > 2.0 * K * K * defect_before + report.slack:
        raise StageError(
            f"derivative move {report.c1_delta:.3e} breaks the 2K^2-defect "
            f"bound (defect before {defect_before:.3e})")
    return cur_w, report
