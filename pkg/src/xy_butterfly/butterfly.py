"""Spreading times from ``C_j(t)`` and a least-squares light-cone velocity."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from xy_butterfly.analytic import butterfly_velocity
from xy_butterfly.model import ModelParams
from xy_butterfly.yky import OtocRecord, otoc_surface

THRESHOLD = 0.1


@dataclass(frozen=True)
class SpreadingPoint:
    j: int | None
    t_j: float  # nan when not reached
    crossing_quality: str  # "interpolated", "exact-sample" or "not-reached"

    @property
    def reached(self) -> bool:
        return self.crossing_quality != "not-reached"


@dataclass
class VelocityFit:
    slope: float
    intercept: float
    v_B: float
    residual_rms: float
    points: list[int]
    causal: bool = True


def spreading_time(ts, Cs, threshold: float = THRESHOLD, j: int | None = None) -> SpreadingPoint:
    """First time ``C`` reaches ``threshold``, linearly interpolated.

    ``ts`` must be increasing. A series whose first sample already exceeds
    the threshold gives ``t_j = ts[0]`` when ``ts[0] == 0`` and raises
    otherwise, since the crossing then happened before the grid began.
    """
    ts = np.asarray(ts, dtype=float)
    Cs = np.asarray(Cs, dtype=float)
    if ts.size == 0:
        raise ValueError("empty series")
    if ts.shape != Cs.shape:
        raise ValueError("times and values differ in length")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("times must be strictly increasing")
    hits = np.flatnonzero(Cs >= threshold)
    if hits.size == 0:
        return SpreadingPoint(j, float("nan"), "not-reached")
    i = int(hits[0])
    if i == 0:
        if ts[0] != 0.0:
            raise ValueError(f"C already >= {threshold} at the first sample t = {ts[0]}")
        return SpreadingPoint(j, 0.0, "exact-sample")
    if Cs[i] == threshold:
        return SpreadingPoint(j, float(ts[i]), "exact-sample")
    t0, t1, c0, c1 = ts[i - 1], ts[i], Cs[i - 1], Cs[i]
    return SpreadingPoint(j, float(t0 + (threshold - c0) * (t1 - t0) / (c1 - c0)), "interpolated")


def fit_velocity(points: list[SpreadingPoint]) -> VelocityFit:
    """Ordinary least squares of ``t_j`` on ``j``; the velocity is ``1 / slope``."""
    used = [p for p in points if p.reached]
    if len(used) < 2:
        raise ValueError(f"need at least two reached spreading points, got {len(used)}")
    js = np.array([p.j for p in used], dtype=float)
    tj = np.array([p.t_j for p in used])
    slope, intercept = np.polyfit(js, tj, 1)
    resid = tj - (slope * js + intercept)
    causal = bool(slope > 0)
    if not causal:
        warnings.warn(f"non-positive light-cone slope {slope:.3g}: acausal data", stacklevel=2)
    return VelocityFit(
        slope=float(slope),
        intercept=float(intercept),
        v_B=float(1.0 / slope) if slope != 0 else float("inf"),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        points=[int(j) for j in js],
        causal=causal,
    )


@dataclass
class PipelineResult:
    surface: list[OtocRecord]
    spreading: list[SpreadingPoint]
    fit: VelocityFit | None
    analytic_vB: float
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def rel_dev(self) -> float:
        if self.fit is None:
            return float("nan")
        return abs(self.fit.v_B - self.analytic_vB) / self.analytic_vB

    def fit_report(self) -> dict:
        f = self.fit
        return {
            "slope": None if f is None else f.slope,
            "intercept": None if f is None else f.intercept,
            "v_B": None if f is None else f.v_B,
            "residual_rms": None if f is None else f.residual_rms,
            "points": [asdict(p) for p in self.spreading],
            "analytic_vB": self.analytic_vB,
            "rel_dev": self.rel_dev,
            "errors": {str(k): v for k, v in self.errors.items()},
        }

    def fit_json(self) -> str:
        return json.dumps(self.fit_report(), indent=1)


def default_t_grid(t_max: float = 3.0, dt: float = 0.05) -> np.ndarray:
    return np.round(np.arange(0.0, t_max + dt / 2, dt), 12)


def run_pipeline(
    params: ModelParams,
    j_list=None,
    t_grid=None,
    mode: str = "exact",
    threshold: float = THRESHOLD,
    **surface_kwargs,
) -> PipelineResult:
    """Surface, spreading time per ``j``, velocity fit and the analytic value.

    Extra keyword arguments go to ``otoc_surface`` (compiler, noise, shots,
    seed, trajectories, stop_when_crossed).
    """
    j_list = list(range(2, params.n + 1)) if j_list is None else list(j_list)
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    records = otoc_surface(params, j_list, t_grid, mode, **surface_kwargs)
    errors: dict[int, str] = {}
    points = []
    for j in j_list:
        rows = [r for r in records if r.j == j and r.error is None]
        if not rows:
            errors[j] = "no valid samples"
            continue
        try:
            points.append(spreading_time([r.t for r in rows], [r.C for r in rows], threshold, j))
        except ValueError as exc:
            errors[j] = str(exc)
    for j, msg in errors.items():
        warnings.warn(f"dropping j={j} from the fit: {msg}", stacklevel=2)
    try:
        fit = fit_velocity(points)
    except ValueError as exc:
        errors[-1] = str(exc)
        fit = None
    analytic = butterfly_velocity(params.J, params.r, params.h).v_B
    return PipelineResult(records, points, fit, analytic, errors)
