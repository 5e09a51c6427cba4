"""Timing metrics (MAE, success rate) and per-scenario report tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EvImpactError

HUMAN_SIGMA_MS = 0.513
REPORT_COLUMNS = ("scenario", "mae_ms", "sr_1sigma_pct", "sr_2sigma_pct", "n_clips")
AVG_ROW = "avg"


@dataclass(frozen=True)
class ClipEval:
    clip_id: str
    scenario_id: str
    t_est_ms: float
    t_gt_ms: float

    @property
    def abs_err_ms(self) -> float:
        return abs(self.t_est_ms - self.t_gt_ms)

    def to_dict(self) -> dict:
        return {**asdict(self), "abs_err_ms": self.abs_err_ms}

    @classmethod
    def from_dict(cls, d: dict) -> "ClipEval":
        if "t_est_ms" in d:
            return cls(str(d["clip_id"]), str(d.get("scenario_id", "0")), float(d["t_est_ms"]),
                       float(d["t_gt_ms"]))
        # bare error record: {clip_id, scenario_id, abs_err_ms}
        return cls(str(d["clip_id"]), str(d.get("scenario_id", "0")), float(d["abs_err_ms"]), 0.0)


@dataclass(frozen=True)
class Thresholds:
    sigma_ms: float = HUMAN_SIGMA_MS
    multiples: tuple[float, ...] = (1, 2)

    def __post_init__(self):
        if not self.sigma_ms > 0:
            raise EvImpactError("sigma_ms must be positive")

    def values_ms(self) -> list[float]:
        return [m * self.sigma_ms for m in self.multiples]


def gt_from_annotations(times_ms: Sequence[float]) -> float:
    times = np.asarray(times_ms, dtype=np.float64)
    if times.size < 2:
        raise EvImpactError("need at least 2 annotations per clip")
    return float(times.mean())


def annotator_sigma(annotations: Iterable[Sequence[float]]) -> float:
    """Mean over clips of the per-clip sample (n-1) standard deviation."""
    stds = []
    for i, times in enumerate(annotations):
        times = np.asarray(times, dtype=np.float64)
        if times.size < 2:
            raise EvImpactError(f"clip {i}: need at least 2 annotations, got {times.size}")
        stds.append(times.std(ddof=1))
    if not stds:
        raise EvImpactError("no annotated clips")
    return float(np.mean(stds))


def _errors(evals) -> np.ndarray:
    errs = np.array([e.abs_err_ms if isinstance(e, ClipEval) else abs(float(e)) for e in evals])
    if errs.size == 0:
        raise EvImpactError("no evaluations")
    return errs


def mae(evals) -> float:
    """Mean absolute timing error (ms); accepts ClipEvals or raw errors."""
    return float(_errors(evals).mean())


def success_rate(evals, threshold_ms: float) -> float:
    """Percentage of clips with error strictly below ``threshold_ms``."""
    errs = _errors(evals)
    return 100.0 * float(np.count_nonzero(errs < threshold_ms)) / errs.size


@dataclass
class ReportRow:
    scenario: str
    mae_ms: float
    sr_pct: list[float]
    n_clips: int


@dataclass
class Report:
    rows: list[ReportRow]
    thresholds: Thresholds = field(default_factory=Thresholds)

    def row(self, scenario: str) -> ReportRow:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise KeyError(scenario)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        sr_cols = [f"sr_{m:g}sigma_pct" for m in self.thresholds.multiples]
        writer.writerow(["scenario", "mae_ms", *sr_cols, "n_clips"])
        for r in self.rows:
            writer.writerow([r.scenario, f"{r.mae_ms:.6f}", *(f"{s:.4f}" for s in r.sr_pct), r.n_clips])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "sigma_ms": self.thresholds.sigma_ms,
            "thresholds_ms": self.thresholds.values_ms(),
            "rows": [
                {"scenario": r.scenario, "mae_ms": r.mae_ms,
                 **{f"sr_{m:g}sigma_pct": s for m, s in zip(self.thresholds.multiples, r.sr_pct)},
                 "n_clips": r.n_clips}
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _scenario_key(s: str):
    return (0, int(s), s) if s.lstrip("-").isdigit() else (1, 0, s)


def _row(name, evals, th: Thresholds) -> ReportRow:
    return ReportRow(name, mae(evals), [success_rate(evals, t) for t in th.values_ms()], len(evals))


def report(evals: Sequence[ClipEval], thresholds: Thresholds = Thresholds()) -> Report:
    """Per-scenario rows in ascending scenario order, then a clip-pooled ``avg`` row."""
    groups: dict[str, list[ClipEval]] = {}
    for e in evals:
        groups.setdefault(e.scenario_id, []).append(e)
    rows = [_row(s, groups[s], thresholds) for s in sorted(groups, key=_scenario_key)]
    if evals:
        rows.append(_row(AVG_ROW, list(evals), thresholds))
    return Report(rows, thresholds)


def load_evals(path) -> list[ClipEval]:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("evals", [])
    return [ClipEval.from_dict(d) for d in data]


def dump_evals(evals: Sequence[ClipEval]) -> str:
    return json.dumps([e.to_dict() for e in evals], indent=2) + "\n"
