"""Per-clip stages with on-disk handoff, plus an in-memory twin.

Run directory layout::

    <out>/clips/<clip_id>/events.csv, gt_masks.prm, clip.json   simulate
    <out>/clips/<clip_id>/frames.evf                             accumulate
    <out>/clips/<clip_id>/coarse_fwd.prm, coarse_bwd.prm         refine (degrade step)
    <out>/clips/<clip_id>/probs_<variant>.prm + .json            refine
    <out>/clips/<clip_id>/impact_<variant>.json                  estimate
    <out>/evals_<variant>.json                                   evaluate
    <out>/report_<variant>.csv + .json                           report

Every stage reads only files written by earlier stages and writes
deterministically, so reruns are byte-identical and any stage can be
resumed on its own.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EvImpactError
from .evaluation import ClipEval, Thresholds, dump_evals, load_evals, report
from .events import AccumConfig, EventStream, accumulate, read_events_csv
from .formats import read_evf, read_prm, write_evf, write_prm
from .impact import ImpactResult, distance_series
from .losses import LossWeights, ProbStack
from .refine import (RefineInput, RefinerConfig, RefineResult, fuse_bidirectional,
                     refine_targets, unrefined)
from .scene import (ClipBundle, DegradeConfig, SceneConfig, degrade_coarse, impact_frame_index,
                    load_sidecar, random_scene, save_clip, simulate_clip)

log = logging.getLogger(__name__)

FRAMES_FILE = "frames.evf"
COARSE_FILES = {"fwd": "coarse_fwd.prm", "bwd": "coarse_bwd.prm"}


def _section(cls, d: dict, name: str):
    known = {f.name for f in fields(cls)}
    bad = set(d) - known
    if bad:
        raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown field")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    except ConfigError as exc:
        raise ConfigError(f"{name}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


@dataclass(frozen=True)
class SimSettings:
    """How ``simulate`` draws scenes: ``random`` contact scenes or one ``fixed`` scene."""

    mode: str = "random"
    width: int = 128
    height: int = 128
    clip_duration: int = 8000
    noise_rate: float = 0.1
    micro_step: int = 10
    scenarios: int = 1
    scene: dict = field(default_factory=dict)  # SceneConfig fields for mode="fixed"

    def __post_init__(self):
        if self.mode not in ("random", "fixed"):
            raise ConfigError("mode", "must be 'random' or 'fixed'")
        if self.scenarios < 1:
            raise ConfigError("scenarios", "must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    out: str = "run"
    seed: int = 0
    clips: int = 20
    parallelism: int = 1
    clean: bool = False
    sim: SimSettings = SimSettings()
    accum: AccumConfig = AccumConfig()
    degrade: DegradeConfig = DegradeConfig()
    refiner: RefinerConfig = RefinerConfig()
    loss: LossWeights = LossWeights()
    thresholds: Thresholds = Thresholds()

    def __post_init__(self):
        if self.clips < 0:
            raise ConfigError("clips", "must be >= 0")
        if self.parallelism < 1:
            raise ConfigError("parallelism", "must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        sections = {"sim": SimSettings, "accum": AccumConfig, "degrade": DegradeConfig,
                    "refiner": RefinerConfig, "loss": LossWeights, "thresholds": Thresholds}
        kw = {}
        for key, value in d.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(key, "expected an object")
                if key == "refiner" and ({"lambda_smooth", "lambda_circ"} & set(value)):
                    raise ConfigError("refiner.lambda_smooth",
                                      "set lambda_smooth/lambda_circ in the 'loss' section")
                kw[key] = _section(sections[key], value, key)
            elif key in ("out", "seed", "clips", "parallelism", "clean"):
                kw[key] = value
            else:
                raise ConfigError(key, "unknown config key")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"missing config file: {path}")
        return cls.from_dict(json.loads(path.read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def refiner_config(self) -> RefinerConfig:
        return replace(self.refiner, lambda_smooth=self.loss.lambda_smooth,
                       lambda_circ=self.loss.lambda_circ)

    def degrade_config(self, clip_seed: int) -> DegradeConfig:
        if self.clean:
            return DegradeConfig.identity(seed=clip_seed)
        return replace(self.degrade, seed=clip_seed)


def clip_id(i: int) -> str:
    return f"clip_{i:04d}"


def scene_for(cfg: RunConfig, i: int) -> tuple[SceneConfig, str]:
    seed = cfg.seed + i
    scenario = i % cfg.sim.scenarios
    if cfg.sim.mode == "fixed":
        base = SceneConfig.from_dict(dict(cfg.sim.scene)) if cfg.sim.scene else SceneConfig()
        return replace(base, seed=seed), str(scenario)
    # scenarios differ by ball speed band
    lo = 2.0 + scenario * 1.0
    sc = random_scene(seed, cfg.sim.width, cfg.sim.height, cfg.sim.clip_duration,
                      cfg.sim.noise_rate, cfg.sim.micro_step, speed_range=(lo, lo + 1.0))
    return sc, str(scenario)


# -- in-memory pipeline -------------------------------------------------------


@dataclass
class ClipRun:
    bundle: ClipBundle
    frames: object
    coarse: dict
    refined: RefineResult
    impact: ImpactResult


def coarse_masks(bundle: ClipBundle, dcfg: DegradeConfig) -> dict:
    K = bundle.gt_masks.shape[0]
    ii = impact_frame_index(bundle.gt_impact_us, bundle.dt, K)
    return {d: degrade_coarse(bundle.gt_masks, dcfg, d, ii) for d in ("fwd", "bwd")}


def run_clip(bundle: ClipBundle, accum: AccumConfig, dcfg: DegradeConfig,
             rcfg: RefinerConfig, weights: LossWeights, refine: bool = True) -> ClipRun:
    """simulate output -> accumulate -> degrade -> fuse/refine -> estimate."""
    frames = accumulate(bundle.stream, replace(accum, dt=bundle.dt))
    coarse = coarse_masks(bundle, dcfg)
    inputs = RefineInput(frames.values[: bundle.gt_masks.shape[0]], coarse["fwd"], coarse["bwd"])
    fused = fuse_bidirectional(inputs.fwd, inputs.bwd, rcfg.mass_tau)
    result = refine_targets(fused, rcfg, weights) if refine else unrefined(fused)
    impact = distance_series(result.probs, bundle.dt, result.invalid_frames)
    return ClipRun(bundle, frames, coarse, result, impact)


# -- on-disk stages -----------------------------------------------------------


def clips_dir(out) -> Path:
    return Path(out) / "clips"


def list_clips(out) -> list[Path]:
    d = clips_dir(out)
    if not d.is_dir():
        raise FileNotFoundError(f"missing clips directory: {d}")
    return sorted(p for p in d.iterdir() if p.is_dir())


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input artifact: {path}")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def stage_simulate(cfg: RunConfig, i: int) -> Path:
    sc, scenario = scene_for(cfg, i)
    bundle = simulate_clip(sc, dt=cfg.accum.dt)
    bundle.meta = {"clip_id": clip_id(i), "scenario_id": scenario}
    d = clips_dir(cfg.out) / clip_id(i)
    save_clip(bundle, d)
    return d


def _clip_geometry(d: Path) -> tuple[SceneConfig, dict]:
    side = load_sidecar(d)
    return SceneConfig.from_dict(side["config"]), side


def stage_accumulate(cfg: RunConfig, d: Path) -> Path:
    sc, side = _clip_geometry(d)
    stream = read_events_csv(_require(d / "events.csv"), sc.width, sc.height)
    stream = EventStream(sc.width, sc.height, stream.t, stream.x, stream.y, stream.p,
                         duration=sc.clip_duration)
    frames = accumulate(stream, replace(cfg.accum, dt=int(side["dt_us"])))
    write_evf(frames, d / FRAMES_FILE)
    return d / FRAMES_FILE


def stage_degrade(cfg: RunConfig, d: Path) -> None:
    sc, side = _clip_geometry(d)
    gt = np.argmax(read_prm(_require(d / "gt_masks.prm")), axis=1).astype(np.uint8)
    K = gt.shape[0]
    ii = impact_frame_index(side["gt_impact_us"], int(side["dt_us"]), K)
    dcfg = cfg.degrade_config(sc.seed)
    for direction, name in COARSE_FILES.items():
        write_prm(degrade_coarse(gt, dcfg, direction, ii), d / name)


def stage_refine(cfg: RunConfig, d: Path, variant: str = "refined") -> Path:
    if not (d / FRAMES_FILE).exists():
        stage_accumulate(cfg, d)
    if not all((d / n).exists() for n in COARSE_FILES.values()):
        stage_degrade(cfg, d)
    frames = read_evf(d / FRAMES_FILE)
    fwd = read_prm(d / COARSE_FILES["fwd"])
    bwd = read_prm(d / COARSE_FILES["bwd"])
    K = fwd.shape[0]
    inputs = RefineInput(frames.values[:K], fwd, bwd)
    rcfg = cfg.refiner_config()
    fused = fuse_bidirectional(inputs.fwd, inputs.bwd, rcfg.mass_tau)
    result = refine_targets(fused, rcfg, cfg.loss) if variant != "fused" else unrefined(fused)
    write_prm(result.probs, d / f"probs_{variant}.prm")
    _write_json(d / f"probs_{variant}.json", result.sidecar())
    return d / f"probs_{variant}.prm"


def stage_estimate(cfg: RunConfig, d: Path, variant: str = "refined") -> Path:
    if not (d / f"probs_{variant}.prm").exists():
        stage_refine(cfg, d, variant)
    side = load_sidecar(d)
    probs = ProbStack(read_prm(d / f"probs_{variant}.prm"))
    meta = json.loads(_require(d / f"probs_{variant}.json").read_text())
    result = distance_series(probs, int(side["dt_us"]), meta["invalid_frames"])
    result.clip_id = side.get("clip_id", d.name)
    out = d / f"impact_{variant}.json"
    out.write_text(result.to_json())
    return out


def collect_evals(out, variant: str = "refined") -> list[ClipEval]:
    evals = []
    for d in list_clips(out):
        side = load_sidecar(d)
        if side.get("gt_impact_us") is None:
            log.warning("%s has no ground-truth contact; skipped", d.name)
            continue
        res = json.loads(_require(d / f"impact_{variant}.json").read_text())
        evals.append(ClipEval(side.get("clip_id", d.name), str(side.get("scenario_id", "0")),
                              float(res["t_impact_ms"]), side["gt_impact_us"] / 1000.0))
    return evals


def stage_evaluate(cfg: RunConfig, variant: str = "refined") -> Path:
    evals = collect_evals(cfg.out, variant)
    path = Path(cfg.out) / f"evals_{variant}.json"
    path.write_text(dump_evals(evals))
    return path


def stage_report(cfg: RunConfig, evals_path=None, variant: str = "refined") -> tuple[Path, Path]:
    evals_path = Path(evals_path) if evals_path else Path(cfg.out) / f"evals_{variant}.json"
    evals = load_evals(_require(evals_path))
    rep = report(evals, cfg.thresholds)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"report_{variant}.csv", out / f"report_{variant}.json"
    csv_path.write_text(rep.to_csv())
    json_path.write_text(rep.to_json())
    return csv_path, json_path


def _call(args):
    fn, cfg, target, kw = args
    return str(fn(cfg, target, **kw))


def map_clips(fn, cfg: RunConfig, targets, **kw) -> list[str]:
    """Apply a per-clip stage, in-process or across ``cfg.parallelism`` workers."""
    jobs = [(fn, cfg, t, kw) for t in targets]
    if cfg.parallelism == 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
        return list(pool.map(_call, jobs))


def simulate_all(cfg: RunConfig) -> list[str]:
    return map_clips(stage_simulate, cfg, range(cfg.clips))


def ensure_clip_dirs(cfg: RunConfig) -> list[Path]:
    dirs = list_clips(cfg.out)
    if not dirs:
        raise EvImpactError(f"no clips under {clips_dir(cfg.out)}")
    return dirs
