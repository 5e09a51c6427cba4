"""Command-line front end: one subcommand per pipeline stage.

    evimpact simulate   --config run.json --clips 20 --out runs/a
    evimpact accumulate --out runs/a              (or --events f.csv --width W --height H --evf f.evf)
    evimpact refine     --out runs/a [--no-refine] [--clean]
    evimpact estimate   --out runs/a
    evimpact evaluate   --out runs/a              (or --evals hand_written.json)
    evimpact report     --out runs/a
    evimpact imu-compare --imu trace.csv --gt-ms 12.5   (or --batch trials.json)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline as pl
from .errors import ConfigError, EvImpactError
from .evaluation import Thresholds, load_evals, report
from .events import AccumConfig, EventStream, accumulate, read_events_csv
from .formats import write_evf
from .impact import imu_detect_time_ms, latency_stats, read_imu_csv

log = logging.getLogger("evimpact")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="RunConfig JSON file")
    common.add_argument("--out", help="run directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--clips", type=int)
    common.add_argument("--parallelism", type=int, help="max concurrent clips")
    common.add_argument("--window-frames", type=int)
    common.add_argument("--lambda-ce", type=float)
    common.add_argument("--lambda-dice", type=float)
    common.add_argument("--lambda-smooth", type=float)
    common.add_argument("--lambda-circ", type=float)
    common.add_argument("--class-weights", type=_floats, metavar="BG,BAT,BALL")
    common.add_argument("--sigma-ms", type=float)
    common.add_argument("--clean", action="store_true", default=None,
                        help="identity coarse-mask degradation")
    common.add_argument("--variant", default=None, help="probability-map variant name")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="evimpact", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate synthetic clips")
    acc = sub.add_parser("accumulate", parents=[common], help="event CSV -> EVF1 frames")
    acc.add_argument("--events", type=Path, help="single event CSV instead of a run directory")
    acc.add_argument("--width", type=int)
    acc.add_argument("--height", type=int)
    acc.add_argument("--evf", type=Path, help="output EVF1 path for --events")
    acc.add_argument("--dt", type=int)
    acc.add_argument("--duration-us", type=int)
    ref = sub.add_parser("refine", parents=[common], help="fuse and refine coarse masks")
    ref.add_argument("--no-refine", action="store_true", help="write fused, unrefined maps")
    sub.add_parser("estimate", parents=[common], help="centroid-distance impact estimate")
    ev = sub.add_parser("evaluate", parents=[common], help="collect per-clip errors")
    ev.add_argument("--evals", type=Path, help="ClipEval JSON to summarise directly")
    rep = sub.add_parser("report", parents=[common], help="write report CSV/JSON")
    rep.add_argument("--evals", type=Path)
    imu = sub.add_parser("imu-compare", parents=[common], help="IMU trigger lag vs GT")
    imu.add_argument("--imu", type=Path, help="IMU trace CSV (ax,ay,az)")
    imu.add_argument("--gt-ms", type=float)
    imu.add_argument("--rate-hz", type=float, default=1000.0)
    imu.add_argument("--batch", type=Path, help="JSON list of {imu, gt_ms[, rate_hz]}")
    return p


def run_config(args) -> pl.RunConfig:
    data = {}
    if args.config:
        if not args.config.exists():
            raise FileNotFoundError(f"missing config file: {args.config}")
        data = json.loads(args.config.read_text())
    for key in ("out", "seed", "clips", "parallelism", "clean"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.window_frames is not None:
        data.setdefault("accum", {})["window_frames"] = args.window_frames
    loss = data.setdefault("loss", {})
    for key in ("lambda_ce", "lambda_dice", "lambda_smooth", "lambda_circ"):
        if getattr(args, key) is not None:
            loss[key] = getattr(args, key)
    if args.class_weights is not None:
        loss["class_weights"] = list(args.class_weights)
    if args.sigma_ms is not None:
        data.setdefault("thresholds", {})["sigma_ms"] = args.sigma_ms
    return pl.RunConfig.from_dict(data)


def _variant(args, default="refined") -> str:
    if getattr(args, "no_refine", False):
        return "fused"
    return args.variant or default


def cmd_simulate(cfg, args):
    dirs = pl.simulate_all(cfg)
    print(f"simulated {len(dirs)} clips under {pl.clips_dir(cfg.out)}")


def cmd_accumulate(cfg, args):
    if args.events:
        if args.width is None or args.height is None or args.evf is None:
            raise ConfigError("events", "--events needs --width, --height and --evf")
        stream = read_events_csv(args.events, args.width, args.height)
        if args.duration_us is not None:
            stream = EventStream(stream.width, stream.height, stream.t, stream.x, stream.y,
                                 stream.p, duration=args.duration_us)
        acfg = cfg.accum if args.dt is None else replace(cfg.accum, dt=args.dt)
        frames = accumulate(stream, acfg)
        write_evf(frames, args.evf)
        print(f"wrote {frames.k_count} frames to {args.evf}")
        return
    dirs = pl.ensure_clip_dirs(cfg)
    pl.map_clips(pl.stage_accumulate, cfg, dirs)
    print(f"accumulated {len(dirs)} clips")


def cmd_refine(cfg, args):
    dirs = pl.ensure_clip_dirs(cfg)
    pl.map_clips(pl.stage_refine, cfg, dirs, variant=_variant(args))
    print(f"refined {len(dirs)} clips ({_variant(args)})")


def cmd_estimate(cfg, args):
    dirs = pl.ensure_clip_dirs(cfg)
    outs = pl.map_clips(pl.stage_estimate, cfg, dirs, variant=_variant(args))
    print(f"estimated {len(outs)} clips ({_variant(args)})")


def _print_report(rep):
    sys.stdout.write(rep.to_csv())


def cmd_evaluate(cfg, args):
    if args.evals:
        if not args.evals.exists():
            raise FileNotFoundError(f"missing input artifact: {args.evals}")
        _print_report(report(load_evals(args.evals), cfg.thresholds))
        return
    path = pl.stage_evaluate(cfg, _variant(args))
    _print_report(report(load_evals(path), cfg.thresholds))


def cmd_report(cfg, args):
    csv_path, json_path = pl.stage_report(cfg, args.evals, _variant(args))
    sys.stdout.write(csv_path.read_text())
    print(f"wrote {csv_path} and {json_path}")


def cmd_imu_compare(cfg, args):
    trials = []
    if args.batch:
        if not args.batch.exists():
            raise FileNotFoundError(f"missing input artifact: {args.batch}")
        base = args.batch.parent
        for item in json.loads(args.batch.read_text()):
            trials.append((base / item["imu"], float(item["gt_ms"]), float(item.get("rate_hz", 1000.0))))
    elif args.imu is not None and args.gt_ms is not None:
        trials.append((args.imu, args.gt_ms, args.rate_hz))
    else:
        raise ConfigError("imu", "need --imu and --gt-ms, or --batch")
    lags = []
    for path, gt_ms, rate in trials:
        if not Path(path).exists():
            raise FileNotFoundError(f"missing input artifact: {path}")
        t_imu = imu_detect_time_ms(read_imu_csv(path, rate))
        lags.append(t_imu - gt_ms)
        print(f"{path}: t_imu={t_imu:.3f} ms  gt={gt_ms:.3f} ms  lag={t_imu - gt_ms:+.3f} ms")
    s = latency_stats(lags)
    print(f"lag stats (n={s['n']}): mean={s['mean']:.3f} ms std={s['std']:.3f} ms "
          f"min={s['min']:.3f} ms max={s['max']:.3f} ms")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "imu_latency.json").write_text(json.dumps({"lags_ms": lags, **s}, indent=2) + "\n")


COMMANDS = {
    "simulate": cmd_simulate,
    "accumulate": cmd_accumulate,
    "refine": cmd_refine,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "imu-compare": cmd_imu_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = run_config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"evimpact {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"evimpact {args.command}: {exc}", file=sys.stderr)
        return 3
    except (EvImpactError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"evimpact {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
