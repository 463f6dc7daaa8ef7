"""Command-line entry point: train, sweep, eval, report, gen-data.

Exit codes: 0 success, 2 invalid configuration or input, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import CondFlowError, ConfigError, FormatError, NumericError
from ..evalset import generate_eval_set, load_eval_set
from ..synth import DataConfig
from .config import load_config
from .presets import get_preset
from .report import MetricsWriter, emit_reports
from .runner import load_run, metric_columns, run_cfg_sweep, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("condflow")


def _cmd_train(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise ConfigError("train: give exactly one of a config path or --preset")
    if args.preset:
        configs = get_preset(args.preset, seeds=args.seeds, total_steps=args.steps)
    else:
        configs = [load_config(args.config)]
    for cfg in configs:
        result = run_experiment(cfg, args.output_dir)
        print(f"{cfg.experiment_id}: {result.steps_done} steps -> {result.run_dir}")
    return EXIT_OK


def _eval_items(args, cfg):
    if args.eval_set:
        items, manifest = load_eval_set(args.eval_set)
        return items, manifest["task"]
    task = args.task or cfg.tasks[0]
    from ..synth import SampleStream

    return SampleStream(cfg.data).draw_set(task, args.n or cfg.eval_set_size, cfg.eval_seed), task


def _cmd_sweep(args) -> int:
    _, cfg, _ = load_run(args.checkpoint)
    items, task = _eval_items(args, cfg)
    out = Path(args.output_dir) / args.out
    reports = run_cfg_sweep(args.checkpoint, args.scales, items, task, out_csv=out)
    for g, rep in zip(args.scales, reports):
        print(json.dumps({"cfg_scale": g, **rep.metrics()}, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    model, cfg, manifest = load_run(args.checkpoint)
    items, eval_manifest = load_eval_set(args.eval_set)
    task = eval_manifest["task"]
    eval_data = DataConfig.from_dict(eval_manifest["data"])
    if eval_data != cfg.data:
        log.warning("eval set data config differs from the run's data config")
    from ..metrics import evaluate
    from ..synth import PatternDictionary
    from .runner import build_encoder

    rep = evaluate(model, cfg.sampler, items, task, build_encoder(cfg), PatternDictionary.build(eval_data))
    rep.step, rep.variant, rep.task_mix = manifest.get("steps_done", 0), cfg.model.variant, cfg.task_mix_id
    out = Path(args.output_dir) / args.out
    with MetricsWriter(out) as w:
        w.write(rep.step, cfg.experiment_id, task, metric_columns(rep, 0.0, 0.0))
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_report(args) -> int:
    path = emit_reports(args.csv, Path(args.output_dir) / args.out)
    print(path)
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    try:
        spec = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read data spec {args.spec}: {exc}") from exc
    unknown = set(spec) - {"data", "task", "n", "seed", "name"}
    if unknown:
        raise ConfigError(f"unknown data-spec fields: {sorted(unknown)}")
    for key in ("task", "n"):
        if key not in spec:
            raise ConfigError(f"{key}: required")
    data = DataConfig.from_dict(spec.get("data", {}))
    name = spec.get("name", f"evalset-{spec['task']}")
    path = generate_eval_set(Path(args.output_dir) / name, data, spec["task"], int(spec["n"]), int(spec.get("seed", 0)))
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def with_out(sp):
        sp.add_argument("--output-dir", required=True, help="directory that receives all outputs")
        return sp

    t = with_out(sub.add_parser("train", help="train from a JSON config or a named preset"))
    t.add_argument("config", nargs="?")
    t.add_argument("--preset")
    t.add_argument("--seeds", type=int, nargs="+")
    t.add_argument("--steps", type=int, help="override total_steps of a preset")
    t.set_defaults(func=_cmd_train)

    s = with_out(sub.add_parser("sweep", help="evaluate a checkpoint at several guidance scales"))
    s.add_argument("checkpoint")
    s.add_argument("--scales", type=float, nargs="+", required=True)
    s.add_argument("--eval-set")
    s.add_argument("--task")
    s.add_argument("--n", type=int)
    s.add_argument("--out", default="sweep.csv")
    s.set_defaults(func=_cmd_sweep)

    e = with_out(sub.add_parser("eval", help="evaluate a checkpoint on a stored eval set"))
    e.add_argument("checkpoint")
    e.add_argument("eval_set")
    e.add_argument("--out", default="eval.csv")
    e.set_defaults(func=_cmd_eval)

    r = with_out(sub.add_parser("report", help="render metrics CSVs as SVG line charts"))
    r.add_argument("csv", nargs="+")
    r.add_argument("--out", default="curves.svg")
    r.set_defaults(func=_cmd_report)

    g = with_out(sub.add_parser("gen-data", help="write an eval set from a JSON data spec"))
    g.add_argument("spec")
    g.set_defaults(func=_cmd_gen_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CondFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
