"""Command-line experiment interface.

Subcommands:
  run       execute an experiment spec file, emit CSVs and a manifest
  sweep     vary one config field over a value list, emit a summary CSV
  replay    re-run from a twin snapshot (bit-exact world; same CSVs)
  validate  quick built-in oracle/property checks, exit status 0/1

Environment overrides (nothing else is read from the environment):
  RISCF_OUT_DIR   default output directory when --out is not given
  RISCF_WORKERS   process count for multi-run commands
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, backend
from .config import PRESETS, SystemConfig
from .orchestrator import (METHODS, RunResult, run_experiment, run_many,
                           run_sweep)
from .twin import TwinEnvironment, load_snapshot, save_snapshot
from .orchestrator import rng_streams


class SpecError(ValueError):
    """Malformed experiment spec; message carries line/field context."""


# ---------------------------------------------------------------------------
# experiment spec files

@dataclasses.dataclass
class ExperimentSpec:
    method: str
    config: SystemConfig
    seeds: list[int]
    output: str | None = None


_REFERENCE = SystemConfig()
_FIELD_TYPES = {f.name: type(getattr(_REFERENCE, f.name))
                for f in dataclasses.fields(SystemConfig)}


def _coerce(name: str, text: str, lineno: int):
    kind = _FIELD_TYPES[name]
    try:
        if kind is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise SpecError(f"line {lineno}: field {name!r} expects "
                        f"{kind.__name__}, got {text!r}") from None


def parse_spec(path) -> ExperimentSpec:
    """Parse a flat `key = value` spec file.

    Required keys: method, seeds.  Optional: preset (desk|paper), output,
    and any SystemConfig field as an override.  Unknown keys are errors.
    """
    method = None
    seeds: list[int] | None = None
    preset = None
    output = None
    overrides: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or not key:
                raise SpecError(f"line {lineno}: expected 'key = value'")
            if key == "method":
                if value not in METHODS:
                    raise SpecError(f"line {lineno}: unknown method {value!r}; "
                                    f"choose from {', '.join(METHODS)}")
                method = value
            elif key == "seeds":
                try:
                    seeds = [int(s) for s in value.replace(",", " ").split()]
                except ValueError:
                    raise SpecError(f"line {lineno}: seeds must be integers") from None
                if not seeds:
                    raise SpecError(f"line {lineno}: seeds is empty")
            elif key == "preset":
                if value not in PRESETS:
                    raise SpecError(f"line {lineno}: unknown preset {value!r}")
                preset = value
            elif key == "output":
                output = value
            elif key in _FIELD_TYPES:
                overrides[key] = _coerce(key, value, lineno)
            else:
                raise SpecError(f"line {lineno}: unknown key {key!r}")
    if method is None:
        raise SpecError("missing required key 'method'")
    if seeds is None:
        raise SpecError("missing required key 'seeds'")
    if preset is not None:
        config = PRESETS[preset](**overrides)
    else:
        config = SystemConfig.from_dict({**SystemConfig().to_dict(), **overrides})
    try:
        config.validate()
    except ValueError as exc:
        raise SpecError(f"invalid configuration: {exc}") from None
    return ExperimentSpec(method=method, config=config, seeds=seeds, output=output)


# ---------------------------------------------------------------------------
# output

def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.9g}"


def write_steps_csv(results: list[RunResult], path) -> None:
    """Per-step rows; the physical reward of an epoch rides on its last row."""
    lines = ["seed,epoch,episode,step,reward_twin,reward_phys,sum_rate,violations"]
    for res in results:
        last_in_epoch = {}
        for i, row in enumerate(res.steps):
            last_in_epoch[row.epoch] = i
        phys = {rec.epoch: rec.physical_reward for rec in res.records}
        for i, row in enumerate(res.steps):
            phys_val = phys.get(row.epoch) if last_in_epoch[row.epoch] == i else None
            lines.append(",".join([
                str(res.seed), str(row.epoch), str(row.episode), str(row.step),
                _fmt(row.reward_twin), _fmt(phys_val), _fmt(row.sum_rate),
                str(row.violations)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_epochs_csv(results: list[RunResult], path) -> None:
    lines = ["seed,epoch,aua_fitness,r_opt,reward_phys,sum_rate_phys,"
             "twin_steps,physical_steps,wall_time_s"]
    for res in results:
        for rec in res.records:
            lines.append(",".join([
                str(res.seed), str(rec.epoch), _fmt(rec.aua_fitness),
                _fmt(rec.r_opt), _fmt(rec.physical_reward),
                _fmt(rec.physical_sum_rate), str(rec.twin_steps),
                str(rec.physical_steps), _fmt(rec.wall_time_s)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_manifest(path, method, config: SystemConfig, seeds,
                   extra: dict | None = None) -> None:
    doc = {"package": "riscf", "version": __version__, "method": method,
           "seeds": list(seeds), "backend": backend.get_backend(),
           "config": config.to_dict()}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="ascii")


def _out_dir(arg) -> Path:
    base = arg or os.environ.get("RISCF_OUT_DIR") or "."
    out = Path(base)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(arg) -> int:
    if arg:
        return int(arg)
    return int(os.environ.get("RISCF_WORKERS", "1"))


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    try:
        spec = parse_spec(args.spec)
    except (OSError, SpecError) as exc:
        print(f"error: {args.spec}: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(args.out or spec.output)
    if args.snapshot:
        for seed in spec.seeds:
            env = TwinEnvironment.from_config(spec.config,
                                              rng_streams(seed)["env"])
            save_snapshot(env, out / f"snapshot_seed{seed}.txt",
                          extra_meta={"method": spec.method, "seed": seed})
    jobs = [(spec.method, spec.config, seed) for seed in spec.seeds]
    results = run_many(jobs, workers=_workers(args.workers))
    write_steps_csv(results, out / "steps.csv")
    write_epochs_csv(results, out / "epochs.csv")
    write_manifest(out / "manifest.json", spec.method, spec.config, spec.seeds)
    for res in results:
        print(f"{spec.method} seed {res.seed}: final physical sum-rate "
              f"{_fmt(res.final_physical_sum_rate)} bit/s/Hz")
    print(f"wrote {out / 'steps.csv'}, {out / 'epochs.csv'}")
    return 0


def cmd_sweep(args) -> int:
    preset = PRESETS[args.preset]
    try:
        config = preset()
        values = [_coerce(args.param, v, 0) for v in args.values.split(",")]
    except KeyError:
        print(f"error: unknown config field {args.param!r}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    methods = args.methods.split(",")
    for m in methods:
        if m not in METHODS:
            print(f"error: unknown method {m!r}", file=sys.stderr)
            return 2
    seeds = [int(s) for s in args.seeds.split(",")]
    out = _out_dir(args.out)
    results = run_sweep(args.param, values, methods, config, seeds,
                        workers=_workers(args.workers))
    lines = [f"param,value,method,seed,final_sum_rate_phys,final_reward_phys"]
    for res in results:
        lines.append(",".join([
            args.param, _fmt(getattr(res.config, args.param)), res.method,
            str(res.seed), _fmt(res.final_physical_sum_rate),
            _fmt(res.final_physical_reward)]))
    (out / "sweep_summary.csv").write_text("\n".join(lines) + "\n",
                                           encoding="ascii")
    write_manifest(out / "manifest.json", ",".join(methods), config, seeds,
                   extra={"sweep_param": args.param,
                          "sweep_values": [float(v) for v in values]})
    print(f"wrote {out / 'sweep_summary.csv'}")
    return 0


def cmd_replay(args) -> int:
    try:
        env, meta = load_snapshot(args.snapshot)
    except (OSError, ValueError) as exc:
        print(f"error: {args.snapshot}: {exc}", file=sys.stderr)
        return 2
    method = meta.get("method", "proposed")
    seed = int(meta.get("seed", env.config.seed))
    out = _out_dir(args.out)
    result = run_experiment(method, env.config, seed, env=env)
    write_steps_csv([result], out / "steps.csv")
    write_epochs_csv([result], out / "epochs.csv")
    write_manifest(out / "manifest.json", method, env.config, [seed],
                   extra={"replayed_from": str(args.snapshot)})
    print(f"replayed {method} seed {seed}: final physical sum-rate "
          f"{_fmt(result.final_physical_sum_rate)} bit/s/Hz")
    return 0


def cmd_validate(args) -> int:
    from . import selfcheck

    checks = selfcheck.run_all(verbose=True)
    failed = [name for name, ok, _ in checks if not ok]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return 1
    print(f"all {len(checks)} checks passed (backend: {backend.get_backend()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riscf",
        description="Twin-trained sum-rate optimizer for RIS-assisted "
                    "uplink cell-free networks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment spec file")
    p_run.add_argument("spec", help="path to the spec file")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--snapshot", action="store_true",
                       help="also write a bit-exact twin snapshot per seed")
    p_run.add_argument("--workers", help="process count override")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one config field")
    p_sweep.add_argument("param", help="config field name, e.g. p_max_w")
    p_sweep.add_argument("values", help="comma-separated values")
    p_sweep.add_argument("--methods", default="proposed")
    p_sweep.add_argument("--seeds", default="0,1,2,3,4")
    p_sweep.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--workers", help="process count override")
    p_sweep.set_defaults(func=cmd_sweep)

    p_replay = sub.add_parser("replay", help="re-run from a twin snapshot")
    p_replay.add_argument("snapshot", help="snapshot file from `run --snapshot`")
    p_replay.add_argument("--out", help="output directory")
    p_replay.set_defaults(func=cmd_replay)

    p_val = sub.add_parser("validate", help="run the built-in oracle checks")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
