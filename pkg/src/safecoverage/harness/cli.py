"""Command line: ``run``, ``sweep``, ``oracle`` and ``report``."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..environments import EnvironmentFileError
from .config import ConfigError, ExperimentConfig, load_config, parse_seeds
from .report import write_report
from .runner import oracle_one, record_path, run_one, write_record


def _error(code: str, message: str, status: int = 2) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}, sort_keys=True) + "\n")
    return status


def _run_and_write(cfg: ExperimentConfig, seed: int, out: str) -> str:
    return str(write_record(run_one(cfg, seed), record_path(out, cfg, seed)))


def _oracle_and_write(cfg: ExperimentConfig, seed: int, out: str) -> str:
    return str(write_record(oracle_one(cfg, seed), record_path(out, cfg, seed, prefix="oracle")))


def _fan_out(fn, cfg: ExperimentConfig, seeds, out: str, jobs: int) -> list[str]:
    if jobs <= 1:
        return [fn(cfg, s, out) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, [cfg] * len(seeds), seeds, [out] * len(seeds)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safecoverage", description="Safe multi-agent coverage experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one config and seed")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--out", help="output directory (default: config output_dir)")

    for name, text in (("sweep", "run a config over many seeds"),
                       ("oracle", "precompute reachable-set benchmarks")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seeds", help="'a..b', 'a,b,c' (default: config seeds)")
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    rep = sub.add_parser("report", help="aggregate run records into CSV tables")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--out", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            if not Path(args.in_dir).is_dir():
                return _error("not_found", f"input directory {args.in_dir} does not exist")
            for path in write_report(args.in_dir, args.out):
                print(path)
            return 0
        cfg = load_config(args.config)
        out = args.out or cfg.output_dir
        if args.command == "run":
            print(_run_and_write(cfg, args.seed, out))
            return 0
        seeds = parse_seeds(args.seeds) if args.seeds else cfg.seeds
        fn = _run_and_write if args.command == "sweep" else _oracle_and_write
        for path in _fan_out(fn, cfg, seeds, out, args.jobs):
            print(path)
        return 0
    except ConfigError as exc:
        return _error(exc.code, str(exc))
    except EnvironmentFileError as exc:
        return _error(exc.code, str(exc))


if __name__ == "__main__":
    sys.exit(main())
