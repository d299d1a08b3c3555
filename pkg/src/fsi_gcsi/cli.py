"""Command-line front end: run a benchmark, verify, or inspect dof counts.

Thread count is taken from FSI_GCSI_THREADS and forwarded to the BLAS
pools before numpy loads; everything else lives in the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _apply_thread_env() -> None:
    n = os.environ.get("FSI_GCSI_THREADS")
    if n:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, n)


def _load_config(path: str):
    from . import bench
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise bench.ConfigError(f"cannot read config {path}: {exc}")
    return bench.parse_config(text)


def _cmd_run(args) -> int:
    from . import bench
    try:
        cfg = _load_config(args.config)
        if args.out:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return bench.run_benchmark(cfg, verbose=not args.quiet)


def _cmd_info(args) -> int:
    from . import bench, spaces as spc
    try:
        cfg = _load_config(args.config)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    hier = bench.problem_hierarchy(cfg)
    print(f"benchmark {cfg.benchmark}, levels 0..{cfg.refine}")
    print(f"{'level':>5} {'cells':>8} {'velocity':>10} {'pressure':>10} "
          f"{'total':>10}")
    for j, dm in enumerate(spc.build_spaces(hier)):
        print(f"{j:>5} {dm.mesh.num_cells:>8} {dm.nv:>10} {dm.n1:>10} "
              f"{dm.nblock:>10}")
    return 0


def _cmd_verify(args) -> int:
    from . import verify
    return verify.run_suite(args.suite)


def main(argv=None) -> int:
    _apply_thread_env()
    parser = argparse.ArgumentParser(
        prog="fsi-gcsi",
        description="Matrix-free multilevel solver for incompressible "
                    "fluid-structure interaction")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured benchmark")
    p_run.add_argument("config", help="path to a config file")
    p_run.add_argument("--out", help="override run.out_dir")
    p_run.add_argument("--quiet", action="store_true",
                       help="suppress per-step progress lines")
    p_run.set_defaults(func=_cmd_run)

    p_ver = sub.add_parser("verify", help="run an oracle/invariant suite")
    p_ver.add_argument("suite", help="bdf | operator | stokes | temporal | "
                                     "extension | oscillation | contrast | all")
    p_ver.set_defaults(func=_cmd_verify)

    p_info = sub.add_parser("info", help="print dof counts per level")
    p_info.add_argument("config", help="path to a config file")
    p_info.set_defaults(func=_cmd_info)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
