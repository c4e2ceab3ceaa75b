#!/usr/bin/env python3
"""Run every shipped experiment config through the CLI and collect the summaries.

    python3 scripts/run_experiments.py                    # desk scale, all configs
    python3 scripts/run_experiments.py --scale paper      # full-size runs (hours)
    python3 scripts/run_experiments.py --only cov_ lp_    # configs whose name starts with these

Each config runs its own ``command``; covariance configs also run
``converge-cov``. Outputs go to ``<out>/<scale>/`` and one JSON line per run
is appended to ``<out>/<scale>/summaries.jsonl``.
"""
from __future__ import annotations

import argparse
import contextlib
import io
import json
import sys
import time
from pathlib import Path

from gslf import cli, config


def runs(only):
    for name in config.shipped_configs():
        if only and not any(name.startswith(p) for p in only):
            continue
        cmd = config.load(name).get("command")
        yield name, cmd
        if cmd == "covariance":
            yield name, "converge-cov"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scale", choices=config.SCALES, default="ci")
    p.add_argument("--out", default="results")
    p.add_argument("--only", nargs="*", default=[], help="config name prefixes")
    p.add_argument("--workers", type=int, default=None)
    args = p.parse_args(argv)
    out = Path(args.out) / args.scale
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    with open(out / "summaries.jsonl", "a", encoding="utf-8") as log:
        for name, cmd in runs(args.only):
            argv = [cmd, "--config", name, "--out", str(out), "--scale", args.scale, "--svg"]
            if args.workers:
                argv += ["--workers", str(args.workers)]
            buf = io.StringIO()
            start = time.perf_counter()
            with contextlib.redirect_stdout(buf):
                code = cli.main(argv)
            secs = time.perf_counter() - start
            line = buf.getvalue().strip()
            log.write(line + "\n")
            status = json.loads(line).get("status", "?") if line else "?"
            print(f"{name:32s} {cmd:15s} exit {code}  {status:5s} {secs:7.1f} s", flush=True)
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
