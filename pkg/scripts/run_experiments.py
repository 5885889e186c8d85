"""Run the end-to-end experiments with the bundled configurations.

Usage::

    python scripts/run_experiments.py [NAME ...] [--threads K] [--out DIR] [--plot]

With no names, runs containment, localization, tails, goodenv and subdiff
(the last one is the longest: about 10^11 walk steps).  Results go to
``DIR/<name>_*.csv`` and ``DIR/<name>.json``; the exit status is the worst
experiment exit code (0 all assertions passed, 2 a bound was violated).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from sinai.cli import main as sinai_main

HERE = Path(__file__).resolve().parent
ORDER = ["containment", "localization", "tails", "goodenv", "subdiff"]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", metavar="NAME", help=" | ".join(ORDER))
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="results")
    p.add_argument("--plot", action="store_true")
    a = p.parse_args(argv)
    unknown = set(a.names) - set(ORDER)
    if unknown:
        p.error(f"unknown experiment(s): {sorted(unknown)}")
    worst = 0
    for name in a.names or ORDER:
        args = ["experiment", name, "--config", str(HERE / "configs" / f"{name}.json"),
                "--out", a.out]
        if a.threads:
            args += ["--threads", str(a.threads)]
        if a.plot:
            args.append("--plot")
        t0 = time.perf_counter()
        print(f"== {name}", flush=True)
        code = sinai_main(args)
        print(f"== {name}: exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
