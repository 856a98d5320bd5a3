"""Run ``shiftlab bench`` on every config in scripts/configs and print aggregate target risks.

Usage: python3 scripts/run_configs.py [--out results] [--parallel 2] [names ...]
"""

import argparse
import json
import sys
from pathlib import Path

from shiftlab.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def summarize(report_path: Path) -> list[str]:
    agg = json.loads(report_path.read_text())["deterministic"]["aggregate"]
    lines = []
    for key, stats in agg.items():
        tr = stats.get("target_risk")
        if tr is not None:
            lines.append(f"  {key:28s} target risk {tr['mean']:.4f} +- {tr['std']:.4f}")
    return lines


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems to run (default: all)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--parallel", type=int, default=1)
    args = ap.parse_args(argv)
    configs = sorted((HERE / "configs").glob("*.json"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    status = 0
    for cfg in configs:
        out = Path(args.out) / cfg.stem
        code = cli_main(["bench", "--config", str(cfg), "--out", str(out), "--parallel", str(args.parallel)])
        print(f"{cfg.stem}: exit {code}")
        if code == 0:
            print("\n".join(summarize(out / "report.json")))
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
