"""Command-line entry point: ``shiftlab <subcommand> --config cfg.json --out dir``.

Exit codes: 0 success, 2 config error, 3 method failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import bench
from .bench import ConfigError, MethodError, MissingSeriesError
from .core import RandomStream
from .discrepancy import _jsonable

EXIT_OK, EXIT_CONFIG, EXIT_METHOD, EXIT_IO = 0, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("shiftlab")


def _setup_logging():
    level = os.environ.get("SHIFTLAB_LOG", "warn").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s"
    )
    if level not in ("warn", "debug", "info"):
        warnings.simplefilter("ignore")


def _config(args) -> bench.ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = bench.load_config(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(path)


def _first_draw(cfg):
    return bench.load_data(cfg, cfg.n[0], RandomStream(cfg.seed, 0))


def cmd_generate(args):
    cfg = _config(args)
    if cfg.scenario is None:
        raise ConfigError("generate needs a scenario")
    sc, src, tgt = _first_draw(cfg)
    out = _out_dir(args, cfg)
    _write(out / "source.csv", src.to_csv())
    _write(out / "target.csv", tgt.to_csv())
    _write(out / "scenario.json", json.dumps(sc.to_dict(), sort_keys=True, indent=1) + "\n")


def _single_method(cfg, args):
    if args.method:
        spec = next((m for m in cfg.methods if m.name == args.method), None) or bench.MethodSpec(args.method)
        if spec.name not in bench.METHODS:
            raise ConfigError(
                f"unknown method {spec.name!r}; registered methods: {', '.join(sorted(bench.METHODS))}"
            )
        return spec
    return cfg.methods[0]


def _fit(cfg, args):
    sc, src, tgt = _first_draw(cfg)
    ms = _single_method(cfg, args)
    stream = RandomStream(cfg.seed, 0)
    ctx = bench.Context(src, tgt.unlabeled(), stream.child(10), cfg.loss, cfg.lam, sc)
    params = {k: v for k, v in ms.params.items() if k != "label"}
    try:
        fit = bench.METHODS[ms.name](ctx, params)
    except Exception as exc:  # noqa: BLE001
        raise MethodError(ms.label, 0, exc) from exc
    return sc, src, tgt, ms, fit


def cmd_weights(args):
    cfg = _config(args)
    sc, src, tgt, ms, fit = _fit(cfg, args)
    if fit.weights is None:
        raise ConfigError(f"method {ms.name!r} does not produce importance weights")
    out = _out_dir(args, cfg)
    _write(out / "weights.csv", fit.weights.to_csv())


def cmd_adapt(args):
    cfg = _config(args)
    sc, src, tgt, ms, fit = _fit(cfg, args)
    out = _out_dir(args, cfg)
    result = {"method": ms.label, **bench.evaluate(fit, src, tgt, sc, cfg)}
    if fit.model is not None:
        result["model"] = fit.model.to_dict()
    if "saddle" in fit.extra:
        result["saddle"] = fit.extra["saddle"]
    _write(out / "adapt.json", json.dumps(_jsonable(result), sort_keys=True, indent=1) + "\n")


def cmd_discrepancy(args):
    cfg = _config(args)
    sc, src, tgt = _first_draw(cfg)
    names = cfg.discrepancies or ("mmd2", "proxy_a_distance")
    cfg = replace(cfg, discrepancies=tuple(names))
    vals = bench._discrepancies(cfg, sc, src, tgt, RandomStream(cfg.seed, 0).child(2))
    out = _out_dir(args, cfg)
    _write(out / "discrepancy.json", json.dumps(_jsonable(vals), sort_keys=True, indent=1) + "\n")


def cmd_bounds(args):
    from . import bounds as bnd

    cfg = _config(args)
    sc, src, tgt = _first_draw(cfg)
    if tgt.labels is None:
        raise ConfigError("bound-term estimation needs target labels (synthetic runs)")
    terms = bnd.estimate_bound_terms(
        src, tgt, sc, RandomStream(cfg.seed, 0).child(3), complexity=cfg.complexity, delta=cfg.delta
    )
    c = src.dim + 1.0
    res = {
        "inputs": terms.to_dict(),
        "ben_david": bnd.ben_david_bound(terms.e_star, terms.d_hdh, terms.complexity),
        "cortes_iw": bnd.cortes_iw_bound(terms.d2, c, src.n, cfg.delta) if src.n > c else None,
        "pseudo_dimension": c,
        "renyi_form": "exponentiated",
    }
    out = _out_dir(args, cfg)
    _write(out / "bounds.json", json.dumps(_jsonable(res), sort_keys=True, indent=1) + "\n")


def cmd_bench(args):
    cfg = _config(args)
    report = bench.run_bench(cfg, max(1, args.parallel))
    out = _out_dir(args, cfg)
    for p in bench.write_report(report, out):
        print(p)


def cmd_plotdata(args):
    path = Path(args.report)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report is not valid JSON: {exc}") from exc
    text = bench.emit_plot_data(report, args.kind)
    if args.out:
        out = Path(args.out)
        if out.suffix != ".csv":
            out.mkdir(parents=True, exist_ok=True)
            out = out / f"{args.kind}.csv"
        _write(out, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftlab", description="Domain-adaptation benchmark harness.")
    subs = parser.add_subparsers(dest="command", required=True)

    def common(p, parallel=False):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed; overrides the config")
        if parallel:
            p.add_argument("--parallel", type=int, default=1, help="worker processes for trials")

    for name, fn, helptext in (
        ("generate", cmd_generate, "sample source/target CSVs from a scenario"),
        ("weights", cmd_weights, "estimate importance weights"),
        ("adapt", cmd_adapt, "train one adaptive classifier and report its risks"),
        ("discrepancy", cmd_discrepancy, "domain discrepancy measures"),
        ("bounds", cmd_bounds, "bound terms and bound values"),
    ):
        p = subs.add_parser(name, help=helptext)
        common(p)
        if name in ("weights", "adapt"):
            p.add_argument("--method", help="method name (defaults to the first in the config)")
        p.set_defaults(func=fn)
    p = subs.add_parser("bench", help="run all trials and methods, write report.json/report.csv")
    common(p, parallel=True)
    p.set_defaults(func=cmd_bench)
    p = subs.add_parser("plotdata", help="tidy CSV for plotting from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--kind", required=True, choices=bench.PLOT_KINDS)
    p.add_argument("--out", help="CSV file or directory (stdout if omitted)")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        args.func(args)
    except (ConfigError, MissingSeriesError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MethodError as exc:
        print(f"method failure: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
