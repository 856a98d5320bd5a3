"""Experiment configuration, method registry and the benchmark runner behind the CLI."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import bounds as bnd
from . import discrepancy as disc
from . import scenarios as scn
from . import subspace as sub
from . import weights as wts
from .classifiers import LinearModel, predict, train_weighted
from .core import Dataset, RandomStream, class_priors, validate
from .discrepancy import _jsonable
from .kernels import KernelSpec
from .optim import ConvergenceWarning
from .robust import minimax_weight_train, rba_train

log = logging.getLogger(__name__)

CLI_MINIMAX_CAP = 10.0
PLOT_KINDS = ("weights-vs-true", "risk-vs-n", "bound-vs-gap")
DISCREPANCIES = ("mmd2", "proxy_a_distance", "hellinger", "renyi2")


class ConfigError(ValueError):
    pass


class MethodError(RuntimeError):
    def __init__(self, method: str, trial: int, cause: BaseException):
        self.method, self.trial, self.cause = method, trial, cause
        super().__init__(f"method {method!r} failed in trial {trial}: {type(cause).__name__}: {cause}")


class MissingSeriesError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


PRESETS: dict[str, Callable[..., scn.ShiftScenario]] = {
    "covariate_1d": scn.covariate_shift_1d_scenario,
    "prior_shift": scn.prior_shift_scenario,
    "concept_shift": scn.concept_shift_scenario,
    "rotated_2d": scn.rotated_2d_scenario,
    "orthogonal": scn.orthogonal_scenario,
    "identical": scn.identical_scenario,
}


def build_scenario(spec: dict) -> scn.ShiftScenario:
    """A preset ``{"preset": name, **params}`` or an explicit model dictionary."""
    spec = dict(spec)
    if "preset" in spec:
        name = spec.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"unknown scenario preset {name!r}; known: {', '.join(sorted(PRESETS))}")
        try:
            return PRESETS[name](**spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad parameters for preset {name!r}: {exc}") from exc
    try:
        return scn.ShiftScenario.from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario specification: {exc}") from exc


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.params.get("label", self.name)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Optional[dict] = None
    source_csv: Optional[str] = None
    target_csv: Optional[str] = None
    methods: tuple = (MethodSpec("unweighted"),)
    trials: int = 1
    seed: int = 0
    n: tuple = (500,)
    m: int = 500
    loss: str = "logistic"
    lam: float = 1e-3
    discrepancies: tuple = ()
    bounds: bool = False
    delta: float = 0.05
    complexity: float = 0.0
    record_weights: bool = True
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, base: Optional[Path] = None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {
            "scenario", "source_csv", "target_csv", "methods", "trials", "seed", "n", "m",
            "loss", "lambda", "discrepancies", "bounds", "delta", "complexity",
            "record_weights", "out",
        }
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        scenario = d.get("scenario")
        if isinstance(scenario, str):
            scenario = {"preset": scenario}
        if scenario is None and not (d.get("source_csv") and d.get("target_csv")):
            raise ConfigError("config needs a scenario or both source_csv and target_csv")
        if scenario is not None:
            build_scenario(scenario)
        methods = []
        for item in d.get("methods", ["unweighted"]):
            if isinstance(item, str):
                ms = MethodSpec(item)
            elif isinstance(item, dict) and "name" in item:
                ms = MethodSpec(item["name"], dict(item.get("params", {})))
            else:
                raise ConfigError(f"bad method entry {item!r}")
            if ms.name not in METHODS:
                raise ConfigError(
                    f"unknown method {ms.name!r}; registered methods: {', '.join(sorted(METHODS))}"
                )
            methods.append(ms)
        if not methods:
            raise ConfigError("method list is empty")
        labels = [m.label for m in methods]
        if len(set(labels)) != len(labels):
            raise ConfigError("method labels must be unique (set params.label)")
        trials = d.get("trials", 1)
        if not isinstance(trials, int) or trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        n = d.get("n", 500)
        n = tuple(n) if isinstance(n, list) else (n,)
        m = d.get("m", 500)
        if not all(isinstance(k, int) and k >= 2 for k in n + (m,)):
            raise ConfigError("sample sizes must be integers >= 2")
        discs = tuple(d.get("discrepancies", ()))
        bad = [x for x in discs if x not in DISCREPANCIES]
        if bad:
            raise ConfigError(f"unknown discrepancies {bad}; known: {', '.join(DISCREPANCIES)}")
        try:
            from .core import LossKind

            loss = LossKind.parse(d.get("loss", "logistic")).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        def resolve(p):
            if p is None or base is None:
                return p
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        return cls(
            scenario, resolve(d.get("source_csv")), resolve(d.get("target_csv")), tuple(methods),
            trials, seed, n, m, loss, float(d.get("lambda", 1e-3)), discs, bool(d.get("bounds", False)),
            float(d.get("delta", 0.05)), float(d.get("complexity", 0.0)),
            bool(d.get("record_weights", True)), d.get("out"),
        )

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "source_csv": self.source_csv,
            "target_csv": self.target_csv,
            "methods": [{"name": m.name, "params": m.params} for m in self.methods],
            "trials": self.trials,
            "seed": self.seed,
            "n": list(self.n),
            "m": self.m,
            "loss": self.loss,
            "lambda": self.lam,
            "discrepancies": list(self.discrepancies),
            "bounds": self.bounds,
            "delta": self.delta,
            "complexity": self.complexity,
        }


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; parse errors name the byte offset."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(
            f"malformed JSON at byte offset {offset} (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    return ExperimentConfig.from_dict(raw, Path(path).resolve().parent)


# ---------------------------------------------------------------------------
# methods
#
# A method sees the labeled source, the *unlabeled* target and a stream. It
# returns a Fit; target labels never reach this layer.


@dataclass
class Fit:
    model: Optional[LinearModel] = None
    weights: Optional[wts.WeightVector] = None
    # maps for methods that change the feature space
    source_map: Optional[np.ndarray] = None
    target_map: Optional[np.ndarray] = None
    target_scores: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Context:
    source: Dataset
    target: Dataset  # unlabeled view
    stream: RandomStream
    loss: str
    lam: float
    scenario: Optional[scn.ShiftScenario]


def _kernel(params) -> KernelSpec:
    k = params.get("kernel", {})
    return KernelSpec(**k) if isinstance(k, dict) else KernelSpec()


def _train(ctx: Context, w=None, X=None):
    src = ctx.source if X is None else Dataset(X, ctx.source.labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return train_weighted(src, w, ctx.loss, ctx.lam)


def _weighting(estimator):
    def run(ctx: Context, params: dict) -> Fit:
        w = estimator(ctx, params)
        return Fit(_train(ctx, w), w)

    return run


def _true(ctx, p):
    if ctx.scenario is None:
        raise ValueError("true weights need a synthetic scenario")
    if ctx.scenario.kind == "prior":
        return wts.class_weight_vector(
            ctx.source.labels, ctx.scenario.source.priors, ctx.scenario.target.priors
        )
    return wts.WeightVector(scn.true_importance_weights(ctx.scenario, ctx.source.features), "true")


def _class_weights(ctx, p):
    if "priors_T" in p:
        pt = p["priors_T"]
    elif ctx.scenario is not None:
        pt = ctx.scenario.target.priors
    else:
        raise ValueError("class_weights needs params.priors_T without a scenario")
    return wts.class_weight_vector(ctx.source.labels, class_priors(ctx.source), pt)


def _sa(ctx: Context, p) -> Fit:
    proj, xs, zt = sub.subspace_align(ctx.source, ctx.target, p.get("d"))
    return Fit(_train(ctx, None, xs), None, xs, zt, extra={"d": proj.dim})


def _tca(ctx: Context, p) -> Fit:
    proj, es, et = sub.tca(ctx.source, ctx.target, _kernel(p), p.get("d", 2), p.get("mu", 1.0))
    return Fit(_train(ctx, None, es), None, es, et, extra={"tca_objective": proj.info["objective"]})


def _rba(ctx: Context, p) -> Fit:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model, rep = rba_train(ctx.source, ctx.target, p.get("order", 1), ctx.stream)
    post = model.target_posterior
    src_post = model.predict_proba(ctx.source.features)
    return Fit(None, None, None, None, post - 0.5, extra={"saddle": rep.to_dict(), "source_scores": src_post - 0.5})


def _minimax(ctx: Context, p) -> Fit:
    eps, cap = p.get("eps", 0.1), p.get("cap", CLI_MINIMAX_CAP)
    model, w, rep = minimax_weight_train(ctx.source, eps, cap, ctx.loss, ctx.lam, ctx.stream)
    return Fit(model, w, extra={"saddle": rep.to_dict()})


METHODS: dict[str, Callable[[Context, dict], Fit]] = {
    "unweighted": lambda ctx, p: Fit(_train(ctx)),
    "true": _weighting(_true),
    "gaussian": _weighting(lambda c, p: wts.gaussian_ratio_weights(c.source, c.target)),
    "kde": _weighting(lambda c, p: wts.kde_ratio_weights(c.source, c.target, p.get("bandwidth_S"), p.get("bandwidth_T"))),
    "kmm": _weighting(
        lambda c, p: wts.kmm_weights(
            c.source, c.target, _kernel(p), p.get("B", wts.KMM_DEFAULT_CAP), p.get("eps"),
            p.get("ridge", wts.KMM_DEFAULT_RIDGE),
        )
    ),
    "kliep": _weighting(lambda c, p: wts.kliep_weights(c.source, c.target, None, _kernel(p), c.stream)),
    "lsif": _weighting(
        lambda c, p: wts.lsif_weights(c.source, c.target, None, _kernel(p), p.get("ridge", wts.LSIF_DEFAULT_RIDGE), c.stream)
    ),
    "voronoi": _weighting(
        lambda c, p: wts.voronoi_weights(c.source, c.target, p.get("laplace", False), p.get("normalize", True))
    ),
    "class_weights": _weighting(_class_weights),
    "sa": _sa,
    "tca": _tca,
    "rba": _rba,
    "minimax": _minimax,
}


# ---------------------------------------------------------------------------
# trials


def load_data(cfg: ExperimentConfig, n: int, stream: RandomStream):
    """Return ``(scenario or None, source, target)``; the target keeps its labels if any."""
    if cfg.scenario is not None:
        sc = build_scenario(cfg.scenario)
        src, tgt = sc.sample(n, cfg.m, stream)
        return sc, src, tgt
    src = Dataset.from_csv(cfg.source_csv)
    tgt = Dataset.from_csv(cfg.target_csv)
    validate(src)
    validate(tgt)
    if src.labels is None:
        raise ConfigError("source CSV must carry labels")
    return None, src, tgt


def _zero_one(scores, labels) -> float:
    pred = np.where(np.asarray(scores) >= 0, 1, -1)
    return float(np.mean(pred != labels))


def _discrepancies(cfg, sc, src, tgt, stream) -> dict:
    out = {}
    for name in cfg.discrepancies:
        if name == "mmd2":
            out[name] = disc.mmd2(src.features, tgt.features).value
        elif name == "proxy_a_distance":
            out[name] = disc.proxy_a_distance(src.features, tgt.features, stream).value
        elif name == "hellinger":
            out[name] = disc.hellinger_hist(src.features, tgt.features).value if src.dim <= 3 else None
        elif name == "renyi2" and sc is not None:
            out[name] = disc.renyi2_gaussian(
                bnd.marginal_gaussian(sc.target), bnd.marginal_gaussian(sc.source)
            ).value
    return out


def run_trial(cfg: ExperimentConfig, trial: int, n_index: int) -> dict:
    """All methods on one seeded draw; returns records, series and timings."""
    n = cfg.n[n_index]
    stream = RandomStream(cfg.seed, trial) if len(cfg.n) == 1 else RandomStream(cfg.seed, trial, (n_index,))
    sc, src, tgt = load_data(cfg, n, stream)
    target_view = tgt.unlabeled()
    shared = {"trial": trial, "n": n, "m": tgt.n}
    shared.update(_discrepancies(cfg, sc, src, tgt, stream.child(2)))
    bound_terms = None
    if cfg.bounds and tgt.labels is not None:
        bound_terms = bnd.estimate_bound_terms(src, tgt, sc, stream.child(3), complexity=cfg.complexity)
    records, series, timings = [], [], {}
    for k, ms in enumerate(cfg.methods):
        ctx = Context(src, target_view, stream.child(10 + k), cfg.loss, cfg.lam, sc)
        t0 = time.perf_counter()
        try:
            fit = METHODS[ms.name](ctx, {key: v for key, v in ms.params.items() if key != "label"})
        except Exception as exc:  # noqa: BLE001  (reported with method and trial)
            raise MethodError(ms.label, trial, exc) from exc
        timings[ms.label] = time.perf_counter() - t0
        rec = dict(shared, method=ms.label)
        rec.update(evaluate(fit, src, tgt, sc, cfg))
        if bound_terms is not None:
            rec.update(_bound_fields(bound_terms, rec, cfg, src.dim))
        records.append(rec)
        if (
            cfg.record_weights
            and trial == 0
            and fit.weights is not None
            and src.dim == 1
            and sc is not None
        ):
            series.append(
                {
                    "method": ms.label,
                    "n": n,
                    "x": src.features[:, 0].tolist(),
                    "true_weight": _true(ctx, {}).values.tolist(),
                    "estimated_weight": fit.weights.values.tolist(),
                }
            )
    return {"records": records, "series": series, "timings": {"trial": trial, "n": n, "methods": timings}}


def evaluate(fit: Fit, src: Dataset, tgt: Dataset, sc, cfg: ExperimentConfig) -> dict:
    out: dict = {}
    if fit.target_scores is not None:  # posterior-type predictor
        src_scores = fit.extra["source_scores"]
        tgt_scores = fit.target_scores
    elif fit.source_map is not None:
        _, src_scores = predict(fit.model, fit.source_map)
        _, tgt_scores = predict(fit.model, fit.target_map)
    else:
        _, src_scores = predict(fit.model, src.features)
        _, tgt_scores = predict(fit.model, tgt.features)
        if sc is not None:
            try:
                out["target_risk_analytic"] = scn.linear_risk(sc, fit.model.coef, fit.model.intercept)
            except NotImplementedError:
                pass
    out["source_risk"] = _zero_one(src_scores, src.labels)
    out["target_risk"] = _zero_one(tgt_scores, tgt.labels) if tgt.labels is not None else None
    if fit.weights is not None:
        w = fit.weights.values
        out["weighted_risk"] = float(np.mean(w * (np.where(src_scores >= 0, 1, -1) != src.labels)))
        out["weight_mean"] = float(w.mean())
        out["weight_max"] = float(w.max())
        out["weight_ess"] = float(w.sum() ** 2 / max((w**2).sum(), 1e-300))
    else:
        out["weighted_risk"] = out["source_risk"]
    for key in ("tca_objective", "d"):
        if key in fit.extra:
            out[key] = fit.extra[key]
    if "saddle" in fit.extra:
        out["saddle_gap"] = fit.extra["saddle"]["gap"]
    return out


def _bound_fields(terms: bnd.BoundInputs, rec: dict, cfg: ExperimentConfig, dim: int) -> dict:
    c = dim + 1.0
    out = {
        "e_star": terms.e_star,
        "d_hdh": terms.d_hdh,
        "d2": terms.d2,
        "ben_david": bnd.ben_david_bound(terms.e_star, terms.d_hdh, terms.complexity),
    }
    if terms.n > c:
        out["cortes_bound"] = bnd.cortes_iw_bound(terms.d2, c, terms.n, cfg.delta)
    if rec.get("target_risk") is not None:
        out["realized_gap"] = rec["target_risk"] - rec["weighted_risk"]
    return out


# ---------------------------------------------------------------------------
# report assembly


NUMERIC_SKIP = {"trial", "n", "m", "method"}


def aggregate(records: list[dict]) -> dict:
    """Mean and population std per (method, n) for every numeric field."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec["method"], rec["n"]), []).append(rec)
    out = {}
    for (method, n), recs in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        stats = {}
        keys = sorted({k for r in recs for k in r} - NUMERIC_SKIP)
        for key in keys:
            vals = [r.get(key) for r in recs]
            if all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in vals
            ):
                arr = np.asarray(vals, dtype=float)
                stats[key] = {"mean": float(arr.mean()), "std": float(arr.std())}
        out[f"{method}|n={n}"] = stats
    return out


def run_bench(cfg: ExperimentConfig, parallel: int = 1) -> dict:
    jobs = [(t, g) for g in range(len(cfg.n)) for t in range(cfg.trials)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_job, [(cfg, t, g) for t, g in jobs]))
    else:
        results = [run_trial(cfg, t, g) for t, g in jobs]
    records = [r for res in results for r in res["records"]]
    series = [s for res in results for s in res["series"]]
    deterministic = {
        "config": cfg.to_dict(),
        "records": records,
        "aggregate": aggregate(records),
        "series": {"weights": series},
    }
    return {
        "schema": "shiftlab.bench/1",
        "deterministic": _jsonable(deterministic),
        "timings": [res["timings"] for res in results],
    }


def _run_job(args):
    cfg, t, g = args
    return run_trial(cfg, t, g)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def deterministic_json(report: dict) -> str:
    return json.dumps(report["deterministic"], sort_keys=True, indent=1, allow_nan=False) + "\n"


def records_csv(records: list[dict]) -> str:
    cols = ["trial", "n", "m", "method"]
    cols += sorted({k for r in records for k in r} - set(cols))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in records:
        writer.writerow(["" if r.get(c) is None else r.get(c) for c in cols])
    return buf.getvalue()


def write_report(report: dict, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pj, pc = out / "report.json", out / "report.csv"
    pj.write_text(report_json(report), encoding="utf-8")
    pc.write_text(records_csv(report["deterministic"]["records"]), encoding="utf-8")
    return pj, pc


def emit_plot_data(report: dict, kind: str) -> str:
    """Tidy CSV (one observation per row) for one of ``PLOT_KINDS``."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    det = report.get("deterministic", {})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if kind == "weights-vs-true":
        series = det.get("series", {}).get("weights", [])
        if not series:
            raise MissingSeriesError("report holds no weight series (1-d synthetic runs only)")
        w.writerow(["x", "true_weight", "estimated_weight", "method"])
        for s in series:
            for x, t, e in zip(s["x"], s["true_weight"], s["estimated_weight"]):
                w.writerow([x, t, e, s["method"]])
        return buf.getvalue()
    records = det.get("records", [])
    if kind == "risk-vs-n":
        rows = [r for r in records if r.get("target_risk") is not None]
        if not rows:
            raise MissingSeriesError("report holds no target-risk records")
        w.writerow(["n", "method", "trial", "source_risk", "target_risk", "weighted_risk"])
        for r in rows:
            w.writerow([r["n"], r["method"], r["trial"], r["source_risk"], r["target_risk"], r["weighted_risk"]])
        return buf.getvalue()
    rows = [r for r in records if "realized_gap" in r]
    if not rows:
        raise MissingSeriesError("report holds no bound records (run bench with bounds=true)")
    w.writerow(["method", "trial", "n", "realized_gap", "cortes_bound", "ben_david"])
    for r in rows:
        w.writerow([r["method"], r["trial"], r["n"], r["realized_gap"], r.get("cortes_bound", ""), r["ben_david"]])
    return buf.getvalue()
