"""Command line entry point: ``driftlab synth | run | calibrate``.

A plan is a flat ``key = value`` text file; ``#`` starts a comment. Keys:

    dataset          friedman | mixed | path to a CSV file      (required)
    strategies       comma list out of STRATEGIES               (required)
    task             regression | classification (CSV only; checked for synthetic)
    label_column     CSV label column, default ``target``
    schedule         drift sidecar for a CSV (``real <t>`` / ``virtual <t>`` lines)
    seed             data, training and MC seed, default 0
    uninformed_seeds five integers, default 0,1,2,3,4
    T                MC passes, default 100 (regression) / 50 (classification)
    hidden           hidden layer widths, e.g. ``128,64,32,16``
    dropout          one rate per hidden layer
    epochs, batch_size, learning_rate, input_group_l1
    alpha_udd, alpha_kswin   skip calibration and use this value
    adwin_error_delta        default 0.002
    window           detection matching window, default 600
    out              output directory, default ``results``
    threads          concurrent strategy runs, default = number of strategies

``DRIFTLAB_OUT`` and ``DRIFTLAB_THREADS`` override ``out`` and ``threads``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, metrics, nnet, strategies as S, synth
from .detectors import DEFAULT_DELTA
from .ingest import StreamDataset, load_csv, partition, write_csv

log = logging.getLogger("driftlab")

SYNTHETIC = ("friedman", "mixed")
ENV_OUT = "DRIFTLAB_OUT"
ENV_THREADS = "DRIFTLAB_THREADS"


class PlanError(ValueError):
    pass


@dataclass
class Plan:
    dataset: str
    strategies: tuple
    task: Optional[str] = None
    label_column: str = "target"
    schedule: Optional[str] = None
    seed: int = 0
    uninformed_seeds: tuple = (0, 1, 2, 3, 4)
    T: Optional[int] = None
    hidden: Optional[tuple] = None
    dropout: Optional[tuple] = None
    epochs: int = S.DEFAULT_TRAIN.epochs
    batch_size: int = S.DEFAULT_TRAIN.batch_size
    learning_rate: float = S.DEFAULT_TRAIN.learning_rate
    input_group_l1: float = S.DEFAULT_TRAIN.input_group_l1
    alpha_udd: Optional[float] = None
    alpha_kswin: Optional[float] = None
    adwin_error_delta: float = DEFAULT_DELTA
    window: int = metrics.MATCH_WINDOW
    out: str = "results"
    threads: Optional[int] = None
    source: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        """Hash of everything that can change results (not ``out`` or ``threads``)."""
        return hashlib.sha256(json.dumps(self.settings(), sort_keys=True).encode()).hexdigest()

    def settings(self) -> dict:
        """Plan entries as written, minus where results go and how many threads run."""
        return {k: v for k, v in sorted(self.source.items()) if k not in ("out", "threads")}


_INT = ("seed", "T", "epochs", "batch_size", "window", "threads")
_FLOAT = ("learning_rate", "input_group_l1", "alpha_udd", "alpha_kswin", "adwin_error_delta")
_STR = ("dataset", "task", "label_column", "schedule", "out")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def parse_plan(text: str, env=None) -> Plan:
    env = os.environ if env is None else env
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PlanError(f"plan line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw:
            raise PlanError(f"plan line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for key in ("dataset", "strategies"):
        if not raw.get(key):
            raise PlanError(f"plan is missing {key!r}")

    kw = {}
    for key, value in raw.items():
        try:
            if key in _INT:
                kw[key] = int(value)
            elif key in _FLOAT:
                kw[key] = float(value)
            elif key in _STR:
                kw[key] = value
            elif key == "strategies":
                kw[key] = tuple(s.strip() for s in value.split(",") if s.strip())
            elif key in ("uninformed_seeds", "hidden"):
                kw[key] = _ints(value)
            elif key == "dropout":
                kw[key] = _floats(value)
            else:
                raise PlanError(f"unknown plan key {key!r}")
        except ValueError as exc:
            if isinstance(exc, PlanError):
                raise
            raise PlanError(f"bad value for {key!r}: {value!r}") from None

    if env.get(ENV_OUT):
        kw["out"] = env[ENV_OUT]
    if env.get(ENV_THREADS):
        try:
            kw["threads"] = int(env[ENV_THREADS])
        except ValueError:
            raise PlanError(f"{ENV_THREADS} must be an integer") from None
    plan = Plan(source=raw, **kw)
    _validate(plan)
    return plan


def _validate(plan: Plan) -> None:
    if not plan.strategies:
        raise PlanError("strategy list is empty")
    unknown = [s for s in plan.strategies if s not in S.STRATEGIES]
    if unknown:
        raise PlanError(f"unknown strategies {unknown}; choose from {', '.join(S.STRATEGIES)}")
    if len(set(plan.strategies)) != len(plan.strategies):
        raise PlanError("a strategy is listed twice")
    if any(s in S.BUDGET_MATCHED for s in plan.strategies) and "udd" not in plan.strategies:
        raise PlanError("budget source missing: budget-matched strategies need udd in the same plan")
    if plan.task is not None and plan.task not in ("regression", "classification"):
        raise PlanError(f"unknown task {plan.task!r}")
    if plan.dataset in SYNTHETIC:
        implied = "regression" if plan.dataset == "friedman" else "classification"
        if plan.task is not None and plan.task != implied:
            raise PlanError(f"dataset/task mismatch: {plan.dataset} is a {implied} stream")
    elif plan.task is None:
        raise PlanError("task is required for CSV datasets")
    if len(plan.uninformed_seeds) != 5 and "uninformed" in plan.strategies:
        raise PlanError("uninformed_seeds needs five integers")
    if plan.threads is not None and plan.threads < 1:
        raise PlanError("threads must be >= 1")
    if plan.window <= 0:
        raise PlanError("window must be positive")
    if (plan.hidden is None) != (plan.dropout is None):
        raise PlanError("hidden and dropout must be given together")
    if plan.hidden is not None and len(plan.hidden) != len(plan.dropout):
        raise PlanError("dropout needs one rate per hidden layer")


def load_plan(path) -> Plan:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PlanError(f"cannot read plan {path}: {exc.strerror}") from None
    return parse_plan(text)


def load_dataset(plan: Plan) -> tuple[StreamDataset, Optional[synth.DriftSchedule]]:
    if plan.dataset in SYNTHETIC:
        return synth.generate(plan.dataset, plan.seed)
    ds = load_csv(plan.dataset, plan.task, plan.label_column)
    schedule = None
    if plan.schedule:
        schedule = synth.DriftSchedule.parse(Path(plan.schedule).read_text(), len(ds), plan.seed)
    return ds, schedule


def build_trainer(plan: Plan, ds: StreamDataset) -> S.Trainer:
    spec = S.default_spec(ds)
    if plan.hidden is not None:
        sizes = (ds.n_features, *plan.hidden, spec.n_outputs)
        spec = nnet.NetworkSpec(sizes, plan.dropout, spec.output_head)
    cfg = replace(S.DEFAULT_TRAIN, epochs=plan.epochs, batch_size=plan.batch_size,
                  learning_rate=plan.learning_rate, input_group_l1=plan.input_group_l1)
    return S.Trainer(spec, cfg)


@dataclass
class Experiment:
    plan: Plan
    ds: StreamDataset
    schedule: Optional[synth.DriftSchedule]
    trainer: S.Trainer
    T: int
    model: S.Model
    part: object
    alphas: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)


def prepare(plan: Plan) -> Experiment:
    ds, schedule = load_dataset(plan)
    part = partition(ds)
    trainer = build_trainer(plan, ds)
    T = plan.T or S.default_T(ds.task)
    log.info("training the initial model on %d instances", len(part.train))
    model = S.initial_model(ds, part, trainer, plan.seed)
    return Experiment(plan, ds, schedule, trainer, T, model, part)


def calibrate(exp: Experiment, kind: str) -> float:
    override = exp.plan.alpha_udd if kind == "udd" else exp.plan.alpha_kswin
    if override is not None:
        exp.alphas[kind] = override
        return override
    alpha, counts = S.calibration_sweep(exp.model, exp.ds, exp.part, kind, exp.T, exp.plan.seed)
    exp.alphas[kind] = alpha
    exp.counts[kind] = counts
    return alpha


def execute(exp: Experiment) -> dict:
    """Run every strategy of the plan; returns {strategy: RunRecord or list of RunRecords}."""
    plan, m, ds, part, tr, T, seed = exp.plan, exp.model, exp.ds, exp.part, exp.trainer, exp.T, exp.plan.seed
    if "udd" in plan.strategies:
        calibrate(exp, "udd")
    if {"kswin_limited", "kswin_unlimited"} & set(plan.strategies):
        calibrate(exp, "kswin")

    runs = {}
    if "udd" in plan.strategies:
        log.info("running udd (alpha %g)", exp.alphas["udd"])
        runs["udd"] = S.run_udd(m, ds, part, tr, exp.alphas["udd"], T, seed)
    budget = runs["udd"].n_retrains if "udd" in runs else None

    jobs = {
        "no_retrain": lambda: S.run_no_retrain(m, ds, part, tr, T, seed),
        "uninformed": lambda: S.run_uninformed(m, ds, part, tr, budget, T, plan.uninformed_seeds),
        "equal_distribution": lambda: S.run_equal_distribution(m, ds, part, tr, budget, T, seed),
        "kswin_limited": lambda: S.run_kswin(m, ds, part, tr, exp.alphas["kswin"], budget, T, seed),
        "kswin_unlimited": lambda: S.run_kswin(m, ds, part, tr, exp.alphas["kswin"], None, T, seed),
        "adwin_error": lambda: S.run_adwin_error(m, ds, part, tr, T, seed, plan.adwin_error_delta),
    }
    todo = [s for s in plan.strategies if s != "udd"]
    threads = plan.threads or max(1, len(plan.strategies))
    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {s: pool.submit(jobs[s]) for s in todo}
            for s in todo:
                runs[s] = futures[s].result()
    else:
        for s in todo:
            log.info("running %s", s)
            runs[s] = jobs[s]()
    return {s: runs[s] for s in plan.strategies}


# ---------------------------------------------------------------- reports

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _quality(rec: S.RunRecord, n_classes) -> float:
    rep = metrics.prediction_report(rec, n_classes)
    return rep.rmse if rep.rmse is not None else rep.mcc


def result_rows(exp: Experiment, runs: dict) -> list[dict]:
    metric = "rmse" if exp.ds.task == "regression" else "mcc"
    rows = []
    for name, run in runs.items():
        recs = run if isinstance(run, list) else [run]
        row = {
            "strategy": name, "metric": metric,
            "value": float(np.mean([_quality(r, exp.ds.n_classes) for r in recs])),
            "retrains": recs[0].n_retrains if len(recs) == 1 else recs[0].budget,
            "labels_acquired": recs[0].labels_acquired if len(recs) == 1
            else float(np.mean([r.labels_acquired for r in recs])),
            "alpha": recs[0].alpha, "budget": recs[0].budget,
            "mtd": None, "fac": None, "mdc": None,
        }
        if exp.schedule is not None and name in ("udd", "kswin_limited", "kswin_unlimited", "adwin_error"):
            rep = metrics.detection_metrics(exp.schedule.real_drifts, recs[0].retrain_times, exp.plan.window)
            row.update(mtd=rep.mtd, fac=rep.fac, mdc=rep.mdc)
        rows.append(row)
    return rows


RESULT_COLUMNS = ("strategy", "metric", "value", "retrains", "labels_acquired", "alpha", "budget", "mtd", "fac", "mdc")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])


def _single_runs(runs: dict):
    for name, run in runs.items():
        if isinstance(run, list):
            for r in run:
                yield f"{name}_s{r.seed}", r
        else:
            yield name, run


def write_outputs(exp: Experiment, runs: dict, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    rows = result_rows(exp, runs)
    _write_csv(out / "results.csv", RESULT_COLUMNS, [[r[c] for c in RESULT_COLUMNS] for r in rows])
    written["results.csv"] = None

    with open(out / "detections.jsonl", "w", encoding="utf-8") as fh:
        for label, rec in _single_runs(runs):
            for sig in rec.detections:
                fh.write(json.dumps({"strategy": label, "time": sig.time_index, "source": sig.source,
                                     "p_value": sig.p_value, "feature": sig.feature_index}) + "\n")
    written["detections.jsonl"] = None

    for label, rec in _single_runs(runs):
        fired = set(rec.retrain_times)
        name = f"trajectory_{label}.csv"
        _write_csv(out / name, ("t", "u", "detected"),
                   ([int(t), float(u), int(t) in fired] for t, u in zip(rec.times, rec.uncertainty)))
        written[name] = None
        rep = metrics.decile_analysis(rec.uncertainty, rec.predictions, rec.targets, exp.ds.task)
        name = f"deciles_{label}.csv"
        err = "rmse" if exp.ds.task == "regression" else "accuracy"
        _write_csv(out / name, ("decile", "mean_u", err, "count"), rep.rows())
        written[name] = None

    for name in written:
        written[name] = hashlib.sha256((out / name).read_bytes()).hexdigest()
    manifest = {
        "package": "driftlab", "version": __version__,
        "config_hash": exp.plan.config_hash(),
        "plan": exp.plan.settings(),
        "dataset": {"name": exp.ds.name, "task": exp.ds.task, "length": len(exp.ds),
                    "schedule": exp.schedule.lines() if exp.schedule else None},
        "seeds": {"run": exp.plan.seed, "uninformed": list(exp.plan.uninformed_seeds)
                  if "uninformed" in runs else [],
                  "retrain": {label: [S.retrain_seed(r.seed, k) for k in range(r.n_retrains)]
                              for label, r in _single_runs(runs)}},
        "T": exp.T,
        "alpha": exp.alphas,
        "calibration_counts": {k: {repr(a): c for a, c in v.items()} for k, v in exp.counts.items()},
        "files": written,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------- commands

def cmd_synth(kind: str, out, seed: int) -> tuple[Path, Path]:
    if kind not in SYNTHETIC:
        raise PlanError(f"unknown synthetic kind {kind!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ds, schedule = synth.generate(kind, seed)
    data = out / f"{kind}.csv"
    side = out / f"{kind}.schedule"
    write_csv(ds, data)
    side.write_text("".join(line + "\n" for line in schedule.lines()), encoding="utf-8")
    return data, side


def cmd_run(plan_path) -> tuple[list[dict], Path]:
    plan = load_plan(plan_path)
    exp = prepare(plan)
    runs = execute(exp)
    out = Path(plan.out)
    write_outputs(exp, runs, out)
    return result_rows(exp, runs), out


def cmd_calibrate(plan_path, strategy: str) -> tuple[float, dict]:
    if strategy not in ("udd", "kswin"):
        raise PlanError("calibrate supports udd or kswin")
    plan = load_plan(plan_path)
    exp = prepare(replace(plan, alpha_udd=None, alpha_kswin=None))
    calibrate(exp, strategy)
    return exp.alphas[strategy], exp.counts[strategy]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="driftlab", description="Uncertainty drift detection experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", help="write a synthetic stream and its drift schedule")
    p.add_argument("kind", choices=SYNTHETIC)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("run", help="run every strategy of a plan")
    p.add_argument("--plan", required=True)
    p = sub.add_parser("calibrate", help="print the calibrated sensitivity")
    p.add_argument("--plan", required=True)
    p.add_argument("--strategy", choices=("udd", "kswin"), required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            data, side = cmd_synth(args.kind, args.out, args.seed)
            print(f"wrote {data} and {side}")
        elif args.command == "run":
            rows, out = cmd_run(args.plan)
            for r in rows:
                extra = "" if r["fac"] is None else f"  MTD {_fmt(r['mtd']) or '-'} FAC {r['fac']} MDC {r['mdc']}"
                print(f"{r['strategy']:<20} {r['metric']} {r['value']:.4f} ({r['retrains']}){extra}")
            print(f"outputs in {out}")
        else:
            alpha, counts = cmd_calibrate(args.plan, args.strategy)
            print(f"alpha {alpha!r}")
            for a in sorted(counts, reverse=True):
                print(f"  {a!r:>8} {counts[a]}")
    except (PlanError, OSError, ValueError) as exc:
        print(f"driftlab: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
