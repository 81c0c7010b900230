"""Cross-validation experiments, power sweeps and report files.

Protocol: carve a group-level test set once, split the remainder into k
group-disjoint folds, train one fresh model per fold on that fold's training
part, and score every model on the same test set. Each fold's seed is derived
from (master seed, loss, power, fold), so results do not depend on job order
or on how many worker processes run them.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from cdwce.data import Dataset, SyntheticConfig, generate_synthetic, group_holdout_indices, group_kfold, load_csv
from cdwce.losses import LOSS_KINDS
from cdwce.metrics import summary_metrics
from cdwce.model import TrainConfig, build_model, fit, predict_labels
from cdwce.numeric import InvalidInputError, child_seed

REPORT_SCHEMA = "cdwce-report"
REPORT_VERSION = 1
_LOSS_CODE = {"ce": 1, "cdw_ce": 2, "corn": 3}


class ReportSchemaError(InvalidInputError):
    pass


class FoldError(RuntimeError):
    def __init__(self, loss, power, fold, cause):
        super().__init__(f"fold {fold} ({loss}, power={power}) failed: {cause}")
        self.fold = fold


@dataclass(frozen=True)
class ExperimentConfig:
    losses: tuple = ("ce", "cdw_ce", "corn")
    powers: tuple = (5.0,)
    folds: int = 10
    test_fraction: float = 0.15
    epochs: int = 100
    batch_size: int = 32
    lr: float = 2e-4
    hidden: tuple = (32, 32)
    seed: int = 0
    data: str | None = None
    n_classes: int | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def validate(self) -> None:
        if not self.losses:
            raise InvalidInputError("loss list is empty")
        for loss in self.losses:
            if loss not in LOSS_KINDS:
                raise InvalidInputError(f"unknown loss {loss!r}")
        if "cdw_ce" in self.losses and not self.powers:
            raise InvalidInputError("cdw_ce needs at least one power")
        if any(not p > 0 for p in self.powers):
            raise InvalidInputError("powers must be positive")
        if self.folds < 2:
            raise InvalidInputError("folds must be >= 2")
        if not 0 < self.test_fraction < 1:
            raise InvalidInputError("test_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise InvalidInputError("epochs, batch_size and lr must be positive")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")

    def runs(self) -> list[tuple[str, float | None]]:
        """(loss, power) pairs in report order."""
        out = []
        for loss in self.losses:
            if loss == "cdw_ce":
                out.extend(("cdw_ce", float(p)) for p in self.powers)
            else:
                out.append((loss, None))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["losses"] = list(self.losses)
        d["powers"] = [float(p) for p in self.powers]
        d["hidden"] = list(self.hidden)
        d["synthetic"] = self.synthetic.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown config fields: {sorted(unknown)}")
        for key in ("losses", "hidden"):
            if key in d:
                d[key] = tuple(d[key])
        if "powers" in d:
            d["powers"] = tuple(float(p) for p in d["powers"])
        if "synthetic" in d:
            d["synthetic"] = SyntheticConfig.from_dict(d["synthetic"] or {})
        return cls(**d)

    def train_config(self, loss: str, power: float | None, seed: int) -> TrainConfig:
        return TrainConfig(loss, power, self.epochs, self.batch_size, self.lr, seed, tuple(self.hidden))


@dataclass(frozen=True)
class FoldResult:
    loss: str
    power: float | None
    fold: int
    qwk: float
    mae: float
    accuracy: float
    train_loss: float
    val_qwk: float
    val_mae: float
    seconds: float | None = None


@dataclass(frozen=True)
class RunSummary:
    loss: str
    power: float | None
    mean_qwk: float
    std_qwk: float
    mean_mae: float
    mean_val_qwk: float
    n_folds: int


@dataclass
class ExperimentReport:
    kind: str
    config: ExperimentConfig
    runs: list
    summaries: list
    n_train: int = 0
    n_test: int = 0

    @property
    def experiment_id(self) -> str:
        blob = json.dumps({"kind": self.kind, "config": self.config.to_dict()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def summary_for(self, loss: str, power: float | None = None) -> RunSummary:
        for s in self.summaries:
            if s.loss == loss and s.power == (None if power is None else float(power)):
                return s
        raise KeyError((loss, power))

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "experiment_id": self.experiment_id,
            "kind": self.kind,
            "config": self.config.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "runs": [asdict(r) for r in self.runs],
            "summaries": [asdict(s) for s in self.summaries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        _require(d, ("schema", "version", "kind", "config", "runs", "summaries"), "report")
        if d["schema"] != REPORT_SCHEMA:
            raise ReportSchemaError(f"field 'schema': expected {REPORT_SCHEMA!r}, got {d['schema']!r}")
        if d["version"] != REPORT_VERSION:
            raise ReportSchemaError(f"field 'version': unsupported version {d['version']!r}")
        runs = []
        for i, r in enumerate(d["runs"]):
            _require(r, [f for f in FoldResult.__dataclass_fields__ if f != "seconds"], f"runs[{i}]")
            runs.append(FoldResult(**{k: r.get(k) for k in FoldResult.__dataclass_fields__}))
        summaries = []
        for i, s in enumerate(d["summaries"]):
            _require(s, RunSummary.__dataclass_fields__, f"summaries[{i}]")
            summaries.append(RunSummary(**{k: s[k] for k in RunSummary.__dataclass_fields__}))
        return cls(d["kind"], ExperimentConfig.from_dict(d["config"]), runs, summaries,
                   d.get("n_train", 0), d.get("n_test", 0))


def _require(d: dict, fields, where: str) -> None:
    if not isinstance(d, dict):
        raise ReportSchemaError(f"{where}: expected an object")
    for f in fields:
        if f not in d:
            raise ReportSchemaError(f"{where}: missing required field {f!r}")


def summarize(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1); std is 0 for one value."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("nothing to summarize")
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return float(x.mean()), std


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data is not None:
        return load_csv(config.data, config.n_classes)
    return generate_synthetic(config.synthetic, config.seed)


def plan_splits(dataset: Dataset, config: ExperimentConfig):
    """Held-out test indices and k-fold assignment over the remaining samples.

    Returns ``(trainval_idx, test_idx, folds)`` where each fold is a
    ``(train_idx, val_idx)`` pair of indices into ``dataset``.
    """
    trainval_idx, test_idx = group_holdout_indices(dataset, config.test_fraction, child_seed(config.seed, 1))
    assignment = group_kfold(dataset.subset(trainval_idx), config.folds, child_seed(config.seed, 2))
    folds = [(trainval_idx[tr], trainval_idx[va]) for tr, va in assignment.folds()]
    return trainval_idx, test_idx, folds


def _train_and_score(train: Dataset, val: Dataset, test: Dataset, tcfg: TrainConfig, init_seed: int, timing: bool):
    start = time.perf_counter()
    model = build_model(train.n_features, train.n_classes, tcfg, seed=init_seed)
    model, trace = fit(model, train, tcfg)
    metrics = summary_metrics(predict_labels(model, test.X), test.labels, test.n_classes)
    val_metrics = summary_metrics(predict_labels(model, val.X), val.labels, val.n_classes)
    seconds = round(time.perf_counter() - start, 3) if timing else None
    return metrics, val_metrics, trace[-1], seconds


def _fold_job(args):
    loss, power, fold, train, val, test, tcfg, init_seed, timing = args
    try:
        metrics, val_metrics, final_loss, seconds = _train_and_score(train, val, test, tcfg, init_seed, timing)
    except Exception as exc:  # re-raised with the fold index attached
        raise FoldError(loss, power, fold, exc) from exc
    return FoldResult(loss, power, fold, metrics.qwk, metrics.mae, metrics.accuracy, float(final_loss),
                      val_metrics.qwk, val_metrics.mae, seconds)


def _run_seed(master: int, loss: str, power: float | None, fold: int) -> int:
    power_code = 0 if power is None else int(round(power * 1_000_000))
    return child_seed(master, _LOSS_CODE[loss], power_code, fold)


def run_cross_validation(config: ExperimentConfig, jobs: int | None = None, timing: bool = False,
                         kind: str = "cv", dataset: Dataset | None = None) -> ExperimentReport:
    """Train one model per (loss, power, fold) and score each on the shared test set.

    ``jobs`` > 1 runs folds in worker processes; the report is identical to a
    serial run. ``timing`` records wall-clock seconds per fold, which makes
    the report non-reproducible byte for byte, so it is off by default.
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config)
    trainval_idx, test_idx, folds = plan_splits(dataset, config)
    test = dataset.subset(test_idx)
    tasks = []
    for loss, power in config.runs():
        for fold, (train_idx, val_idx) in enumerate(folds):
            seed = _run_seed(config.seed, loss, power, fold)
            tcfg = config.train_config(loss, power, seed)
            tasks.append((loss, power, fold, dataset.subset(train_idx), dataset.subset(val_idx), test, tcfg,
                          child_seed(seed, 7), timing))
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_fold_job, tasks))
    else:
        results = [_fold_job(t) for t in tasks]
    order = {run: i for i, run in enumerate(config.runs())}
    results.sort(key=lambda r: (order[(r.loss, r.power)], r.fold))
    summaries = []
    for loss, power in config.runs():
        mine = [r for r in results if r.loss == loss and r.power == power]
        mean_qwk, std_qwk = summarize(r.qwk for r in mine)
        mean_mae, _ = summarize(r.mae for r in mine)
        mean_val_qwk, _ = summarize(r.val_qwk for r in mine)
        summaries.append(RunSummary(loss, power, mean_qwk, std_qwk, mean_mae, mean_val_qwk, len(mine)))
    return ExperimentReport(kind, config, results, summaries, int(trainval_idx.size), int(test_idx.size))


def power_sweep(config: ExperimentConfig, powers, jobs: int | None = None, timing: bool = False,
                dataset: Dataset | None = None) -> ExperimentReport:
    """Cross-validated CDW-CE at each power, one summary per power in input order."""
    powers = tuple(float(p) for p in powers)
    if not powers:
        raise InvalidInputError("powers list is empty")
    sweep_cfg = replace(config, losses=("cdw_ce",), powers=powers)
    return run_cross_validation(sweep_cfg, jobs=jobs, timing=timing, kind="sweep", dataset=dataset)


def write_report(report: ExperimentReport, path) -> None:
    text = json.dumps(report.to_dict(), indent=2, sort_keys=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_report(path) -> ExperimentReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportSchemaError(f"{path}: not valid JSON: {exc}") from None
    return ExperimentReport.from_dict(doc)


def best_power(report: ExperimentReport) -> float:
    """CDW-CE power with the highest mean validation-fold QWK (smallest on ties).

    Uses only the cross-validation folds, never the held-out test set.
    """
    cands = [s for s in report.summaries if s.loss == "cdw_ce"]
    if not cands:
        raise InvalidInputError("report has no cdw_ce runs")
    return max(cands, key=lambda s: (s.mean_val_qwk, -s.power)).power
