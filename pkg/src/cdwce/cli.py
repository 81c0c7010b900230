"""Command-line entry point: gen-data, train, cv, sweep, eval.

Settings resolve in three layers: built-in defaults, then ``--config`` (an
experiment config or a report file, whose config echo is reused), then
explicit flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from cdwce.data import generate_synthetic, load_csv, write_csv
from cdwce.harness import ExperimentConfig, FoldError, power_sweep, run_cross_validation, write_report
from cdwce.losses import LOSS_KINDS
from cdwce.metrics import summary_metrics
from cdwce.model import build_model, fit, load_checkpoint, predict_labels, save_checkpoint
from cdwce.numeric import InvalidInputError

DEFAULT_SWEEP_POWERS = tuple(float(p) for p in range(1, 11))

# flag dest -> (config field, synthetic sub-field or None)
_FIELD_OF = {
    "loss": ("losses", None),
    "power": ("powers", None),
    "powers": ("powers", None),
    "folds": ("folds", None),
    "test_fraction": ("test_fraction", None),
    "epochs": ("epochs", None),
    "batch_size": ("batch_size", None),
    "lr": ("lr", None),
    "hidden": ("hidden", None),
    "seed": ("seed", None),
    "data": ("data", None),
    "n_classes": ("n_classes", None),
    "groups": ("synthetic", "n_groups"),
    "samples_per_group": ("synthetic", "samples_per_group"),
    "noise_std": ("synthetic", "noise_std"),
    "separation": ("synthetic", "class_separation"),
}


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _add_synthetic_flags(p):
    g = p.add_argument_group("synthetic data (used when --data is absent)")
    g.add_argument("--groups", type=int, help="number of groups (patients)")
    g.add_argument("--samples-per-group", type=int)
    g.add_argument("--noise-std", type=_positive_float)
    g.add_argument("--separation", type=_positive_float, help="class spacing along the informative direction")


def _add_training_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=_positive_float, help="Adam learning rate (default 2e-4)")
    p.add_argument("--hidden", type=_int_list, help="hidden layer widths, e.g. 32,32")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="CSV dataset; synthetic data is generated when omitted")
    p.add_argument("--n-classes", type=int, help="class count for --data (default: max label + 1)")
    p.add_argument("--config", type=Path, help="JSON experiment config or report to start from")
    _add_synthetic_flags(p)


def _add_experiment_flags(p):
    _add_training_flags(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--test-fraction", type=float, help="group-level test share (default 0.15)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--timing", action="store_true", help="record per-fold wall-clock seconds in the report")
    p.add_argument("--out", type=Path, help="report path; printed to stdout when omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdwce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", help="write a synthetic ordinal dataset as CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_synthetic_flags(p)

    p = sub.add_parser("train", help="fit one model and write a checkpoint")
    p.add_argument("--loss", choices=LOSS_KINDS, required=True)
    p.add_argument("--power", type=_positive_float, help="CDW-CE power (required for cdw_ce)")
    _add_training_flags(p)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")

    p = sub.add_parser("cv", help="k-fold cross-validation on a shared group-level test set")
    p.add_argument("--loss", choices=LOSS_KINDS, action="append", help="repeat for several losses")
    p.add_argument("--power", type=_positive_float)
    p.add_argument("--powers", type=_float_list)
    _add_experiment_flags(p)

    p = sub.add_parser("sweep", help="cross-validated CDW-CE over a grid of powers")
    p.add_argument("--powers", type=_float_list, help="comma list (default 1,...,10)")
    _add_experiment_flags(p)

    p = sub.add_parser("eval", help="score a checkpoint on a CSV dataset")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-classes", type=int)
    return parser


def _explicit(args) -> dict:
    return {k: v for k, v in vars(args).items() if k in _FIELD_OF and v is not None}


def _read_config_file(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    return doc.get("config", doc) if isinstance(doc, dict) else {}


def resolve_config(args) -> tuple[ExperimentConfig, set]:
    """Merge defaults, config file and flags; returns the config and the set of
    fields that were set by the file or a flag."""
    settings = ExperimentConfig().to_dict()
    given = set()
    if getattr(args, "config", None) is not None:
        from_file = _read_config_file(args.config)
        for key, value in from_file.items():
            if key == "synthetic":
                settings["synthetic"].update(value or {})
            else:
                settings[key] = value
            given.add(key)
    for dest, value in _explicit(args).items():
        key, sub = _FIELD_OF[dest]
        if dest == "power":
            value = [value]
        elif dest == "loss" and isinstance(value, str):
            value = [value]
        if sub is None:
            settings[key] = value
        else:
            settings["synthetic"][sub] = value
        given.add(key)
    return ExperimentConfig.from_dict(settings), given


def _print_summaries(report) -> None:
    print("loss\tpower\tmean_qwk\tstd_qwk\tmean_mae\tn_folds")
    for s in report.summaries:
        power = "" if s.power is None else f"{s.power:g}"
        print(f"{s.loss}\t{power}\t{s.mean_qwk:.4f}\t{s.std_qwk:.4f}\t{s.mean_mae:.4f}\t{s.n_folds}")


def _emit_report(report, out: Path | None) -> None:
    if out is None:
        print(json.dumps(report.to_dict(), indent=2))
        return
    write_report(report, out)
    _print_summaries(report)


def _cmd_gen_data(args, parser) -> int:
    cfg, _ = resolve_config(args)
    cfg.synthetic.validate()
    ds = generate_synthetic(cfg.synthetic, cfg.seed)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} samples, {ds.unique_groups().size} groups to {args.out}")
    return 0


def _cmd_train(args, parser) -> int:
    cfg, given = resolve_config(args)
    loss = args.loss
    if loss == "cdw_ce" and args.power is None and "powers" not in given:
        parser.error("the following arguments are required for --loss cdw_ce: --power")
    power = float(cfg.powers[0]) if loss == "cdw_ce" else None
    ds = load_csv(cfg.data, cfg.n_classes) if cfg.data else generate_synthetic(cfg.synthetic, cfg.seed)
    tcfg = cfg.train_config(loss, power, cfg.seed)
    model, trace = fit(build_model(ds.n_features, ds.n_classes, tcfg), ds, tcfg)
    save_checkpoint(model, args.out, meta={"loss": loss, "power": power, "epochs": tcfg.epochs, "seed": tcfg.seed})
    print(f"final_train_loss\t{trace[-1]:.6f}")
    return 0


def _cmd_cv(args, parser) -> int:
    cfg, given = resolve_config(args)
    if "cdw_ce" in cfg.losses and args.power is None and args.powers is None and "powers" not in given:
        parser.error("the following arguments are required for --loss cdw_ce: --power or --powers")
    report = run_cross_validation(cfg, jobs=args.jobs, timing=args.timing)
    _emit_report(report, args.out)
    return 0


def _cmd_sweep(args, parser) -> int:
    cfg, given = resolve_config(args)
    powers = cfg.powers if "powers" in given else DEFAULT_SWEEP_POWERS
    report = power_sweep(cfg, powers, jobs=args.jobs, timing=args.timing)
    _emit_report(report, args.out)
    return 0


def _cmd_eval(args, parser) -> int:
    model, meta = load_checkpoint(args.model)
    ds = load_csv(args.data, args.n_classes or model.n_classes)
    metrics = summary_metrics(predict_labels(model, ds.X), ds.labels, model.n_classes)
    print(json.dumps(metrics.to_dict()))
    return 0


_COMMANDS = {"gen-data": _cmd_gen_data, "train": _cmd_train, "cv": _cmd_cv, "sweep": _cmd_sweep, "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except (InvalidInputError, FoldError, OSError, KeyError, TypeError) as exc:
        print(f"cdwce {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
