#!/usr/bin/env python3
"""
Logarithmic Filter Grouping Toolkit (loggroup)

Plans filter-group schemes, counts the exact parameter budget of the
shallow grouped network, trains and evaluates it on CIFAR-10 or the
synthetic face-shaped set, verifies every backward rule by finite
differences, and reproduces the published parameter tables.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .checkpoint import load_normalization, restore_into, save_checkpoint, save_normalization
from .config import DATASETS, DEFAULTS, explicit_keys, load_config, merge_cli_overrides, parse_lr_schedule
from .data import (CIFAR_CLASS_NAMES, FACE_CLASS_NAMES, Dataset, compute_normalization,
                   load_cifar10, make_synthetic_faceset, normalize)
from .errors import LogGroupError
from .gradcheck import CORRUPTIBLE_OPS, run_gradcheck
from .model import NetworkSpec, build_network, count_parameters
from .optim import fer_schedule
from .report import FORMATS, reproduce_tables, scheme_comparison_report
from .scheme import CANONICAL_SCHEME_NAMES, GroupFamily, canonical_scheme_table, format_scheme_table, \
    make_scheme
from .trainer import config_from_mapping, evaluate, train
from .visualizer import DiagramGenerator

SYNTHETIC_TRAIN = 600
SYNTHETIC_TEST = 150


logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _write_yaml(path: str, document: Dict[str, Any]) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(document, f, sort_keys=False)
    print(f"Written: {path}")


def _add_network_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scheme", default=None, help=f"Scheme name (default {DEFAULTS['scheme']})")
    parser.add_argument("--classes", type=int, default=None, help=f"Number of classes (default {DEFAULTS['classes']})")
    parser.add_argument("--no-shortcut", dest="shortcut", action="store_const", const=False, default=None,
                        help="Drop the identity shortcut of each module")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="YAML file of run settings")
    parser.add_argument("--dataset", choices=DATASETS, default=None, help="cifar10 or synthetic (default cifar10)")
    parser.add_argument("--data-dir", default=None, help=f"CIFAR-10 binary directory (default {DEFAULTS['data_dir']})")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (default 0)")
    parser.add_argument("--batch-size", type=int, default=None, help="Mini-batch size (default 128)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loggroup", description="Logarithmic filter grouping toolkit")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="List the group size arrays of a scheme")
    plan.add_argument("scheme_name", nargs="?", help="Canonical scheme name, e.g. Logarithmic-8")
    plan.add_argument("--channels", type=int, help="Channel count for an explicit grouping")
    plan.add_argument("--groups", type=int, help="Group count for an explicit grouping")
    plan.add_argument("--family", choices=["logarithmic", "uniform"], default="logarithmic",
                      help="Family of an explicit grouping (default logarithmic)")
    plan.add_argument("--diagram", help="Write a Mermaid diagram of the network to this path")
    plan.add_argument("--out", help="Write the grouping as YAML to this path")

    count = sub.add_parser("count-params", help="Exact weight counts of one or all schemes")
    _add_network_flags(count)
    count.add_argument("--format", choices=FORMATS, default="table", help="Output format (default table)")
    count.add_argument("--out", help="Write per-layer budgets as YAML to this path")

    train_cmd = sub.add_parser("train", help="Train a network")
    _add_network_flags(train_cmd)
    _add_data_flags(train_cmd)
    train_cmd.add_argument("--epochs", type=int, default=None, help="Epochs (default 180, 30 with --lr-schedule fer)")
    train_cmd.add_argument("--lr-schedule", default=None, help="cifar, fer or const:<rate> (default cifar)")
    train_cmd.add_argument("--checkpoint-dir", default=None, help="Per-epoch and best checkpoints directory")
    train_cmd.add_argument("--checkpoint", help="Write the final parameters to this path")
    train_cmd.add_argument("--out", help="Write the per-epoch history as CSV to this path")
    train_cmd.add_argument("--limit", type=int, help="Train on the first N training samples only")
    train_cmd.add_argument("--prefetch", action="store_true", help="Prepare the next batch on a background thread")
    train_cmd.add_argument("--quiet", action="store_true", help="No progress bar")

    eval_cmd = sub.add_parser("eval", help="Evaluate a checkpoint on the test split")
    _add_network_flags(eval_cmd)
    _add_data_flags(eval_cmd)
    eval_cmd.add_argument("--checkpoint", required=True, help="Checkpoint to evaluate")

    grad = sub.add_parser("gradcheck", help="Finite-difference check of every backward rule")
    grad.add_argument("--seed", type=int, default=0, help="Random seed (default 0)")
    grad.add_argument("--corrupt", choices=CORRUPTIBLE_OPS, help="Deliberately break one op's backward rule")
    grad.add_argument("--skip-network", action="store_true", help="Only check individual ops")

    tables = sub.add_parser("reproduce-tables", help="Computed parameter totals vs the published tables")
    tables.add_argument("--config", default=None, help="YAML file of run settings")
    tables.add_argument("--classes", type=int, choices=[6, 10], default=None, help="6 or 10 (default 10)")
    tables.add_argument("--format", choices=FORMATS, default=None, help="Output format (default table)")
    tables.add_argument("--with-accuracy", action="store_true", help="Include published accuracies and drops")
    tables.add_argument("--out", help="Also write the report to this path")
    return parser


def cmd_plan(args: argparse.Namespace) -> int:
    if args.scheme_name and (args.channels or args.groups):
        print("Error: give either a scheme name or --channels/--groups, not both", file=sys.stderr)
        return 2
    if args.scheme_name:
        table = canonical_scheme_table(args.scheme_name)
        print(format_scheme_table(table))
        if args.diagram:
            spec = NetworkSpec.from_name(args.scheme_name)
            print(f"Diagram: {DiagramGenerator(spec).generate(args.diagram)}")
        if args.out:
            _write_yaml(args.out, table.to_dict())
        return 0

    if args.channels is None or args.groups is None:
        print("Error: plan needs a scheme name or both --channels and --groups", file=sys.stderr)
        return 2
    family = GroupFamily.LOGARITHMIC if args.family == "logarithmic" else GroupFamily.UNIFORM
    scheme = make_scheme(family, args.channels, args.groups)
    sizes = ", ".join(str(s) for s in scheme.sizes)
    print(f"{family.value}: channels={scheme.channels} groups={scheme.group_count} sizes=[{sizes}]")
    if args.out:
        _write_yaml(args.out, scheme.to_dict())
    return 0


def cmd_count_params(args: argparse.Namespace) -> int:
    classes = args.classes if args.classes is not None else DEFAULTS["classes"]
    shortcut = args.shortcut if args.shortcut is not None else True
    names = [args.scheme] if args.scheme else list(CANONICAL_SCHEME_NAMES)
    specs = [NetworkSpec.from_name(name, num_classes=classes, shortcut=shortcut) for name in names]

    if args.scheme and args.format == "table":
        print(f"{specs[0].name} ({classes} classes)")
        print(count_parameters(specs[0]).format())
    else:
        print(scheme_comparison_report(specs, title="Parameter totals").render(args.format))

    if args.out:
        _write_yaml(args.out, {
            "classes": classes,
            "shortcut": shortcut,
            "schemes": [{"name": spec.name, **count_parameters(spec).to_dict()} for spec in specs],
        })
    return 0


def _run_config(args: argparse.Namespace) -> Dict[str, Any]:
    config = merge_cli_overrides(load_config(args.config), args)
    if config["lr_schedule"] == "fer" and "epochs" not in explicit_keys(args.config, args):
        config["epochs"] = fer_schedule().total_epochs
    return config


def _load_data(config: Dict[str, Any]) -> Tuple[Dataset, Dataset, Tuple[str, ...]]:
    if config["dataset"] == "synthetic":
        train_set, test_set = make_synthetic_faceset(config["seed"], SYNTHETIC_TRAIN, SYNTHETIC_TEST)
        return train_set, test_set, FACE_CLASS_NAMES
    train_set, test_set = load_cifar10(config["data_dir"])
    return train_set, test_set, CIFAR_CLASS_NAMES


def cmd_train(args: argparse.Namespace) -> int:
    config = _run_config(args)
    schedule = parse_lr_schedule(config["lr_schedule"], config["epochs"])
    train_config = config_from_mapping(config, schedule)
    if args.prefetch:
        train_config.prefetch = True

    train_set, test_set, _ = _load_data(config)
    if args.limit:
        train_set = train_set.subset(args.limit)
    print(f"Training {train_config.scheme} on {config['dataset']} "
          f"({len(train_set)} train / {len(test_set)} test, {train_config.epochs} epochs)")

    model, history, stats = train(train_config, train_set, test_set, progress=not args.quiet)
    print(history.summary())
    if args.out:
        print(f"History: {history.write_csv(args.out)}")
    if args.checkpoint:
        print(f"Checkpoint: {save_checkpoint(model.params, args.checkpoint)}")
        print(f"Normalization: {save_normalization(stats, args.checkpoint)}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _run_config(args)
    train_set, test_set, class_names = _load_data(config)
    num_classes = train_set.num_classes
    input_size = train_set.image_shape[1]
    spec = NetworkSpec.from_name(config["scheme"], num_classes=num_classes,
                                 shortcut=config["shortcut"], input_size=input_size)
    model = build_network(spec, seed=config["seed"])
    restore_into(model.params, args.checkpoint)

    stats = load_normalization(args.checkpoint)
    if stats is None:
        logger.warning("no normalization file beside %s; using statistics of the full training split",
                       args.checkpoint)
        stats = compute_normalization(train_set)
    result = evaluate(model, normalize(test_set, stats), batch_size=config["batch_size"])
    print(f"{spec.name} on {config['dataset']} test split")
    print(result.format(class_names))
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_gradcheck(seed=args.seed, corrupt=args.corrupt, include_network=not args.skip_network)
    print(report.format())
    return 0 if report.passed else 1


def cmd_reproduce_tables(args: argparse.Namespace) -> int:
    config = merge_cli_overrides(load_config(args.config), args)
    if config["classes"] not in (6, 10):
        print(f"Error: published tables exist for 6 and 10 classes, not {config['classes']}", file=sys.stderr)
        return 2
    report = reproduce_tables(config["classes"], with_accuracy=args.with_accuracy)
    print(report.render(config["format"]))
    if args.out:
        report.write(args.out, config["format"])
    return 0 if report.all_match else 1


COMMANDS = {
    "plan": cmd_plan,
    "count-params": cmd_count_params,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "reproduce-tables": cmd_reproduce_tables,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)
    except LogGroupError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
