#!/usr/bin/env python3
"""
OTS - Main Entry Point
======================

Command-line entry point for the object-to-scene recognition toolkit:
cost analysis, object feature aggregation, training, evaluation,
gradient checking and the synthetic benchmark.
"""

import sys
from pathlib import Path

# Add src directory to Python path
current_dir = Path(__file__).parent
src_dir = current_dir / "src"
sys.path.insert(0, str(src_dir))


def add_model_args(parser, aggregators: bool = True):
    """Model shape flags shared by train and gradcheck."""
    parser.add_argument("--seed", type=int, help="Model and shuffling seed")
    parser.add_argument("--alphas", help="Comma-separated compression factors, e.g. 2,1/2; empty for no OAM")
    parser.add_argument("--channels", type=int, help="Object feature channels C")
    parser.add_argument("--objects", type=int, help="Object count C'")
    parser.add_argument("--c-out", dest="c_out", type=int, help="Scene representation width")
    parser.add_argument("--classes", type=int, help="Scene class count K")
    parser.add_argument("--fusion", choices=["cat", "sum"], help="Attention fusion")
    parser.add_argument("--bias", action="store_true", default=None, help="Add bias terms to every projection")
    parser.add_argument("--relu", action="store_true", default=None, help="Rectify the representation")
    parser.add_argument("--attention", choices=["oab", "self-attention", "nonlocal"],
                        help="Relation blocks applied to the object features (default oab)")
    parser.add_argument("--depth", type=int, help="Block count for --attention self-attention or nonlocal")
    if aggregators:
        group = parser.add_mutually_exclusive_group()
        group.add_argument("--gram", dest="aggregator", action="store_const", const="gram",
                           help="Aggregate objects with GRAM (default)")
        group.add_argument("--fc", dest="aggregator", action="store_const", const="fc",
                           help="Aggregate objects with a flatten + fully connected layer")
        group.add_argument("--pool", dest="aggregator", action="store_const", const="pool",
                           help="Aggregate objects with max and average pooling")


def add_dataset_args(parser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--synthetic", metavar="SPEC", help="Synthetic co-occurrence dataset ('default')")
    source.add_argument("--data", metavar="PATH", help="Object feature container written by 'ofam'")
    parser.add_argument("--class-names", dest="class_names", help="Comma-separated class names for --data")
    parser.add_argument("--n-train", dest="n_train", type=int, default=2000, help="Synthetic training samples")
    parser.add_argument("--n-eval", dest="n_eval", type=int, default=500, help="Synthetic evaluation samples")
    parser.add_argument("--sigma", type=float, default=0.1, help="Synthetic feature noise")
    parser.add_argument("--data-seed", dest="data_seed", type=int, default=7, help="Synthetic dataset seed")


def build_parser():
    import argparse

    parser = argparse.ArgumentParser(description="Object-to-scene recognition toolkit")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    analyze = commands.add_parser("analyze", help="Parameter and FLOP tables")
    analyze.add_argument("--preset", choices=["paper"], help="Emit every reference table row")
    analyze.add_argument("--oab", action="append", metavar="C_IN:ALPHA", help="Object attention block")
    analyze.add_argument("--chain", action="append", metavar="C_IN:A1,A2,...", help="Chain of attention blocks")
    analyze.add_argument("--self-attention", dest="self_attention", action="append",
                         metavar="C_IN:C_QK:C_V:C_OUT", help="Self-attention block")
    analyze.add_argument("--nonlocal", dest="nonlocal_block", action="append", metavar="C_IN:C:C_OUT",
                         help="Non-local block")
    analyze.add_argument("--gram", action="append", metavar="C:N:C_OUT", help="GRAM aggregator")
    analyze.add_argument("--fc", action="append", metavar="C:N:C_OUT", help="Flatten + fully connected aggregator")
    analyze.add_argument("--pool", action="append", metavar="C:N", help="Max and average pooling aggregator")
    analyze.add_argument("--n", type=int, default=150, help="Object count for attention blocks")
    analyze.add_argument("--fusion", choices=["cat", "sum"], default="cat", help="Attention fusion")
    analyze.add_argument("--bias", action="store_true", help="Count bias terms")
    analyze.add_argument("--format", choices=["text", "csv"], default="text", help="Output format")

    ofam = commands.add_parser("ofam", help="Aggregate object features from feature and score maps")
    ofam.add_argument("input", help="Container with {i}.F, {i}.S, {i}.y records")
    ofam.add_argument("output", help="Container to write {i}.X, {i}.present, {i}.y records to")

    train = commands.add_parser("train", help="Train a model")
    add_model_args(train)
    add_dataset_args(train)
    train.add_argument("--epochs", type=int, default=40)
    train.add_argument("--batch-size", dest="batch_size", type=int, default=256)
    train.add_argument("--lr", type=float, default=0.1, help="Initial learning rate")
    train.add_argument("--out", default=None, help="Output directory (default: $OTS_OUTPUT_DIR)")

    evaluate = commands.add_parser("eval", help="Evaluate a checkpoint")
    evaluate.add_argument("checkpoint", help="Checkpoint written by 'train'")
    add_dataset_args(evaluate)
    evaluate.add_argument("--min-accuracy", dest="min_accuracy", type=float,
                          help="Fail with exit code 4 below this overall accuracy")

    gradcheck = commands.add_parser("gradcheck", help="Finite-difference gradient check of a small model")
    add_model_args(gradcheck)
    gradcheck.add_argument("--gamma", type=float, default=0.5, help="Attention scale used during the check")
    gradcheck.set_defaults(channels=32, objects=12, classes=3, c_out=64)

    benchmark = commands.add_parser("benchmark", help="Synthetic relation-learning benchmark")
    benchmark.add_argument("--seed", type=int, default=7)
    benchmark.add_argument("--epochs", type=int, default=40)
    benchmark.add_argument("--out", default=None, help="Output directory (default: $OTS_OUTPUT_DIR)")

    return parser


def main():
    """Main entry point for OTS."""
    import logging

    from config import Config

    parser = build_parser()
    args = parser.parse_args()

    # Setup logging
    log_level = logging.DEBUG if args.debug else getattr(logging, Config.OTS_LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )

    logger = logging.getLogger(__name__)
    logger.info(f"Starting OTS {args.command}...")

    try:
        Config.validate()
    except RuntimeError as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(2)

    if getattr(args, "out", "") is None:
        args.out = Config.OTS_OUTPUT_DIR

    from api.commands import (cmd_analyze, cmd_eval, cmd_gradcheck, cmd_ofam, cmd_train, run_command)

    if args.command == "benchmark":
        from scripts.benchmark_runner import cmd_benchmark
        command = cmd_benchmark
    else:
        command = {
            "analyze": cmd_analyze,
            "ofam": cmd_ofam,
            "train": cmd_train,
            "eval": cmd_eval,
            "gradcheck": cmd_gradcheck,
        }[args.command]

    try:
        code = run_command(command, args)
    except ImportError as e:
        logger.error(f"Import error: {e}")
        logger.error("Make sure all dependencies are installed and paths are correct")
        sys.exit(1)
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}")
        sys.exit(1)
    sys.exit(code)


if __name__ == "__main__":
    main()
