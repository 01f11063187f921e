"""
Command implementations behind run.py. Each command returns a process exit
code: 0 success, 2 usage or configuration, 3 data format, 4 acceptance or
numerical failure (a run that diverged or overflowed).
"""

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config import AGGREGATORS, ATTENTIONS, FUSIONS, Config, ModelConfig
from core.gradcheck import gradcheck
from errors import AcceptanceError, ConfigurationError, FormatError, NumericalError, ShapeError, UsageError
from models.ofam import ofam
from models.ots_model import build_model
from services.container_service import (load_checkpoint, load_feature_pairs, load_object_features,
                                        object_feature_records, save_checkpoint, write_container)
from services.cost_service import (CostReport, cost_fc, cost_gram, cost_nonlocal, cost_oab, cost_oab_chain,
                                   cost_pool, cost_self_attention, reference_preset)
from services.dataset_service import SceneDataset, default_spec, generate_synthetic
from services.report_service import ReportService
from services.training_service import SgdConfig, cross_entropy, evaluate, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_ACCEPTANCE = 4

GRADCHECK_THRESHOLD = 1e-5


class CliConfig(BaseModel):
    """Typed options shared by train, eval and gradcheck."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    alphas: Tuple[Fraction, ...] = (Fraction(2), Fraction(1, 2))
    channels: int = Field(default=1024, gt=0)
    objects: int = Field(default=150, gt=0)
    c_out: int = Field(default=2048, gt=0)
    classes: int = Field(default=7, gt=0)
    aggregator: str = "gram"
    fusion: str = "cat"
    bias: bool = False
    relu: bool = False
    attention: str = "oab"
    depth: int = Field(default=2, ge=0)

    @field_validator("alphas", mode="before")
    @classmethod
    def parse_alphas(cls, value):
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()] if value.strip() else []
        return tuple(Fraction(str(a).strip()) for a in value)

    @field_validator("aggregator")
    @classmethod
    def known_aggregator(cls, value):
        if value not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}")
        return value

    @field_validator("fusion")
    @classmethod
    def known_fusion(cls, value):
        if value not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}")
        return value

    @field_validator("attention")
    @classmethod
    def known_attention(cls, value):
        if value not in ATTENTIONS:
            raise ValueError(f"attention must be one of {ATTENTIONS}")
        return value

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        fields = {name: getattr(args, name) for name in cls.model_fields if getattr(args, name, None) is not None}
        return cls(**fields)

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(c_in=self.channels, n_objects=self.objects, alphas=self.alphas, c_out=self.c_out,
                           num_classes=self.classes, aggregator=self.aggregator, fusion=self.fusion,
                           use_bias=self.bias, head_relu=self.relu, attention=self.attention,
                           attention_depth=self.depth, seed=self.seed)


def run_command(command: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    """Run a command, mapping library errors to exit codes."""
    try:
        return command(args)
    except (ConfigurationError, ShapeError, UsageError, ValidationError) as e:
        logger.error(f"{e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as e:
        logger.error(f"Data format error: {e}")
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except AcceptanceError as e:
        logger.error(f"Acceptance failure: {e}")
        print(f"acceptance failure: {e}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_ACCEPTANCE


def _split(spec: str, parts: int, flag: str) -> List[str]:
    values = spec.split(":")
    if len(values) != parts:
        raise UsageError(f"{flag} expects {parts} colon-separated values, got {spec!r}")
    return values


def _ints(values: List[str], flag: str) -> List[int]:
    try:
        return [int(v) for v in values]
    except ValueError:
        raise UsageError(f"{flag} expects integers, got {':'.join(values)}")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"Invalid compression factor {text!r}")


def analysis_reports(args: argparse.Namespace) -> List[CostReport]:
    n, bias = args.n, args.bias
    reports: List[CostReport] = []
    if args.preset == "paper":
        reports.extend(reference_preset(bias=True))

    for spec in args.oab or []:
        c_in, alpha = _split(spec, 2, "--oab")
        reports.append(cost_oab(_ints([c_in], "--oab")[0], _fraction(alpha), n, fusion=args.fusion, bias=bias))
    for spec in args.chain or []:
        c_in, alphas = _split(spec, 2, "--chain")
        chain = [_fraction(a) for a in alphas.split(",")]
        reports.append(cost_oab_chain(_ints([c_in], "--chain")[0], chain, n, fusion=args.fusion, bias=bias,
                                      name=f"Object Attention Block x{len(chain)}"))
    for spec in args.self_attention or []:
        c_in, c_qk, c_v, c_out = _ints(_split(spec, 4, "--self-attention"), "--self-attention")
        reports.append(cost_self_attention(c_in, c_qk, c_v, c_out, n, bias=bias))
    for spec in args.nonlocal_block or []:
        c_in, c, c_out = _ints(_split(spec, 3, "--nonlocal"), "--nonlocal")
        reports.append(cost_nonlocal(c_in, c, c_out, n, bias=bias))
    for spec in args.gram or []:
        c, units, c_out = _ints(_split(spec, 3, "--gram"), "--gram")
        reports.append(cost_gram(c, units, c_out, bias=bias))
    for spec in args.fc or []:
        c, units, c_out = _ints(_split(spec, 3, "--fc"), "--fc")
        reports.append(cost_fc(c, units, c_out, bias=bias))
    for spec in args.pool or []:
        c, units = _ints(_split(spec, 2, "--pool"), "--pool")
        reports.append(cost_pool(c, units))

    if not reports:
        raise UsageError("Nothing to analyze: pass --preset paper or at least one layer flag")
    return reports


def cmd_analyze(args: argparse.Namespace) -> int:
    """Print parameter and FLOP tables."""
    reports = analysis_reports(args)
    service = ReportService()
    if args.format == "csv":
        sys.stdout.write(service.render_delimited(reports))
    else:
        sys.stdout.write(service.render_table(reports))
    return EXIT_OK


def cmd_ofam(args: argparse.Namespace) -> int:
    """Aggregate object features for every (F, S, y) triplet of a container."""
    pairs = load_feature_pairs(args.input)
    results = [(ofam(features, scores), label) for features, scores, label in pairs]
    write_container(args.output, object_feature_records(results))

    if results:
        presence = np.sum([features.present for features, _ in results], axis=0)
        print(f"{len(results)} samples, {results[0][0].object_count} objects")
        print("object  present_in")
        for j in np.flatnonzero(presence):
            print(f"{j:>6d}  {int(presence[j])}")
    return EXIT_OK


def _dataset(args: argparse.Namespace, cli: CliConfig, n_samples: Optional[int] = None) -> SceneDataset:
    if args.synthetic:
        if args.synthetic != "default":
            raise UsageError(f"Unknown synthetic spec {args.synthetic!r}; only 'default' is defined")
        spec = default_spec(num_classes=cli.classes, n_objects=cli.objects, channels=cli.channels,
                            noise_sigma=args.sigma, seed=args.data_seed)
        return generate_synthetic(spec, n_samples or args.n_train + args.n_eval)
    if args.data:
        if not Path(args.data).exists():
            raise UsageError(f"Dataset not found: {args.data}")
        names = args.class_names.split(",") if args.class_names else [f"class_{k}" for k in range(cli.classes)]
        return load_object_features(args.data, names)
    raise UsageError("No dataset: pass --synthetic default or --data PATH")


def _sgd_config(args: argparse.Namespace) -> SgdConfig:
    return SgdConfig(lr0=args.lr, epochs=args.epochs, batch_size=args.batch_size)


def cmd_train(args: argparse.Namespace) -> int:
    """Train a model, write the checkpoint and the training report."""
    cli = CliConfig.from_args(args)
    dataset = _dataset(args, cli)
    if args.synthetic:
        train_set, eval_set = dataset.split(args.n_train)
    else:
        train_set, eval_set = dataset, dataset

    model = build_model(cli.to_model_config())
    report = train(model, train_set, _sgd_config(args), seed=cli.seed, eval_dataset=eval_set)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.otsf")
    report.to_csv(out / "train_report.csv")
    service = ReportService()
    text = service.render_train_report(report)
    service.save_report(text, out / "train_report.txt")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a checkpoint and print the per-class table."""
    if not Path(args.checkpoint).exists():
        raise UsageError(f"Checkpoint not found: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint)
    cli = CliConfig(channels=model.config.c_in, objects=model.config.n_objects, classes=model.num_classes)
    dataset = _dataset(args, cli)
    if args.synthetic:
        _, dataset = dataset.split(args.n_train)

    result = evaluate(model, dataset, threads=Config.threads())
    sys.stdout.write(ReportService().render_eval_report(result, dataset.class_names))
    if args.min_accuracy is not None and result.overall_accuracy < args.min_accuracy:
        raise AcceptanceError(f"accuracy {result.overall_accuracy:.4f} below {args.min_accuracy}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Finite-difference check of the full model on one random sample."""
    cli = CliConfig.from_args(args)
    model = build_model(cli.to_model_config())
    rng = np.random.default_rng(cli.seed)
    for block in model.oam.blocks:
        # open the attention path so its gradients are checked too
        block.gamma.assign([[args.gamma]])

    x = rng.standard_normal((cli.channels, cli.objects))
    label = int(rng.integers(cli.classes))
    error = gradcheck(lambda: cross_entropy(model.forward_logits(x), label), model.params(), seed=cli.seed)

    print(f"max relative error {error:.3e} over {len(model.params())} parameter tensors")
    if error >= GRADCHECK_THRESHOLD:
        raise AcceptanceError(f"gradient error {error:.3e} is not below {GRADCHECK_THRESHOLD}")
    return EXIT_OK
