"""
Command line entry point.

    python -m vchgcl.main gen-data --spec spec.json --out data/
    python -m vchgcl.main train --config config.json --data data/ --epochs 20 --lr 1e-2 --out runs/grn
    python -m vchgcl.main ablate --spec spec.json --epochs 20 --seeds 0 1 2 3 4 --extended --out runs/ablation
    python -m vchgcl.main inspect --checkpoint runs/grn/model.vchg --instance 3 --out runs/grn/attention.json
    python -m vchgcl.main gradcheck --full

Exit codes: 0 on success, 2 on contract errors, 3 on numeric failures.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from vchgcl.analytics.gradcheck_suite import run_gradient_suite
from vchgcl.analytics.runner import run_ablation, train_model
from vchgcl.analytics.statistics import ordering_majority, summarize_ablation
from vchgcl.core.config import Settings, settings
from vchgcl.core.errors import EXIT_NUMERIC, EXIT_OK, ContractError, VCHGCLError, exit_code_for
from vchgcl.core.schemas import ModelConfig, SynthSpec
from vchgcl.data.loader import load_dataset, save_dataset
from vchgcl.data.synthetic import centroid_probe_accuracy, generate_dataset
from vchgcl.model.pipeline import load_checkpoint, save_checkpoint
from vchgcl.visualization.charts import plot_ablation, plot_attention_record, plot_training_curves
from vchgcl.visualization.formatters import (
    FLOAT_FORMAT,
    dump_attention,
    format_report,
    load_attention,
    write_ablation_csv,
    write_metrics_csv,
)

logger = logging.getLogger(__name__)

SchemaT = TypeVar("SchemaT", bound=BaseModel)


def read_schema(path: Optional[str], schema: Type[SchemaT]) -> SchemaT:
    """Parse a JSON file into ``schema``; defaults when no path is given."""
    if path is None:
        return schema()
    if not os.path.exists(path):
        raise ContractError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return schema.model_validate_json(f.read())


def apply_seed_override(model: SchemaT) -> SchemaT:
    """Replace the seed with VCHGCL_SEED when it is set."""
    seed = Settings().SEED
    if seed is None:
        return model
    return model.model_copy(update={"seed": seed})


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = apply_seed_override(read_schema(args.spec, SynthSpec))
    train, evaluation = generate_dataset(spec)
    save_dataset(args.out, spec, train, evaluation)
    if train and evaluation:
        for feature in ("f_o", "f_vc"):
            probe = centroid_probe_accuracy(train, evaluation, feature)
            logger.info(f"Nearest-centroid probe on {feature}: {probe:.4f}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = apply_seed_override(read_schema(args.config, ModelConfig))
    _, train, evaluation = load_dataset(args.data)
    report, model = train_model(config, train, evaluation, args.epochs, args.lr)

    os.makedirs(args.out, exist_ok=True)
    metrics_path = write_metrics_csv(report, os.path.join(args.out, "metrics.csv"))
    save_checkpoint(model, os.path.join(args.out, "model.vchg"))
    plot_training_curves(report.to_frame(), os.path.join(args.out, "training_curves.png"),
                         title=f"{config.ablation.value} (seed {config.seed})")
    print(format_report(report))
    logger.info(f"Metrics written to {metrics_path}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    spec = apply_seed_override(read_schema(args.spec, SynthSpec))
    base_config = apply_seed_override(read_schema(args.config, ModelConfig))
    seeds = args.seeds if args.seeds else [spec.seed]
    rows = run_ablation(spec, epochs=args.epochs, lr=args.lr, seeds=seeds, base_config=base_config,
                        workers=args.workers, extended=args.extended)

    os.makedirs(args.out, exist_ok=True)
    write_ablation_csv(rows, os.path.join(args.out, "ablation.csv"))
    summary = summarize_ablation(rows)
    summary.to_csv(os.path.join(args.out, "summary.csv"), index=False, float_format=FLOAT_FORMAT)
    plot_ablation(rows, os.path.join(args.out, "ablation.png"))

    holds, total = ordering_majority(rows)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(f"Ordering baseline <= vco_only <= mlp_contrastive <= grn_contrastive holds in {holds}/{total} seeds")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    _, train, evaluation = load_dataset(args.data)
    instances = evaluation if args.split == "eval" else train
    if not 0 <= args.instance < len(instances):
        raise ContractError(f"instance {args.instance} outside the {args.split} split of {len(instances)}")

    path = dump_attention(instances[args.instance], model.config, model, args.out)
    heatmap = plot_attention_record(load_attention(path), os.path.splitext(path)[0] + "_edges.png")
    if heatmap:
        logger.info(f"Edge heatmap written to {heatmap}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradient_suite(full=args.full)
    print(results.to_string(index=False))
    if not results["passed"].all():
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vchgcl", description="Visual-commonsense graph contrastive QA harness")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate the synthetic dataset")
    gen.add_argument("--spec", type=str, default=None, help="SynthSpec JSON file")
    gen.add_argument("--out", type=str, default=settings.DATA_DIR, help="Output directory")
    gen.set_defaults(handler=cmd_gen_data)

    train = sub.add_parser("train", help="Train one configuration")
    train.add_argument("--config", type=str, default=None, help="ModelConfig JSON file")
    train.add_argument("--data", type=str, default=settings.DATA_DIR, help="Dataset directory")
    train.add_argument("--epochs", type=int, default=settings.DEFAULT_EPOCHS)
    train.add_argument("--lr", type=float, default=settings.DEFAULT_LR)
    train.add_argument("--out", type=str, default=settings.OUTPUT_DIR, help="Output directory")
    train.set_defaults(handler=cmd_train)

    ablate = sub.add_parser("ablate", help="Run the ablation table")
    ablate.add_argument("--spec", type=str, default=None, help="SynthSpec JSON file")
    ablate.add_argument("--config", type=str, default=None, help="Base ModelConfig JSON file")
    ablate.add_argument("--epochs", type=int, default=settings.DEFAULT_EPOCHS)
    ablate.add_argument("--lr", type=float, default=settings.DEFAULT_LR)
    ablate.add_argument("--seeds", type=int, nargs="*", default=None, help="Seeds to run")
    ablate.add_argument("--workers", type=int, default=1, help="Parallel processes")
    ablate.add_argument("--extended", action="store_true",
                        help="Also run the text-only and commonsense-only variants")
    ablate.add_argument("--out", type=str, default=settings.OUTPUT_DIR, help="Output directory")
    ablate.set_defaults(handler=cmd_ablate)

    inspect = sub.add_parser("inspect", help="Dump attention weights of one instance")
    inspect.add_argument("--checkpoint", type=str, required=True, help="Parameter snapshot")
    inspect.add_argument("--instance", type=int, required=True, help="Instance index")
    inspect.add_argument("--data", type=str, default=settings.DATA_DIR, help="Dataset directory")
    inspect.add_argument("--split", choices=["train", "eval"], default="eval")
    inspect.add_argument("--out", type=str, required=True, help="Output JSON file")
    inspect.set_defaults(handler=cmd_inspect)

    gradcheck = sub.add_parser("gradcheck", help="Finite-difference gradient checks")
    gradcheck.add_argument("--full", action="store_true", help="Also check the full model loss")
    gradcheck.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=settings.LOG_LEVEL)
    try:
        return args.handler(args)
    except (VCHGCLError, ValidationError) as exc:
        logger.error(f"{args.command} failed: {exc}")
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
