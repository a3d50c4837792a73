import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from dotenv import load_dotenv
from pydantic import ValidationError

# Rich Imports
from rich.console import Console
from rich.table import Table

# Load env vars
load_dotenv()

# Add src to path
sys.path.append(str(Path(__file__).parent.parent))

# Local Imports
from codegen.learner import quantize
from core.errors import MatrixFormatError, ShapeMismatchError
from core.matrix_io import load_dataset, load_labels, load_matrix, save_dataset
from core.seeding import STREAM_SPLIT, derive_seed
from core.synthetic import generate_synthetic, split_per_class
from core.types import PairedDataset, Standardizer
from evaluation.metrics import map_score
from protocol.methods import make_method
from protocol.orchestrator import PhasePlan, Protocol, run_protocol
from protocol.reporting import write_curves, write_manifest, write_results_csv, write_summary
from utils.config_validation import (RunConfig, load_config_file, merge, parse_overrides,
                                     validate_config)

logger = logging.getLogger("Main")

EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2


def setup_logging(level: str) -> None:
    # stderr keeps --porcelain stdout machine-readable
    logging.basicConfig(
        level=getattr(logging, level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or key=value config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--porcelain", action="store_true", help="stable key=value output on stdout")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted for nested sections)")

    parser = argparse.ArgumentParser(prog="icmh", description="Incremental cross-modal hashing experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-synth", parents=[common], help="write a synthetic paired dataset")
    gen.add_argument("--classes", type=int)
    gen.add_argument("--per-class", type=int)
    gen.add_argument("--dx", type=int)
    gen.add_argument("--dy", type=int)
    gen.add_argument("--spread", type=float)

    run = sub.add_parser("run", parents=[common], help="run the phase protocols")
    run.add_argument("--protocols", help="comma list of P1,P2,P3")
    run.add_argument("--methods", help="comma list of lr1,lr2,lr3,mlp")
    run.add_argument("--q", type=int)
    run.add_argument("--samples-per-class", type=int)
    run.add_argument("--workers", type=int)

    ev = sub.add_parser("eval", parents=[common], help="MAP of stored codes")
    ev.add_argument("--query-x", required=True, help="query codes of modality X (matrix file)")
    ev.add_argument("--query-y", help="query codes of modality Y")
    ev.add_argument("--query-labels", required=True)
    ev.add_argument("--gallery-x", help="gallery codes of modality X")
    ev.add_argument("--gallery-y", required=True, help="gallery codes of modality Y")
    ev.add_argument("--gallery-labels", required=True)
    ev.add_argument("--k", default="all", help="cutoff, or 'all'")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < ICMH_LOG_LEVEL < flags."""
    config_dict = load_config_file(args.config) if args.config else {}
    env_level = os.getenv("ICMH_LOG_LEVEL")
    if env_level:
        config_dict["log_level"] = env_level.upper()

    flags = {}
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.out is not None:
        flags["out"] = args.out
    if args.log_level:
        flags["log_level"] = args.log_level
    if args.command == "gen-synth":
        synthetic = {k: v for k, v in (("class_count", args.classes), ("per_class", args.per_class),
                                       ("dx", args.dx), ("dy", args.dy), ("spread", args.spread))
                     if v is not None}
        if synthetic:
            flags["dataset"] = {"synthetic": synthetic}
    elif args.command == "run":
        for key, value in (("protocols", args.protocols), ("methods", args.methods), ("q", args.q),
                           ("samples_per_class", args.samples_per_class), ("workers", args.workers)):
            if value is not None:
                flags[key] = value

    config_dict = merge(merge(config_dict, parse_overrides(args.set)), flags)
    return validate_config(config_dict)


def load_data(cfg: RunConfig) -> Tuple[PairedDataset, PairedDataset]:
    ds = cfg.dataset
    if ds.manifest:
        full = load_dataset(ds.manifest)
        if ds.test_manifest:
            train, test = full, load_dataset(ds.test_manifest)
        else:
            train, test = split_per_class(full, ds.train_fraction, derive_seed(cfg.seed, STREAM_SPLIT))
    else:
        s = ds.synthetic
        full = generate_synthetic(s.class_count, s.per_class, s.dx, s.dy, s.spread, cfg.seed)
        train, test = split_per_class(full, ds.train_fraction, derive_seed(cfg.seed, STREAM_SPLIT))
    if ds.standardize:
        scaler = Standardizer().fit(train)
        train, test = scaler.transform(train), scaler.transform(test)
    logger.info(f"Data: {train.rows} training rows, {test.rows} test rows, {train.class_count} classes")
    return train, test


def cmd_gen_synth(cfg: RunConfig, console: Console, porcelain: bool) -> int:
    out = Path(cfg.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out}")
    s = cfg.dataset.synthetic
    data = generate_synthetic(s.class_count, s.per_class, s.dx, s.dy, s.spread, cfg.seed)
    manifest = save_dataset(data, out)
    if porcelain:
        print(f"manifest={manifest}")
        print(f"rows={data.rows}")
    else:
        console.print(f"Wrote {data.rows} rows ({s.class_count} classes) to [bold]{manifest}[/bold]")
    return 0


def cmd_run(cfg: RunConfig, console: Console, porcelain: bool) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_data(cfg)
    plan = PhasePlan(tuple(cfg.phase_sizes), tuple(cfg.shuffle_seeds))
    codegen = cfg.code_learner()

    write_manifest(out / "run_manifest.yaml", cfg.model_dump(mode="json"), {
        "master_seed": cfg.seed,
        "shuffle_seeds": list(cfg.shuffle_seeds),
        "split_seed": derive_seed(cfg.seed, STREAM_SPLIT),
    })

    for selector in cfg.methods:
        method = make_method(selector, cfg.linear, cfg.train_config())
        runs = [
            run_protocol(train, test, plan, Protocol.parse(p), method, codegen, cfg.samples_per_class,
                         cfg.seed, cfg.retrieval_k, cfg.workers)
            for p in cfg.protocols
        ]
        write_results_csv(out / f"results_{selector}.csv", runs, cfg.retrieval_k)
        summary = write_summary(out / f"summary_{selector}.txt", runs, cfg.retrieval_k)
        write_curves(out, runs, cfg.retrieval_k)

        if porcelain:
            for key, value in summary.items():
                print(f"{selector}.{key}={value}")
        else:
            console.print(_summary_table(selector, runs, cfg.retrieval_k))
    return 0


def _summary_table(selector: str, runs, retrieval_k: int) -> Table:
    table = Table(title=f"{selector}: average MAP over shuffles")
    table.add_column("Protocol")
    table.add_column("Phase", justify="right")
    table.add_column(f"MAP@{retrieval_k}", justify="right")
    table.add_column("MAP@all (hashing)", justify="right")
    for run in runs:
        for k, metrics in enumerate(run.averaged(), start=1):
            table.add_row(run.protocol.value, str(k), f"{metrics['retrieval.average']:.4f}",
                          f"{metrics['hashing.average']:.4f}")
    return table


def _load_codes(path: str):
    return quantize(load_matrix(path))


def cmd_eval(args: argparse.Namespace, console: Console, porcelain: bool) -> int:
    k: Optional[int] = None if str(args.k).lower() == "all" else int(args.k)
    query_labels = load_labels(args.query_labels)
    gallery_labels = load_labels(args.gallery_labels)

    results: List[Tuple[str, float]] = [
        ("map_x_to_y", map_score(_load_codes(args.query_x), query_labels,
                                 _load_codes(args.gallery_y), gallery_labels, k)),
    ]
    if args.query_y and args.gallery_x:
        results.append(("map_y_to_x", map_score(_load_codes(args.query_y), query_labels,
                                                _load_codes(args.gallery_x), gallery_labels, k)))
        results.append(("map_average", 0.5 * (results[0][1] + results[1][1])))

    if porcelain:
        print(f"k={'all' if k is None else k}")
        for key, value in results:
            print(f"{key}={value:.10f}")
    else:
        table = Table(title=f"MAP@{'all' if k is None else k}")
        table.add_column("Direction")
        table.add_column("MAP", justify="right")
        for key, value in results:
            table.add_row(key.replace("map_", ""), f"{value:.4f}")
        console.print(table)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    console = Console(stderr=False)

    try:
        if args.command == "eval":
            setup_logging(args.log_level or os.getenv("ICMH_LOG_LEVEL", "INFO").upper())
            cfg = None
        else:
            cfg = resolve_config(args)
            setup_logging(cfg.log_level)
    except (ValidationError, ValueError, FileNotFoundError) as e:
        print(f"Configuration Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        if args.command == "gen-synth":
            return cmd_gen_synth(cfg, console, args.porcelain)
        if args.command == "run":
            return cmd_run(cfg, console, args.porcelain)
        return cmd_eval(args, console, args.porcelain)
    except (MatrixFormatError, ShapeMismatchError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
