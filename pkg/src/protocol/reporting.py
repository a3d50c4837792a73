"""
Result files written after a run: a long-format CSV per method, a key=value
summary, two-column plot-data curves, and a YAML reproducibility manifest.
Wall-clock timings are logged but kept out of these files so identical runs
write identical bytes.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, List, Sequence

import yaml

from core import __version__
from core.matrix_io import write_kv
from protocol.orchestrator import ProtocolRun

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("shuffle", "phase", "protocol", "method", "direction", "metric", "value")
DIRECTIONS = ("x_to_y", "y_to_x", "average")


def _fmt(value: float) -> str:
    return f"{value:.10f}"


def write_results_csv(path, runs: Sequence[ProtocolRun], retrieval_k: int) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for run in runs:
            for shuffle_results in run.shuffles:
                for r in shuffle_results:
                    for metric, report in ((f"map@{retrieval_k}", r.retrieval), ("map@all", r.hashing)):
                        for direction in DIRECTIONS:
                            writer.writerow([r.shuffle, r.phase_index + 1, r.protocol, r.method, direction,
                                             metric, _fmt(getattr(report, direction))])


def summary_values(runs: Sequence[ProtocolRun], retrieval_k: int) -> Dict[str, str]:
    out = {}
    for run in runs:
        tag = run.protocol.value
        phases = run.averaged()
        for k, metrics in enumerate(phases, start=1):
            for key, value in metrics.items():
                out[f"{tag}.phase{k}.{_metric_key(key, retrieval_k)}"] = _fmt(value)
        for key, value in phases[-1].items():
            out[f"{tag}.final.{_metric_key(key, retrieval_k)}"] = _fmt(value)
    return out


def _metric_key(key: str, retrieval_k: int) -> str:
    mode, direction = key.split(".")
    metric = f"map@{retrieval_k}" if mode == "retrieval" else "map@all"
    return f"{metric}.{direction}"


def write_summary(path, runs: Sequence[ProtocolRun], retrieval_k: int) -> Dict[str, str]:
    values = summary_values(runs, retrieval_k)
    write_kv(path, values)
    return values


def write_curves(directory, runs: Sequence[ProtocolRun], retrieval_k: int) -> List[Path]:
    """One `phase value` file per protocol/method/metric, averaged over shuffles and directions."""
    directory = Path(directory)
    written = []
    for run in runs:
        tag = run.protocol.value
        phases = run.averaged()
        for mode, metric in (("retrieval", f"map{retrieval_k}"), ("hashing", "mapall")):
            path = directory / f"curve_{run.method}_{tag}_{metric}.dat"
            lines = [f"{k} {_fmt(m[f'{mode}.average'])}" for k, m in enumerate(phases, start=1)]
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def write_manifest(path, resolved_config: dict, derived: dict) -> None:
    document = {
        "version": __version__,
        "config": resolved_config,
        "seeds": derived,
    }
    with open(path, "w") as f:
        yaml.safe_dump(document, f, sort_keys=True, default_flow_style=False)
    logger.info(f"Wrote run manifest {path}")
