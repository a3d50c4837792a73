"""
Plain-text persistence.

Matrix format: first line `<rows> <cols>`, then `rows` lines of `cols`
whitespace-separated reals. Labels: one integer per line. Metadata and
manifests: `key=value` lines.
"""
import logging
import math
import re
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from core.errors import MatrixFormatError, ShapeMismatchError
from core.types import PairedDataset, as_feature_matrix, as_label_vector

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_KEYS = ("x_path", "y_path", "labels_path", "class_count")


def _format_real(value: float) -> str:
    text = repr(float(value))
    # repr keeps full precision; drop the trailing ".0" on integral values
    return text[:-2] if text.endswith(".0") else text


def load_matrix(path: PathLike) -> np.ndarray:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f.read().splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise MatrixFormatError(f"{path}: empty file, expected '<rows> <cols>' header")

    header = lines[0].split()
    if len(header) != 2 or not all(re.fullmatch(r"\d+", tok, re.ASCII) for tok in header):
        raise MatrixFormatError(f"{path}: bad header {lines[0]!r}, expected '<rows> <cols>'")
    rows, cols = int(header[0]), int(header[1])
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"{path}: header declares {rows}x{cols}, both must be >= 1")

    body = lines[1:]
    if len(body) != rows:
        raise MatrixFormatError(f"{path}: header declares {rows} rows, found {len(body)}")

    out = np.empty((rows, cols), dtype=np.float64)
    for i, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != cols:
            noun = "token" if len(tokens) == 1 else "tokens"
            raise MatrixFormatError(f"{path}: row {i + 1} has {len(tokens)} {noun}, expected {cols}")
        for j, tok in enumerate(tokens):
            try:
                value = float(tok)
            except ValueError:
                raise MatrixFormatError(f"{path}: row {i + 1}, column {j + 1}: cannot parse {tok!r}") from None
            if not math.isfinite(value):
                raise MatrixFormatError(f"{path}: row {i + 1}, column {j + 1}: non-finite value {tok!r}")
            out[i, j] = value
    return as_feature_matrix(out, str(path))


def save_matrix(path: PathLike, matrix) -> None:
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"can only save 2-D matrices, got shape {arr.shape}")
    lines = [f"{arr.shape[0]} {arr.shape[1]}"]
    lines.extend(" ".join(_format_real(v) for v in row) for row in arr)
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels(path: PathLike, expected_rows: int = None, class_count: int = None) -> np.ndarray:
    path = Path(path)
    values = []
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise MatrixFormatError(f"{path}: line {n}: cannot parse label {line!r}") from None
    if expected_rows is not None and len(values) != expected_rows:
        raise MatrixFormatError(f"{path}: {len(values)} labels, expected {expected_rows}")
    return as_label_vector(values, class_count)


def save_labels(path: PathLike, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in np.asarray(labels)))


def read_kv(path: PathLike) -> Dict[str, str]:
    path = Path(path)
    out = {}
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MatrixFormatError(f"{path}: line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path: PathLike, values: Mapping[str, object]) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in values.items()))


def load_dataset(manifest_path: PathLike) -> PairedDataset:
    """Load a paired dataset from a key=value manifest; relative paths resolve against it."""
    manifest_path = Path(manifest_path)
    manifest = read_kv(manifest_path)
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise MatrixFormatError(f"{manifest_path}: missing keys {missing}")

    def resolve(key: str) -> Path:
        p = Path(manifest[key])
        return p if p.is_absolute() else manifest_path.parent / p

    class_count = int(manifest["class_count"])
    x = load_matrix(resolve("x_path"))
    y = load_matrix(resolve("y_path"))
    labels = load_labels(resolve("labels_path"), expected_rows=x.shape[0], class_count=class_count)
    logger.info(f"Loaded dataset {manifest_path}: {x.shape[0]} rows, dx={x.shape[1]}, dy={y.shape[1]}, {class_count} classes")
    return PairedDataset(x, y, labels, class_count)


def save_dataset(data: PairedDataset, directory: PathLike, prefix: str = "") -> Path:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {directory}")
    names = {"x_path": f"{prefix}x.txt", "y_path": f"{prefix}y.txt", "labels_path": f"{prefix}labels.txt"}
    save_matrix(directory / names["x_path"], data.x)
    save_matrix(directory / names["y_path"], data.y)
    save_labels(directory / names["labels_path"], data.labels)
    manifest = directory / f"{prefix}manifest.txt"
    write_kv(manifest, {**names, "class_count": data.class_count})
    return manifest
