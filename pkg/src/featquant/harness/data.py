"""Dataset ingestion: CSV files and the synthetic Friedman #1 regression problem."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}
FRIED_PAPER_SIZE = 40768


class CSVFormatError(ValueError):
    pass


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    dropped_rows: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (N, K) and y must have N entries")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite values")
        if not self.feature_names:
            self.feature_names = [f"x{k + 1}" for k in range(self.X.shape[1])]

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def _parse_cell(text: str, row: int, col: str) -> float:
    if text.strip().lower() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise CSVFormatError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if math.isinf(value):
        raise CSVFormatError(f"row {row}, column {col!r}: infinite value")
    return value


def load_csv(path, target_column: str, name: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row. Rows with missing cells are dropped.

    Row numbers in error messages count data rows from 1 (the header excluded).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        if target_column not in header:
            raise KeyError(f"target column {target_column!r} not in {path.name} (columns: {header})")
        rows = []
        for i, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise CSVFormatError(f"row {i}: expected {len(header)} cells, found {len(raw)}")
            rows.append([_parse_cell(cell, i, header[j]) for j, cell in enumerate(raw)])
    data = np.asarray(rows, dtype=np.float64).reshape(-1, len(header))
    complete = ~np.isnan(data).any(axis=1)
    dropped = int((~complete).sum())
    if dropped:
        logger.warning("%s: dropped %d row(s) with missing values", path.name, dropped)
    data = data[complete]
    if data.shape[0] == 0:
        raise CSVFormatError(f"{path}: no complete rows")
    t = header.index(target_column)
    features = [h for j, h in enumerate(header) if j != t]
    X = np.delete(data, t, axis=1)
    return Dataset(name or path.stem, X, data[:, t], features, dropped_rows=dropped)


def fried_target(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def generate_fried(n: int = FRIED_PAPER_SIZE, noise_std: float = 1.0, seed: int = 0) -> Dataset:
    """Friedman #1: ten U[0, 1] features, the first five informative."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, 10))
    y = fried_target(X) + rng.normal(0.0, noise_std, size=n)
    return Dataset("fried", X, y, [f"x{k + 1}" for k in range(10)])


def load_dataset(spec: str, target: str | None = None, seed: int = 0) -> Dataset:
    """``fried`` / ``fried:<n>`` for the synthetic set, otherwise a CSV path."""
    if spec == "fried" or spec.startswith("fried:"):
        n = int(spec.split(":", 1)[1]) if ":" in spec else FRIED_PAPER_SIZE
        return generate_fried(n, 1.0, seed)
    if target is None:
        raise ValueError("--target is required for CSV datasets")
    return load_csv(spec, target)
