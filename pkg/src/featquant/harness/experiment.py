"""Cross-validated grid search, multi-split evaluation and ablations."""
from __future__ import annotations

import itertools
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy import special, stats

from ..estimators import METHODS, QuantizedMLPRegressor, count_params
from ..nn import TrainingDivergedError
from .data import Dataset

logger = logging.getLogger(__name__)

GRID_KEYS = ("dropout_rate", "learning_rate", "hidden_layers", "hidden_neurons", "epochs", "tau_end")

# full search space of the original experiments
PAPER_GRID = {
    "dropout_rate": [0.0, 0.2, 0.4, 0.5],
    "learning_rate": [0.001, 0.0001],
    "hidden_layers": [5, 6, 8, 10],
    "hidden_neurons": [32, 64, 128, 256, 512, 1024, 2048, 4096, 8192],
    "epochs": [30, 50, 70],
    "tau_end": [0.001, 0.0001],
}

DESK_GRID = {
    "dropout_rate": [0.0, 0.2],
    "learning_rate": [0.001, 0.0001],
    "hidden_layers": [2, 3, 5],
    "hidden_neurons": [32, 64, 128, 256],
    "epochs": [30],
    "tau_end": [0.001, 0.0001],
}

ABLATION_METHODS = ("SQ", "Bw-MQ", "Bw-QQ", "Bw-SQ")
MIN_ROWS = 10


class AllDivergedError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    methods: list[str] = field(default_factory=lambda: ["FP", "Bw-SQ"])
    bit_widths: list[int] = field(default_factory=lambda: [2, 4, 6])
    grid: dict[str, list] = field(default_factory=lambda: {k: list(v) for k, v in DESK_GRID.items()})
    grid_sample: int | None = 24
    folds: int = 4
    eval_splits: int = 10
    test_fraction: float = 0.1
    batch_size: int = 128
    schedule: str = "exponential"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        for n in self.bit_widths:
            if not 2 <= int(n) <= 8:
                raise ValueError(f"bit width {n} outside 2..8")
        unknown = set(self.grid) - set(GRID_KEYS)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        for k in GRID_KEYS:
            if not self.grid.get(k):
                raise ValueError(f"grid entry {k!r} missing or empty")
        if self.folds < 2 or self.eval_splits < 2:
            raise ValueError("need at least 2 folds and 2 evaluation splits")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "grid" in d:
            grid = {k: list(v) for k, v in DESK_GRID.items()}
            grid.update(d["grid"])
            d["grid"] = grid
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResultRow:
    dataset: str
    method: str
    bit_width: int
    mean_mse: float
    ci_low: float
    ci_high: float
    split_mses: list[float]
    hyperparams: dict

    @property
    def n_splits(self) -> int:
        return len(self.split_mses)


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from mixed str/int parts (independent of hash randomization)."""
    words = [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def kfold_split(N: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if not 2 <= k <= N:
        raise ValueError(f"need 2 <= k <= N, got k={k}, N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    folds = np.array_split(perm, k)
    out = []
    for i, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(val)))
    return out


def train_test_split_indices(N: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(N)
    n_test = max(1, int(round(N * test_fraction)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def grid_points(grid: dict[str, list], sample: int | None, seed: int) -> list[dict]:
    """All grid combinations in declaration order, or a seeded subsample of them."""
    keys = [k for k in GRID_KEYS if k in grid]
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    if sample is not None and len(points) > sample:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(points), size=sample, replace=False))
        points = [points[i] for i in keep]
    return points


def make_model(method: str, bit_width: int, hp: dict, cfg: ExperimentConfig, seed: int) -> QuantizedMLPRegressor:
    return QuantizedMLPRegressor(
        method=method,
        bit_width=bit_width,
        hidden_layers=int(hp["hidden_layers"]),
        hidden_neurons=int(hp["hidden_neurons"]),
        dropout_rate=float(hp["dropout_rate"]),
        learning_rate=float(hp["learning_rate"]),
        epochs=int(hp["epochs"]),
        tau_end=float(hp["tau_end"]),
        schedule=cfg.schedule,
        batch_size=cfg.batch_size,
        random_state=seed,
    )


def fit_and_score(method, bit_width, hp, cfg, seed, X, y, train_idx, test_idx) -> float:
    """Standardized test MSE of one training run; ``inf`` when training diverges."""
    model = make_model(method, bit_width, hp, cfg, seed)
    try:
        model.fit(X[train_idx], y[train_idx])
        mse = model.standardized_mse(X[test_idx], y[test_idx])
    except TrainingDivergedError as exc:
        logger.warning("%s/%d-bit %s diverged: %s", method, bit_width, hp, exc)
        return math.inf
    return mse if math.isfinite(mse) else math.inf


def _check_rows(dataset: Dataset):
    if dataset.n_samples < MIN_ROWS:
        raise ValueError(f"dataset {dataset.name!r} has {dataset.n_samples} rows, need >= {MIN_ROWS}")


def _selection_key(entry: dict):
    return (entry["cv_mse"], entry["n_params"], entry["hyperparams"]["learning_rate"], entry["index"])


def grid_search(dataset: Dataset, method: str, bit_width: int, cfg: ExperimentConfig) -> tuple[dict, list[dict]]:
    """k-fold CV over the grid. Returns (best hyperparameters, CV table).

    The best point has minimal mean validation MSE; ties go to fewer
    parameters, then the lower learning rate, then declaration order.
    """
    _check_rows(dataset)
    points = grid_points(cfg.grid, cfg.grid_sample, derive_seed(cfg.seed, "grid", method, bit_width))
    folds = kfold_split(dataset.n_samples, cfg.folds, derive_seed(cfg.seed, "folds"))
    tasks = [(i, f) for i in range(len(points)) for f in range(len(folds))]
    scores = Parallel(n_jobs=cfg.jobs)(
        delayed(fit_and_score)(
            method, bit_width, points[i], cfg, derive_seed(cfg.seed, "cv", method, bit_width, i, f),
            dataset.X, dataset.y, folds[f][0], folds[f][1],
        )
        for i, f in tasks
    )
    table = []
    for i, hp in enumerate(points):
        fold_mses = [scores[i * len(folds) + f] for f in range(len(folds))]
        table.append({
            "index": i,
            "hyperparams": hp,
            "fold_mses": fold_mses,
            "cv_mse": float(np.mean(fold_mses)),
            "n_params": count_params(method, dataset.n_features, bit_width,
                                     int(hp["hidden_layers"]), int(hp["hidden_neurons"])),
        })
    finite = [e for e in table if math.isfinite(e["cv_mse"])]
    if not finite:
        raise AllDivergedError(f"every grid point diverged for {method} at {bit_width} bits")
    best = min(finite, key=_selection_key)
    return dict(best["hyperparams"]), table


def t_interval(values, confidence: float = 0.95) -> tuple[float, float, float]:
    """Mean and Student-t confidence interval (df = n - 1)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two values for a confidence interval")
    mean = math.fsum(v) / v.size
    sd = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1))
    half = t_critical(0.5 + confidence / 2, v.size - 1) * sd / math.sqrt(v.size)
    return mean, mean - half, mean + half


def t_critical(p: float, df: int) -> float:
    """Student-t quantile. ``t.ppf`` is only good to ~1e-11, so polish it with Newton steps on the CDF."""
    q = float(stats.t.ppf(p, df))
    for _ in range(2):
        q -= (special.stdtr(df, q) - p) / stats.t.pdf(q, df)
    return float(q)


def significantly_different(a: ResultRow, b: ResultRow) -> bool:
    """Two results differ significantly iff their confidence intervals are disjoint."""
    return a.ci_high < b.ci_low or b.ci_high < a.ci_low


def evaluate_splits(dataset: Dataset, method: str, bit_width: int, best_hp: dict,
                    cfg: ExperimentConfig) -> ResultRow:
    """Retrain on ``eval_splits`` random train/test splits and summarise test MSE."""
    _check_rows(dataset)
    splits = [train_test_split_indices(dataset.n_samples, cfg.test_fraction, derive_seed(cfg.seed, "split", s))
              for s in range(cfg.eval_splits)]
    mses = Parallel(n_jobs=cfg.jobs)(
        delayed(fit_and_score)(
            method, bit_width, best_hp, cfg, derive_seed(cfg.seed, "eval", method, bit_width, s),
            dataset.X, dataset.y, tr, te,
        )
        for s, (tr, te) in enumerate(splits)
    )
    mean, lo, hi = t_interval(mses)
    return ResultRow(dataset.name, method, 32 if method == "FP" else int(bit_width),
                     mean, lo, hi, [float(m) for m in mses], dict(best_hp))


def run_method(dataset: Dataset, method: str, bit_width: int, cfg: ExperimentConfig) -> ResultRow:
    best, _ = grid_search(dataset, method, bit_width, cfg)
    logger.info("%s %s %d-bit best %s", dataset.name, method, bit_width, best)
    return evaluate_splits(dataset, method, bit_width, best, cfg)


def run_experiment(dataset: Dataset, cfg: ExperimentConfig) -> list[ResultRow]:
    """Every configured method at every bit width (FP once)."""
    rows = []
    for method in cfg.methods:
        widths = [cfg.bit_widths[0]] if method == "FP" else cfg.bit_widths
        for n in widths:
            rows.append(run_method(dataset, method, n, cfg))
    return rows


def ablation_ratios(rows: list[ResultRow], baseline: str = "Bw-SQ") -> list[dict]:
    """Percent MSE change of each method relative to ``baseline`` at the same bit width."""
    base = {r.bit_width: r.mean_mse for r in rows if r.method == baseline}
    out = []
    for r in rows:
        if r.bit_width in base:
            out.append({
                "dataset": r.dataset,
                "method": r.method,
                "bit_width": r.bit_width,
                "mean_mse": r.mean_mse,
                "ratio_pct": 100.0 * (r.mean_mse / base[r.bit_width] - 1.0),
            })
    return out


def run_ablation(dataset: Dataset, cfg: ExperimentConfig,
                 methods=ABLATION_METHODS) -> tuple[list[ResultRow], list[dict]]:
    rows = [run_method(dataset, m, n, cfg) for n in cfg.bit_widths for m in methods]
    return rows, ablation_ratios(rows)
