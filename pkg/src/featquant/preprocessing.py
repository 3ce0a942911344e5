"""Z-score standardization of features and labels, fitted on training rows only."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ZeroVarianceError(ValueError):
    pass


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0

    @classmethod
    def fit(cls, X, y=None, feature_names=None) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        bad = np.flatnonzero(~(std > 0))
        if bad.size:
            k = int(bad[0])
            name = feature_names[k] if feature_names is not None else f"feature {k}"
            raise ZeroVarianceError(f"zero-variance column: {name}")
        y_mean, y_std = 0.0, 1.0
        if y is not None:
            y = np.asarray(y, dtype=np.float64)
            y_mean, y_std = float(y.mean()), float(y.std())
            if not y_std > 0:
                raise ZeroVarianceError("zero-variance label")
        return cls(mean, std, y_mean, y_std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def transform_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def inverse_transform_y(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   float(d["y_mean"]), float(d["y_std"]))


def standardize_fit(X, y=None, feature_names=None) -> Standardizer:
    return Standardizer.fit(X, y, feature_names)


def standardize_apply(std: Standardizer, X) -> np.ndarray:
    return std.transform(X)
