"""scikit-learn compatible front ends: a threshold quantizer and a quantized MLP regressor."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import (
    DecoderKind,
    QuantScheme,
    ThresholdSource,
    decode_bitwise,
    decode_midpoint,
    encode,
    fit_columns,
    n_thresholds,
)
from .nn import DenseNet, QuantLayer, TrainConfig, save_checkpoint, train
from .preprocessing import Standardizer
from .soft import TemperatureSchedule

METHODS = ("FP", "Pr-MQ", "Pr-QQ", "SQ", "Bw-MQ", "Bw-QQ", "Bw-SQ")

# method -> (scheme, trainable thresholds)
METHOD_SCHEMES: dict[str, tuple[QuantScheme, bool] | None] = {
    "FP": None,
    "Pr-MQ": (QuantScheme("midpoint", "minmax"), False),
    "Pr-QQ": (QuantScheme("midpoint", "quantile"), False),
    "SQ": (QuantScheme("identity", "learned"), True),
    "Bw-MQ": (QuantScheme("bitwise", "minmax"), False),
    "Bw-QQ": (QuantScheme("bitwise", "quantile"), False),
    "Bw-SQ": (QuantScheme("bitwise", "learned"), True),
}


def build_quant_layer(method: str, X_std, bit_width: int) -> QuantLayer | None:
    """Quantization layer for ``method`` with thresholds fitted on ``X_std``."""
    if method not in METHOD_SCHEMES:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    entry = METHOD_SCHEMES[method]
    if entry is None:
        return None
    scheme, trainable = entry
    sets = fit_columns(X_std, bit_width, scheme.threshold_source)
    thresholds = np.vstack([s.array for s in sets])
    return QuantLayer(thresholds, decoder=scheme.decoder_kind.value, trainable=trainable)


def count_params(method: str, n_features: int, bit_width: int, hidden_layers: int, hidden_neurons: int) -> int:
    """Parameter count of the network ``method`` would build (thresholds included)."""
    entry = METHOD_SCHEMES[method]
    M = n_thresholds(bit_width)
    width = n_features
    extra = 0
    if entry is not None:
        scheme, trainable = entry
        if scheme.decoder_kind is DecoderKind.BITWISE:
            width = n_features * M
        if trainable:
            extra = n_features * M
    total = extra
    for h in [hidden_neurons] * hidden_layers + [1]:
        total += h * width + h
        width = h
    return total


class ThresholdQuantizer(TransformerMixin, BaseEstimator):
    """Per-feature hard quantizer with minmax or quantile thresholds.

    Parameters
    ----------
    bit_width : int
        Bits per feature; each feature gets ``2**bit_width - 1`` thresholds.
    source : {"minmax", "quantile"}
    output : {"code", "midpoint", "bitwise"}
        ``code`` returns integer codes, ``midpoint`` the interval midpoints and
        ``bitwise`` the staircase bit vectors concatenated per feature.
    """

    def __init__(self, bit_width: int = 4, source: str = "quantile", output: str = "code"):
        self.bit_width = bit_width
        self.source = source
        self.output = output

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if ThresholdSource(self.source) is ThresholdSource.LEARNED:
            raise ValueError("ThresholdQuantizer fits minmax or quantile thresholds only")
        self.threshold_sets_ = fit_columns(X, self.bit_width, self.source)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "threshold_sets_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        codes = np.column_stack([encode(X[:, k], t) for k, t in enumerate(self.threshold_sets_)])
        if self.output == "code":
            return codes
        if self.output == "midpoint":
            return np.column_stack([decode_midpoint(codes[:, k], t) for k, t in enumerate(self.threshold_sets_)])
        if self.output == "bitwise":
            M = n_thresholds(self.bit_width)
            return decode_bitwise(codes, M).reshape(X.shape[0], -1)
        raise ValueError(f"unknown output {self.output!r}")


class QuantizedMLPRegressor(RegressorMixin, BaseEstimator):
    """Dense regression network behind a per-feature quantization layer.

    Features and labels are standardized with statistics of the rows passed to
    ``fit``; thresholds are fitted (or initialized, for learned methods) on the
    standardized training features. ``predict`` returns label units.
    """

    def __init__(self, method: str = "Bw-SQ", bit_width: int = 4, hidden_layers: int = 2,
                 hidden_neurons: int = 64, dropout_rate: float = 0.0, learning_rate: float = 1e-3,
                 epochs: int = 30, tau_end: float = 1e-3, schedule: str = "exponential",
                 batch_size: int = 128, random_state: int = 0):
        self.method = method
        self.bit_width = bit_width
        self.hidden_layers = hidden_layers
        self.hidden_neurons = hidden_neurons
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.tau_end = tau_end
        self.schedule = schedule
        self.batch_size = batch_size
        self.random_state = random_state

    def _seeds(self) -> tuple[int, int]:
        ss = np.random.SeedSequence(int(self.random_state))
        init, loop = ss.spawn(2)
        return int(init.generate_state(1)[0]), int(loop.generate_state(1)[0])

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.standardizer_ = Standardizer.fit(X, y)
        Xs = self.standardizer_.transform(X)
        ys = self.standardizer_.transform_y(y)
        quant = build_quant_layer(self.method, Xs, self.bit_width)
        init_seed, train_seed = self._seeds()
        net = DenseNet(X.shape[1], [self.hidden_neurons] * self.hidden_layers,
                       quant=quant, dropout_rate=self.dropout_rate, seed=init_seed)
        epochs = int(self.epochs)
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=epochs,
            dropout_rate=self.dropout_rate,
            batch_size=self.batch_size,
            seed=train_seed,
            schedule=TemperatureSchedule(self.schedule, 1.0, self.tau_end, max(epochs, 1)),
        )
        self.net_, self.loss_history_ = train(net, Xs, ys, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_standardized(self, X) -> np.ndarray:
        """Predictions in standardized label units."""
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return self.net_.predict(self.standardizer_.transform(X))

    def predict(self, X) -> np.ndarray:
        return self.standardizer_.inverse_transform_y(self.predict_standardized(X))

    def standardized_mse(self, X, y) -> float:
        """Test MSE measured in the label units standardized by the training rows."""
        residual = self.predict_standardized(X) - self.standardizer_.transform_y(y)
        return float(np.mean(residual * residual))

    def save_checkpoint(self, path, feature_names=None) -> dict:
        check_is_fitted(self, "net_")
        meta = {"method": self.method, "bit_width": None if self.method == "FP" else int(self.bit_width),
                "params": self.get_params(),
                "feature_names": list(feature_names) if feature_names is not None else None}
        return save_checkpoint(path, self.net_, standardizer=self.standardizer_, meta=meta)
