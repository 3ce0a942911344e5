"""Small dense regression network with a quantization input layer.

Everything is plain numpy with hand-written reverse-mode gradients.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import midpoint_values
from .soft import SoftQuantLayer, TemperatureSchedule, harden, harden_order

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "featquant-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class QuantLayer:
    """Input quantization for the network.

    ``decoder`` is ``"identity"`` (code as a number), ``"midpoint"`` or
    ``"bitwise"``. Trainable layers must use ``identity`` (soft sum) or
    ``bitwise`` (soft bitwise) and are soft only while training.
    """

    def __init__(self, thresholds, decoder: str = "bitwise", trainable: bool = False, tau: float = 1.0):
        if decoder not in ("identity", "midpoint", "bitwise"):
            raise ValueError(f"unknown decoder {decoder!r}")
        if trainable and decoder == "midpoint":
            raise ValueError("midpoint decoding has no soft counterpart")
        self.decoder = decoder
        self.trainable = bool(trainable)
        self.soft = SoftQuantLayer(thresholds, tau=tau, mode="sum" if decoder == "identity" else "bitwise")
        self._midpoints = None

    @property
    def thresholds(self) -> np.ndarray:
        return self.soft.thresholds

    @property
    def tau(self) -> float:
        return self.soft.tau

    @tau.setter
    def tau(self, value: float):
        if value <= 0:
            raise ValueError("temperature must be positive")
        self.soft.tau = float(value)

    @property
    def n_features(self) -> int:
        return self.soft.n_features

    @property
    def M(self) -> int:
        return self.soft.M

    @property
    def bit_width(self) -> int:
        return int(round(math.log2(self.M + 1)))

    @property
    def out_width(self) -> int:
        return self.n_features * (self.M if self.decoder == "bitwise" else 1)

    def encode(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected input of width {self.n_features}, got shape {X.shape}")
        return (X[:, :, None] >= self.thresholds[None]).sum(axis=2)

    def decode(self, codes) -> np.ndarray:
        """Map integer codes of shape ``(B, K)`` to the network input."""
        codes = np.asarray(codes)
        if self.decoder == "identity":
            return codes.astype(np.float64)
        if self.decoder == "midpoint":
            if self._midpoints is None:
                self._midpoints = np.vstack([midpoint_values(np.sort(row)) for row in self.thresholds])
            return np.take_along_axis(self._midpoints, codes.T, axis=1).T.copy()
        B = codes.shape[0]
        return (np.arange(self.M)[None, None, :] < codes[:, :, None]).astype(np.float64).reshape(B, -1)

    def hard(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.decoder == "bitwise" and self.trainable:
            # elementwise steps keep column order valid for unsorted thresholds
            return self.soft.forward(X, hard=True)
        return self.decode(self.encode(X))

    def forward(self, X, training: bool) -> np.ndarray:
        if training and self.trainable:
            return self.soft.forward(X)
        return self.hard(X)

    def backward(self, grad_out) -> np.ndarray:
        return self.soft.backward(grad_out)

    def sorted_copy(self) -> tuple["QuantLayer", np.ndarray]:
        """Hardened copy with sorted strict thresholds, plus the per-feature permutation."""
        order = harden_order(self.soft)
        sets = harden(self.soft)
        layer = QuantLayer(np.vstack([s.array for s in sets]), self.decoder, self.trainable, self.tau)
        return layer, order


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


class GradientTape(dict):
    """Parameter name -> gradient array, mirroring ``DenseNet.params()``."""

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.values()))


class DenseNet:
    """quantization layer -> [dense, ReLU, dropout] * L -> linear scalar head."""

    def __init__(self, n_features: int, hidden: list[int] | tuple[int, ...] = (), *,
                 quant: QuantLayer | None = None, dropout_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if quant is not None and quant.n_features != n_features:
            raise ValueError("quantization layer width does not match n_features")
        self.n_features = int(n_features)
        self.quant = quant
        self.dropout_rate = float(dropout_rate)
        rng = np.random.default_rng(seed)
        width = quant.out_width if quant is not None else self.n_features
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for h in list(hidden) + [1]:
            self.weights.append(glorot_uniform(rng, h, width))
            self.biases.append(np.zeros(h))
            width = h
        self._cache = None

    @property
    def hidden_sizes(self) -> list[int]:
        return [W.shape[0] for W in self.weights[:-1]]

    def params(self) -> dict[str, np.ndarray]:
        p = {}
        if self.quant is not None and self.quant.trainable:
            p["quant.thresholds"] = self.quant.thresholds
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            p[f"dense.{i}.W"] = W
            p[f"dense.{i}.b"] = b
        return p

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params().values()))

    def quantize(self, X, training: bool = False) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected input of shape (B, {self.n_features}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains non-finite values")
        if self.quant is None:
            return X
        return self.quant.forward(X, training)

    def forward_dense(self, Z, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Run the dense stack on already-quantized input ``Z``."""
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != self.weights[0].shape[1]:
            raise ValueError(f"dense input width {self.weights[0].shape[1]} expected, got {Z.shape}")
        drop = training and self.dropout_rate > 0
        if drop and rng is None:
            raise ValueError("dropout in training mode needs an rng")
        acts = [Z]
        masks = []
        h = Z
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = h @ W.T + b
            np.maximum(h, 0.0, out=h)
            if drop:
                keep = 1.0 - self.dropout_rate
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(h)
        out = (h @ self.weights[-1].T + self.biases[-1])[:, 0]
        self._cache = (acts, masks, out)
        return out

    def forward(self, X, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.forward_dense(self.quantize(X, training), training, rng)

    def backward(self, targets, *, include_quant: bool = True) -> tuple[float, GradientTape]:
        """MSE loss and gradients for the most recent forward pass."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts, masks, pred = self._cache
        y = np.asarray(targets, dtype=np.float64).ravel()
        if y.shape != pred.shape:
            raise ValueError("targets do not match the last batch")
        err = pred - y
        loss = float(np.mean(err * err))
        tape = GradientTape()
        g = (2.0 / y.size) * err[:, None]
        n = len(self.weights)
        grads_W = [None] * n
        grads_b = [None] * n
        for i in range(n - 1, -1, -1):
            a_in = acts[i]
            grads_W[i] = g.T @ a_in
            grads_b[i] = g.sum(axis=0)
            if i == 0 and not (include_quant and self.quant is not None and self.quant.trainable):
                break
            g = g @ self.weights[i]
            if i > 0:
                if masks[i - 1] is not None:
                    g = g * masks[i - 1]
                g = g * (a_in > 0)
        if include_quant and self.quant is not None and self.quant.trainable:
            tape["quant.thresholds"] = self.quant.backward(g)
        for i in range(n):
            tape[f"dense.{i}.W"] = grads_W[i]
            tape[f"dense.{i}.b"] = grads_b[i]
        return loss, tape

    def predict(self, X) -> np.ndarray:
        return self.forward(X, training=False)

    def hardened(self) -> "DenseNet":
        """Copy with sorted thresholds; bitwise input columns are permuted to match."""
        net = self.copy()
        if net.quant is None:
            return net
        layer, order = net.quant.sorted_copy()
        if layer.decoder == "bitwise":
            K, M = order.shape
            cols = (np.arange(K)[:, None] * M + order).ravel()
            net.weights[0] = net.weights[0][:, cols].copy()
        net.quant = layer
        return net

    def copy(self) -> "DenseNet":
        return DenseNet.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        d = {
            "n_features": self.n_features,
            "dropout_rate": self.dropout_rate,
            "layers": [
                {"shape": list(W.shape), "W": W.tolist(), "b": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
            "quant": None,
        }
        if self.quant is not None:
            q = self.quant
            d["quant"] = {
                "decoder": q.decoder,
                "trainable": q.trainable,
                "tau": q.tau,
                "bit_width": q.bit_width,
                "thresholds": q.thresholds.tolist(),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        quant = None
        if d.get("quant") is not None:
            q = d["quant"]
            quant = QuantLayer(np.asarray(q["thresholds"], dtype=np.float64), q["decoder"], q["trainable"], q["tau"])
        net = cls.__new__(cls)
        net.n_features = int(d["n_features"])
        net.quant = quant
        net.dropout_rate = float(d["dropout_rate"])
        net.weights = [np.asarray(layer["W"], dtype=np.float64).reshape(layer["shape"]) for layer in d["layers"]]
        net.biases = [np.asarray(layer["b"], dtype=np.float64) for layer in d["layers"]]
        net._cache = None
        return net


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            # parameters are updated in place so layers keep their array references
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(net: DenseNet, tape: GradientTape, lr: float, step_count: int, state: Adam | None = None) -> Adam:
    """One Adam update of ``net``; pass the returned state back in for the next step."""
    if state is None:
        state = Adam(lr)
    state.lr = lr
    state.t = step_count - 1
    state.step(net.params(), tape)
    return state


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    dropout_rate: float = 0.0
    batch_size: int = 128
    seed: int = 0
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def train(net: DenseNet, X, y, cfg: TrainConfig) -> tuple[DenseNet, list[float]]:
    """Minibatch Adam on MSE; the temperature follows ``cfg.schedule`` per epoch.

    Returns the same (mutated) net and the mean training loss of each epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.learning_rate)
    q = net.quant
    soft_quant = q is not None and q.trainable
    Z_fixed = None if soft_quant else net.quantize(X, training=False)
    N = X.shape[0]
    history: list[float] = []
    schedule = cfg.schedule
    for epoch in range(cfg.epochs):
        if soft_quant:
            q.tau = schedule_at(schedule, epoch, cfg.epochs)
        perm = rng.permutation(N)
        total = 0.0
        for b, start in enumerate(range(0, N, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            if soft_quant:
                Z = q.forward(X[idx], training=True)
            else:
                Z = Z_fixed[idx]
            net.forward_dense(Z, training=True, rng=rng)
            loss, tape = net.backward(y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, b, loss)
            opt.step(net.params(), tape)
            total += loss * idx.size
        history.append(total / N)
        logger.debug("epoch %d loss %.6f", epoch, history[-1])
    if soft_quant and cfg.epochs > 0:
        q.tau = schedule_at(schedule, cfg.epochs, cfg.epochs)
    return net, history


def schedule_at(schedule: TemperatureSchedule, epoch: int, epochs: int) -> float:
    """Temperature for ``epoch`` of a run lasting ``epochs`` epochs."""
    if schedule.total_epochs != epochs:
        schedule = TemperatureSchedule(schedule.kind, schedule.tau_init, schedule.tau_end, max(epochs, 1))
    return schedule(epoch)


def save_checkpoint(path, net: DenseNet, *, standardizer=None, meta: dict | None = None) -> dict:
    """Write a hardened net as JSON (skipped when ``path`` is None). Returns the document."""
    hard = net.hardened()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "net": hard.to_dict(),
        "standardizer": standardizer.to_dict() if standardizer is not None else None,
        "meta": meta or {},
    }
    if path is not None:
        Path(path).write_text(json.dumps(doc, indent=1))
    return doc


def load_checkpoint(path_or_doc) -> dict:
    """Parse a checkpoint path or document; ``net`` and ``standardizer`` become objects.

    Already-parsed documents are returned unchanged.
    """
    from .preprocessing import Standardizer

    if isinstance(path_or_doc, dict):
        if isinstance(path_or_doc.get("net"), DenseNet):
            return path_or_doc
        doc = dict(path_or_doc)
    else:
        doc = json.loads(Path(path_or_doc).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a featquant checkpoint")
    doc["net"] = DenseNet.from_dict(doc["net"])
    if doc.get("standardizer") is not None:
        doc["standardizer"] = Standardizer.from_dict(doc["standardizer"])
    return doc

