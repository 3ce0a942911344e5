"""Differentiable (soft) threshold quantization and temperature schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .core import ThresholdSet, enforce_strict

WARMUP_FRACTION = 0.1
CYCLES = 4


def _check_tau(tau):
    if not np.all(np.asarray(tau) > 0):
        raise ValueError(f"temperature must be positive, got {tau}")


def _scalar(out):
    return out if np.ndim(out) else float(out)


def soft_step(x, a, tau):
    """Sigmoid ``σ((x - a) / tau)``; ``expit`` is overflow-free for any argument."""
    _check_tau(tau)
    z = (np.asarray(x, dtype=np.float64) - a) / tau
    return _scalar(expit(z))


def soft_bitwise(x, t, tau) -> np.ndarray:
    a = t.array if isinstance(t, ThresholdSet) else np.asarray(t, dtype=np.float64)
    _check_tau(tau)
    return expit((np.asarray(x, dtype=np.float64)[..., None] - a) / tau)


def soft_encode(x, t, tau):
    return _scalar(soft_bitwise(x, t, tau).sum(axis=-1))


def grad_threshold(x, a, tau):
    """Derivative of ``soft_step`` with respect to the threshold ``a``."""
    _check_tau(tau)
    s = expit((np.asarray(x, dtype=np.float64) - a) / tau)
    return _scalar(-s * (1.0 - s) / tau)


class ScheduleKind(str, Enum):
    LINEAR = "linear"
    WARMUP = "warmup"
    COSINE = "cosine"
    CYCLICAL = "cyclical"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class TemperatureSchedule:
    kind: ScheduleKind = ScheduleKind.EXPONENTIAL
    tau_init: float = 1.0
    tau_end: float = 1e-3
    total_epochs: int = 30

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not 0 < self.tau_end <= self.tau_init:
            raise ValueError("need 0 < tau_end <= tau_init")
        if int(self.total_epochs) < 1:
            raise ValueError("total_epochs must be >= 1")

    def __call__(self, epoch: int) -> float:
        return schedule_tau(self, epoch)


def schedule_tau(s: TemperatureSchedule, epoch: int) -> float:
    E = s.total_epochs
    if not 0 <= epoch <= E:
        raise ValueError(f"epoch {epoch} outside [0, {E}]")
    if epoch == 0:
        return float(s.tau_init)
    if epoch == E:
        return float(s.tau_end)
    frac = epoch / E
    t0, t1 = s.tau_init, s.tau_end
    if s.kind is ScheduleKind.EXPONENTIAL:
        return t0 * (t1 / t0) ** frac
    if s.kind is ScheduleKind.LINEAR:
        return t0 + (t1 - t0) * frac
    if s.kind is ScheduleKind.COSINE:
        return t1 + (t0 - t1) * 0.5 * (1.0 + math.cos(math.pi * frac))
    if s.kind is ScheduleKind.WARMUP:
        if frac <= WARMUP_FRACTION:
            return float(t0)
        return t0 + (t1 - t0) * (frac - WARMUP_FRACTION) / (1.0 - WARMUP_FRACTION)
    # cyclical: exponential envelope, dips below it mid-cycle and returns at cycle ends
    envelope = t0 * (t1 / t0) ** frac
    phase = (frac * CYCLES) % 1.0
    return envelope * (t1 / t0) ** (0.5 * math.sin(math.pi * phase))


class SoftQuantLayer:
    """Per-feature threshold quantizer with a shared temperature.

    ``thresholds`` has shape ``(K, M)``. In ``"sum"`` mode each feature maps to a
    scalar in ``(0, M)``; in ``"bitwise"`` mode to ``M`` components in ``(0, 1)``,
    laid out feature-major. With ``hard=True`` the layer evaluates the rounded
    (step-function) version; that is also what ``training=False`` uses.
    """

    def __init__(self, thresholds, tau: float = 1.0, mode: str = "bitwise"):
        a = np.array(thresholds, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("thresholds must have shape (K, M) with K >= 1")
        if mode not in ("sum", "bitwise"):
            raise ValueError(f"unknown mode {mode!r}")
        _check_tau(tau)
        self.thresholds = a
        self.tau = float(tau)
        self.mode = mode
        self._cache = None

    @classmethod
    def from_sets(cls, sets, tau: float = 1.0, mode: str = "bitwise") -> "SoftQuantLayer":
        return cls(np.vstack([s.array for s in sets]), tau=tau, mode=mode)

    @property
    def n_features(self) -> int:
        return self.thresholds.shape[0]

    @property
    def M(self) -> int:
        return self.thresholds.shape[1]

    @property
    def out_width(self) -> int:
        return self.n_features * (self.M if self.mode == "bitwise" else 1)

    def forward(self, X, hard: bool = False) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected input of width {self.n_features}, got shape {X.shape}")
        diff = X[:, :, None] - self.thresholds[None, :, :]
        if hard:
            S = (diff >= 0).astype(np.float64)
            self._cache = None
        else:
            S = expit(diff / self.tau)
            self._cache = S
        if self.mode == "sum":
            return S.sum(axis=2)
        return S.reshape(X.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Threshold gradient given the gradient w.r.t. the last soft output."""
        S = self._cache
        if S is None:
            raise RuntimeError("backward requires a preceding soft forward pass")
        local = -S * (1.0 - S) / self.tau
        if self.mode == "sum":
            g = grad_out[:, :, None]
        else:
            g = grad_out.reshape(S.shape)
        return np.einsum("bkm,bkm->km", g, local)


def harden(layer: SoftQuantLayer, bit_width: int | None = None) -> list[ThresholdSet]:
    """Sorted, strictly increasing thresholds per feature for hard inference."""
    sets = []
    for k, row in enumerate(layer.thresholds):
        if not np.all(np.isfinite(row)):
            raise ValueError(f"feature {k}: learned thresholds are not finite")
        a = enforce_strict(np.sort(row), scale=float(np.std(row)))
        sets.append(ThresholdSet.from_array(a, bit_width))
    return sets


def harden_order(layer: SoftQuantLayer) -> np.ndarray:
    """Per-feature argsort used to sort thresholds (stable for ties)."""
    return np.argsort(layer.thresholds, axis=1, kind="stable")
