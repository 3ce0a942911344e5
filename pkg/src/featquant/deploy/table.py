"""Encoder tables in raw feature units for the sensing device."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import MAX_BIT_WIDTH, MIN_BIT_WIDTH, n_thresholds
from ..nn import load_checkpoint

TABLE_VERSION = 1


class TableMismatchError(ValueError):
    pass


@dataclass
class EncoderTable:
    """Per-feature float32 thresholds applied directly to raw sensor values.

    Thresholds are non-decreasing; two standardized thresholds closer than one
    float32 step may collapse onto the same raw value.
    """

    k: int
    bits: int
    thresholds_raw: np.ndarray
    order: list[str] = field(default_factory=list)
    version: int = TABLE_VERSION
    source_hash: str | None = None

    def __post_init__(self):
        a = np.asarray(self.thresholds_raw, dtype=np.float32)
        if not MIN_BIT_WIDTH <= self.bits <= MAX_BIT_WIDTH:
            raise ValueError(f"bit width {self.bits} outside {MIN_BIT_WIDTH}..{MAX_BIT_WIDTH}")
        if self.k < 1 or a.shape != (self.k, n_thresholds(self.bits)):
            raise ValueError(f"thresholds must have shape ({self.k}, {n_thresholds(self.bits)}), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("thresholds must be finite")
        if np.any(np.diff(a, axis=1) < 0):
            raise ValueError("thresholds must be sorted per feature")
        self.thresholds_raw = a
        if not self.order:
            self.order = [f"x{i + 1}" for i in range(self.k)]
        if len(self.order) != self.k:
            raise ValueError("feature order must list k names")

    @property
    def M(self) -> int:
        return n_thresholds(self.bits)

    def encode(self, rows) -> np.ndarray:
        """Device-side codes: inputs are rounded to float32 like on the target."""
        x = np.asarray(rows, dtype=np.float32)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.k:
            raise ValueError(f"expected {self.k} features, got {x.shape[1]}")
        codes = (x[:, :, None] >= self.thresholds_raw[None]).sum(axis=2).astype(np.int64)
        return codes[0] if single else codes

    def to_dict(self) -> dict:
        d = {
            "version": self.version,
            "k": self.k,
            "bits": self.bits,
            "order": list(self.order),
            "thresholds_raw": [[float(v) for v in row] for row in self.thresholds_raw],
        }
        if self.source_hash is not None:
            d["source_hash"] = self.source_hash
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderTable":
        if d.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported table version {d.get('version')!r}")
        return cls(int(d["k"]), int(d["bits"]), np.asarray(d["thresholds_raw"], dtype=np.float32),
                   list(d.get("order") or []), int(d["version"]), d.get("source_hash"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "EncoderTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def checkpoint_hash(doc: dict) -> str:
    """Digest of the parts of a checkpoint that determine device encoding."""
    q = doc["net"].quant
    std = doc.get("standardizer")
    payload = {
        "thresholds": q.thresholds.tolist() if q is not None else None,
        "mean": std.mean.tolist() if std is not None else None,
        "std": std.std.tolist() if std is not None else None,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def raw_threshold(a_std: float, mean: float, std: float) -> np.float32:
    """Smallest float32 ``r`` with ``(r - mean) / std >= a_std``.

    For every float32 input ``x``: ``x >= r`` iff its standardized value is
    ``>= a_std``, so device and server agree on all representable inputs.
    """
    def z(r):
        return (float(r) - mean) / std

    r = np.float32(a_std * std + mean)
    up, down = np.float32(np.inf), np.float32(-np.inf)
    while z(r) < a_std:
        r = np.nextafter(r, up)
    while True:
        prev = np.nextafter(r, down)
        if np.isfinite(prev) and z(prev) >= a_std:
            r = prev
        else:
            return r


def export_table(checkpoint, feature_names: list[str] | None = None) -> EncoderTable:
    """Fold standardization into the thresholds: ``a_raw ≈ a_std * std + mean``."""
    doc = load_checkpoint(checkpoint)
    net = doc["net"]
    if net.quant is None:
        raise ValueError("full-precision checkpoint has no quantization thresholds to export")
    std = doc.get("standardizer")
    if std is None:
        raise ValueError("checkpoint has no standardizer; cannot convert thresholds to raw units")
    A = net.quant.thresholds
    if np.any(np.diff(A, axis=1) <= 0):
        raise ValueError("checkpoint thresholds are not hardened (sorted, strictly increasing)")
    K, M = A.shape
    raw = np.empty((K, M), dtype=np.float32)
    for f in range(K):
        mu, sd = float(std.mean[f]), float(std.std[f])
        for m in range(M):
            raw[f, m] = raw_threshold(float(A[f, m]), mu, sd)
    names = feature_names or (doc.get("meta") or {}).get("feature_names") or []
    return EncoderTable(K, net.quant.bit_width, raw, list(names), source_hash=checkpoint_hash(doc))
