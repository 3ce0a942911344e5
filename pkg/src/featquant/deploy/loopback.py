"""In-process split inference: device encode + pack, server unpack + decode + network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import DenseNet, load_checkpoint
from .table import EncoderTable, TableMismatchError, checkpoint_hash
from .wire import HEADER_SIZE, pack, payload_size, unpack


@dataclass
class LoopbackResult:
    predictions: np.ndarray
    predictions_std: np.ndarray
    frames: list[bytes]

    @property
    def bytes_sent(self) -> int:
        return sum(len(f) for f in self.frames)


def device_encode(table: EncoderTable, row) -> bytes:
    """Encode one raw feature row and serialize it as a frame."""
    return pack(table.encode(row), table.bits).to_bytes()


def server_decode(doc: dict, frames) -> np.ndarray:
    """Unpack frames and return the network input rows."""
    net: DenseNet = doc["net"]
    codes = np.array([unpack(f) for f in frames], dtype=np.int64).reshape(-1, net.n_features)
    return net.quant.decode(codes)


def _check_pair(table: EncoderTable, doc: dict):
    net: DenseNet = doc["net"]
    if net.quant is None:
        raise TableMismatchError("full-precision checkpoints have no encoder")
    if table.k != net.n_features:
        raise TableMismatchError(f"table has {table.k} features, checkpoint {net.n_features}")
    if table.bits != net.quant.bit_width:
        raise TableMismatchError(f"table uses {table.bits} bits, checkpoint {net.quant.bit_width}")
    if table.source_hash is not None and table.source_hash != checkpoint_hash(doc):
        raise TableMismatchError("table was exported from a different checkpoint")


def loopback_infer(raw_rows, table: EncoderTable, checkpoint) -> LoopbackResult:
    """Run rows through device encoding, the wire format and server-side inference."""
    doc = load_checkpoint(checkpoint)
    _check_pair(table, doc)
    rows = np.atleast_2d(np.asarray(raw_rows, dtype=np.float64))
    frames = [device_encode(table, r) for r in rows]
    expected = HEADER_SIZE + payload_size(table.k, table.bits)
    for i, f in enumerate(frames):
        if len(f) != expected:
            raise AssertionError(f"frame {i} is {len(f)} bytes, expected {expected}")
    Z = server_decode(doc, frames)
    pred_std = doc["net"].forward_dense(Z, training=False)
    std = doc.get("standardizer")
    pred = std.inverse_transform_y(pred_std) if std is not None else pred_std
    return LoopbackResult(pred, pred_std, frames)


def direct_predict(raw_rows, checkpoint) -> np.ndarray:
    """Server-only reference in label units: standardize float32 inputs and run the hardened net."""
    doc = load_checkpoint(checkpoint)
    std = doc["standardizer"]
    x = np.atleast_2d(np.asarray(raw_rows, dtype=np.float32)).astype(np.float64)
    return std.inverse_transform_y(doc["net"].predict(std.transform(x)))


def compression_factor(k: int, bits: int, raw_bits: int = 32) -> float:
    """Raw payload size over packed payload size."""
    return (k * raw_bits / 8) / payload_size(k, bits)
