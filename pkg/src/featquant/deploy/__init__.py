from .codegen import emit_encoder_source, footprint
from .loopback import LoopbackResult, compression_factor, direct_predict, loopback_infer
from .table import EncoderTable, TableMismatchError, export_table
from .wire import (
    BadMagicError,
    CodeRangeError,
    FrameError,
    FrameLengthError,
    PackedFrame,
    TrailingBitsError,
    UnsupportedVersionError,
    pack,
    unpack,
)

__all__ = [
    "BadMagicError",
    "CodeRangeError",
    "EncoderTable",
    "FrameError",
    "FrameLengthError",
    "LoopbackResult",
    "PackedFrame",
    "TableMismatchError",
    "TrailingBitsError",
    "UnsupportedVersionError",
    "compression_factor",
    "direct_predict",
    "emit_encoder_source",
    "export_table",
    "footprint",
    "loopback_infer",
    "pack",
    "unpack",
]
