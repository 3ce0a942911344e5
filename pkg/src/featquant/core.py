"""Hard threshold quantization: step functions, encoding, decoding and fitting.

All functions accept scalars or numpy arrays for ``x`` and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

MIN_BIT_WIDTH = 2
MAX_BIT_WIDTH = 8


class ConstantFeatureError(ValueError):
    """Raised when thresholds are fitted on a feature with zero range."""


def n_thresholds(bit_width: int) -> int:
    return 2 ** int(bit_width) - 1


@dataclass(frozen=True)
class ThresholdSet:
    """Strictly increasing thresholds ``a_1 < ... < a_M`` with ``M = 2**bit_width - 1``."""

    thresholds: tuple[float, ...]
    bit_width: int

    def __post_init__(self):
        a = np.asarray(self.thresholds, dtype=np.float64)
        object.__setattr__(self, "thresholds", tuple(float(v) for v in a))
        if int(self.bit_width) < MIN_BIT_WIDTH:
            raise ValueError(f"bit_width must be >= {MIN_BIT_WIDTH}, got {self.bit_width}")
        if a.ndim != 1 or a.size != n_thresholds(self.bit_width):
            raise ValueError(
                f"expected {n_thresholds(self.bit_width)} thresholds for "
                f"bit_width={self.bit_width}, got {a.size}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("thresholds must be finite")
        if np.any(np.diff(a) <= 0):
            raise ValueError("thresholds must be strictly increasing")

    @classmethod
    def from_array(cls, thresholds, bit_width: int | None = None) -> "ThresholdSet":
        a = np.asarray(thresholds, dtype=np.float64).ravel()
        if bit_width is None:
            bit_width = int(round(np.log2(a.size + 1)))
        return cls(tuple(a), bit_width)

    @property
    def M(self) -> int:
        return len(self.thresholds)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.thresholds, dtype=np.float64)

    def midpoints(self) -> np.ndarray:
        """Quantized values ``v_0..v_M`` with the extrapolated outer thresholds."""
        return midpoint_values(self.array)


class DecoderKind(str, Enum):
    IDENTITY = "identity"
    MIDPOINT = "midpoint"
    BITWISE = "bitwise"


class ThresholdSource(str, Enum):
    MINMAX = "minmax"
    QUANTILE = "quantile"
    LEARNED = "learned"


@dataclass(frozen=True)
class QuantScheme:
    decoder_kind: DecoderKind
    threshold_source: ThresholdSource

    def __post_init__(self):
        object.__setattr__(self, "decoder_kind", DecoderKind(self.decoder_kind))
        object.__setattr__(self, "threshold_source", ThresholdSource(self.threshold_source))


def hard_step(x, a):
    """1 where ``x >= a`` else 0 (ties resolve upward)."""
    out = np.greater_equal(x, a).astype(np.int64)
    return out if out.ndim else int(out)


def _as_array(t) -> np.ndarray:
    if isinstance(t, ThresholdSet):
        return t.array
    return np.asarray(t, dtype=np.float64)


def encode(x, t):
    """Number of thresholds ``a_m <= x``; saturates at 0 and M."""
    a = _as_array(t)
    codes = np.searchsorted(a, x, side="right")
    return codes if np.ndim(codes) else int(codes)


def midpoint_values(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.size < 2:
        raise ValueError("midpoint decoding needs at least two thresholds")
    lo = 2.0 * a[0] - a[1]
    hi = 2.0 * a[-1] - a[-2]
    ext = np.concatenate(([lo], a, [hi]))
    return 0.5 * (ext[:-1] + ext[1:])


def decode_midpoint(c, t):
    v = midpoint_values(_as_array(t))
    c = np.asarray(c)
    if np.any(c < 0) or np.any(c >= v.size):
        raise ValueError(f"code out of range 0..{v.size - 1}")
    out = v[c]
    return out if np.ndim(out) else float(out)


def decode_bitwise(c, M: int) -> np.ndarray:
    """Staircase vector(s): ``c`` ones followed by ``M - c`` zeros.

    A scalar code gives shape ``(M,)``; an array of codes gives ``c.shape + (M,)``.
    """
    c = np.asarray(c)
    if np.any(c < 0) or np.any(c > M):
        raise ValueError(f"code out of range 0..{M}")
    return (np.arange(M) < c[..., None]).astype(np.int64)


def quantize_midpoint(x, t):
    return decode_midpoint(encode(x, t), t)


def quantize_bitwise(x, t) -> np.ndarray:
    a = _as_array(t)
    return np.greater_equal(np.asarray(x, dtype=np.float64)[..., None], a).astype(np.int64)


def _check_fit_input(data, bit_width: int) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot fit thresholds on empty data")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    if int(bit_width) < MIN_BIT_WIDTH:
        raise ValueError(f"bit_width must be >= {MIN_BIT_WIDTH}, got {bit_width}")
    if x.max() == x.min():
        raise ConstantFeatureError("constant feature: cannot place thresholds")
    return x


def fit_minmax(data, bit_width: int) -> ThresholdSet:
    """Equal-width intervals over ``[min, max]``; midpoints land on ``x_min + m*s``."""
    x = _check_fit_input(data, bit_width)
    M = n_thresholds(bit_width)
    x_min, x_max = x.min(), x.max()
    s = (x_max - x_min) / M
    a = x_min + (np.arange(1, M + 1) - 0.5) * s
    return ThresholdSet(tuple(a), bit_width)


def enforce_strict(a: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Bump each threshold not above its predecessor to predecessor + eps.

    ``eps = 1e-9 * max(1, scale)`` so that M stays fixed for low-cardinality data.
    """
    a = np.array(a, dtype=np.float64)
    eps = 1e-9 * max(1.0, float(scale))
    for m in range(1, a.size):
        if a[m] <= a[m - 1]:
            a[m] = a[m - 1] + eps
            # eps may vanish against a large |a|
            if a[m] <= a[m - 1]:
                a[m] = np.nextafter(a[m - 1], np.inf)
    return a


def fit_quantile(data, bit_width: int) -> ThresholdSet:
    """Thresholds at quantile levels ``m / (M + 1)`` (linear interpolation rule)."""
    x = _check_fit_input(data, bit_width)
    M = n_thresholds(bit_width)
    levels = np.arange(1, M + 1) / (M + 1)
    a = np.quantile(x, levels, method="linear")
    a = enforce_strict(a, scale=float(np.std(x)))
    return ThresholdSet(tuple(a), bit_width)


FITTERS = {
    ThresholdSource.MINMAX: fit_minmax,
    ThresholdSource.QUANTILE: fit_quantile,
}


def fit_thresholds(data, bit_width: int, source: str | ThresholdSource) -> ThresholdSet:
    source = ThresholdSource(source)
    if source is ThresholdSource.LEARNED:
        # learned thresholds start from the quantile fit
        source = ThresholdSource.QUANTILE
    return FITTERS[source](data, bit_width)


def fit_columns(X, bit_width: int, source: str | ThresholdSource) -> list[ThresholdSet]:
    """Fit one ThresholdSet per column of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    out = []
    for k in range(X.shape[1]):
        try:
            out.append(fit_thresholds(X[:, k], bit_width, source))
        except ConstantFeatureError as exc:
            raise ConstantFeatureError(f"feature {k}: {exc}") from None
    return out


def stack_thresholds(sets: Sequence[ThresholdSet]) -> np.ndarray:
    return np.vstack([s.array for s in sets])
