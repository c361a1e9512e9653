"""This module emulates reduced-precision number formats in float64.

A :class:`PrecisionFormat` describes a set of representable values: the
signed fixed-point integers INT(b), or one of the IEEE binary formats
FP16, FP32 and FP64. A :class:`QuantConfig` pairs a format with a scale
factor and a rounding mode, and defines the quantization function

    Q(x) = delta * round_p(x / delta)

with either deterministic rounding (nearest representable, ties toward
the ceiling) or unbiased stochastic rounding. Values beyond the range of
a format saturate to its largest finite representable.

Integer formats are held as exact small integers in float64 arrays, so
products and sums of codes at the sizes used here are bit-exact.
"""
__all__ = ['PrecisionFormat', 'QuantConfig', 'QuantizedMatrix', 'INT2',
           'INT4', 'INT8', 'FP16', 'FP32', 'FP64', 'DEFAULT_SCALE_DIVISORS',
           'repr_floor', 'repr_ceil', 'quantize_det', 'quantize_stoch',
           'select_scale', 'quantize', 'quantize_matrix', 'quantized_matmul',
           'fp16_round', 'cast_to_format', 'ConfigError',
           'QuantizationInputError']

import re
from typing import Optional

import numpy as np

DETERMINISTIC = 'deterministic'
STOCHASTIC = 'stochastic'

DEFAULT_SCALE_DIVISORS = {2: 10.0, 4: 30.0, 8: 200.0}
"""Divisors c of the automatic scale delta = max|X| / c per INT bit width."""

_FLOAT_LAYOUTS = {
    16: (5, 10, np.float16),
    32: (8, 23, np.float32),
    64: (11, 52, np.float64),
}


class PrecisionFormat:
    """A number format: signed fixed-point INT(b) or IEEE float FP16/32/64.

    Parameters
    ----------
    kind :
        Either ``'int'`` or ``'float'``.
    bits :
        The total bit width. At least 2 for integers; 16, 32 or 64 for
        floats.

    Attributes
    ----------
    exponent_bits : Optional[int]
        For floats, the number of exponent bits.
    significand_bits : Optional[int]
        For floats, the number of stored significand bits.
    """

    def __init__(self, kind: str, bits: int):
        if kind not in ('int', 'float'):
            raise ConfigError('format kind', kind)
        bits = int(bits)
        if kind == 'int' and bits < 2:
            raise ConfigError('integer bit width', bits)
        if kind == 'float' and bits not in _FLOAT_LAYOUTS:
            raise ConfigError('float bit width', bits)
        self.kind = kind
        self.bits = bits
        if kind == 'float':
            self.exponent_bits, self.significand_bits, self.dtype = \
                _FLOAT_LAYOUTS[bits]
        else:
            self.exponent_bits, self.significand_bits = None, None
            self.dtype = None

    @classmethod
    def from_name(cls, name: str) -> "PrecisionFormat":
        """Return a format from a name such as ``int8``, ``INT4`` or ``fp16``.
        """
        match = re.match(r'^(int|fp)(\d+)$', name.strip().lower())
        if not match:
            raise ConfigError('precision format', name)
        kind, bits = match.groups()
        return cls('int' if kind == 'int' else 'float', int(bits))

    @property
    def is_int(self) -> bool:
        return self.kind == 'int'

    @property
    def name(self) -> str:
        return '%s%d' % ('INT' if self.is_int else 'FP', self.bits)

    @property
    def max_value(self) -> float:
        """The largest finite representable value."""
        if self.is_int:
            return float(2 ** (self.bits - 1) - 1)
        return float(np.finfo(self.dtype).max)

    @property
    def min_value(self) -> float:
        """The most negative finite representable value."""
        if self.is_int:
            return float(-2 ** (self.bits - 1))
        return -self.max_value

    @property
    def min_normal(self) -> float:
        """The smallest positive normal value (1 for integers)."""
        if self.is_int:
            return 1.0
        return float(np.finfo(self.dtype).tiny)

    def __eq__(self, other):
        if not isinstance(other, PrecisionFormat):
            return NotImplemented
        return (self.kind, self.bits) == (other.kind, other.bits)

    def __hash__(self):
        return hash((self.kind, self.bits))

    def __repr__(self):
        return self.name


INT2 = PrecisionFormat('int', 2)
INT4 = PrecisionFormat('int', 4)
INT8 = PrecisionFormat('int', 8)
FP16 = PrecisionFormat('float', 16)
FP32 = PrecisionFormat('float', 32)
FP64 = PrecisionFormat('float', 64)


class QuantConfig:
    """A quantization function Q_{p, delta} with its rounding mode.

    Parameters
    ----------
    format :
        The precision format p.
    scale :
        The scale factor delta. If None, integer formats choose it per
        operand with :func:`select_scale` and float formats use 1.
    rounding :
        ``'deterministic'`` or ``'stochastic'``.
    divisor :
        The divisor c of the automatic integer scale max|X| / c. Defaults
        to 10, 30 and 200 for INT2, INT4 and INT8, and 2^(b-1) - 1 for
        other widths.
    """

    def __init__(self, format: PrecisionFormat, scale: Optional[float] = None,
                 rounding: str = DETERMINISTIC,
                 divisor: Optional[float] = None):
        if scale is not None and not scale > 0:
            raise ConfigError('scale', scale)
        if rounding not in (DETERMINISTIC, STOCHASTIC):
            raise ConfigError('rounding', rounding)
        if divisor is not None:
            if not format.is_int:
                raise ConfigError('divisor for a float format', divisor)
            if divisor < format.max_value:
                raise ConfigError('divisor below 2^(b-1)-1', divisor)
        self.format = format
        self.scale = None if scale is None else float(scale)
        self.rounding = rounding
        self.divisor = None if divisor is None else float(divisor)

    @property
    def stochastic(self) -> bool:
        return self.rounding == STOCHASTIC

    @property
    def auto_scale(self) -> bool:
        return self.scale is None and self.format.is_int

    def resolve_scale(self, x) -> float:
        """Return the scale factor used to quantize the given operand."""
        if self.scale is not None:
            return self.scale
        if self.format.is_int:
            return select_scale(x, self.format.bits, divisor=self.divisor)
        return 1.0

    def __repr__(self):
        scale = 'auto' if self.scale is None else repr(self.scale)
        return 'QuantConfig(%s, scale=%s, %s)' % (self.format.name, scale,
                                                 self.rounding)


class QuantizedMatrix:
    """Quantized values kept as format codes plus a scale factor.

    Attributes
    ----------
    codes : numpy.ndarray
        Values of the precision format (exact integers for INT formats).
    scale : float
        The scale factor delta; the represented values are codes * scale.
    format : PrecisionFormat
        The format the codes belong to.
    """

    def __init__(self, codes: np.ndarray, scale: float,
                 format: PrecisionFormat):
        self.codes = codes
        self.scale = scale
        self.format = format

    def dequantize(self) -> np.ndarray:
        return self.codes * self.scale


def _scalar_or_array(values, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


def _float_neighbors(y: np.ndarray, fmt: PrecisionFormat):
    """Return the representable floor and ceiling of y in a float format."""
    if fmt.bits == 64:
        return y.copy(), y.copy()
    with np.errstate(over='ignore', invalid='ignore'):
        nearest = y.astype(fmt.dtype)
        back = nearest.astype(np.float64)
        below = np.nextafter(nearest, fmt.dtype(-np.inf)).astype(np.float64)
        above = np.nextafter(nearest, fmt.dtype(np.inf)).astype(np.float64)
    floor = np.where(back <= y, back, below)
    ceil = np.where(back >= y, back, above)
    return floor, ceil


def _int_neighbors(y: np.ndarray, fmt: PrecisionFormat):
    lo, hi = fmt.min_value, fmt.max_value
    floor = np.floor(y)
    floor = np.where(floor > hi, hi, floor)
    floor = np.where(floor < lo, -np.inf, floor)
    ceil = np.ceil(y)
    ceil = np.where(ceil < lo, lo, ceil)
    ceil = np.where(ceil > hi, np.inf, ceil)
    return floor, ceil


def _neighbors(y: np.ndarray, fmt: PrecisionFormat):
    if fmt.is_int:
        return _int_neighbors(y, fmt)
    return _float_neighbors(y, fmt)


def repr_floor(x, p: PrecisionFormat):
    """Return the largest value of format p not above x, or -inf.

    Parameters
    ----------
    x :
        A finite scalar or array.
    p :
        The precision format.

    Returns
    -------
    :
        The representable floor, elementwise for arrays.
    """
    y = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(_neighbors(y, p)[0], x)


def repr_ceil(x, p: PrecisionFormat):
    """Return the smallest value of format p not below x, or +inf."""
    y = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(_neighbors(y, p)[1], x)


def _check_finite(y: np.ndarray):
    if not np.all(np.isfinite(y)):
        raise QuantizationInputError(y[~np.isfinite(y)].reshape(-1)[0])


def _det_codes(y: np.ndarray, fmt: PrecisionFormat) -> np.ndarray:
    floor, ceil = _neighbors(y, fmt)
    with np.errstate(over='ignore', invalid='ignore'):
        mid = (floor + ceil) / 2
    return np.where(y >= mid, ceil, floor)


def _stoch_codes(y: np.ndarray, fmt: PrecisionFormat,
                 rng: np.random.Generator) -> np.ndarray:
    floor, ceil = _neighbors(y, fmt)
    in_range = np.isfinite(floor) & np.isfinite(ceil)
    gap = np.where(in_range & (ceil > floor), ceil - floor, 1.0)
    prob = np.where(in_range & (ceil > floor), (y - floor) / gap, 0.0)
    draws = rng.random(y.shape)
    codes = np.where(draws < prob, ceil, floor)
    # Out-of-range values saturate deterministically
    return np.where(in_range, codes, _det_codes(y, fmt))


def quantize(x, q: QuantConfig,
             rng: Optional[np.random.Generator] = None) -> QuantizedMatrix:
    """Quantize a scalar or array, returning codes and the scale used.

    Parameters
    ----------
    x :
        Finite values to quantize.
    q :
        The quantization function.
    rng :
        The random stream, required for stochastic rounding.

    Returns
    -------
    :
        The codes (values of ``q.format``) and the scale factor.
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr)
    delta = q.resolve_scale(arr)
    y = arr / delta
    if q.stochastic:
        if rng is None:
            raise ConfigError('random stream for stochastic rounding', rng)
        codes = _stoch_codes(y, q.format, rng)
    else:
        codes = _det_codes(y, q.format)
    return QuantizedMatrix(codes, delta, q.format)


def quantize_det(x, q: QuantConfig):
    """Return Q^D_{p,delta}(x), rounding to nearest with ties upward.

    Parameters
    ----------
    x :
        A finite scalar or array.
    q :
        The quantization function; its rounding mode is ignored.

    Returns
    -------
    :
        delta times the chosen representable neighbor of x / delta. Values
        beyond the format's range saturate to its finite extremes.
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr)
    delta = q.resolve_scale(arr)
    return _scalar_or_array(_det_codes(arr / delta, q.format) * delta, x)


def quantize_stoch(x, q: QuantConfig, rng: np.random.Generator):
    """Return Q^S_{p,delta}(x), rounding up with probability proportional
    to the distance from the floor.

    Parameters
    ----------
    x :
        A finite scalar or array.
    q :
        The quantization function; its rounding mode is ignored.
    rng :
        The random stream to draw from.

    Returns
    -------
    :
        An unbiased randomized rounding of x for in-range values, and the
        deterministic saturated value otherwise.
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr)
    delta = q.resolve_scale(arr)
    return _scalar_or_array(_stoch_codes(arr / delta, q.format, rng) * delta,
                            x)


def select_scale(x, b: int, divisor: Optional[float] = None) -> float:
    """Return the scale factor max|X| / c for quantizing X to INT(b).

    Parameters
    ----------
    x :
        The operand.
    b :
        The integer bit width.
    divisor :
        The divisor c; defaults to 10, 30 and 200 for b = 2, 4 and 8.

    Returns
    -------
    :
        The scale factor, or 1 for an all-zero operand.
    """
    if divisor is None:
        divisor = DEFAULT_SCALE_DIVISORS.get(b, float(2 ** (b - 1) - 1))
    peak = float(np.max(np.abs(x))) if np.size(x) else 0.0
    if peak == 0:
        return 1.0
    return peak / divisor


def quantize_matrix(x, q: QuantConfig,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Return the elementwise quantization of a matrix as float values."""
    return quantize(x, q, rng).dequantize()


def quantized_matmul(qx: QuantizedMatrix, qy: QuantizedMatrix) -> np.ndarray:
    """Return the product of two quantized matrices.

    The codes are multiplied exactly and the result is rescaled once by
    the product of the two scale factors, as an integer GEMM with a
    floating-point epilogue would.
    """
    return (qx.codes @ qy.codes) * (qx.scale * qy.scale)


def fp16_round(x):
    """Return the nearest FP16 value, ties to even, saturating at 65504.

    Subnormal FP16 values are produced where appropriate.
    """
    arr = np.asarray(x, dtype=np.float64)
    with np.errstate(over='ignore'):
        rounded = arr.astype(np.float16).astype(np.float64)
    limit = FP16.max_value
    rounded = np.where(np.isinf(rounded) & np.isfinite(arr),
                       np.copysign(limit, arr), rounded)
    return _scalar_or_array(rounded, x)


def cast_to_format(x, p: PrecisionFormat) -> np.ndarray:
    """Round values to format p the way hardware stores a result.

    Floats round to nearest even and saturate at the largest finite
    value; integers round half to even and clamp to the INT(b) range.
    """
    arr = np.asarray(x, dtype=np.float64)
    if p.is_int:
        return np.clip(np.rint(arr), p.min_value, p.max_value)
    if p.bits == 16:
        return fp16_round(arr)
    if p.bits == 32:
        with np.errstate(over='ignore'):
            rounded = arr.astype(np.float32).astype(np.float64)
        return np.where(np.isinf(rounded) & np.isfinite(arr),
                        np.copysign(p.max_value, arr), rounded)
    return arr.copy()


class ConfigError(ValueError):
    def __init__(self, field, value):
        self.field = field
        self.value = value

    def __str__(self):
        return f'Invalid {self.field}: {self.value!r}'


class QuantizationInputError(ValueError):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return f'Cannot quantize the non-finite value {self.value}.'
