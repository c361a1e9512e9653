"""Readers and writers for the binary tensor file format and for CSV
convergence traces.

A tensor file is laid out as follows, all fields little-endian:

    offset  size  field
    0       4     magic, the ASCII bytes ``DTEN``
    4       4     version, unsigned 32-bit, currently 1
    8       4     dtype code, unsigned 32-bit: 1 = float64, 2 = float32
    12      4     order m, unsigned 32-bit
    16      8 m   dims, unsigned 64-bit each
    16+8m   ...   the entries in row-major order

Factor matrices are stored as tensor files of order 2, one file per mode,
named ``<prefix>.factor<i>`` with i counting from 1.
"""
__all__ = ['MAGIC', 'VERSION', 'DTYPE_CODES', 'HEADER_SIZE',
           'tensor_to_bytes', 'tensor_from_bytes', 'write_tensor',
           'read_tensor', 'factor_paths', 'write_factors', 'read_factors',
           'write_trace', 'read_trace', 'TensorFileError']

import logging
import os
import pathlib
import struct
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from .optimizer import ConvergenceTrace
from .tensor import DenseTensor, FactorSet

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path, os.PathLike]

MAGIC = b'DTEN'
VERSION = 1
DTYPE_CODES = {1: np.dtype('<f8'), 2: np.dtype('<f4')}
HEADER_SIZE = 16

_HEADER = struct.Struct('<4sIII')


def tensor_to_bytes(t: DenseTensor, dtype_code: int = 1) -> bytes:
    """Return the tensor file encoding of a tensor.

    Parameters
    ----------
    t :
        The tensor to encode.
    dtype_code :
        1 to store 64-bit entries, 2 to store 32-bit entries. Entries
        stored as 32-bit floats are rounded to nearest.

    Returns
    -------
    :
        The encoded bytes.
    """
    if dtype_code not in DTYPE_CODES:
        raise ValueError('unknown dtype code %s' % dtype_code)
    header = _HEADER.pack(MAGIC, VERSION, dtype_code, t.order)
    dims = struct.pack('<%dQ' % t.order, *t.dims)
    payload = np.ascontiguousarray(t.data, dtype=DTYPE_CODES[dtype_code])
    return header + dims + payload.tobytes(order='C')


def tensor_from_bytes(buf: bytes) -> DenseTensor:
    """Return the tensor encoded in a byte string.

    Raises
    ------
    TensorFileError
        If the header or the payload length is invalid. The error names
        the offending field and its byte offset.
    """
    if len(buf) < HEADER_SIZE:
        raise TensorFileError('header', len(buf),
                              'the file is %d bytes long, shorter than the '
                              'header' % len(buf))
    magic, version, dtype_code, order = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TensorFileError('magic', 0, 'expected %r, got %r'
                              % (MAGIC, magic))
    if version != VERSION:
        raise TensorFileError('version', 4, 'unsupported version %d'
                              % version)
    if dtype_code not in DTYPE_CODES:
        raise TensorFileError('dtype', 8, 'unknown dtype code %d'
                              % dtype_code)
    if order < 1:
        raise TensorFileError('order', 12, 'the order must be positive')
    dims_end = HEADER_SIZE + 8 * order
    if len(buf) < dims_end:
        raise TensorFileError('dims', len(buf),
                              'the file ends inside the %d dims' % order)
    dims = struct.unpack_from('<%dQ' % order, buf, HEADER_SIZE)
    for i, dim in enumerate(dims):
        if dim < 1:
            raise TensorFileError('dims', HEADER_SIZE + 8 * i,
                                  'dimension %d is zero' % i)
    dtype = DTYPE_CODES[dtype_code]
    expected = int(np.prod(dims, dtype=object)) * dtype.itemsize
    if len(buf) - dims_end != expected:
        raise TensorFileError('payload', dims_end,
                              'expected %d payload bytes, got %d'
                              % (expected, len(buf) - dims_end))
    data = np.frombuffer(buf, dtype=dtype, offset=dims_end)
    return DenseTensor(dims, data.astype(np.float64))


def write_tensor(t: DenseTensor, fname: PathLike, dtype_code: int = 1):
    """Write a tensor to a tensor file."""
    with open(fname, 'wb') as fh:
        fh.write(tensor_to_bytes(t, dtype_code))


def read_tensor(fname: PathLike) -> DenseTensor:
    """Read a tensor from a tensor file."""
    with open(fname, 'rb') as fh:
        buf = fh.read()
    try:
        return tensor_from_bytes(buf)
    except TensorFileError as err:
        err.path = str(fname)
        raise


def factor_paths(prefix: PathLike, order: int) -> List[str]:
    """Return the factor file names ``<prefix>.factor1`` and so on."""
    return ['%s.factor%d' % (prefix, i + 1) for i in range(order)]


def write_factors(f: FactorSet, prefix: PathLike) -> List[str]:
    """Write each factor matrix to its own order-2 tensor file.

    Returns
    -------
    :
        The written file names in mode order.
    """
    paths = factor_paths(prefix, f.order)
    for path, u in zip(paths, f):
        write_tensor(DenseTensor.from_array(u), path)
    return paths


def read_factors(prefix: PathLike) -> FactorSet:
    """Read the factor files ``<prefix>.factor1``, ... until one is missing."""
    mats = []
    while True:
        path = '%s.factor%d' % (prefix, len(mats) + 1)
        if not os.path.exists(path):
            break
        t = read_tensor(path)
        if t.order != 2:
            raise TensorFileError('order', 12, 'a factor file must have '
                                  'order 2, got %d' % t.order, path=path)
        mats.append(t.data)
    if not mats:
        raise FileNotFoundError('no factor files found with prefix %s'
                                % prefix)
    return FactorSet(mats)


def write_trace(trace: ConvergenceTrace, fname: PathLike):
    """Write a convergence trace as CSV with 17 significant digits."""
    trace.to_frame().to_csv(fname, index=False, float_format='%.17g')


def read_trace(fname: PathLike, eps: Optional[float] = None) \
        -> ConvergenceTrace:
    """Read a convergence trace written by :func:`write_trace`.

    The run flags are derived from the records, see
    :meth:`pymixcp.optimizer.ConvergenceTrace.from_frame`. Pass the
    SGD-stage threshold as ``eps`` to recover the ``converged`` flag.
    """
    frame = pd.read_csv(fname, float_precision='round_trip',
                        dtype={'stage': str})
    missing = [c for c in ConvergenceTrace.columns if c not in frame.columns]
    if missing:
        raise ValueError('trace file %s lacks the columns %s'
                         % (fname, ', '.join(missing)))
    return ConvergenceTrace.from_frame(frame, eps=eps)


class TensorFileError(ValueError):
    """Raised when a tensor file cannot be parsed."""

    def __init__(self, field: str, offset: int, reason: str, path=None):
        self.field = field
        self.offset = offset
        self.reason = reason
        self.path = path

    def __str__(self):
        where = f' in {self.path}' if self.path else ''
        return f'Malformed tensor file{where}: field "{self.field}" at ' \
               f'byte offset {self.offset}: {self.reason}.'
