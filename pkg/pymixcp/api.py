__all__ = ['tensor_from_file', 'tensor_to_file', 'factors_from_files',
           'factors_to_files', 'trace_from_csv', 'trace_to_csv', 'decompose',
           'DenseTensor', 'FactorSet', 'RunConfig', 'StageConfig',
           'QuantConfig', 'ConvergenceTrace', 'PYMIXCP_TQDM_CONFIG']

import os
import pathlib
from typing import List, Optional, Tuple, Union

from .optimizer import (PYMIXCP_TQDM_CONFIG, ConvergenceTrace, RunConfig,
                        StageConfig, run)
from .precision import QuantConfig
from .tensor import DenseTensor, FactorSet
from .tensor_io import (read_factors, read_tensor, read_trace,
                        write_factors, write_tensor, write_trace)

PathLike = Union[str, pathlib.Path, os.PathLike]


def tensor_from_file(fname: PathLike) -> DenseTensor:
    """Return a tensor read from a binary tensor file.

    Parameters
    ----------
    fname :
        A path to a tensor file.

    Returns
    -------
    :
        The tensor, with entries upcast to 64-bit floats.
    """
    return read_tensor(fname)


def tensor_to_file(t: DenseTensor, fname: PathLike, float32: bool = False):
    """Write a tensor to a binary tensor file.

    Parameters
    ----------
    t :
        The tensor to write.
    fname :
        The path of the file to write.
    float32 :
        If True, store the entries as 32-bit floats.
    """
    write_tensor(t, fname, dtype_code=2 if float32 else 1)


def factors_from_files(prefix: PathLike) -> FactorSet:
    """Return the factor set stored in ``<prefix>.factor1``, ... files."""
    return read_factors(prefix)


def factors_to_files(f: FactorSet, prefix: PathLike) -> List[str]:
    """Write each factor matrix to ``<prefix>.factor<i>`` and return the
    written paths."""
    return write_factors(f, prefix)


def trace_from_csv(fname: PathLike,
                   eps: Optional[float] = None) -> ConvergenceTrace:
    """Return a convergence trace read from a CSV trace file. Pass the
    SGD-stage threshold as ``eps`` to recover the ``converged`` flag."""
    return read_trace(fname, eps=eps)


def trace_to_csv(trace: ConvergenceTrace, fname: PathLike):
    """Write a convergence trace to a CSV trace file."""
    write_trace(trace, fname)


def decompose(a: DenseTensor, rank: int, **kwargs) \
        -> Tuple[FactorSet, ConvergenceTrace]:
    """Return a rank-r CP decomposition of a tensor.

    Parameters
    ----------
    a :
        The tensor to decompose.
    rank :
        The CP rank.
    kwargs :
        Further arguments of :class:`pymixcp.optimizer.RunConfig`, for
        instance ``q2=QuantConfig(INT4)`` or ``seed=1``.

    Returns
    -------
    :
        The factors and the convergence trace.
    """
    return run(a, RunConfig(rank, **kwargs))
