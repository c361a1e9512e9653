__all__ = ['DenseTensor', 'FactorSet', 'SampleBlock', 'ShapeError',
           'ModeIndexError', 'BlockIndexError']

from typing import Iterable, List, Sequence, Tuple

import numpy as np


class DenseTensor:
    """A dense, real, order-m tensor stored in row-major order.

    Parameters
    ----------
    dims :
        The size of each mode, N_1, ..., N_m.
    data :
        The N_1 * ... * N_m entries in row-major order (last index
        fastest). Anything :func:`numpy.asarray` accepts, either flat or
        already shaped as ``dims``.

    Attributes
    ----------
    dims : Tuple[int, ...]
        The size of each mode.
    data : numpy.ndarray
        A read-only float64 array of shape ``dims``.
    """

    def __init__(self, dims: Sequence[int], data):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ShapeError('a tensor needs at least one mode')
        if any(d < 1 for d in dims):
            raise ShapeError('all dimensions must be positive, got %s'
                             % str(dims))
        arr = np.array(data, dtype=np.float64)
        if arr.size != int(np.prod(dims)):
            raise ShapeError('%d entries do not fill a tensor of shape %s'
                             % (arr.size, str(dims)))
        arr = arr.reshape(dims)
        arr.flags.writeable = False
        self.dims = dims
        self.data = arr

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        """Return a DenseTensor wrapping a copy of an n-dimensional array."""
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr)

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "DenseTensor":
        return cls(dims, np.zeros(int(np.prod(dims))))

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.data.size

    def to_array(self) -> np.ndarray:
        """Return a writable copy of the entries shaped as ``dims``."""
        return np.array(self.data)

    def ravel(self) -> np.ndarray:
        """Return the entries as a flat row-major vector."""
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.dims == other.dims and \
            bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return 'DenseTensor(dims=%s)' % str(self.dims)


class FactorSet:
    """The factor matrices U_1, ..., U_m of a rank-r CP decomposition.

    Parameters
    ----------
    factors :
        A sequence of m matrices, matrix i of shape (N_i, r).
    dims :
        If given, the row counts the factors are required to have.

    Attributes
    ----------
    factors : List[numpy.ndarray]
        Read-only float64 copies of the factor matrices.
    rank : int
        The shared column count r.
    """

    def __init__(self, factors: Iterable, dims: Sequence[int] = None):
        mats = [np.array(u, dtype=np.float64) for u in factors]
        if not mats:
            raise ShapeError('a factor set needs at least one factor')
        for idx, u in enumerate(mats):
            if u.ndim != 2:
                raise ShapeError('factor %d is not a matrix (shape %s)'
                                 % (idx, str(u.shape)))
        ranks = {u.shape[1] for u in mats}
        if len(ranks) != 1:
            raise ShapeError('factors disagree on the rank: %s'
                             % sorted(ranks))
        rank = ranks.pop()
        if rank < 1:
            raise ShapeError('the rank must be positive')
        if dims is not None and tuple(dims) != tuple(u.shape[0]
                                                     for u in mats):
            raise ShapeError('factor rows %s do not match dims %s'
                             % (str(tuple(u.shape[0] for u in mats)),
                                str(tuple(dims))))
        for u in mats:
            u.flags.writeable = False
        self.factors = mats
        self.rank = rank

    @classmethod
    def from_arrays(cls, *factors) -> "FactorSet":
        return cls(factors)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    def __getitem__(self, idx) -> np.ndarray:
        return self.factors[idx]

    def __len__(self):
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def copy_arrays(self) -> List[np.ndarray]:
        """Return writable copies of the factor matrices."""
        return [np.array(u) for u in self.factors]

    def __eq__(self, other):
        if not isinstance(other, FactorSet):
            return NotImplemented
        return len(self) == len(other) and \
            all(np.array_equal(u, v) for u, v in zip(self, other))

    def __repr__(self):
        return 'FactorSet(dims=%s, rank=%d)' % (str(self.dims), self.rank)


class SampleBlock:
    """Index subsets I_1, ..., I_m selecting a sub-grid of a tensor.

    Indices are zero-based. Each index set is stored sorted and
    duplicate-free.

    Parameters
    ----------
    index_sets :
        One collection of indices per mode.

    Attributes
    ----------
    index_sets : Tuple[numpy.ndarray, ...]
        The sorted index arrays.
    """

    def __init__(self, index_sets: Iterable[Iterable[int]]):
        sets = []
        for mode, idx in enumerate(index_sets):
            arr = np.unique(np.asarray(list(idx), dtype=np.int64))
            if arr.size == 0:
                raise ShapeError('index set of mode %d is empty' % mode)
            arr.flags.writeable = False
            sets.append(arr)
        if not sets:
            raise ShapeError('a block needs at least one index set')
        self.index_sets = tuple(sets)

    @classmethod
    def full(cls, dims: Sequence[int]) -> "SampleBlock":
        """Return the block covering every index of every mode."""
        return cls([range(d) for d in dims])

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(idx.size for idx in self.index_sets)

    @property
    def n(self) -> int:
        """The number of entries in the block, n_1 * ... * n_m."""
        return int(np.prod(self.sizes))

    def validate(self, dims: Sequence[int]):
        """Raise a BlockIndexError unless every index lies within dims."""
        if len(dims) != len(self.index_sets):
            raise ShapeError('block of order %d used on a tensor of order %d'
                             % (len(self.index_sets), len(dims)))
        for mode, (idx, dim) in enumerate(zip(self.index_sets, dims)):
            if idx[0] < 0 or idx[-1] >= dim:
                raise BlockIndexError(mode, int(idx[0] if idx[0] < 0
                                                else idx[-1]), dim)

    def is_full(self, dims: Sequence[int]) -> bool:
        return tuple(dims) == self.sizes

    def __eq__(self, other):
        if not isinstance(other, SampleBlock):
            return NotImplemented
        return len(self.index_sets) == len(other.index_sets) and \
            all(np.array_equal(a, b) for a, b in zip(self.index_sets,
                                                     other.index_sets))

    def __repr__(self):
        return 'SampleBlock(%s)' % ', '.join(str(list(idx))
                                             for idx in self.index_sets)


class ShapeError(ValueError):
    """Raised when tensors, factors or blocks have inconsistent shapes."""


class ModeIndexError(IndexError):
    def __init__(self, mode, order):
        self.mode = mode
        self.order = order

    def __str__(self):
        return f'Mode {self.mode} is out of range for a tensor of ' \
               f'order {self.order}.'


class BlockIndexError(IndexError):
    def __init__(self, mode, index, dim):
        self.mode = mode
        self.index = index
        self.dim = dim

    def __str__(self):
        return f'Index {self.index} of mode {self.mode} is out of range ' \
               f'for a dimension of size {self.dim}.'
