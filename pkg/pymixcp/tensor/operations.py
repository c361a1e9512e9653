"""Multilinear primitives on dense tensors and CP factor sets.

Mode indices are zero-based throughout. The unfolding along mode k puts
index i_k on the rows and linearizes the remaining indices on the columns
in increasing mode order with earlier modes varying slowest. With this
order the identity

    mode_unfold(cp_reconstruct(f), k) == f[k] @ khatri_rao(f[j], j != k).T

holds with the Khatri-Rao product taken in increasing mode order.
"""
__all__ = ['mode_unfold', 'mode_fold', 'khatri_rao', 'cp_reconstruct',
           'sub_tensor', 'fro_norm', 'relative_error', 'normalize_factors',
           'ZeroNormError']

import math
from typing import Optional, Sequence

import numpy as np

from .base import (DenseTensor, FactorSet, ModeIndexError, SampleBlock,
                   ShapeError)


def _check_mode(k: int, order: int):
    if not 0 <= k < order:
        raise ModeIndexError(k, order)


def mode_unfold(t: DenseTensor, k: int) -> np.ndarray:
    """Return the mode-k unfolding of a tensor.

    Parameters
    ----------
    t :
        The tensor to unfold.
    k :
        The zero-based mode that becomes the row index.

    Returns
    -------
    :
        A new matrix of shape (N_k, N / N_k).
    """
    _check_mode(k, t.order)
    return np.moveaxis(t.data, k, 0).reshape(t.dims[k], -1).copy()


def mode_fold(mat, k: int, dims: Sequence[int]) -> DenseTensor:
    """Return the tensor whose mode-k unfolding is the given matrix.

    Parameters
    ----------
    mat :
        A matrix of shape (N_k, N / N_k).
    k :
        The zero-based mode the rows of the matrix correspond to.
    dims :
        The dimensions of the folded tensor.

    Returns
    -------
    :
        The folded tensor, the inverse of :func:`mode_unfold`.
    """
    dims = tuple(dims)
    _check_mode(k, len(dims))
    mat = np.asarray(mat, dtype=np.float64)
    rest = dims[:k] + dims[k + 1:]
    if mat.shape != (dims[k], int(np.prod(rest))):
        raise ShapeError('a %s matrix cannot be folded into %s along mode %d'
                         % (str(mat.shape), str(dims), k))
    return DenseTensor(dims, np.moveaxis(mat.reshape((dims[k],) + rest),
                                         0, k))


def khatri_rao(matrices: Sequence) -> np.ndarray:
    """Return the column-wise Kronecker product of a sequence of matrices.

    Parameters
    ----------
    matrices :
        A non-empty sequence of matrices sharing the column count r.
        The first matrix varies slowest along the rows of the result.

    Returns
    -------
    :
        A matrix of shape (n_1 * ... * n_k, r).
    """
    mats = [np.asarray(m, dtype=np.float64) for m in matrices]
    if not mats:
        raise ShapeError('the Khatri-Rao product needs at least one matrix')
    if any(m.ndim != 2 for m in mats):
        raise ShapeError('Khatri-Rao operands must be matrices')
    cols = {m.shape[1] for m in mats}
    if len(cols) != 1:
        raise ShapeError('Khatri-Rao operands disagree on the column count: '
                         '%s' % sorted(cols))
    rank = cols.pop()
    out = mats[0]
    for mat in mats[1:]:
        out = (out[:, None, :] * mat[None, :, :]).reshape(-1, rank)
    return np.array(out)


def cp_reconstruct(f: FactorSet) -> DenseTensor:
    """Return the full tensor [[U_1, ..., U_m]] of a factor set.

    Entry (i_1, ..., i_m) is the sum over j of U_1(i_1, j) ... U_m(i_m, j),
    accumulated in float64.
    """
    if f.order == 1:
        return DenseTensor(f.dims, f[0].sum(axis=1))
    unfolded = f[0] @ khatri_rao(f.factors[1:]).T
    return DenseTensor(f.dims, unfolded)


def sub_tensor(t: DenseTensor, block: SampleBlock) -> DenseTensor:
    """Return the entries of a tensor on the sub-grid selected by a block.

    Parameters
    ----------
    t :
        The tensor to gather from.
    block :
        The index sets I_1, ..., I_m.

    Returns
    -------
    :
        A tensor of dims (n_1, ..., n_m) with entries in block index order.
    """
    block.validate(t.dims)
    return DenseTensor(block.sizes, t.data[np.ix_(*block.index_sets)])


def fro_norm(t: DenseTensor) -> float:
    """Return the Frobenius norm of a tensor."""
    return math.sqrt(float(np.sum(t.data * t.data)))


def relative_error(t: DenseTensor, f: FactorSet) -> float:
    """Return ||t - [[f]]||_F / ||t||_F.

    Parameters
    ----------
    t :
        The reference tensor, with a nonzero norm.
    f :
        A factor set whose reconstruction has the dims of ``t``.

    Returns
    -------
    :
        The relative reconstruction error.
    """
    if f.dims != t.dims:
        raise ShapeError('factors of dims %s cannot approximate a tensor '
                         'of dims %s' % (str(f.dims), str(t.dims)))
    norm = fro_norm(t)
    if norm == 0:
        raise ZeroNormError()
    diff = t.data - cp_reconstruct(f).data
    return math.sqrt(float(np.sum(diff * diff))) / norm


def normalize_factors(f: FactorSet,
                      leading_rows: Optional[Sequence] = None) -> FactorSet:
    """Rescale factor columns so that the leading rows of U_2..U_m are fixed.

    Column j of each U_i with i >= 2 is scaled so its first entry equals
    the requested leading value (1 by default) and column j of U_1
    absorbs the inverse of the product of those scales, which leaves the
    reconstruction unchanged.

    Parameters
    ----------
    f :
        The factor set to normalize. The first row of U_2..U_m must not
        contain zeros.
    leading_rows :
        Optionally, one vector of r nonzero values per factor. Entries
        for the first factor are ignored.

    Returns
    -------
    :
        The normalized factor set.
    """
    mats = f.copy_arrays()
    for i in range(1, f.order):
        lead = mats[i][0, :]
        target = np.ones(f.rank) if leading_rows is None \
            else np.asarray(leading_rows[i], dtype=np.float64)
        if np.any(lead == 0) or np.any(target == 0):
            raise ShapeError('cannot normalize factor %d: its leading row '
                             'has zero entries' % i)
        scale = target / lead
        mats[i] = mats[i] * scale
        mats[0] = mats[0] / scale
    return FactorSet(mats)


class ZeroNormError(ZeroDivisionError):
    def __str__(self):
        return 'The relative error is undefined for a tensor with zero norm.'
