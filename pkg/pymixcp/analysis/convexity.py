"""Numerical certification of local strong convexity of the normalized
CP problem

    f~(U_1, U~_2, ..., U~_m) = || A - [[U_1, [u_2; U~_2], ..., [u_m; U~_m]]] ||^2

where the leading rows u_i of U_2, ..., U_m are frozen. At an exact
decomposition the Hessian equals 2 J^T J, with J the Jacobian of the
vectorized reconstruction h~, so the Hessian is positive definite exactly
when J has full column rank.

Parameters are packed mode by mode; within a mode, factor columns follow
each other and rows vary fastest. The vectorized tensor is the row-major
ravel of its entries.
"""
__all__ = ['ConvexityReport', 'pack_normalized', 'unpack_normalized',
           'jacobian_h', 'check_local_convexity', 'finite_diff',
           'normalized_objective', 'normalized_gradient',
           'hessian_min_eigenvalue', 'MAX_CHECK_ENTRIES']

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..tensor import DenseTensor, FactorSet, cp_reconstruct, khatri_rao

logger = logging.getLogger(__name__)

MAX_CHECK_ENTRIES = 10 ** 5
"""The largest tensor size for which the dense Jacobian is assembled."""

FULL_RANK = 'full-rank'
DEFICIENT = 'deficient'


class ConvexityReport:
    """The outcome of a Jacobian rank test.

    Attributes
    ----------
    shape : Tuple[int, int]
        The shape of the Jacobian, entries by free parameters.
    sigma_min : float
        Its smallest singular value (0 when it has more columns than rows).
    sigma_max : float
        Its largest singular value.
    lambda_min : float
        The smallest eigenvalue 2 sigma_min^2 of the Hessian 2 J^T J.
    full_rank : bool
        True if sigma_min > tol * sigma_max.
    tol : float
        The relative tolerance of the verdict.
    """

    def __init__(self, shape: Tuple[int, int], sigma_min: float,
                 sigma_max: float, full_rank: bool, tol: float):
        self.shape = shape
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.lambda_min = 2 * sigma_min ** 2
        self.full_rank = full_rank
        self.tol = tol

    @property
    def verdict(self) -> str:
        return FULL_RANK if self.full_rank else DEFICIENT

    def __repr__(self):
        return 'ConvexityReport(shape=%s, sigma_min=%.3e, verdict=%s)' % (
            str(self.shape), self.sigma_min, self.verdict)


def pack_normalized(f: FactorSet) -> np.ndarray:
    """Return the free parameters (U_1, U~_2, ..., U~_m) as a vector."""
    parts = [f[0].ravel(order='F')]
    parts += [u[1:].ravel(order='F') for u in f.factors[1:]]
    return np.concatenate(parts)


def unpack_normalized(theta, dims: Sequence[int], rank: int,
                      leading_rows: Optional[Sequence] = None) -> FactorSet:
    """Return the factor set of a packed parameter vector.

    Parameters
    ----------
    theta :
        The packed free parameters.
    dims :
        The tensor dimensions.
    rank :
        The rank r.
    leading_rows :
        The frozen first rows of U_2, ..., U_m, one per factor in mode
        order starting with mode 2. Defaults to all-ones rows.

    Returns
    -------
    :
        The factor set with the frozen rows in place.
    """
    theta = np.asarray(theta, dtype=np.float64)
    expected = dims[0] * rank + sum(d - 1 for d in dims[1:]) * rank
    if theta.size != expected:
        raise ValueError('expected %d parameters, got %d'
                         % (expected, theta.size))
    factors = [theta[:dims[0] * rank].reshape((dims[0], rank), order='F')]
    pos = dims[0] * rank
    for i, dim in enumerate(dims[1:]):
        lead = np.ones(rank) if leading_rows is None \
            else np.asarray(leading_rows[i], dtype=np.float64)
        free = theta[pos:pos + (dim - 1) * rank].reshape((dim - 1, rank),
                                                         order='F')
        factors.append(np.vstack([lead[None, :], free]))
        pos += (dim - 1) * rank
    return FactorSet(factors)


def _leading_rows(f: FactorSet):
    return [u[0] for u in f.factors[1:]]


def jacobian_h(f: FactorSet) -> np.ndarray:
    """Return the Jacobian of the vectorized reconstruction h~.

    Parameters
    ----------
    f :
        A factor set whose first rows of U_2, ..., U_m are treated as
        frozen (all ones for the normalized problem, or any nonzero
        values).

    Returns
    -------
    :
        A matrix of shape (N, N_1 r + sum_{i >= 2} (N_i - 1) r), one
        column per free parameter in packing order.
    """
    dims = f.dims
    total = int(np.prod(dims))
    blocks = []
    for k, dim in enumerate(dims):
        rest = dims[:k] + dims[k + 1:]
        first_row = 0 if k == 0 else 1
        for j in range(f.rank):
            others = [u[:, j:j + 1] for i, u in enumerate(f) if i != k]
            g = khatri_rao(others)[:, 0] if others else np.ones(1)
            # Rows: derivative with respect to U_k(i, j) for every row i
            unfolded = np.einsum('ia,b->iab', np.eye(dim), g)
            tensors = np.moveaxis(unfolded.reshape((dim, dim) + rest), 1,
                                  k + 1).reshape(dim, total)
            blocks.append(tensors[first_row:])
    return np.vstack(blocks).T


def check_local_convexity(f: FactorSet, tol: float = 1e-10) \
        -> ConvexityReport:
    """Test whether the normalized problem is strongly convex at f.

    Parameters
    ----------
    f :
        A normalized factor set, typically an exact decomposition.
    tol :
        The relative singular-value tolerance.

    Returns
    -------
    :
        The report; the verdict is full-rank if sigma_min > tol * sigma_max.
        A Jacobian with more columns than rows is always deficient.
    """
    total = int(np.prod(f.dims))
    if total > MAX_CHECK_ENTRIES:
        raise ValueError('the convexity check is limited to %d entries, '
                         'got %d' % (MAX_CHECK_ENTRIES, total))
    jac = jacobian_h(f)
    sigmas = scipy.linalg.svdvals(jac)
    sigma_max = float(sigmas[0])
    if jac.shape[1] > jac.shape[0]:
        sigma_min = 0.0
    else:
        sigma_min = float(sigmas[-1])
    full_rank = jac.shape[1] <= jac.shape[0] and sigma_min > tol * sigma_max
    report = ConvexityReport(jac.shape, sigma_min, sigma_max, full_rank, tol)
    logger.info('Jacobian %s: sigma_min=%.3e, sigma_max=%.3e, %s'
                % (str(jac.shape), sigma_min, sigma_max, report.verdict))
    return report


def finite_diff(func: Callable, point, step: float = 1e-6):
    """Return the central finite-difference derivative of a function.

    Parameters
    ----------
    func :
        A scalar- or array-valued function of a scalar or array.
    point :
        The point of evaluation.
    step :
        The positive step h.

    Returns
    -------
    :
        For a scalar point, (func(x + h) - func(x - h)) / 2h. For an array
        point, the derivatives with respect to each entry stacked along a
        last axis (a gradient for scalar functions, a Jacobian for vector
        functions).
    """
    if not step > 0:
        raise ValueError('the step must be positive, got %g' % step)
    x = np.asarray(point, dtype=np.float64)
    flat = x.reshape(-1)
    cols = []
    for c in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[c] += step
        minus[c] -= step
        diff = np.asarray(func(plus.reshape(x.shape)), dtype=np.float64) - \
            np.asarray(func(minus.reshape(x.shape)), dtype=np.float64)
        cols.append(diff / (2 * step))
    if x.ndim == 0:
        return float(cols[0]) if np.ndim(cols[0]) == 0 else cols[0]
    return np.stack(cols, axis=-1)


def normalized_objective(theta, a: DenseTensor, rank: int,
                         leading_rows: Optional[Sequence] = None) -> float:
    """Return f~ at a packed parameter vector."""
    f = unpack_normalized(theta, a.dims, rank, leading_rows)
    diff = a.data - cp_reconstruct(f).data
    return float(np.sum(diff * diff))


def normalized_gradient(theta, a: DenseTensor, rank: int,
                        leading_rows: Optional[Sequence] = None) \
        -> np.ndarray:
    """Return the gradient 2 J^T (h~ - vec A) of f~ at a packed vector."""
    f = unpack_normalized(theta, a.dims, rank, leading_rows)
    residual = cp_reconstruct(f).ravel() - a.ravel()
    return 2 * jacobian_h(f).T @ residual


def hessian_min_eigenvalue(f: FactorSet, a: Optional[DenseTensor] = None,
                           step: float = 1e-5) -> float:
    """Return the smallest eigenvalue of the finite-difference Hessian of f~.

    Parameters
    ----------
    f :
        The point, with the leading rows of U_2, ..., U_m frozen.
    a :
        The tensor; defaults to the reconstruction of f, which makes f an
        exact decomposition.
    step :
        The finite-difference step applied to the analytic gradient.

    Returns
    -------
    :
        The smallest eigenvalue of the symmetrized Hessian estimate.
    """
    a = cp_reconstruct(f) if a is None else a
    leading = _leading_rows(f)
    hess = finite_diff(lambda theta: normalized_gradient(theta, a, f.rank,
                                                         leading),
                       pack_normalized(f), step)
    hess = (hess + hess.T) / 2
    return float(scipy.linalg.eigvalsh(hess)[0])
