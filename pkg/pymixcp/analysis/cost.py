"""Arithmetic cost model of the mixed-precision block gradient.

Costs are expressed in units of one FP32 operation. A floating-point
operation costs in proportion to its bit width (FP16 costs 1/2) and a
fixed-point operation costs half of a floating-point one of the same
width, so INT(b) costs b/64.
"""
__all__ = ['CostEstimate', 'operation_cost', 'gradient_cost', 'cost_model',
           'cost_table']

from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..precision import FP16, FP32, PrecisionFormat

SUPPORTED_ORDERS = (3, 4, 5)
SUPPORTED_BITS = (8, 4, 2)


class CostEstimate:
    """Normalized cost of the FP16 / INT(b) gradient against FP32 / FP32.

    Attributes
    ----------
    order : int
        The tensor order m.
    bits : int
        The bit width b of the integer product format.
    cost : float
        The large-sample approximation (1 + b m / 32) / (2 + 2 m).
    exact_cost : Optional[float]
        The unapproximated ratio C(FP16, INT(b)) / C(FP32, FP32) when
        sample sizes were given.
    """

    def __init__(self, order: int, bits: int, cost: float,
                 exact_cost: Optional[float] = None):
        self.order = order
        self.bits = bits
        self.cost = cost
        self.exact_cost = exact_cost

    @property
    def formats(self):
        return FP16.name, 'INT%d' % self.bits

    def __repr__(self):
        return 'CostEstimate(m=%d, b=%d, cost=%.6g)' % (self.order, self.bits,
                                                       self.cost)


def operation_cost(fmt: PrecisionFormat) -> float:
    """Return the cost of one arithmetic operation in format ``fmt``."""
    if fmt.is_int:
        return fmt.bits / 64.0
    return fmt.bits / 32.0


def gradient_cost(sample_sizes: Sequence[int], rank: int,
                  p1: PrecisionFormat = FP16,
                  p2: PrecisionFormat = FP32) -> float:
    """Return the cost C(p1, p2) of one mixed-precision block gradient.

    The residual costs 2 n r operations and the Khatri-Rao operands
    sum(n / n_i) r operations, both in format p1; the m products cost
    2 m n r operations in format p2.

    Parameters
    ----------
    sample_sizes :
        The block sizes n_1, ..., n_m.
    rank :
        The rank r.
    p1 :
        The format of the factors and residual.
    p2 :
        The format of the product operands.

    Returns
    -------
    :
        The cost in units of one FP32 operation.
    """
    sizes = [int(s) for s in sample_sizes]
    n = float(np.prod(sizes))
    m = len(sizes)
    staged = 2 * n * rank + sum(n / s for s in sizes) * rank
    return operation_cost(p1) * staged + 2 * operation_cost(p2) * m * n * rank


def cost_model(m: int, b: int, sample_sizes: Optional[Sequence[int]] = None,
               rank: int = 1) -> CostEstimate:
    """Return the normalized cost of the FP16 / INT(b) gradient.

    Parameters
    ----------
    m :
        The tensor order, 3 or more.
    b :
        The integer bit width: 2, 4 or 8.
    sample_sizes :
        Optionally, the block sizes used to also compute the ratio without
        the large-sample approximation.
    rank :
        The rank used with ``sample_sizes``; the ratio does not depend on it.

    Returns
    -------
    :
        The cost estimate.
    """
    if m < 3:
        raise ValueError('the cost model needs an order of at least 3, '
                         'got %d' % m)
    if b not in SUPPORTED_BITS:
        raise ValueError('unsupported bit width %d, expected one of %s'
                         % (b, str(SUPPORTED_BITS)))
    cost = (1 + b * m / 32.0) / (2 + 2 * m)
    exact = None
    if sample_sizes is not None:
        if len(sample_sizes) != m:
            raise ValueError('%d sample sizes given for order %d'
                             % (len(sample_sizes), m))
        int_fmt = PrecisionFormat('int', b)
        exact = gradient_cost(sample_sizes, rank, FP16, int_fmt) / \
            gradient_cost(sample_sizes, rank, FP32, FP32)
    return CostEstimate(m, b, cost, exact)


def cost_table(orders: Sequence[int] = SUPPORTED_ORDERS,
               bits: Sequence[int] = SUPPORTED_BITS) -> pd.DataFrame:
    """Return normalized costs in percent, orders as rows, INT widths as
    columns."""
    return pd.DataFrame(
        [[100 * cost_model(m, b).cost for b in bits] for m in orders],
        index=pd.Index(list(orders), name='m'),
        columns=['INT%d' % b for b in bits])
