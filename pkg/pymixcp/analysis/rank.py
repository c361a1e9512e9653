"""Rank thresholds below which the normalized CP problem is locally
strongly convex at a generic exact decomposition."""
__all__ = ['RankBound', 'rank_bound', 'RankBoundDomainError']

from typing import Dict, Sequence, Tuple

import numpy as np


class RankBound:
    """Rank thresholds of a tensor shape.

    Attributes
    ----------
    dims : Tuple[int, ...]
        The dimensions sorted in descending order.
    reduced_dims : Tuple[int, int, int]
        The reduced last three dimensions used for the order-3 bound.
    r3 : int
        The order-3 bound on the last three dimensions.
    rm : int
        The bound for the full order.
    ranks : Dict[int, int]
        The intermediate bounds r_k for k = 3, ..., m.
    """

    def __init__(self, dims: Tuple[int, ...],
                 reduced_dims: Tuple[int, int, int], ranks: Dict[int, int]):
        self.dims = dims
        self.reduced_dims = reduced_dims
        self.ranks = ranks
        self.r3 = ranks[3]
        self.rm = ranks[len(dims)]

    def __repr__(self):
        return 'RankBound(dims=%s, r3=%d, rm=%d)' % (str(self.dims), self.r3,
                                                     self.rm)


def rank_bound(dims: Sequence[int]) -> RankBound:
    """Return the rank thresholds r_3 and r_m of a tensor shape.

    The last three dimensions are reduced to the largest N~_{m-2} that is
    even and at most N_{m-2}, then N~_{m-1} = min(N_{m-1}, N~_{m-2}) and
    N~_m = min(N_m, N~_{m-1}), and

        r_3 = N~_{m-2} floor(N~_{m-1} N~_m / (N~_{m-2} + N~_{m-1} + N~_m - 2))
        r_k = N_{m-k+1} min(r_{k-1}, floor(N_{m-k+2} ... N_m /
                                           (N_{m-k+1} + ... + N_m - k + 1)))

    for k = 4, ..., m.

    Parameters
    ----------
    dims :
        Three or more dimensions, each at least 3. They are sorted in
        descending order first.

    Returns
    -------
    :
        The rank thresholds.
    """
    dims = tuple(sorted((int(d) for d in dims), reverse=True))
    m = len(dims)
    if m < 3:
        raise RankBoundDomainError(dims, 'the order must be at least 3')
    if dims[-1] < 3:
        raise RankBoundDomainError(dims, 'every dimension must be at least 3')
    big, mid, small = dims[-3:]
    red_big = big - big % 2
    red_mid = min(mid, red_big)
    red_small = min(small, red_mid)
    ranks = {3: red_big * ((red_mid * red_small)
                           // (red_big + red_mid + red_small - 2))}
    for k in range(4, m + 1):
        lead = dims[m - k]
        tail = dims[m - k + 1:]
        denom = sum(dims[m - k:]) - k + 1
        ranks[k] = lead * min(ranks[k - 1], int(np.prod(tail)) // denom)
    return RankBound(dims, (red_big, red_mid, red_small), ranks)


class RankBoundDomainError(ValueError):
    def __init__(self, dims, reason):
        self.dims = dims
        self.reason = reason

    def __str__(self):
        return f'No rank bound for dims {self.dims}: {self.reason}.'
