"""This module implements block sampling and the block stochastic
gradients of the CP objective

    f(U_1, ..., U_m) = 1/N * ||A - [[U_1, ..., U_m]]||_F^2

in full precision and in emulated mixed precision. Gradients restricted to
a block I_1 x ... x I_m carry the 2/n factor of the block objective, so a
block gradient of the full block equals the full gradient exactly."""
__all__ = ['GradientSet', 'sample_block', 'enumerate_blocks',
           'default_sample_sizes', 'objective', 'full_gradient',
           'block_gradient_full', 'block_gradient_mixed', 'estimate_noise',
           'SampleSizeError']

import itertools
import logging
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .precision import (FP16, INT8, PrecisionFormat, QuantConfig,
                        cast_to_format, quantize, quantize_matrix,
                        quantized_matmul)
from .tensor import (DenseTensor, FactorSet, SampleBlock, ShapeError,
                     cp_reconstruct, khatri_rao, mode_unfold, sub_tensor)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_FRACTIONS = {3: 0.2, 4: 0.3, 5: 0.4}
"""Fraction of each dimension sampled per iteration, by tensor order."""


class GradientSet:
    """Gradients with respect to each factor matrix of a FactorSet.

    Parameters
    ----------
    matrices :
        One (N_i, r) matrix per factor.
    active :
        The rows of each matrix that belong to the sampled block, or None
        when every row is active. Rows outside the block are zero.
    """

    def __init__(self, matrices: Sequence[np.ndarray],
                 active: Optional[Sequence[np.ndarray]] = None):
        self.matrices = [np.asarray(g, dtype=np.float64) for g in matrices]
        self.active = None if active is None else tuple(active)

    def __getitem__(self, idx) -> np.ndarray:
        return self.matrices[idx]

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def active_rows(self, idx: int) -> np.ndarray:
        """Return the indices of the active rows of gradient ``idx``."""
        if self.active is None:
            return np.arange(self.matrices[idx].shape[0])
        return self.active[idx]

    def norm(self) -> float:
        """Return the Frobenius norm of all gradients together."""
        return float(np.sqrt(sum(np.sum(g * g) for g in self.matrices)))

    def is_zero(self) -> bool:
        return all(not np.any(g) for g in self.matrices)

    def to_arrays(self) -> List[np.ndarray]:
        return [np.array(g) for g in self.matrices]

    def flatten(self) -> np.ndarray:
        return np.concatenate([g.reshape(-1) for g in self.matrices])


def default_sample_sizes(dims: Sequence[int]) -> Tuple[int, ...]:
    """Return sample sizes of 0.2, 0.3 or 0.4 times each dimension.

    The fraction depends on the order (3, 4 or 5); other orders use 0.2.
    Sizes are rounded and kept within [1, N_i].
    """
    frac = DEFAULT_SAMPLE_FRACTIONS.get(len(dims), 0.2)
    return tuple(min(d, max(1, int(round(frac * d)))) for d in dims)


def sample_block(dims: Sequence[int], sizes: Sequence[int],
                 rng: np.random.Generator) -> SampleBlock:
    """Sample index subsets I_i of size n_i uniformly without replacement.

    Parameters
    ----------
    dims :
        The tensor dimensions N_1, ..., N_m.
    sizes :
        The sample sizes n_1, ..., n_m.
    rng :
        The random stream to draw from.

    Returns
    -------
    :
        A block with one sorted index set per mode, sampled independently.
    """
    if len(dims) != len(sizes):
        raise ShapeError('%d sample sizes given for a tensor of order %d'
                         % (len(sizes), len(dims)))
    for mode, (dim, size) in enumerate(zip(dims, sizes)):
        if not 1 <= size <= dim:
            raise SampleSizeError(mode, size, dim)
    return SampleBlock([np.sort(rng.choice(dim, size=size, replace=False))
                        for dim, size in zip(dims, sizes)])


def enumerate_blocks(dims: Sequence[int],
                     sizes: Sequence[int]) -> Iterator[SampleBlock]:
    """Yield every block with the given sample sizes (tiny tensors only)."""
    per_mode = [itertools.combinations(range(d), n)
                for d, n in zip(dims, sizes)]
    for sets in itertools.product(*[list(c) for c in per_mode]):
        yield SampleBlock(sets)


def objective(a: DenseTensor, f: FactorSet) -> float:
    """Return the mean squared residual 1/N * ||A - [[f]]||_F^2."""
    diff = cp_reconstruct(f).data - a.data
    return float(np.sum(diff * diff)) / a.size


def _others_khatri_rao(factors: Sequence[np.ndarray], i: int) -> np.ndarray:
    others = [u for j, u in enumerate(factors) if j != i]
    if not others:
        return np.ones((1, factors[i].shape[1]))
    return khatri_rao(others)


def _staged_khatri_rao(factors: Sequence[np.ndarray], i: int,
                       fmt: PrecisionFormat) -> np.ndarray:
    """Return the Khatri-Rao product of all factors but the i-th, formed one
    pairwise product at a time with every intermediate stored in fmt.

    Integer formats hold codes rather than values, so for them the
    products stay in 64-bit floats.
    """
    others = [u for j, u in enumerate(factors) if j != i]
    if not others:
        return np.ones((1, factors[i].shape[1]))
    if fmt.is_int:
        return khatri_rao(others)
    out = cast_to_format(others[0], fmt)
    for u in others[1:]:
        out = cast_to_format(khatri_rao([out, u]), fmt)
    return out


def _block_rows(a_sub: DenseTensor, factors: List[np.ndarray]) \
        -> List[np.ndarray]:
    n = a_sub.size
    residual = DenseTensor(a_sub.dims,
                           cp_reconstruct(FactorSet(factors)).data - a_sub.data)
    return [(2.0 / n) * (mode_unfold(residual, i)
                         @ _others_khatri_rao(factors, i))
            for i in range(len(factors))]


def _scatter(rows: List[np.ndarray], f: FactorSet,
             block: SampleBlock) -> GradientSet:
    mats = []
    for g_rows, u, idx in zip(rows, f, block.index_sets):
        g = np.zeros_like(u)
        g[idx] = g_rows
        mats.append(g)
    return GradientSet(mats, block.index_sets)


def _check_shapes(a: DenseTensor, f: FactorSet):
    if a.dims != f.dims:
        raise ShapeError('factors of dims %s do not match a tensor of dims %s'
                         % (str(f.dims), str(a.dims)))


def full_gradient(a: DenseTensor, f: FactorSet) -> GradientSet:
    """Return the gradient of f with respect to every factor matrix.

    Parameters
    ----------
    a :
        The tensor being decomposed.
    f :
        The current factors.

    Returns
    -------
    :
        g_i = 2/N * ([[f]] - A)_[i] (Khatri-Rao of U_j, j != i), with
        every row active, computed in float64.
    """
    _check_shapes(a, f)
    return GradientSet(_block_rows(a, list(f.factors)))


def block_gradient_full(a: DenseTensor, f: FactorSet,
                        block: SampleBlock) -> GradientSet:
    """Return the full-precision block stochastic gradient.

    Parameters
    ----------
    a :
        The tensor being decomposed.
    f :
        The current factors.
    block :
        The sampled index sets.

    Returns
    -------
    :
        Rows in I_i hold the gradient of the block objective
        1/n * ||A(I) - [[U_1(I_1,:), ..., U_m(I_m,:)]]||^2 with respect to
        U_i(I_i, :); all other rows are zero.
    """
    _check_shapes(a, f)
    a_sub = sub_tensor(a, block)
    factors = [u[idx] for u, idx in zip(f, block.index_sets)]
    return _scatter(_block_rows(a_sub, factors), f, block)


def block_gradient_mixed(a: DenseTensor, f: FactorSet, block: SampleBlock,
                         q1: Optional[QuantConfig] = None,
                         q2: Optional[QuantConfig] = None,
                         rng: Optional[np.random.Generator] = None) \
        -> GradientSet:
    """Return the mixed-precision block stochastic gradient Q(g_i).

    The sampled factor rows are quantized with ``q1``; the residual
    M = [[Q1(U_1(I_1,:)), ...]] - A(I) is accumulated in float64; each
    Khatri-Rao operand V_i of the quantized factors is stored in the
    format of ``q1``. Both M_[i] and V_i are then quantized with ``q2``
    (each with its own scale) and multiplied exactly, and the 2/n factor
    and the two scales are applied once to the product.

    Parameters
    ----------
    a :
        The tensor being decomposed.
    f :
        The current factors.
    block :
        The sampled index sets.
    q1 :
        The quantization of the factors. Defaults to FP16 with scale 1.
    q2 :
        The quantization of the product operands. Defaults to INT8 with
        an automatic scale.
    rng :
        The random stream for stochastic rounding.

    Returns
    -------
    :
        The quantized gradient, zero outside the block.
    """
    _check_shapes(a, f)
    q1 = q1 if q1 is not None else QuantConfig(FP16, scale=1.0)
    q2 = q2 if q2 is not None else QuantConfig(INT8)
    a_sub = sub_tensor(a, block)
    n = a_sub.size
    factors = [quantize_matrix(u[idx], q1, rng)
               for u, idx in zip(f, block.index_sets)]
    residual = DenseTensor(a_sub.dims,
                           cp_reconstruct(FactorSet(factors)).data - a_sub.data)
    rows = []
    for i in range(len(factors)):
        v = _staged_khatri_rao(factors, i, q1.format)
        product = quantized_matmul(quantize(mode_unfold(residual, i), q2, rng),
                                   quantize(v, q2, rng))
        rows.append((2.0 / n) * product)
    return _scatter(rows, f, block)


def estimate_noise(a: DenseTensor, f: FactorSet, trials: int,
                   sizes: Optional[Sequence[int]] = None,
                   q1: Optional[QuantConfig] = None,
                   q2: Optional[QuantConfig] = None,
                   seed: int = 0) -> Tuple[float, float]:
    """Estimate the sampling and quantization noise of the gradient.

    Parameters
    ----------
    a :
        The tensor being decomposed.
    f :
        The point at which the noise is estimated.
    trials :
        The number of sampled blocks, at least 2.
    sizes :
        The sample sizes; defaults to :func:`default_sample_sizes`.
    q1 :
        The factor quantization passed to :func:`block_gradient_mixed`.
    q2 :
        The operand quantization passed to :func:`block_gradient_mixed`.
    seed :
        Seed of the random streams used for sampling and rounding.

    Returns
    -------
    :
        The root mean square over entries and trials of the sampling
        error (block gradient minus full gradient) and of the
        quantization error (mixed minus full-precision block gradient).
    """
    if trials < 2:
        raise ValueError('at least 2 trials are needed, got %d' % trials)
    sizes = default_sample_sizes(a.dims) if sizes is None else tuple(sizes)
    sample_seq, round_seq = np.random.SeedSequence(seed).spawn(2)
    sample_rng = np.random.default_rng(sample_seq)
    round_rng = np.random.default_rng(round_seq)
    exact = full_gradient(a, f).flatten()
    sq_g, sq_q = 0.0, 0.0
    for _ in range(trials):
        block = sample_block(a.dims, sizes, sample_rng)
        stoch = block_gradient_full(a, f, block).flatten()
        mixed = block_gradient_mixed(a, f, block, q1, q2,
                                     round_rng).flatten()
        sq_g += float(np.mean((stoch - exact) ** 2))
        sq_q += float(np.mean((mixed - stoch) ** 2))
    sigma_g, sigma_q = np.sqrt(sq_g / trials), np.sqrt(sq_q / trials)
    logger.debug('Noise estimate over %d trials: sigma_g=%.3e, sigma_q=%.3e'
                 % (trials, sigma_g, sigma_q))
    return float(sigma_g), float(sigma_q)


class SampleSizeError(ValueError):
    def __init__(self, mode, size, dim):
        self.mode = mode
        self.size = size
        self.dim = dim

    def __str__(self):
        return f'Sample size {self.size} of mode {self.mode} is outside ' \
               f'[1, {self.dim}].'
