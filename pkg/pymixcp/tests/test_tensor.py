import math

import numpy as np
import pytest

from pymixcp.tensor import *
from pymixcp.tensor.operations import ZeroNormError


def _two_by_two():
    return DenseTensor((2, 2), [1, 2, 3, 4])


def test_dense_tensor_read_only():
    t = _two_by_two()
    assert t.dims == (2, 2)
    assert t.order == 2
    assert t.size == 4
    with pytest.raises(ValueError):
        t.data[0, 0] = 5
    arr = t.to_array()
    arr[0, 0] = 5
    assert t.data[0, 0] == 1


def test_dense_tensor_bad_shape():
    with pytest.raises(ShapeError):
        DenseTensor((2, 3), [1, 2, 3])
    with pytest.raises(ShapeError):
        DenseTensor((0, 2), [])


def test_mode_unfold_matrix():
    t = _two_by_two()
    assert np.array_equal(mode_unfold(t, 0), [[1, 2], [3, 4]])
    assert np.array_equal(mode_unfold(t, 1), [[1, 3], [2, 4]])


def test_mode_unfold_third_order():
    # a_ijk = 4 i + 2 j + k + 1 with zero-based indices
    data = [4 * i + 2 * j + k + 1 for i in range(2) for j in range(2)
            for k in range(2)]
    t = DenseTensor((2, 2, 2), data)
    assert np.array_equal(mode_unfold(t, 1), [[1, 2, 5, 6], [3, 4, 7, 8]])
    assert np.array_equal(mode_unfold(t, 0), [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_mode_unfold_bad_mode():
    with pytest.raises(ModeIndexError):
        mode_unfold(_two_by_two(), 2)
    with pytest.raises(IndexError):
        mode_unfold(_two_by_two(), -1)


def test_mode_fold_inverts_unfold():
    rng = np.random.default_rng(1)
    t = DenseTensor.from_array(rng.standard_normal((3, 4, 2)))
    for k in range(3):
        assert mode_fold(mode_unfold(t, k), k, t.dims) == t


def test_khatri_rao():
    assert np.array_equal(khatri_rao([[[1], [2]], [[3], [4]]]),
                          [[3], [4], [6], [8]])
    assert np.array_equal(khatri_rao([[[1], [0]], [[1], [0]]]),
                          [[1], [0], [0], [0]])
    assert np.array_equal(khatri_rao([[[1, 2], [3, 4]], [[5, 6], [7, 8]]]),
                          [[5, 12], [7, 16], [15, 24], [21, 32]])


def test_khatri_rao_column_mismatch():
    with pytest.raises(ShapeError):
        khatri_rao([np.ones((2, 2)), np.ones((2, 3))])


def test_cp_reconstruct():
    f = FactorSet([[[1], [2]], [[3], [4]]])
    assert np.array_equal(cp_reconstruct(f).data, [[3, 4], [6, 8]])
    f = FactorSet([[[1, 0], [0, 1]], [[1, 1], [1, -1]]])
    assert np.array_equal(cp_reconstruct(f).data, [[1, 1], [1, -1]])
    f = FactorSet([np.ones((2, 3)), np.zeros((3, 3)), np.ones((4, 3))])
    assert not np.any(cp_reconstruct(f).data)


def test_unfolding_matches_khatri_rao_identity():
    rng = np.random.default_rng(7)
    f = FactorSet([rng.standard_normal((n, 3)) for n in (4, 3, 5)])
    t = cp_reconstruct(f)
    for k in range(3):
        others = [f[j] for j in range(3) if j != k]
        assert np.allclose(mode_unfold(t, k),
                           f[k] @ khatri_rao(others).T, atol=1e-12)


def test_sub_tensor():
    t = _two_by_two()
    assert sub_tensor(t, SampleBlock.full(t.dims)) == t
    assert np.array_equal(sub_tensor(t, SampleBlock([[1], [0]])).data,
                          [[3]])
    assert np.array_equal(sub_tensor(t, SampleBlock([[0, 1], [1]])).data,
                          [[2], [4]])


def test_sub_tensor_out_of_range():
    with pytest.raises(BlockIndexError):
        sub_tensor(_two_by_two(), SampleBlock([[0, 2], [0]]))


def test_sample_block_sorted_unique():
    block = SampleBlock([[3, 1, 1], [0]])
    assert list(block.index_sets[0]) == [1, 3]
    assert block.sizes == (2, 1)
    assert block.n == 2


def test_relative_error():
    t = DenseTensor((2, 2), [1, 0, 0, 1])
    f = FactorSet([[[1], [0]], [[1], [0]]])
    assert relative_error(t, f) == pytest.approx(1 / math.sqrt(2))
    zero = FactorSet([np.zeros((2, 1)), np.zeros((2, 1))])
    assert relative_error(t, zero) == 1.0
    exact = FactorSet([[[1], [2]], [[3], [4]]])
    assert relative_error(cp_reconstruct(exact), exact) == 0.0


def test_relative_error_zero_norm():
    with pytest.raises(ZeroNormError):
        relative_error(DenseTensor.zeros((2, 2)),
                       FactorSet([np.ones((2, 1)), np.ones((2, 1))]))


def test_normalize_factors_keeps_reconstruction():
    rng = np.random.default_rng(3)
    f = FactorSet([rng.uniform(0.5, 1.5, (n, 2)) for n in (3, 4, 2)])
    g = normalize_factors(f)
    for u in g.factors[1:]:
        assert np.allclose(u[0], 1.0)
    assert np.allclose(cp_reconstruct(g).data, cp_reconstruct(f).data)


def test_normalize_factors_zero_lead():
    f = FactorSet([np.ones((2, 1)), [[0.0], [1.0]]])
    with pytest.raises(ShapeError):
        normalize_factors(f)
