import numpy as np

import pymixcp
from pymixcp import *
from pymixcp.precision import FP64
from pymixcp.tensor import cp_reconstruct


def test_version():
    assert pymixcp.__version__


def test_tensor_file_helpers(tmp_path):
    t = DenseTensor((3, 2), np.linspace(-1, 1, 6))
    path = tmp_path / 'x.dten'
    tensor_to_file(t, path)
    assert tensor_from_file(path) == t
    tensor_to_file(t, path, float32=True)
    assert np.allclose(tensor_from_file(path).data, t.data, atol=1e-7)


def test_decompose_exact_init(tmp_path):
    truth = FactorSet([[[1.0], [2.0]], [[1.0], [-1.0]], [[1.0], [0.5]]])
    a = cp_reconstruct(truth)
    factors, trace = decompose(a, 1, init=truth, record_wall_time=False,
                               q1=QuantConfig(FP64), q2=QuantConfig(FP64))
    assert trace.converged
    assert factors == truth
    trace_to_csv(trace, tmp_path / 'trace.csv')
    assert trace_from_csv(tmp_path / 'trace.csv').records == trace.records
    paths = factors_to_files(factors, tmp_path / 'fit')
    assert len(paths) == 3
    assert factors_from_files(tmp_path / 'fit') == truth
