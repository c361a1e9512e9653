import math

import numpy as np
import pytest

from pymixcp.experiments import synthetic_tensor
from pymixcp.gradient import (GradientSet, block_gradient_mixed, objective,
                              sample_block)
from pymixcp.optimizer import *
from pymixcp.precision import (FP16, FP64, INT4, INT8, ConfigError,
                               QuantConfig)
from pymixcp.tensor import DenseTensor, FactorSet, cp_reconstruct
from pymixcp.tensor.operations import ZeroNormError
from pymixcp.tensor_io import write_trace

FULL_PRECISION = dict(q1=QuantConfig(FP64), q2=QuantConfig(FP64))


def _toy_truth():
    return FactorSet([[[1.0], [2.0], [-1.0]],
                      [[1.0], [0.5], [-0.5]],
                      [[1.0], [-1.0], [0.5]]])


def _quiet(**kwargs):
    kwargs.setdefault('record_wall_time', False)
    return kwargs


def test_init_factors_range_and_replay():
    f = init_factors((5, 4, 3), 2, 1.0, np.random.default_rng(0))
    assert f.dims == (5, 4, 3) and f.rank == 2
    assert all(np.all(np.abs(u) <= 1.0) for u in f)
    g = init_factors((5, 4, 3), 2, 1.0, np.random.default_rng(0))
    assert f == g


def test_init_factors_mean():
    f = init_factors((10 ** 5,), 1, 1.0, np.random.default_rng(1))
    sigma = np.sqrt(1 / 3 / 10 ** 5)
    assert abs(f[0].mean()) <= 4 * sigma


def test_init_factors_normal_magnitude():
    f = init_factors((6, 5), 3, 0.1, np.random.default_rng(2),
                     distribution='normal')
    for u in f:
        assert np.max(np.abs(u)) == pytest.approx(0.1)


def test_signsgd_step():
    f = FactorSet([np.zeros((2, 1)), np.ones((3, 1))])
    grad = GradientSet([np.full((2, 1), 4.0), [[-0.03], [0.0], [2.0]]])
    g = signsgd_step(f, grad, 0.5)
    assert np.array_equal(g[0], [[-0.5], [-0.5]])
    assert np.array_equal(g[1], [[1.5], [1.0], [0.5]])
    zero = GradientSet([np.zeros((2, 1)), np.zeros((3, 1))])
    assert signsgd_step(f, zero, 0.5) == f


def test_sgd_step_freezes_leading_rows():
    f = FactorSet([[[1.0]], [[1.0], [1.0]]])
    grad = GradientSet([[[0.0]], [[5.0], [5.0]]])
    g = sgd_step(f, grad, 0.1)
    assert np.array_equal(g[0], [[1.0]])
    assert np.array_equal(g[1], [[1.0], [0.5]])


def test_sgd_step_random_gradient():
    rng = np.random.default_rng(3)
    f = FactorSet([rng.standard_normal((n, 2)) for n in (3, 4, 5)])
    grad = GradientSet([rng.standard_normal((n, 2)) for n in (3, 4, 5)])
    g = sgd_step(f, grad, 0.01)
    for i in (1, 2):
        assert np.array_equal(g[i][0], f[i][0])
    assert not np.array_equal(g[0], f[0])


def test_signsgd_bounded_motion():
    a, _ = synthetic_tensor((6, 5, 4), 2, seed=5)
    f0 = init_factors(a.dims, 2, 1.0, np.random.default_rng(5))
    cfg = StageConfig(0.2, eta=0.5, interval=5)
    rng = np.random.default_rng(6)
    f, alpha, travelled = f0, cfg.alpha0, 0.0
    for k in range(1, 26):
        block = sample_block(a.dims, (2, 2, 2), rng)
        f = signsgd_step(f, block_gradient_mixed(a, f, block), alpha)
        travelled += alpha
        alpha = schedule_alpha(alpha, k, cfg)
        for u, v in zip(f, f0):
            assert np.all(np.abs(u - v) <= travelled + 1e-12), k


def test_sgd_descent_in_expectation():
    truth = init_factors((6, 5, 4), 2, 1.0, np.random.default_rng(8))
    a = cp_reconstruct(truth)
    noise = np.random.default_rng(9)
    f = FactorSet([u + 0.05 * noise.standard_normal(u.shape) for u in truth])
    q = QuantConfig(FP64)
    before = objective(a, f)
    changes = []
    for seed in range(100):
        block = sample_block(a.dims, (3, 3, 2), np.random.default_rng(seed))
        grad = block_gradient_mixed(a, f, block, q, q)
        changes.append(objective(a, sgd_step(f, grad, 0.05)) - before)
    assert np.mean(changes) < 0, np.mean(changes)


def test_schedule_alpha():
    cfg = StageConfig(0.5, eta=0.3, interval=1000)
    assert schedule_alpha(0.5, 999, cfg) == 0.5
    assert schedule_alpha(0.5, 1000, cfg) == pytest.approx(0.15)
    assert schedule_alpha(0.5, 0, cfg) == 0.5
    constant = StageConfig(0.01)
    assert all(schedule_alpha(0.01, k, constant) == 0.01
               for k in (1000, 2000, 5000))


def test_config_validation():
    with pytest.raises(ConfigError):
        StageConfig(0.0)
    with pytest.raises(ConfigError):
        StageConfig(0.1, eta=1.5)
    with pytest.raises(ConfigError):
        RunConfig(0)
    with pytest.raises(ConfigError):
        RunConfig(2, sign_stage=StageConfig(0.5, eps=1e-3),
                  sgd_stage=StageConfig(0.01, eps=1e-2))
    with pytest.raises(ConfigError):
        RunConfig(2, sample_sizes=(2, 2)).resolve_sample_sizes((4, 4, 4))


def test_run_exact_init_returns_immediately():
    truth = _toy_truth()
    a = cp_reconstruct(truth)
    factors, trace = run(a, RunConfig(1, init=truth, **_quiet()))
    assert len(trace) == 1
    assert trace.final_error == 0.0
    assert trace.converged
    assert factors == truth


def test_run_zero_tensor():
    with pytest.raises(ZeroNormError):
        run(DenseTensor.zeros((2, 2, 2)), RunConfig(1))


def test_run_sgd_converges_near_truth():
    truth = _toy_truth()
    a = cp_reconstruct(truth)
    init = FactorSet([u + 0.05 for u in truth])
    cfg = RunConfig(1, sample_sizes=a.dims, init=init, skip_sign_stage=True,
                    sgd_stage=StageConfig(0.05, eps=1e-8, max_iters=5000),
                    **_quiet(**FULL_PRECISION))
    factors, trace = run(a, cfg)
    assert trace.converged, trace.final_error
    assert trace.final_error <= 1e-8
    assert trace.sign_switch == 0
    for u, v in zip(factors.factors[1:], init.factors[1:]):
        assert np.array_equal(u[0], v[0])
    back = ConvergenceTrace.from_frame(trace.to_frame(), eps=1e-8)
    assert back.sign_switch == 0 and back.converged


def test_run_trace_structure():
    a, _ = synthetic_tensor((6, 5, 4), 2, seed=0)
    cfg = RunConfig(2, sign_stage=StageConfig(0.05, eps=0.5, max_iters=30),
                    sgd_stage=StageConfig(0.01, eps=1e-6, max_iters=30),
                    **_quiet())
    _, trace = run(a, cfg)
    iters = [r.iteration for r in trace.records]
    assert iters == sorted(set(iters))
    stages = [r.stage for r in trace.records]
    assert stages[0] == SIGN
    # One switch at most, from sign to sgd
    assert stages == sorted(stages, key=lambda s: s == SGD)
    assert trace.iterations <= 60


def test_run_max_iters_not_converged():
    a, _ = synthetic_tensor((5, 5, 5), 3, seed=1)
    cfg = RunConfig(3, sign_stage=StageConfig(0.01, eps=1e-4, max_iters=5),
                    sgd_stage=StageConfig(0.01, eps=1e-12, max_iters=5),
                    **_quiet(**FULL_PRECISION))
    _, trace = run(a, cfg)
    assert not trace.converged
    assert trace.iterations == 10
    assert trace.sign_switch == 5
    assert len(trace) == 11


def test_run_eval_stride():
    a, _ = synthetic_tensor((5, 5, 5), 2, seed=2)
    cfg = RunConfig(2, eval_stride=4,
                    sign_stage=StageConfig(0.01, eps=1e-4, max_iters=10),
                    sgd_stage=StageConfig(0.01, eps=1e-12, max_iters=10),
                    **_quiet())
    _, trace = run(a, cfg)
    assert [r.iteration for r in trace.records] == [0, 4, 8, 10, 14, 18, 20]


def test_run_divergence():
    a, _ = synthetic_tensor((5, 5, 5), 2, seed=3)
    cfg = RunConfig(2, skip_sign_stage=True, sample_sizes=(5, 5, 5),
                    sgd_stage=StageConfig(1e3, eps=1e-6, max_iters=100),
                    **_quiet(**FULL_PRECISION))
    with pytest.raises(DivergenceError) as excinfo:
        run(a, cfg)
    err = excinfo.value
    assert err.trace.diverged
    assert len(err.trace) >= 1
    assert err.iteration >= 1


def test_run_freezes_rows_from_switch():
    a, _ = synthetic_tensor((6, 5, 4), 2, seed=6)
    sign = StageConfig(0.01, eps=1e-6, max_iters=20)

    def cfg(sgd_iters):
        return RunConfig(2, seed=3, sign_stage=sign,
                         sgd_stage=StageConfig(0.01, eps=1e-8,
                                               max_iters=sgd_iters),
                         **_quiet(**FULL_PRECISION))

    # The first SGD step leaves the frozen rows at their switch values
    at_switch, short = run(a, cfg(1))
    final, trace = run(a, cfg(300))
    assert short.sign_switch == trace.sign_switch == 20
    for u, v in zip(final.factors[1:], at_switch.factors[1:]):
        assert np.array_equal(u[0], v[0])
    assert not np.array_equal(final[0], at_switch[0])


@pytest.mark.parametrize('seed', range(5))
def test_run_seed_independent_of_data_seed(seed):
    a, _ = synthetic_tensor((20, 20, 20), 5, seed=seed)
    cfg = RunConfig(5, seed=seed,
                    sign_stage=StageConfig(0.5, eps=1e-2, max_iters=1),
                    sgd_stage=StageConfig(0.01, eps=1e-3, max_iters=1),
                    **_quiet(**FULL_PRECISION))
    _, trace = run(a, cfg)
    assert trace.records[0].rel_error > 0.5


def test_run_deterministic():
    a, _ = synthetic_tensor((6, 6, 6), 2, seed=4)
    cfg = RunConfig(2, seed=7,
                    sign_stage=StageConfig(0.1, eps=0.2, max_iters=50),
                    sgd_stage=StageConfig(0.01, eps=1e-3, max_iters=50),
                    q2=QuantConfig(INT8, rounding='stochastic'), **_quiet())
    f1, t1 = run(a, cfg)
    f2, t2 = run(a, cfg)
    assert f1 == f2
    assert [r.as_tuple() for r in t1.records] == \
        [r.as_tuple() for r in t2.records]


def test_trace_frame_round_trip():
    trace = ConvergenceTrace()
    trace.append(TraceRecord(0, SIGN, 0.5, 0.9, 0.0))
    trace.append(TraceRecord(3, SIGN, 0.5, 0.09, 0.0))
    trace.append(TraceRecord(4, SGD, 0.01, 0.05, 0.0))
    frame = trace.to_frame()
    assert list(frame.columns) == ConvergenceTrace.columns
    back = ConvergenceTrace.from_frame(frame)
    assert back.records == trace.records
    assert back.sign_switch == 3


def test_trace_rejects_non_increasing():
    trace = ConvergenceTrace([TraceRecord(2, SIGN, 0.5, 0.9, 0.0)])
    with pytest.raises(ValueError):
        trace.append(TraceRecord(2, SGD, 0.01, 0.5, 0.0))


def _benchmark(seed, **kwargs):
    a, _ = synthetic_tensor((20, 20, 20), 5, seed=seed)
    try:
        _, trace = run(a, RunConfig(5, seed=seed, init_magnitude=1.0,
                                    **_quiet(**kwargs)))
    except DivergenceError as err:
        trace = err.trace
    return trace


def _final_error(trace):
    err = trace.final_error
    return err if math.isfinite(err) and not trace.diverged else math.inf


@pytest.mark.slow
def test_two_stage_beats_sgd_only():
    wins = 0
    for seed in range(5):
        two_stage = _benchmark(seed, **FULL_PRECISION)
        assert two_stage.converged, (seed, two_stage.final_error)
        assert two_stage.final_error <= 1e-3
        sgd_only = _benchmark(seed, skip_sign_stage=True, **FULL_PRECISION)
        wins += two_stage.final_error < _final_error(sgd_only)
    assert wins >= 4, wins


@pytest.mark.slow
@pytest.mark.parametrize('fmt', [INT8, INT4])
def test_low_precision_close_to_full_precision(fmt):
    close = []
    for seed in range(5):
        full = _benchmark(seed, **FULL_PRECISION)
        mixed = _benchmark(seed, q1=QuantConfig(FP16, scale=1.0),
                           q2=QuantConfig(fmt))
        close.append(_final_error(mixed) <= 5 * full.final_error)
    assert sum(close) >= 4, close


@pytest.mark.slow
def test_benchmark_traces_are_reproducible(tmp_path):
    for seed in range(5):
        for skip in (False, True):
            paths = []
            for rep in range(2):
                trace = _benchmark(seed, skip_sign_stage=skip,
                                   **FULL_PRECISION)
                paths.append(tmp_path / ('trace%d_%d_%d.csv'
                                         % (seed, skip, rep)))
                write_trace(trace, paths[-1])
            assert paths[0].read_bytes() == paths[1].read_bytes(), seed
