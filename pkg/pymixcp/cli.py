"""The ``pymixcp`` command line.

Every sub-command prints machine-readable ``key=value`` lines to stdout;
log messages go to stderr. The exit status is 0 on success (or
convergence), 1 on invalid input, 2 when a decomposition stops at its
iteration cap and 3 when it diverges.
"""
__all__ = ['main', 'make_parser', 'cmd_generate', 'cmd_decompose',
           'cmd_cost', 'cmd_rankbound', 'cmd_convexity', 'cmd_experiment',
           'EXIT_OK', 'EXIT_ERROR', 'EXIT_MAX_ITERS', 'EXIT_DIVERGED']

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .analysis import check_local_convexity, cost_model, rank_bound
from .experiments import (CONVERGED, DIVERGED, DEFAULT_MAGNITUDES,
                          DEFAULT_SWEEP_FORMATS, precision_sweep,
                          run_configs, run_experiment, signsgd_comparison,
                          summary_frame, synthetic_tensor)
from .optimizer import (DEFAULT_EPS1, DEFAULT_EPS2, DEFAULT_MAX_ITERS,
                        DEFAULT_SGD_ALPHA, DEFAULT_SIGN_ALPHA,
                        DEFAULT_SIGN_ETA, DEFAULT_SIGN_INTERVAL, RunConfig,
                        StageConfig)
from .precision import PrecisionFormat, QuantConfig
from .tensor import normalize_factors
from .tensor_io import (read_factors, read_tensor, write_factors,
                        write_tensor, write_trace)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2
EXIT_DIVERGED = 3

DEFAULT_MEMORY_CAP = 10 ** 8
"""The largest number of tensor entries ``generate`` writes by default."""


def _emit(**pairs):
    """Print one line of key=value pairs."""
    print(' '.join('%s=%s' % (key, _format_value(value))
                   for key, value in pairs.items()))


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ','.join(str(v) for v in value)
    return str(value)


def _quant_config(name: str, rounding: str = 'deterministic',
                  scale: Optional[float] = None) -> QuantConfig:
    fmt = PrecisionFormat.from_name(name)
    if scale is None and not fmt.is_int:
        scale = 1.0
    return QuantConfig(fmt, scale=scale, rounding=rounding)


def _sample_sizes(args, dims: Sequence[int]):
    if args.sample_sizes is not None:
        return tuple(args.sample_sizes)
    if args.sample_frac is not None:
        if not 0 < args.sample_frac <= 1:
            raise ValueError('the sample fraction must be in (0, 1], got %g'
                             % args.sample_frac)
        return tuple(min(d, max(1, int(round(args.sample_frac * d))))
                     for d in dims)
    return None


def cmd_generate(args) -> int:
    """Write a random low-rank tensor and its ground-truth factors."""
    entries = int(np.prod(args.dims, dtype=object))
    if entries > args.memory_cap:
        raise ValueError('a tensor of dims %s has %d entries, above the '
                         'memory cap of %d' % (tuple(args.dims), entries,
                                               args.memory_cap))
    a, truth = synthetic_tensor(args.dims, args.rank, seed=args.seed,
                                distribution=args.distribution,
                                noise=args.noise,
                                max_magnitude=args.max_magnitude)
    write_tensor(a, args.out, dtype_code=2 if args.float32 else 1)
    paths = write_factors(truth, args.out)
    logger.info('Wrote %s and %d factor files' % (args.out, len(paths)))
    _emit(path=args.out, dims=a.dims, rank=args.rank, entries=entries,
          bytes=os.path.getsize(args.out))
    return EXIT_OK


def cmd_decompose(args) -> int:
    """Decompose a tensor file with the two-stage algorithm."""
    a = read_tensor(args.input)
    max_iters = args.max_iters
    cfg = RunConfig(
        args.rank,
        sample_sizes=_sample_sizes(args, a.dims),
        sign_stage=StageConfig(args.alpha0_sign, args.eta_sign, args.k_sign,
                               args.eps1, max_iters),
        sgd_stage=StageConfig(args.alpha_sgd, args.eta_sgd, args.k_sgd,
                              args.eps2, max_iters),
        q1=_quant_config(args.q1_format, scale=args.q1_scale),
        q2=_quant_config(args.q2_format, args.q2_rounding, args.q2_scale),
        seed=args.seed,
        init_magnitude=args.init_magnitude,
        init_distribution=args.init_distribution,
        eval_stride=args.eval_stride,
        skip_sign_stage=args.skip_sign,
        record_wall_time=args.wall_clock)
    result = run_experiment(a, cfg, label=os.path.basename(args.input))
    if args.trace_out:
        write_trace(result.trace, args.trace_out)
    if args.factors_out:
        write_factors(result.factors, args.factors_out)
    _emit(status=result.status, rel_error=result.final_error,
          sign_switch=result.trace.sign_switch,
          iterations=result.trace.iterations)
    if result.status == CONVERGED:
        return EXIT_OK
    if result.status == DIVERGED:
        logger.error('The decomposition diverged after %d iterations'
                     % result.trace.iterations)
        return EXIT_DIVERGED
    return EXIT_MAX_ITERS


def cmd_cost(args) -> int:
    estimate = cost_model(args.m, args.b)
    _emit(order=estimate.order, bits=estimate.bits,
          normalized_cost=estimate.cost)
    return EXIT_OK


def cmd_rankbound(args) -> int:
    bound = rank_bound(args.dims)
    _emit(r3=bound.r3, rm=bound.rm)
    return EXIT_OK


def cmd_convexity(args) -> int:
    """Run the Jacobian rank test at the factors stored under a prefix."""
    factors = read_factors(args.factors)
    if args.normalize:
        factors = normalize_factors(factors)
    report = check_local_convexity(factors, tol=args.tol)
    _emit(verdict=report.verdict, sigma_min=report.sigma_min,
          sigma_max=report.sigma_max, lambda_min=report.lambda_min,
          rows=report.shape[0], cols=report.shape[1])
    return EXIT_OK


def cmd_experiment(args) -> int:
    """Run a synthetic experiment protocol over several seeds."""
    os.makedirs(args.out_dir, exist_ok=True)
    stage_kwargs = dict(
        sign_stage=StageConfig(DEFAULT_SIGN_ALPHA, DEFAULT_SIGN_ETA,
                               DEFAULT_SIGN_INTERVAL, DEFAULT_EPS1,
                               args.max_iters),
        sgd_stage=StageConfig(DEFAULT_SGD_ALPHA, 1.0, DEFAULT_SIGN_INTERVAL,
                              DEFAULT_EPS2, args.max_iters),
        record_wall_time=args.wall_clock)
    frames = []
    for seed in args.seeds:
        a, _ = synthetic_tensor(args.dims, args.rank, seed=seed,
                                noise=args.noise)
        if args.protocol == 'signsgd':
            configs = signsgd_comparison(args.rank, args.magnitudes,
                                         seed=seed, **stage_kwargs)
        else:
            configs = precision_sweep(args.rank, args.formats, seed=seed,
                                      rounding=args.rounding, **stage_kwargs)
        results = run_configs(a, configs)
        for result in results:
            path = os.path.join(args.out_dir, '%s-seed%d.csv'
                                % (result.label, seed))
            write_trace(result.trace, path)
            _emit(seed=seed, label=result.label, status=result.status,
                  rel_error=result.final_error,
                  sign_switch=result.trace.sign_switch,
                  iterations=result.trace.iterations)
        frames.append(summary_frame(results, seed=seed))
    summary = pd.concat(frames, ignore_index=True)
    summary.to_csv(os.path.join(args.out_dir, 'summary.csv'), index=False,
                   float_format='%.17g')
    return EXIT_OK


def _add_stage_flags(parser):
    group = parser.add_argument_group('optimizer stages')
    group.add_argument('--alpha0-sign', type=float,
                       default=DEFAULT_SIGN_ALPHA)
    group.add_argument('--eta-sign', type=float, default=DEFAULT_SIGN_ETA)
    group.add_argument('--k-sign', type=int, default=DEFAULT_SIGN_INTERVAL,
                       help='Iterations between learning-rate decays.')
    group.add_argument('--alpha-sgd', type=float, default=DEFAULT_SGD_ALPHA)
    group.add_argument('--eta-sgd', type=float, default=1.0)
    group.add_argument('--k-sgd', type=int, default=DEFAULT_SIGN_INTERVAL)
    group.add_argument('--eps1', type=float, default=DEFAULT_EPS1,
                       help='Relative error that ends the SignSGD stage.')
    group.add_argument('--eps2', type=float, default=DEFAULT_EPS2,
                       help='Relative error that ends the SGD stage.')
    group.add_argument('--max-iters', type=int, default=DEFAULT_MAX_ITERS,
                       help='Iteration cap of each stage.')
    group.add_argument('--skip-sign', action='store_true',
                       help='Run the SGD stage only.')


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pymixcp',
        description='Mixed-precision stochastic CP tensor decomposition.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='cmd', required=True)

    pg = sub.add_parser('generate', help='Write a random low-rank tensor.')
    pg.add_argument('--dims', type=int, nargs='+', required=True)
    pg.add_argument('--rank', type=int, required=True)
    pg.add_argument('--seed', type=int, default=0)
    pg.add_argument('--distribution', choices=['uniform', 'normal'],
                    default='uniform')
    pg.add_argument('--max-magnitude', type=float, default=1.0)
    pg.add_argument('--noise', type=float, default=0.0,
                    help='Standard deviation of additive Gaussian noise.')
    pg.add_argument('--float32', action='store_true',
                    help='Store 32-bit entries.')
    pg.add_argument('--memory-cap', type=int, default=DEFAULT_MEMORY_CAP,
                    help='Largest number of entries to generate.')
    pg.add_argument('--out', required=True)
    pg.set_defaults(func=cmd_generate)

    pdec = sub.add_parser('decompose', help='Decompose a tensor file.')
    pdec.add_argument('input')
    pdec.add_argument('--rank', type=int, required=True)
    pdec.add_argument('--q1-format', default='fp16')
    pdec.add_argument('--q1-scale', type=float, default=None)
    pdec.add_argument('--q2-format', default='int8')
    pdec.add_argument('--q2-rounding', choices=['deterministic', 'stochastic'],
                     default='deterministic')
    pdec.add_argument('--q2-scale', type=float, default=None,
                     help='Fixed scale factor; integer formats choose one '
                          'per operand by default.')
    _add_stage_flags(pdec)
    sizes = pdec.add_mutually_exclusive_group()
    sizes.add_argument('--sample-frac', type=float, default=None)
    sizes.add_argument('--sample-sizes', type=int, nargs='+', default=None)
    pdec.add_argument('--seed', type=int, default=0)
    pdec.add_argument('--init-magnitude', type=float, default=1.0)
    pdec.add_argument('--init-distribution', choices=['uniform', 'normal'],
                     default='uniform')
    pdec.add_argument('--eval-stride', type=int, default=1)
    pdec.add_argument('--wall-clock', action='store_true',
                     help='Record wall-clock times in the trace.')
    pdec.add_argument('--trace-out', default=None)
    pdec.add_argument('--factors-out', default=None,
                     help='Prefix of the factor files to write.')
    pdec.set_defaults(func=cmd_decompose)

    pc = sub.add_parser('cost', help='Normalized gradient cost.')
    pc.add_argument('m', type=int)
    pc.add_argument('b', type=int)
    pc.set_defaults(func=cmd_cost)

    pr = sub.add_parser('rankbound', help='Local convexity rank bounds.')
    pr.add_argument('dims', type=int, nargs='+')
    pr.set_defaults(func=cmd_rankbound)

    pv = sub.add_parser('convexity', help='Jacobian rank test.')
    pv.add_argument('factors', help='Prefix of the factor files.')
    pv.add_argument('--tol', type=float, default=1e-10)
    pv.add_argument('--normalize', action='store_true',
                    help='Normalize the leading rows to one first.')
    pv.set_defaults(func=cmd_convexity)

    pe = sub.add_parser('experiment', help='Run a synthetic protocol.')
    pe.add_argument('protocol', choices=['signsgd', 'precision'])
    pe.add_argument('--dims', type=int, nargs='+', default=[20, 20, 20])
    pe.add_argument('--rank', type=int, default=5)
    pe.add_argument('--seeds', type=int, nargs='+', default=[0])
    pe.add_argument('--noise', type=float, default=0.0)
    pe.add_argument('--magnitudes', type=float, nargs='+',
                    default=list(DEFAULT_MAGNITUDES))
    pe.add_argument('--formats', nargs='+',
                    default=list(DEFAULT_SWEEP_FORMATS))
    pe.add_argument('--rounding', choices=['deterministic', 'stochastic'],
                    default='deterministic')
    pe.add_argument('--max-iters', type=int, default=DEFAULT_MAX_ITERS)
    pe.add_argument('--wall-clock', action='store_true')
    pe.add_argument('--out-dir', required=True)
    pe.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(levelname)s: [%(asctime)s] %(name)s - '
                               '%(message)s')
    try:
        return args.func(args)
    except (ValueError, IndexError, ZeroDivisionError, OSError) as err:
        logger.error(str(err))
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
