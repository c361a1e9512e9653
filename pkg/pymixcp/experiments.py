"""Synthetic benchmarks: random low-rank tensors and the two experiment
protocols, the role of the SignSGD stage across initial magnitudes and the
convergence of the algorithm as the product precision is lowered."""
__all__ = ['synthetic_tensor', 'ExperimentResult', 'run_experiment',
           'run_configs', 'signsgd_comparison', 'precision_sweep',
           'summary_frame', 'CONVERGED', 'MAX_ITERS', 'DIVERGED',
           'DATA_STREAM']

import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .optimizer import (PYMIXCP_TQDM_CONFIG, ConvergenceTrace,
                        DivergenceError, RunConfig, init_factors, run)
from .precision import FP16, FP64, PrecisionFormat, QuantConfig
from .tensor import DenseTensor, FactorSet, cp_reconstruct

logger = logging.getLogger(__name__)

CONVERGED = 'converged'
MAX_ITERS = 'max_iters'
DIVERGED = 'diverged'

DEFAULT_MAGNITUDES = (1.0, 0.1, 0.01)
DEFAULT_SWEEP_FORMATS = ('int8', 'int4', 'int2', 'fp64')

# See pymixcp.optimizer.RUN_STREAM
DATA_STREAM = 0


def synthetic_tensor(dims: Sequence[int], rank: int, seed: int = 0,
                     distribution: str = 'uniform', noise: float = 0.0,
                     max_magnitude: float = 1.0) \
        -> Tuple[DenseTensor, FactorSet]:
    """Return a random rank-r tensor and its ground-truth factors.

    Parameters
    ----------
    dims :
        The tensor dimensions.
    rank :
        The rank of the ground truth.
    seed :
        The seed of the factor and noise streams.
    distribution :
        The factor distribution, see :func:`pymixcp.optimizer.init_factors`.
    noise :
        The standard deviation of i.i.d. Gaussian noise added to every
        entry. No noise is drawn when it is 0.
    max_magnitude :
        The largest absolute factor entry.

    Returns
    -------
    :
        The tensor and the factors it was built from.
    """
    if noise < 0:
        raise ValueError('the noise level must be non-negative, got %g'
                         % noise)
    factor_seq, noise_seq = \
        np.random.SeedSequence([seed, DATA_STREAM]).spawn(2)
    truth = init_factors(dims, rank, max_magnitude,
                         np.random.default_rng(factor_seq), distribution)
    a = cp_reconstruct(truth)
    if noise > 0:
        rng = np.random.default_rng(noise_seq)
        a = DenseTensor(a.dims, a.data + noise * rng.standard_normal(a.dims))
    return a, truth


class ExperimentResult:
    """The outcome of one configuration of an experiment.

    Attributes
    ----------
    label : str
        The configuration name.
    status : str
        One of ``converged``, ``max_iters`` and ``diverged``.
    trace : ConvergenceTrace
        The full trace, partial if the run diverged.
    factors : FactorSet
        The final factors.
    """

    def __init__(self, label: str, status: str, trace: ConvergenceTrace,
                 factors: FactorSet):
        self.label = label
        self.status = status
        self.trace = trace
        self.factors = factors

    @property
    def final_error(self) -> float:
        return self.trace.final_error

    def __repr__(self):
        return 'ExperimentResult(%s, %s, rel_error=%.3e)' % (
            self.label, self.status, self.final_error)


def run_experiment(a: DenseTensor, cfg: RunConfig,
                   label: str = 'run') -> ExperimentResult:
    """Run one decomposition, recording divergence instead of raising."""
    try:
        factors, trace = run(a, cfg)
    except DivergenceError as err:
        return ExperimentResult(label, DIVERGED, err.trace, err.factors)
    status = CONVERGED if trace.converged else MAX_ITERS
    return ExperimentResult(label, status, trace, factors)


def run_configs(a: DenseTensor, configs: Mapping[str, RunConfig]) \
        -> List[ExperimentResult]:
    """Run a set of named configurations on the same tensor."""
    results = []
    tqdm_kwargs = {'desc': 'Running configurations'}
    tqdm_kwargs.update(PYMIXCP_TQDM_CONFIG)
    for label, cfg in tqdm(configs.items(), **tqdm_kwargs):
        result = run_experiment(a, cfg, label)
        logger.info('%s: %s after %d iterations, relative error %.3e'
                    % (label, result.status, result.trace.iterations,
                       result.final_error))
        results.append(result)
    return results


def signsgd_comparison(rank: int,
                       magnitudes: Sequence[float] = DEFAULT_MAGNITUDES,
                       seed: int = 0, **kwargs) -> Dict[str, RunConfig]:
    """Return the configurations comparing runs with and without SignSGD.

    Every run is in full precision. For each initial magnitude, a
    two-stage run and an SGD-only run start from the same random factors.

    Parameters
    ----------
    rank :
        The decomposition rank.
    magnitudes :
        The maximum absolute values of the initial factors.
    seed :
        The run seed shared by all configurations.
    kwargs :
        Further :class:`pymixcp.optimizer.RunConfig` arguments.

    Returns
    -------
    :
        Configurations labelled ``with-sign-max<m>`` and
        ``without-sign-max<m>``.
    """
    configs = {}
    for magnitude in magnitudes:
        for skip in (False, True):
            label = '%s-sign-max%g' % ('without' if skip else 'with',
                                       magnitude)
            configs[label] = RunConfig(
                rank, seed=seed, init_magnitude=magnitude,
                skip_sign_stage=skip, q1=QuantConfig(FP64, scale=1.0),
                q2=QuantConfig(FP64, scale=1.0), **kwargs)
    return configs


def precision_sweep(rank: int,
                    formats: Sequence[str] = DEFAULT_SWEEP_FORMATS,
                    seed: int = 0, rounding: str = 'deterministic',
                    **kwargs) -> Dict[str, RunConfig]:
    """Return the configurations of a product-precision sweep.

    Low-precision runs stage the factors in FP16 and quantize the product
    operands to the given format. A 64-bit float format is run in full
    precision throughout and serves as the reference.

    Parameters
    ----------
    rank :
        The decomposition rank.
    formats :
        Names accepted by :meth:`pymixcp.precision.PrecisionFormat.from_name`.
    seed :
        The run seed shared by all configurations.
    rounding :
        The rounding mode of the product operands.
    kwargs :
        Further :class:`pymixcp.optimizer.RunConfig` arguments.

    Returns
    -------
    :
        Configurations labelled by format name.
    """
    configs = {}
    for name in formats:
        fmt = PrecisionFormat.from_name(name)
        if fmt == FP64:
            q1 = QuantConfig(FP64, scale=1.0)
            q2 = QuantConfig(FP64, scale=1.0)
        else:
            q1 = QuantConfig(FP16, scale=1.0)
            q2 = QuantConfig(fmt, rounding=rounding)
        configs[fmt.name] = RunConfig(rank, seed=seed, q1=q1, q2=q2,
                                      **kwargs)
    return configs


def summary_frame(results: Sequence[ExperimentResult],
                  seed: Optional[int] = None) -> pd.DataFrame:
    """Return one row per result with its status and final error."""
    rows = [(r.label, r.status, r.trace.iterations, r.trace.sign_switch,
             r.final_error) for r in results]
    frame = pd.DataFrame(rows, columns=['label', 'status', 'iterations',
                                        'sign_switch', 'rel_error'])
    if seed is not None:
        frame.insert(0, 'seed', seed)
    return frame
