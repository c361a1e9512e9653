"""This module implements the two-stage mixed-precision optimizer: a
SignSGD stage that moves every factor entry by the learning rate in the
direction opposite to the sign of its quantized block gradient, followed
by an SGD stage on the normalized problem in which the first row of
U_2, ..., U_m stays frozen."""
__all__ = ['StageConfig', 'RunConfig', 'TraceRecord', 'ConvergenceTrace',
           'init_factors', 'signsgd_step', 'sgd_step', 'schedule_alpha',
           'run', 'DivergenceError', 'PYMIXCP_TQDM_CONFIG', 'SIGN', 'SGD',
           'RUN_STREAM']

import logging
import math
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .gradient import (GradientSet, block_gradient_mixed,
                       default_sample_sizes, sample_block)
from .precision import (FP16, INT8, ConfigError, QuantConfig,
                        QuantizationInputError)
from .tensor import DenseTensor, FactorSet, fro_norm, relative_error
from .tensor.operations import ZeroNormError

logger = logging.getLogger(__name__)

PYMIXCP_TQDM_CONFIG = {"unit_scale": True, "leave": False}
"""Default configuration for tqdm progress bars in pymixcp. To modify
the tqdm configuration, modify this module-level variable. For example,
to disable the progress bars, set the ``disable`` key to ``True``."""

SIGN = 'sign'
SGD = 'sgd'

DEFAULT_SIGN_ALPHA = 0.5
DEFAULT_SIGN_ETA = 0.3
DEFAULT_SIGN_INTERVAL = 1000
DEFAULT_SGD_ALPHA = 0.01
DEFAULT_EPS1 = 3e-3
DEFAULT_EPS2 = 1e-3
DEFAULT_MAX_ITERS = 20000
DIVERGENCE_THRESHOLD = 1e3

# Run streams are keyed apart from the synthetic data streams so that equal
# seeds never start a run at the ground truth
RUN_STREAM = 1


class StageConfig:
    """Learning-rate schedule and stopping rule of one optimizer stage.

    Parameters
    ----------
    alpha0 :
        The initial learning rate.
    eta :
        The decay multiplier in (0, 1]; 1 keeps the learning rate constant.
    interval :
        The learning rate is multiplied by ``eta`` every ``interval``
        iterations of the stage.
    eps :
        The stage ends once the relative error is at most ``eps``.
    max_iters :
        The maximum number of iterations of the stage.
    """

    def __init__(self, alpha0: float, eta: float = 1.0, interval: int = 1000,
                 eps: float = DEFAULT_EPS2,
                 max_iters: int = DEFAULT_MAX_ITERS):
        if not alpha0 > 0:
            raise ConfigError('initial learning rate', alpha0)
        if not 0 < eta <= 1:
            raise ConfigError('decay multiplier', eta)
        if int(interval) < 1:
            raise ConfigError('decay interval', interval)
        if not eps > 0:
            raise ConfigError('stopping threshold', eps)
        if int(max_iters) < 1:
            raise ConfigError('maximum iterations', max_iters)
        self.alpha0 = float(alpha0)
        self.eta = float(eta)
        self.interval = int(interval)
        self.eps = float(eps)
        self.max_iters = int(max_iters)

    @classmethod
    def sign_default(cls) -> "StageConfig":
        return cls(DEFAULT_SIGN_ALPHA, DEFAULT_SIGN_ETA,
                   DEFAULT_SIGN_INTERVAL, DEFAULT_EPS1)

    @classmethod
    def sgd_default(cls) -> "StageConfig":
        return cls(DEFAULT_SGD_ALPHA, 1.0, DEFAULT_SIGN_INTERVAL,
                   DEFAULT_EPS2)

    def __repr__(self):
        return 'StageConfig(alpha0=%g, eta=%g, interval=%d, eps=%g, ' \
               'max_iters=%d)' % (self.alpha0, self.eta, self.interval,
                                  self.eps, self.max_iters)


class RunConfig:
    """Hyperparameters of a two-stage decomposition run.

    Parameters
    ----------
    rank :
        The CP rank r.
    sample_sizes :
        The block sizes n_1, ..., n_m. Defaults to
        :func:`pymixcp.gradient.default_sample_sizes` of the tensor.
    sign_stage :
        The SignSGD stage. Defaults to alpha0=0.5, eta=0.3, interval=1000,
        eps=3e-3.
    sgd_stage :
        The SGD stage. Defaults to a constant alpha=0.01, eps=1e-3.
    q1 :
        The factor quantization. Defaults to FP16 with scale 1.
    q2 :
        The product-operand quantization. Defaults to INT8 with an
        automatic scale and deterministic rounding.
    seed :
        The seed from which the initialization, sampling and rounding
        streams are derived.
    init_magnitude :
        The maximum absolute value of the random initial factors.
    init_distribution :
        ``'uniform'`` or ``'normal'``, see :func:`init_factors`.
    init :
        Explicit initial factors, overriding the random initialization.
    eval_stride :
        The number of iterations between relative-error evaluations.
    skip_sign_stage :
        If True, start directly with the SGD stage.
    absorb_block_scale :
        If True, SGD steps use the unnormalized block product, i.e. the
        learning rate is multiplied by n / 2 relative to the normalized
        block gradient.
    divergence_threshold :
        A relative error above this value aborts the run.
    record_wall_time :
        If False, wall-clock times in the trace are recorded as 0, which
        makes traces of repeated runs identical.
    """

    def __init__(self, rank: int, sample_sizes: Optional[Sequence[int]] = None,
                 sign_stage: Optional[StageConfig] = None,
                 sgd_stage: Optional[StageConfig] = None,
                 q1: Optional[QuantConfig] = None,
                 q2: Optional[QuantConfig] = None, seed: int = 0,
                 init_magnitude: float = 1.0,
                 init_distribution: str = 'uniform',
                 init: Optional[FactorSet] = None, eval_stride: int = 1,
                 skip_sign_stage: bool = False,
                 absorb_block_scale: bool = True,
                 divergence_threshold: float = DIVERGENCE_THRESHOLD,
                 record_wall_time: bool = True):
        if int(rank) < 1:
            raise ConfigError('rank', rank)
        self.rank = int(rank)
        self.sample_sizes = None if sample_sizes is None \
            else tuple(int(n) for n in sample_sizes)
        self.sign_stage = sign_stage if sign_stage is not None \
            else StageConfig.sign_default()
        self.sgd_stage = sgd_stage if sgd_stage is not None \
            else StageConfig.sgd_default()
        if not self.sign_stage.eps > self.sgd_stage.eps:
            raise ConfigError('thresholds (eps1 must exceed eps2)',
                              (self.sign_stage.eps, self.sgd_stage.eps))
        self.q1 = q1 if q1 is not None else QuantConfig(FP16, scale=1.0)
        self.q2 = q2 if q2 is not None else QuantConfig(INT8)
        self.seed = int(seed)
        if not init_magnitude > 0:
            raise ConfigError('initial magnitude', init_magnitude)
        self.init_magnitude = float(init_magnitude)
        if init_distribution not in ('uniform', 'normal'):
            raise ConfigError('initial distribution', init_distribution)
        self.init_distribution = init_distribution
        if init is not None and init.rank != self.rank:
            raise ConfigError('initial factors of rank', init.rank)
        self.init = init
        if int(eval_stride) < 1:
            raise ConfigError('evaluation stride', eval_stride)
        self.eval_stride = int(eval_stride)
        self.skip_sign_stage = bool(skip_sign_stage)
        self.absorb_block_scale = bool(absorb_block_scale)
        if not divergence_threshold > 0:
            raise ConfigError('divergence threshold', divergence_threshold)
        self.divergence_threshold = float(divergence_threshold)
        self.record_wall_time = bool(record_wall_time)

    def resolve_sample_sizes(self, dims: Sequence[int]) -> Tuple[int, ...]:
        if self.sample_sizes is None:
            return default_sample_sizes(dims)
        if len(self.sample_sizes) != len(dims):
            raise ConfigError('sample sizes for a tensor of order %d'
                              % len(dims), self.sample_sizes)
        return self.sample_sizes


class TraceRecord:
    """One relative-error evaluation of a run."""

    def __init__(self, iteration: int, stage: str, alpha: float,
                 rel_error: float, wall_ms: float):
        self.iteration = iteration
        self.stage = stage
        self.alpha = alpha
        self.rel_error = rel_error
        self.wall_ms = wall_ms

    def __eq__(self, other):
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def as_tuple(self):
        return (self.iteration, self.stage, self.alpha, self.rel_error,
                self.wall_ms)

    def __repr__(self):
        return 'TraceRecord(%d, %s, alpha=%g, rel_error=%g)' % (
            self.iteration, self.stage, self.alpha, self.rel_error)


class ConvergenceTrace:
    """The evaluation log of a run.

    Attributes
    ----------
    records : List[TraceRecord]
        Evaluations in increasing iteration order.
    sign_switch : Optional[int]
        The iteration s^sign at which the SGD stage started.
    converged : bool
        True if the final relative error reached the SGD threshold.
    diverged : bool
        True if the run was aborted by divergence.
    """

    columns = ['iter', 'stage', 'alpha', 'rel_error', 'wall_ms']

    def __init__(self, records: Optional[List[TraceRecord]] = None,
                 sign_switch: Optional[int] = None, converged: bool = False,
                 diverged: bool = False):
        self.records = records if records else []
        self.sign_switch = sign_switch
        self.converged = converged
        self.diverged = diverged

    def append(self, record: TraceRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError('trace iterations must increase, got %d after %d'
                             % (record.iteration, self.records[-1].iteration))
        self.records.append(record)

    @property
    def final_error(self) -> float:
        return self.records[-1].rel_error if self.records else math.nan

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    def errors(self, stage: Optional[str] = None) -> List[float]:
        return [r.rel_error for r in self.records
                if stage is None or r.stage == stage]

    def to_frame(self) -> pd.DataFrame:
        """Return the records as a DataFrame with the TraceFile columns."""
        return pd.DataFrame([r.as_tuple() for r in self.records],
                            columns=self.columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame,
                   eps: Optional[float] = None,
                   divergence_threshold: float = DIVERGENCE_THRESHOLD) \
            -> "ConvergenceTrace":
        """Return a trace from a DataFrame with the TraceFile columns.

        The run flags are not part of the columns and are derived from the
        records. A trace is marked diverged if its last relative error is
        non-finite or above ``divergence_threshold``; runs aborted for
        non-finite factors or gradient operands end on a finite record and
        are not recognized. The switch iteration is the last sign-stage
        iteration, 0 when the sign stage was skipped, and None for a run
        that diverged before reaching the SGD stage.

        Parameters
        ----------
        frame :
            The records.
        eps :
            The SGD-stage threshold. If given, the trace is marked
            converged when its last relative error is at most ``eps``.
        divergence_threshold :
            The divergence threshold of the run.

        Returns
        -------
        :
            The trace.
        """
        trace = cls()
        for row in frame.itertuples(index=False):
            trace.append(TraceRecord(int(row.iter), str(row.stage),
                                     float(row.alpha), float(row.rel_error),
                                     float(row.wall_ms)))
        if not trace.records:
            return trace
        final = trace.final_error
        trace.diverged = not math.isfinite(final) or \
            final > divergence_threshold
        # The last sign-stage evaluation is always taken at the switch
        sign_iters = [r.iteration for r in trace.records if r.stage == SIGN]
        reached_sgd = any(r.stage == SGD for r in trace.records)
        if trace.diverged and sign_iters and not reached_sgd:
            trace.sign_switch = None
        else:
            trace.sign_switch = sign_iters[-1] if sign_iters else 0
        trace.converged = eps is not None and not trace.diverged and \
            final <= eps
        return trace

    def __len__(self):
        return len(self.records)


def init_factors(dims: Sequence[int], r: int, max_magnitude: float,
                 rng: np.random.Generator,
                 distribution: str = 'uniform') -> FactorSet:
    """Return random factor matrices.

    Parameters
    ----------
    dims :
        The tensor dimensions.
    r :
        The rank.
    max_magnitude :
        For ``'uniform'``, entries are drawn i.i.d. from
        [-max_magnitude, max_magnitude]. For ``'normal'``, each factor is
        drawn from a standard normal and rescaled so that its largest
        absolute entry equals max_magnitude.
    rng :
        The random stream to draw from.
    distribution :
        ``'uniform'`` or ``'normal'``.

    Returns
    -------
    :
        The random factor set.
    """
    if not max_magnitude > 0:
        raise ConfigError('maximum magnitude', max_magnitude)
    factors = []
    for dim in dims:
        if distribution == 'uniform':
            u = rng.uniform(-max_magnitude, max_magnitude, size=(dim, r))
        elif distribution == 'normal':
            u = rng.standard_normal(size=(dim, r))
            u *= max_magnitude / np.max(np.abs(u))
        else:
            raise ConfigError('distribution', distribution)
        factors.append(u)
    return FactorSet(factors)


def signsgd_step(f: FactorSet, grad: GradientSet, alpha: float) -> FactorSet:
    """Return U_i - alpha * sign(G_i) for every factor.

    Entries with a zero gradient, including all rows outside the sampled
    block, are unchanged.
    """
    if not alpha > 0:
        raise ConfigError('learning rate', alpha)
    return FactorSet([u - alpha * np.sign(g) for u, g in zip(f, grad)])


def sgd_step(f: FactorSet, grad: GradientSet, alpha: float) -> FactorSet:
    """Return the gradient step with the first row of U_2..U_m frozen.

    U_1 moves on every row; U_2, ..., U_m move on rows 2 to N_i only, so
    their first rows are left bitwise unchanged.
    """
    if not alpha > 0:
        raise ConfigError('learning rate', alpha)
    mats = f.copy_arrays()
    mats[0] = mats[0] - alpha * grad[0]
    for i in range(1, len(mats)):
        mats[i][1:] = mats[i][1:] - alpha * grad[i][1:]
    return FactorSet(mats)


def schedule_alpha(alpha: float, stage_iter: int, cfg: StageConfig) -> float:
    """Return the learning rate after ``stage_iter`` iterations of a stage.

    The rate is multiplied by ``cfg.eta`` exactly when ``stage_iter`` is a
    positive multiple of ``cfg.interval``.
    """
    if stage_iter > 0 and stage_iter % cfg.interval == 0:
        return cfg.eta * alpha
    return alpha


class _Run:
    """The mutable state of one call to :func:`run`."""

    def __init__(self, a: DenseTensor, cfg: RunConfig):
        self.a = a
        self.cfg = cfg
        self.sizes = cfg.resolve_sample_sizes(a.dims)
        self.block_n = int(np.prod(self.sizes))
        init_seq, sample_seq, round_seq = \
            np.random.SeedSequence([cfg.seed, RUN_STREAM]).spawn(3)
        self.sample_rng = np.random.default_rng(sample_seq)
        self.round_rng = np.random.default_rng(round_seq)
        if cfg.init is not None:
            if cfg.init.dims != a.dims:
                raise ConfigError('initial factors of dims', cfg.init.dims)
            self.factors = cfg.init
        else:
            self.factors = init_factors(a.dims, cfg.rank, cfg.init_magnitude,
                                        np.random.default_rng(init_seq),
                                        cfg.init_distribution)
        self.trace = ConvergenceTrace()
        self.iteration = 0
        self.start = time.perf_counter()

    def evaluate(self, stage: str, alpha: float) -> float:
        err = relative_error(self.a, self.factors)
        wall_ms = (time.perf_counter() - self.start) * 1000.0 \
            if self.cfg.record_wall_time else 0.0
        self.trace.append(TraceRecord(self.iteration, stage, alpha, err,
                                      wall_ms))
        logger.debug('Iteration %d (%s): alpha=%g, relative error=%.6e'
                     % (self.iteration, stage, alpha, err))
        if not math.isfinite(err) or err > self.cfg.divergence_threshold:
            self.diverge('relative error %g' % err)
        return err

    def diverge(self, reason: str):
        self.trace.diverged = True
        logger.error('Run diverged at iteration %d: %s'
                     % (self.iteration, reason))
        raise DivergenceError(self.trace, self.factors, self.iteration,
                              reason)

    def gradient(self) -> GradientSet:
        block = sample_block(self.a.dims, self.sizes, self.sample_rng)
        try:
            return block_gradient_mixed(self.a, self.factors, block,
                                        self.cfg.q1, self.cfg.q2,
                                        self.round_rng)
        except QuantizationInputError as err:
            self.diverge(str(err))

    def stage(self, name: str, stage_cfg: StageConfig, err: float) -> float:
        alpha = stage_cfg.alpha0
        stage_iter = 0
        evaluated = True
        scale = self.block_n / 2.0 \
            if name == SGD and self.cfg.absorb_block_scale else 1.0
        tqdm_kwargs = {'desc': 'SignSGD stage' if name == SIGN
                       else 'SGD stage', 'total': stage_cfg.max_iters}
        tqdm_kwargs.update(PYMIXCP_TQDM_CONFIG)
        with tqdm(**tqdm_kwargs) as pbar:
            while err > stage_cfg.eps and stage_iter < stage_cfg.max_iters:
                grad = self.gradient()
                if name == SIGN:
                    self.factors = signsgd_step(self.factors, grad, alpha)
                else:
                    self.factors = sgd_step(self.factors, grad,
                                            alpha * scale)
                self.iteration += 1
                stage_iter += 1
                alpha = schedule_alpha(alpha, stage_iter, stage_cfg)
                pbar.update(1)
                if not all(np.all(np.isfinite(u)) for u in self.factors):
                    self.diverge('non-finite factor entries')
                evaluated = stage_iter % self.cfg.eval_stride == 0
                if evaluated:
                    err = self.evaluate(name, alpha)
                    pbar.set_postfix(rel_error='%.3e' % err, refresh=False)
        if not evaluated:
            err = self.evaluate(name, alpha)
        if err > stage_cfg.eps:
            logger.warning('%s stage stopped after %d iterations at relative '
                           'error %.3e (threshold %g)'
                           % (name, stage_iter, err, stage_cfg.eps))
        return err


def run(a: DenseTensor, cfg: RunConfig) -> Tuple[FactorSet, ConvergenceTrace]:
    """Decompose a tensor with the two-stage mixed-precision algorithm.

    The SignSGD stage runs until the relative error is at most
    ``cfg.sign_stage.eps`` or its iteration cap is hit. The iteration
    count at that point is recorded as the stage switch, the learning rate
    is reset, and the SGD stage runs with the first row of U_2..U_m frozen
    until the relative error is at most ``cfg.sgd_stage.eps`` or its cap
    is hit.

    Parameters
    ----------
    a :
        The tensor to decompose, with a nonzero norm.
    cfg :
        The run configuration.

    Returns
    -------
    :
        The final factors and the convergence trace. The trace's
        ``converged`` flag is False when an iteration cap ended the run.

    Raises
    ------
    DivergenceError
        If the relative error becomes non-finite or exceeds the
        divergence threshold. The error carries the partial trace.
    """
    if fro_norm(a) == 0:
        raise ZeroNormError()
    state = _Run(a, cfg)
    logger.info('Decomposing a tensor of dims %s at rank %d with q1=%s, '
                'q2=%s, sample sizes %s'
                % (str(a.dims), cfg.rank, cfg.q1, cfg.q2, str(state.sizes)))
    first_stage = SGD if cfg.skip_sign_stage else SIGN
    err = state.evaluate(first_stage, cfg.sgd_stage.alpha0
                         if cfg.skip_sign_stage else cfg.sign_stage.alpha0)
    if not cfg.skip_sign_stage:
        err = state.stage(SIGN, cfg.sign_stage, err)
    state.trace.sign_switch = state.iteration
    logger.info('Switching to SGD at iteration %d with relative error %.3e'
                % (state.iteration, err))
    err = state.stage(SGD, cfg.sgd_stage, err)
    state.trace.converged = err <= cfg.sgd_stage.eps
    if state.trace.converged:
        logger.info('Converged after %d iterations, relative error %.3e'
                    % (state.iteration, err))
    else:
        logger.warning('Maximum iterations reached, relative error %.3e'
                       % err)
    return state.factors, state.trace


class DivergenceError(RuntimeError):
    def __init__(self, trace: ConvergenceTrace, factors: FactorSet,
                 iteration: int, reason: str):
        self.trace = trace
        self.factors = factors
        self.iteration = iteration
        self.reason = reason

    def __str__(self):
        return f'The decomposition diverged at iteration {self.iteration} ' \
               f'({self.reason}).'
