"""
Online updates of resource efficiency beliefs.

Two update schemes are available:

- :func:`exp_update` blends the current mean and variance with the mean and variance of a batch
  of observed efficiencies, ``mu <- (1 - a) mu + a y``, ``s2 <- (1 - a) s2 + a v``. This is moment
  matching, not a conjugate posterior. The weight ``a`` is constant, ``1 / (t + 1)`` (running
  average) or adaptive ``s2 / (s2 + s2_obs / n)``.
- :func:`kalman_update` is the linear-Gaussian Kalman filter update.

.. code-block:: python

    >>> s = kalman_update(KalmanState([1.0], [[1.0]], noise=[[1.0]]), [2.0])
    >>> float(s.mean[0]), float(s.cov[0, 0])
    (1.5, 0.5)
"""
import typing
import logging
import dataclasses

import numpy as np
from scipy import linalg

from rbpredict.errors import (
    ValidationError, VarianceUnderflow, SingularInnovation, InvalidConfig,
)
from rbpredict.rbm import ActivityWorkSpec, EfficiencyDistribution, aggregate_duration

__all__ = [
    'RULES', 'VARIANCE_FLOOR', 'ResourcePosterior', 'KalmanState', 'update_weight', 'exp_update',
    'kalman_update', 'observed_efficiencies', 'update_posteriors']

RULES = ('constant', 'sample_average', 'adaptive')
VARIANCE_FLOOR = 1e-8


@dataclasses.dataclass(frozen=True)
class ResourcePosterior:
    """
    Belief about the efficiency of one resource.
    """
    #: Efficiency mean.
    mean: float = 1.0
    #: Efficiency variance.
    variance: float = 0.25
    #: Observation noise variance, used by the adaptive rule.
    obs_noise: float = 0.01
    rule: str = 'adaptive'
    #: Weight of the constant rule.
    alpha: float = 0.1
    #: Number of updates applied so far.
    n: int = 0

    def __post_init__(self):
        if self.rule not in RULES:
            raise InvalidConfig('Unknown update rule {}; choose from {}'.format(self.rule, RULES))
        if not 0 <= self.alpha <= 1:
            raise InvalidConfig('alpha must be in [0, 1]')
        if not self.variance > 0:
            raise ValidationError('Posterior variance must be positive')
        if self.obs_noise < 0:
            raise ValidationError('Observation noise must be non-negative')

    def distribution(self, family: str = 'lognormal') -> EfficiencyDistribution:
        return EfficiencyDistribution(family, [self.mean], [self.variance])


def update_weight(post: ResourcePosterior, t: int, n_obs: int = 1) -> float:
    if post.rule == 'constant':
        return post.alpha
    if post.rule == 'sample_average':
        return 1.0 / (t + 1)
    return post.variance / (post.variance + post.obs_noise / max(n_obs, 1))


def exp_update(post: ResourcePosterior,
               batch_mean: float,
               batch_variance: float,
               t: typing.Optional[int] = None,
               n_obs: int = 1,
               strict: bool = False,
               log=None) -> ResourcePosterior:
    """
    :param t: Update index for the running-average rule, defaults to the number of updates \
    applied so far.
    :param n_obs: Number of observations in the batch, for the adaptive rule.
    :param strict: Raise `VarianceUnderflow` instead of flooring a vanishing variance.
    """
    if batch_variance < 0:
        raise ValidationError('Batch variance must be non-negative')
    a = update_weight(post, post.n if t is None else t, n_obs)
    mean = (1 - a) * post.mean + a * float(batch_mean)
    var = (1 - a) * post.variance + a * float(batch_variance)
    if var < VARIANCE_FLOOR:
        if strict:
            raise VarianceUnderflow('Posterior variance {} below {}'.format(var, VARIANCE_FLOOR))
        (log or logging.getLogger(__name__)).warning(
            'Posterior variance {:.3g} floored at {}'.format(var, VARIANCE_FLOOR))
        var = VARIANCE_FLOOR
    return dataclasses.replace(post, mean=mean, variance=var, n=post.n + 1)


@dataclasses.dataclass
class KalmanState:
    """
    Gaussian belief ``N(mean, cov)`` about a vector of efficiencies with observation model
    ``y = H x + e``, ``e ~ N(0, noise)``. `H` defaults to the identity.
    """
    mean: np.ndarray
    cov: np.ndarray
    noise: np.ndarray
    H: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        d = self.mean.size
        self.cov = np.asarray(self.cov, dtype=float).reshape(d, d)
        if self.H is None:
            self.H = np.eye(d)
        self.H = np.asarray(self.H, dtype=float).reshape(-1, d)
        k = self.H.shape[0]
        self.noise = np.asarray(self.noise, dtype=float).reshape(k, k)

    def validate(self) -> bool:
        """Check that the covariance is symmetric positive semi-definite."""
        if not np.allclose(self.cov, self.cov.T):
            return False
        try:
            # Jitter admits semi-definite matrices.
            linalg.cholesky(self.cov + 1e-12 * np.eye(self.mean.size), lower=True)
        except linalg.LinAlgError:
            return False
        return True


def kalman_update(state: KalmanState, y) -> KalmanState:
    """
    :raises SingularInnovation: if ``H cov H' + noise`` is not invertible.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    H, P = state.H, state.cov
    S = H @ P @ H.T + state.noise
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1 / np.finfo(float).eps:
        raise SingularInnovation('Innovation covariance is singular')
    try:
        K = linalg.solve(S, H @ P, assume_a='sym').T
    except linalg.LinAlgError as e:
        raise SingularInnovation(str(e))
    mean = state.mean + K @ (y - H @ state.mean)
    cov = (np.eye(state.mean.size) - K @ H) @ P
    return KalmanState(mean, (cov + cov.T) / 2, state.noise.copy(), H.copy())


def observed_efficiencies(spec: ActivityWorkSpec, actual_duration: float) -> np.ndarray:
    """
    Efficiencies back-solved from the actual duration of an activity: the common efficiency
    ``R`` of all assigned resources under which the activity takes `actual_duration`, i.e. the
    duration at unit efficiency divided by `actual_duration`, one value per resource.
    """
    if actual_duration <= 0:
        raise ValidationError('Actual duration must be positive')
    nominal = aggregate_duration(
        np.array(spec.work) / np.array(spec.productivity), spec.parallelism)
    return np.full(spec.size, nominal / actual_duration)


def update_posteriors(posteriors: typing.Dict[str, ResourcePosterior],
                      observations: typing.Dict[str, typing.Sequence[float]],
                      log=None) -> typing.Dict[str, ResourcePosterior]:
    """
    Apply one :func:`exp_update` per resource with the mean and variance of its batch of
    observed efficiencies. Resources without observations keep their belief.
    """
    res = dict(posteriors)
    for rid, values in sorted(observations.items()):
        values = np.asarray(values, dtype=float)
        if rid not in res or not values.size:
            continue
        res[rid] = exp_update(
            res[rid], float(values.mean()), float(values.var()), n_obs=values.size, log=log)
    return res
