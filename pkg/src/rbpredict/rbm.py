"""
Resource-based model of activity durations and costs.

Resource `j` working on activity `i` with efficiency ``R`` needs ``t = q / (R * p)`` time units
(work quantity `q`, standard productivity `p`) and costs ``C = c * t`` (cost rate `c`). Activity
durations mix the serial and parallel composition of the per-resource times with the parallelism
parameter ``lambda``; activity costs add up.

On top of that, this module provides Monte Carlo rollouts of whole projects and the convex
time-cost frontier obtained by crashing activities.
"""
import math
import typing
import logging
import dataclasses
import concurrent.futures

import numpy as np
from scipy import optimize

from rbpredict.errors import (
    ValidationError, NonPositiveEfficiency, EmptyResourceSet, NonPositiveMean,
    DurationAboveNormal, Infeasible, MissingCrashParams, MissingDuration,
)
from rbpredict.graph import ProjectGraph, RESOURCE_FEATURES, makespan_batch, earliest_finish
from rbpredict.util import rng

__all__ = [
    'FAMILIES', 'TRUNCATION', 'CRASH_FLOOR', 'EfficiencyDistribution', 'CrashParams',
    'ActivityWorkSpec', 'MonteCarloSummary',
    'resource_time_cost', 'aggregate_duration', 'activity_cost', 'expected_duration_taylor',
    'expected_duration', 'crash_cost', 'solve_cost_frontier', 'uniform_scaling_durations',
    'frontier_curve', 'frontier_cost', 'monte_carlo_project', 'project_cost',
    'specs_from_instance', 'distributions_from_instance', 'crash_params_from_instance',
    'fixed_from_instance']

FAMILIES = ('gaussian', 'lognormal', 'beta')
#: Lower bound for gaussian efficiency samples.
TRUNCATION = 1e-3
#: Crashed durations are bounded below by this fraction of the normal duration.
CRASH_FLOOR = 0.2


@dataclasses.dataclass(frozen=True)
class EfficiencyDistribution:
    """
    Distribution of the efficiencies of the resources working on one activity.

    For `gaussian` and `beta`, `mean` and `variance` are the moments of the efficiency. For
    `lognormal`, they are the parameters of the underlying normal distribution. Beta samples are
    rescaled to `bounds`.

    .. code-block:: python

        >>> d = EfficiencyDistribution('lognormal', [0.0], [0.5])
        >>> round(float(d.expected_inverse()[0]), 5)
        1.28403
    """
    family: str
    mean: typing.Tuple[float, ...]
    variance: typing.Tuple[float, ...]
    #: Uniform pairwise correlation of the underlying normal variates.
    correlation: float = 0.0
    bounds: typing.Tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        object.__setattr__(self, 'mean', tuple(float(x) for x in np.atleast_1d(self.mean)))
        object.__setattr__(
            self, 'variance', tuple(float(x) for x in np.atleast_1d(self.variance)))
        if self.family not in FAMILIES:
            raise ValidationError('Unknown efficiency distribution {}'.format(self.family))
        if len(self.mean) != len(self.variance):
            raise ValidationError('mean and variance differ in length')
        if any(v < 0 for v in self.variance):
            raise ValidationError('Variances must be non-negative')
        k = len(self.mean)
        if self.correlation and not (-1.0 / max(k - 1, 1) < self.correlation < 1):
            raise ValidationError('Correlation {} not valid for {} resources'.format(
                self.correlation, k))
        if self.family == 'beta':
            a, b = self.bounds
            if not a < b:
                raise ValidationError('Beta bounds must satisfy a < b')
            if self.correlation:
                raise ValidationError('Correlated beta efficiencies are not supported')
            for m, v in zip(self.mean, self.variance):
                mm = (m - a) / (b - a)
                if not (0 < mm < 1) or v <= 0 or v / (b - a) ** 2 >= mm * (1 - mm):
                    raise ValidationError('No beta distribution on {} with mean {} and variance {}'
                                          .format(self.bounds, m, v))

    @property
    def size(self) -> int:
        return len(self.mean)

    def expected_efficiency(self) -> np.ndarray:
        m, v = np.array(self.mean), np.array(self.variance)
        if self.family == 'lognormal':
            return np.exp(m + v / 2)
        return m

    def efficiency_variance(self) -> np.ndarray:
        m, v = np.array(self.mean), np.array(self.variance)
        if self.family == 'lognormal':
            return (np.exp(v) - 1) * np.exp(2 * m + v)
        return v

    def expected_inverse(self) -> np.ndarray:
        """E[1/R]: exact for lognormal, second-order Taylor approximation otherwise."""
        if self.family == 'lognormal':
            return np.exp(-np.array(self.mean) + np.array(self.variance) / 2)
        m, v = self.expected_efficiency(), self.efficiency_variance()
        if np.any(m <= 0):
            raise NonPositiveMean('Efficiency means must be positive')
        return (1.0 / m) * (1.0 + v / m ** 2)

    def _normal(self, generator: np.random.Generator, n: int) -> np.ndarray:
        z = generator.standard_normal((n, self.size))
        if self.correlation and self.size > 1:
            corr = np.full((self.size, self.size), self.correlation)
            np.fill_diagonal(corr, 1.0)
            z = z @ np.linalg.cholesky(corr).T
        return z

    def sample(self, generator: np.random.Generator, n: int, log=None) -> np.ndarray:
        """Draw `n` efficiency vectors, shape `(n, size)`; all samples are positive."""
        m, sd = np.array(self.mean), np.sqrt(np.array(self.variance))
        if self.family == 'lognormal':
            return np.exp(m + sd * self._normal(generator, n))
        if self.family == 'gaussian':
            res = m + sd * self._normal(generator, n)
            truncated = int((res < TRUNCATION).sum())
            if truncated:
                (log or logging.getLogger(__name__)).info(
                    '{} gaussian efficiency samples truncated at {}'.format(truncated, TRUNCATION))
                res = np.maximum(res, TRUNCATION)
            return res
        a, b = self.bounds
        mm = (m - a) / (b - a)
        vv = np.array(self.variance) / (b - a) ** 2
        common = mm * (1 - mm) / vv - 1
        return a + (b - a) * generator.beta(mm * common, (1 - mm) * common, size=(n, self.size))


@dataclasses.dataclass(frozen=True)
class CrashParams:
    #: Normal duration.
    normal_duration: float
    #: Cost at the normal duration.
    min_cost: float
    a: float
    b: float

    def __post_init__(self):
        if self.normal_duration <= 0:
            raise ValidationError('Normal duration must be positive')
        if self.a <= 0 or self.b <= 0:
            raise ValidationError('Crash parameters a and b must be positive')

    @property
    def min_duration(self) -> float:
        return CRASH_FLOOR * self.normal_duration


@dataclasses.dataclass(frozen=True)
class ActivityWorkSpec:
    """
    Work of the resources assigned to one activity; arrays are aligned with `resources`.
    """
    work: typing.Tuple[float, ...]
    productivity: typing.Tuple[float, ...]
    cost_rate: typing.Tuple[float, ...]
    parallelism: float = 1.0
    crash: typing.Optional[CrashParams] = None
    resources: typing.Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ['work', 'productivity', 'cost_rate']:
            object.__setattr__(
                self, name, tuple(float(x) for x in np.atleast_1d(getattr(self, name))))
        if not (len(self.work) == len(self.productivity) == len(self.cost_rate)):
            raise ValidationError('Work spec arrays differ in length')
        if any(x <= 0 for x in self.work + self.productivity + self.cost_rate):
            raise ValidationError('Work, productivity and cost rate must be positive')
        if not 0 <= self.parallelism <= 1:
            raise ValidationError('Parallelism must be in [0, 1]')

    @property
    def size(self) -> int:
        return len(self.work)


def resource_time_cost(spec: ActivityWorkSpec,
                       efficiencies) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Per-resource times and costs. `efficiencies` may be a vector or a batch of shape
    `(samples, resources)`.

    .. code-block:: python

        >>> t, c = resource_time_cost(ActivityWorkSpec([10], [2], [3]), [1.0])
        >>> float(t[0]), float(c[0])
        (5.0, 15.0)
    """
    r = np.asarray(efficiencies, dtype=float)
    if np.any(r <= 0):
        raise NonPositiveEfficiency('Efficiencies must be positive')
    t = np.array(spec.work) / (r * np.array(spec.productivity))
    return t, np.array(spec.cost_rate) * t


def aggregate_duration(times, parallelism: float) -> typing.Union[float, np.ndarray]:
    """
    ``lambda * sum(t) + (1 - lambda) * max(t)``, over the last axis of `times`.
    """
    t = np.asarray(times, dtype=float)
    if t.size == 0 or t.shape[-1] == 0:
        raise EmptyResourceSet('No resource times to aggregate')
    if not 0 <= parallelism <= 1:
        raise ValidationError('Parallelism must be in [0, 1]')
    res = parallelism * t.sum(axis=-1) + (1 - parallelism) * t.max(axis=-1)
    return float(res) if np.ndim(res) == 0 else res


def activity_cost(spec: ActivityWorkSpec, efficiencies) -> typing.Union[float, np.ndarray]:
    _, c = resource_time_cost(spec, efficiencies)
    res = c.sum(axis=-1)
    return float(res) if np.ndim(res) == 0 else res


def expected_duration_taylor(spec: ActivityWorkSpec, means, variances,
                             family: str = 'gaussian') -> float:
    """
    ``sum_j q_j / (p_j * mu_j) * (1 + sigma_j^2 / mu_j^2)``, the second-order expansion of the
    expected serial duration. For `lognormal`, `means` and `variances` are log-space parameters
    and the exact ``E[1/R] = exp(-mu + sigma^2 / 2)`` is used instead.
    """
    mu, var = np.asarray(means, dtype=float), np.asarray(variances, dtype=float)
    base = np.array(spec.work) / np.array(spec.productivity)
    if family == 'lognormal':
        return float((base * np.exp(-mu + var / 2)).sum())
    if np.any(mu <= 0):
        raise NonPositiveMean('Efficiency means must be positive')
    return float((base / mu * (1 + var / mu ** 2)).sum())


def expected_duration(spec: ActivityWorkSpec, distribution: EfficiencyDistribution) -> float:
    """
    Expected activity duration: the serial part uses E[1/R], the parallel (max) part is
    evaluated at the mean efficiencies, which approximates E[max].
    """
    base = np.array(spec.work) / np.array(spec.productivity)
    serial = float((base * distribution.expected_inverse()).sum())
    mean_eff = distribution.expected_efficiency()
    if np.any(mean_eff <= 0):
        raise NonPositiveMean('Efficiency means must be positive')
    parallel = float((base / mean_eff).max())
    return spec.parallelism * serial + (1 - spec.parallelism) * parallel


def project_cost(activity_costs, overhead: float = 0.0) -> float:
    return float(np.sum(activity_costs)) + overhead


def crash_cost(t: float, params: CrashParams) -> float:
    """
    ``C_min + a * (exp(b * (T_N - T)) - 1)``, decreasing and convex on ``(0, T_N]``.

    .. code-block:: python

        >>> round(crash_cost(1.0, CrashParams(2.0, 10.0, 1.0, math.log(2))), 12)
        11.0
    """
    if t > params.normal_duration * (1 + 1e-12):
        raise DurationAboveNormal('Duration {} exceeds the normal duration {}'.format(
            t, params.normal_duration))
    if t <= 0:
        raise ValidationError('Durations must be positive')
    return params.min_cost + params.a * math.expm1(params.b * (params.normal_duration - t))


class _Crash:
    """Crash parameters of a project as arrays aligned with `graph.activity_ids`."""
    def __init__(self, graph: ProjectGraph, crash: typing.Mapping[str, CrashParams]):
        missing = [a for a in graph.activity_ids if a not in crash]
        if missing:
            raise MissingCrashParams(missing[0])
        params = [crash[a] for a in graph.activity_ids]
        self.tn = np.array([p.normal_duration for p in params])
        self.cmin = np.array([p.min_cost for p in params])
        self.a = np.array([p.a for p in params])
        self.b = np.array([p.b for p in params])
        self.tmin = CRASH_FLOOR * self.tn

    def cost(self, t: np.ndarray) -> float:
        return float((self.cmin + self.a * np.expm1(self.b * (self.tn - t))).sum())

    def gradient(self, t: np.ndarray) -> np.ndarray:
        return -self.a * self.b * np.exp(self.b * (self.tn - t))


def _makespan(graph, t):
    return float(earliest_finish(graph, t).max()) if graph.n_activities else 0.0


def _soft_makespan(graph: ProjectGraph, t: np.ndarray, tau: float):
    """Log-sum-exp relaxation of the longest path and its gradient; never below the makespan."""
    order = graph.order()
    f, weights = np.zeros(graph.n_activities), {}

    def lse(values):
        z = tau * values
        zmax = z.max()
        w = np.exp(z - zmax)
        return (zmax + np.log(w.sum())) / tau, w / w.sum()

    for v in order:
        preds = list(graph.pred_index(v))
        start = 0.0
        if preds:
            start, weights[v] = lse(f[preds])
        f[v] = start + t[v]
    sinks = [v for v in range(graph.n_activities) if not graph.succ_index(v)]
    value, w_sink = lse(f[sinks])
    gf = np.zeros(graph.n_activities)
    gf[sinks] = w_sink
    grad = np.zeros(graph.n_activities)
    for v in reversed(order):
        grad[v] = gf[v]
        if v in weights:
            gf[list(graph.pred_index(v))] += gf[v] * weights[v]
    return value, grad


def _longest_through(graph: ProjectGraph, t: np.ndarray) -> np.ndarray:
    """Length of the longest path through each activity."""
    ef = earliest_finish(graph, t)
    tail = np.zeros(graph.n_activities)
    for v in reversed(graph.order()):
        succ = graph.succ_index(v)
        tail[v] = max(t[s] + tail[s] for s in succ) if succ else 0.0
    return ef + tail


def _check_feasible(graph, c: _Crash, t_max: float):
    minimal = _makespan(graph, c.tmin)
    if minimal > t_max * (1 + 1e-12):
        raise Infeasible(t_max, minimal)


def _uniform_scaling(graph: ProjectGraph, c: _Crash, t_max: float) -> np.ndarray:
    # Activities on paths longer than t_max are shrunk by a common factor.
    violating = _longest_through(graph, c.tn) > t_max
    lo, hi = CRASH_FLOOR, 1.0
    if _makespan(graph, np.where(violating, c.tn * lo, c.tn)) > t_max:
        violating = np.ones(graph.n_activities, dtype=bool)
    for _ in range(100):
        mid = (lo + hi) / 2
        if _makespan(graph, np.where(violating, c.tn * mid, c.tn)) <= t_max:
            lo = mid
        else:
            hi = mid
    return np.where(violating, c.tn * lo, c.tn)


def uniform_scaling_durations(graph: ProjectGraph,
                              crash: typing.Mapping[str, CrashParams],
                              t_max: float) -> typing.Dict[str, float]:
    """
    Shrink the durations of all activities on paths longer than `t_max` by one common factor,
    the largest one meeting the deadline.
    """
    c = _Crash(graph, crash)
    _check_feasible(graph, c, t_max)
    if _makespan(graph, c.tn) <= t_max:
        return dict(zip(graph.activity_ids, c.tn.tolist()))
    return dict(zip(graph.activity_ids, _uniform_scaling(graph, c, t_max).tolist()))


def _relax(graph: ProjectGraph, c: _Crash, t: np.ndarray, t_max: float) -> np.ndarray:
    """Lengthen activities into the float left by the deadline, most expensive first."""
    t = t.copy()
    for v in np.argsort(c.gradient(t), kind='stable'):
        if t[v] >= c.tn[v]:
            continue
        slack = t_max - _longest_through(graph, t)[v]
        if slack > 0:
            t[v] = min(c.tn[v], t[v] + slack)
    return t


def _toward(graph: ProjectGraph, t: np.ndarray, feasible: np.ndarray, t_max: float) -> np.ndarray:
    """The point closest to `t` on the segment to `feasible` that meets the deadline."""
    if _makespan(graph, t) <= t_max:
        return t
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if _makespan(graph, (1 - mid) * t + mid * feasible) <= t_max:
            hi = mid
        else:
            lo = mid
    return (1 - hi) * t + hi * feasible


def _polish(graph: ProjectGraph, c: _Crash, t: np.ndarray, t_max: float) -> np.ndarray:
    """
    Solve the deadline problem exactly with SLSQP over durations and start times, warm-started
    at the feasible durations `t`. Constraints are linear: ``S_v >= S_u + T_u`` per precedence
    edge and ``S_v + T_v <= t_max``.
    """
    n = graph.n_activities
    pairs = [(u, v) for v in range(n) for u in graph.pred_index(v)]
    # Rows of A @ x <= rhs with x = (durations, starts).
    A, rhs = np.zeros((len(pairs) + n, 2 * n)), np.zeros(len(pairs) + n)
    for k, (u, v) in enumerate(pairs):
        A[k, [u, n + u, n + v]] = 1, 1, -1
    for v in range(n):
        A[len(pairs) + v, [v, n + v]] = 1, 1
    rhs[len(pairs):] = t_max

    res = optimize.minimize(
        lambda x: c.cost(x[:n]),
        np.concatenate([t, earliest_finish(graph, t) - t]),
        jac=lambda x: np.concatenate([c.gradient(x[:n]), np.zeros(n)]),
        method='SLSQP',
        bounds=list(zip(c.tmin, c.tn)) + [(0.0, t_max)] * n,
        constraints=[dict(type='ineq', fun=lambda x: rhs - A @ x, jac=lambda x: -A)],
        options=dict(maxiter=1000, ftol=1e-12))
    # SLSQP may end marginally outside the deadline.
    return _toward(graph, np.clip(res.x[:n], c.tmin, c.tn), t, t_max)


def _penalised_descent(graph, c: _Crash, t: np.ndarray, t_max: float, tau: float,
                       weight: float, steps: int) -> np.ndarray:
    def objective(x):
        soft, grad = _soft_makespan(graph, x, tau)
        excess = max(0.0, soft - t_max)
        return c.cost(x) + weight * excess ** 2, c.gradient(x) + 2 * weight * excess * grad

    value, grad = objective(t)
    step = 1.0
    for _ in range(steps):
        accepted = False
        while step > 1e-12:
            cand = np.clip(t - step * grad, c.tmin, c.tn)
            cand_value, cand_grad = objective(cand)
            # Armijo condition along the projected step.
            if cand_value <= value - 1e-4 * float(grad @ (t - cand)):
                accepted = True
                break
            step /= 2
        if not accepted or np.max(np.abs(cand - t)) < 1e-12:
            break
        t, value, grad = cand, cand_value, cand_grad
        step *= 2
    return t


def solve_cost_frontier(graph: ProjectGraph,
                        crash: typing.Mapping[str, CrashParams],
                        t_max: float,
                        tau: float = 50.0,
                        log=None) -> typing.Dict[str, float]:
    """
    Cheapest durations meeting the deadline `t_max`.

    Projected gradient descent on the crash cost plus a growing quadratic penalty on the
    log-sum-exp makespan (temperature `tau`) gives a starting point. It is made feasible by
    bisecting towards the uniform-scaling solution and relaxed into the remaining float. SLSQP
    then polishes the cheaper of this and the uniform-scaling solution to the constrained
    optimum; the polished point is kept if it meets the deadline and costs less.

    :raises Infeasible: if the makespan at the minimal durations exceeds `t_max`.
    """
    log = log or logging.getLogger(__name__)
    c = _Crash(graph, crash)
    _check_feasible(graph, c, t_max)
    if _makespan(graph, c.tn) <= t_max:
        return dict(zip(graph.activity_ids, c.tn.tolist()))

    baseline = _uniform_scaling(graph, c, t_max)
    t = baseline.copy()
    scale = max(1.0, c.cost(baseline))
    for weight in [scale * 10 ** k for k in range(7)]:
        t = _penalised_descent(graph, c, t, t_max, tau, weight, steps=500)
    t = _relax(graph, c, _toward(graph, np.clip(t, c.tmin, c.tn), baseline, t_max), t_max)
    if c.cost(t) > c.cost(baseline):
        log.debug('Frontier descent did not improve on uniform scaling at T_max={}'.format(t_max))
        t = baseline

    polished = _relax(graph, c, _polish(graph, c, t, t_max), t_max)
    if _makespan(graph, polished) <= t_max and c.cost(polished) < c.cost(t):
        t = polished
    return dict(zip(graph.activity_ids, t.tolist()))


def frontier_cost(graph: ProjectGraph, crash: typing.Mapping[str, CrashParams],
                  durations: typing.Mapping[str, float]) -> float:
    c = _Crash(graph, crash)
    return c.cost(np.array([durations[a] for a in graph.activity_ids]))


def frontier_curve(graph: ProjectGraph,
                   crash: typing.Mapping[str, CrashParams],
                   t_values: typing.Iterable[float],
                   log=None) -> typing.List[typing.Tuple[float, float]]:
    """(T_max, cost) pairs of the cost frontier; infeasible deadlines are skipped."""
    log = log or logging.getLogger(__name__)
    res = []
    for t_max in t_values:
        try:
            durations = solve_cost_frontier(graph, crash, t_max, log=log)
        except Infeasible as e:
            log.warning(str(e))
            continue
        res.append((float(t_max), frontier_cost(graph, crash, durations)))
    return res


@dataclasses.dataclass
class MonteCarloSummary:
    n_samples: int
    makespan_mean: float
    makespan_var: float
    makespan_quantiles: typing.Dict[str, float]
    cost_mean: float
    cost_var: float
    cost_quantiles: typing.Dict[str, float]
    #: Per activity: mean and variance of duration and cost.
    activities: typing.Dict[str, typing.Dict[str, float]]
    overhead: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _Moments:
    """Mergeable count, mean and sum of squared deviations per column."""
    def __init__(self, x: np.ndarray):
        self.n = x.shape[0]
        self.mean = x.mean(axis=0)
        self.m2 = ((x - self.mean) ** 2).sum(axis=0)

    def merge(self, other: '_Moments') -> '_Moments':
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.n / n
        self.m2 = self.m2 + other.m2 + delta ** 2 * self.n * other.n / n
        self.n = n
        return self

    @property
    def var(self):
        return self.m2 / self.n


def monte_carlo_project(graph: ProjectGraph,
                        specs: typing.Mapping[str, ActivityWorkSpec],
                        distributions: typing.Mapping[str, EfficiencyDistribution],
                        n_samples: int,
                        seed: int,
                        overhead: float = 0.0,
                        chunk_size: int = 10000,
                        quantiles: typing.Sequence[float] = (0.05, 0.5, 0.95),
                        jobs: int = 1,
                        fixed: typing.Optional[typing.Dict[str, typing.Tuple[float, float]]] = None,
                        log=None) -> MonteCarloSummary:
    """
    Sample efficiencies, compose durations and costs and roll out the schedule.

    Activities in `fixed` (e.g. milestones without resource work) take the given deterministic
    (duration, cost).

    Samples are drawn in chunks of `chunk_size`, chunk `k` from the stream
    ``rng(seed, 'mc', k)``. Chunks are merged in order, so the result does not depend on `jobs`.
    """
    if n_samples < 1:
        raise ValidationError('n_samples must be at least 1')
    fixed = fixed or {}
    for aid in graph.activity_ids:
        if aid in fixed:
            continue
        if aid not in specs or aid not in distributions:
            raise MissingDuration(aid)
        if specs[aid].size != distributions[aid].size:
            raise ValidationError('Work spec and distribution of {} differ in size'.format(aid))
    n = graph.n_activities

    def run_chunk(k):
        size = min(chunk_size, n_samples - k * chunk_size)
        gen = rng(seed, 'mc', k)
        durations, costs = np.zeros((size, n)), np.zeros((size, n))
        for i, aid in enumerate(graph.activity_ids):
            if aid in fixed:
                durations[:, i], costs[:, i] = fixed[aid]
                continue
            eff = distributions[aid].sample(gen, size, log=log)
            t, c = resource_time_cost(specs[aid], eff)
            durations[:, i] = aggregate_duration(t, specs[aid].parallelism)
            costs[:, i] = c.sum(axis=1)
        return durations, costs, makespan_batch(graph, durations), costs.sum(axis=1) + overhead

    chunks = range(math.ceil(n_samples / chunk_size))
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(run_chunk, chunks))

    moments, makespans, totals = None, [], []
    for durations, costs, makespan, total in results:
        m = _Moments(np.hstack([durations, costs]))
        moments = m if moments is None else moments.merge(m)
        makespans.append(makespan)
        totals.append(total)
    makespans, totals = np.concatenate(makespans), np.concatenate(totals)

    def q(x):
        return {'{:g}'.format(p): float(np.quantile(x, p)) for p in quantiles}

    return MonteCarloSummary(
        n_samples=n_samples,
        makespan_mean=float(makespans.mean()),
        makespan_var=float(makespans.var()),
        makespan_quantiles=q(makespans),
        cost_mean=float(totals.mean()),
        cost_var=float(totals.var()),
        cost_quantiles=q(totals),
        activities={
            aid: dict(
                duration_mean=float(moments.mean[i]),
                duration_var=float(moments.var[i]),
                cost_mean=float(moments.mean[n + i]),
                cost_var=float(moments.var[n + i]))
            for i, aid in enumerate(graph.activity_ids)},
        overhead=overhead,
    )


def _resource_columns(instance) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rf = instance.resource_features
    p = instance.demands.shape[1]

    def col(name, default):
        if rf is None or rf.shape[0] != p:
            return np.full(p, default)
        x = rf[:, RESOURCE_FEATURES.index(name)]
        return np.where(x > 0, x, default)

    return (col('mu_hat', 1.0), col('sigma2_hat', 0.04), col('cost_rate', 1.0),
            col('std_productivity', 1.0))


def specs_from_instance(instance, parallelism: float = 0.5) -> typing.Dict[str, ActivityWorkSpec]:
    """
    Work specs reproducing the estimates of `instance` at unit efficiency: the aggregated
    duration equals `t_est`, the cost equals `c_est`. Work is split by resource demand shares.
    """
    _, _, rate, prod = _resource_columns(instance)
    rids = instance.graph.resource_ids
    if len(rids) != instance.demands.shape[1]:
        rids = tuple('r{}'.format(k + 1) for k in range(instance.demands.shape[1]))
    res = {}
    for i, aid in enumerate(instance.graph.activity_ids):
        demand = instance.demands[i]
        used = np.flatnonzero(demand > 0)
        if not len(used) or instance.t_est[i] <= 0:
            continue
        share = demand[used] / demand[used].sum()
        t = instance.t_est[i] * share / (parallelism + (1 - parallelism) * share.max())
        c = rate[used] * max(instance.c_est[i], 1e-12) / float((rate[used] * t).sum())
        res[aid] = ActivityWorkSpec(
            work=tuple(t * prod[used]),
            productivity=tuple(prod[used]),
            cost_rate=tuple(c),
            parallelism=parallelism,
            resources=tuple(rids[k] for k in used))
    return res


def fixed_from_instance(instance, specs) -> typing.Dict[str, typing.Tuple[float, float]]:
    """Deterministic (duration, cost) from the estimates for activities without a work spec."""
    return {
        aid: (float(instance.t_est[i]), float(instance.c_est[i]))
        for i, aid in enumerate(instance.graph.activity_ids) if aid not in specs}


def distributions_from_instance(instance, specs=None) -> typing.Dict[str, EfficiencyDistribution]:
    """
    Lognormal efficiencies matching the resource posterior means and variances of `instance`.
    """
    mu_hat, sigma2_hat, _, _ = _resource_columns(instance)
    specs = specs or specs_from_instance(instance)
    res = {}
    for i, aid in enumerate(instance.graph.activity_ids):
        if aid not in specs:
            continue
        used = np.flatnonzero(instance.demands[i] > 0)
        s2 = np.log1p(sigma2_hat[used] / mu_hat[used] ** 2)
        res[aid] = EfficiencyDistribution(
            'lognormal', tuple(np.log(mu_hat[used]) - s2 / 2), tuple(s2))
    return res


def crash_params_from_instance(instance) -> typing.Dict[str, CrashParams]:
    """
    Crash parameters from the `crash_a`, `crash_b` extras of `instance` if present; otherwise
    ``T_N = t_est``, ``C_min = c_est``, ``a = 0.1 * C_min``, ``b = 2 / T_N``.
    """
    res = {}
    for i, aid in enumerate(instance.graph.activity_ids):
        tn, cmin = float(instance.t_est[i]), float(instance.c_est[i])
        if tn <= 0:
            # Zero-duration milestones cannot be crashed.
            tn = 1e-9
        a = float(instance.extras['crash_a'][i]) if 'crash_a' in instance.extras \
            else 0.1 * max(cmin, 1e-9)
        b = float(instance.extras['crash_b'][i]) if 'crash_b' in instance.extras else 2.0 / tn
        res[aid] = CrashParams(tn, cmin, a, b)
    return res
