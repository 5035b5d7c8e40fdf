"""
Active measurement allocation.

Which activities should be measured (labeled) next? The priority of an activity combines its
predictive uncertainty with its position in the network:

    score(a) = (w_T s2_T(a) + w_C s2_C(a)) * omega(a)
    omega(a) = g1 * betweenness(a) + g2 * [a is critical] + g3 * degree(a)

where criticality is judged on the schedule under the predicted durations and the degree counts
both incoming and outgoing precedence edges.

The active learning loop starts from a random 20% of labeled activities per project, then per
round retrains the model on the labeled activities, records the RMSE of duration predictions on
the unlabeled ones and reveals the top-scoring 10% of each project.
"""
import math
import typing
import logging
import dataclasses
import concurrent.futures

import numpy as np
import pandas as pd

from rbpredict.errors import InvalidConfig, BudgetExhausted
from rbpredict.gnn import ModelConfig, PredictionSet
from rbpredict.graph import ProjectGraph, Schedule, compute_schedule, betweenness_centrality
from rbpredict.ingest.preprocess import PreprocessStats
from rbpredict.instance import ProjectInstance
from rbpredict.train import TrainConfig, Sample, train_model, predict
from rbpredict.util import rng

__all__ = [
    'STRATEGIES', 'ActiveConfig', 'topology_weights', 'priority_scores', 'strategy_scores',
    'select_top', 'share_count', 'run_active_loop', 'CURVE_COLUMNS']

STRATEGIES = ('random', 'uncertainty', 'topology', 'hybrid')
CURVE_COLUMNS = ['strategy', 'seed', 'budget_pct', 'rmse']


@dataclasses.dataclass
class ActiveConfig:
    #: Weights of the duration and cost variances.
    w_t: float = 1.0
    w_c: float = 1.0
    #: Weights of betweenness, criticality and degree in the topological weight.
    gamma: typing.Tuple[float, float, float] = (1.0, 1.0, 0.1)
    strategy: str = 'hybrid'
    #: Share of activities per project labeled at the start.
    initial: float = 0.2
    #: Share of activities per project revealed per round.
    increment: float = 0.1
    #: Maximal number of rounds; `None` runs until all activities are labeled.
    rounds: typing.Optional[int] = None
    #: Retrain from the previous round's parameters.
    warm_start: bool = True

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig('Unknown strategy {}; choose from {}'.format(
                self.strategy, STRATEGIES))
        if min(self.w_t, self.w_c, *self.gamma) < 0 or len(self.gamma) != 3:
            raise InvalidConfig('Weights must be non-negative, gamma has three components')
        if not (0 < self.initial <= 1 and 0 < self.increment <= 1):
            raise InvalidConfig('Budgets must be in (0, 1]')
        if self.rounds is not None and self.rounds < 0:
            raise InvalidConfig('rounds must be non-negative')


def topology_weights(graph: ProjectGraph,
                     schedule: Schedule,
                     gamma: typing.Sequence[float],
                     centrality: typing.Optional[typing.Mapping[str, float]] = None) -> np.ndarray:
    centrality = centrality or betweenness_centrality(graph)
    bc = np.array([centrality[a] for a in graph.activity_ids])
    critical = np.array([a in schedule.critical_activities for a in graph.activity_ids], float)
    degree = graph.in_degree + graph.out_degree
    return gamma[0] * bc + gamma[1] * critical + gamma[2] * degree


def priority_scores(preds: PredictionSet,
                    graph: ProjectGraph,
                    schedule: Schedule,
                    config: ActiveConfig,
                    centrality: typing.Optional[typing.Mapping[str, float]] = None
                    ) -> typing.Dict[str, float]:
    """
    :param schedule: The schedule under the predicted durations.
    :return: Scores keyed by activity id.
    """
    var = config.w_t * preds.variance('duration') + config.w_c * preds.variance('cost')
    omega = topology_weights(graph, schedule, config.gamma, centrality)
    return {aid: float(v * w) for aid, v, w in zip(preds.activity_ids, var, omega)}


def strategy_scores(strategy: str,
                    preds: PredictionSet,
                    graph: ProjectGraph,
                    config: ActiveConfig,
                    generator: typing.Optional[np.random.Generator] = None,
                    centrality: typing.Optional[typing.Mapping[str, float]] = None
                    ) -> typing.Dict[str, float]:
    """
    Scores under a selection strategy: `uncertainty` uses the weighted variance only, `topology`
    the topological weight only, `hybrid` their product (:func:`priority_scores`) and `random`
    uniform draws from `generator`.
    """
    if strategy == 'random':
        return dict(zip(preds.activity_ids, generator.random(len(preds.activity_ids)).tolist()))
    schedule = compute_schedule(graph, np.maximum(preds.mean('duration'), 0.0))
    if strategy == 'hybrid':
        return priority_scores(preds, graph, schedule, config, centrality)
    if strategy == 'uncertainty':
        var = config.w_t * preds.variance('duration') + config.w_c * preds.variance('cost')
        return dict(zip(preds.activity_ids, var.tolist()))
    if strategy == 'topology':
        omega = topology_weights(graph, schedule, config.gamma, centrality)
        return dict(zip(preds.activity_ids, omega.tolist()))
    raise InvalidConfig('Unknown strategy {}'.format(strategy))


def select_top(scores: typing.Mapping[str, float],
               candidates: typing.Iterable[str],
               k: int,
               strict: bool = False) -> typing.List[str]:
    """
    The `k` candidates with the highest scores, ties broken by id.

    .. code-block:: python

        >>> select_top(dict(a=1.0, b=2.0, c=1.0), ['a', 'b', 'c'], 2)
        ['b', 'a']

    :raises BudgetExhausted: if `strict` and fewer than `k` candidates remain; otherwise all \
    remaining candidates are returned.
    """
    candidates = sorted(candidates, key=lambda a: (-scores[a], a))
    if k > len(candidates) and strict:
        raise BudgetExhausted('{} activities requested, {} unlabeled'.format(k, len(candidates)))
    return candidates[:k]


def share_count(share: float, n: int) -> int:
    """
    ``ceil(share * n)``, robust against rounding: ``share_count(0.1, 30) == 3``.
    """
    return math.ceil(round(share * n, 9))


def _rmse_unlabeled(params, samples):
    errors = []
    for s in samples:
        unlabeled = ~s.targets.mask
        if unlabeled.any():
            mu = predict(params, s).mean('duration')
            errors.append((mu - s.instance.t_true)[unlabeled])
    return float(np.sqrt(np.mean(np.concatenate(errors) ** 2)))


def _run_seed(instances, val, model_config, train_config, config, seed, stats, log):
    samples = []
    for inst in instances:
        s = Sample.from_instance(inst, stats)
        n = inst.n_activities
        mask = np.zeros(n, dtype=bool)
        order = rng(seed, 'active', 'initial', inst.name).permutation(n)
        mask[order[:share_count(config.initial, n)]] = True
        s.targets.mask = mask
        samples.append(s)
    val = [Sample.from_instance(inst, stats) for inst in val]
    centrality = {s.instance.name: betweenness_centrality(s.graph) for s in samples}
    total = sum(s.instance.n_activities for s in samples)

    rows, params, rnd = [], None, 0
    while True:
        n_labeled = sum(int(s.targets.mask.sum()) for s in samples)
        if n_labeled == total:
            break
        params, _ = train_model(
            samples, val, model_config, train_config, seed=seed,
            params=params if config.warm_start else None, log=log)
        rmse = _rmse_unlabeled(params, samples)
        rows.append(dict(
            strategy=config.strategy, seed=seed, budget_pct=100.0 * n_labeled / total, rmse=rmse))
        log.info('{} seed {}: {:.1f}% labeled, RMSE {:.4f}'.format(
            config.strategy, seed, rows[-1]['budget_pct'], rmse))
        if config.rounds is not None and rnd >= config.rounds:
            break
        for s in samples:
            ids = s.graph.activity_ids
            unlabeled = [ids[i] for i in np.flatnonzero(~s.targets.mask)]
            if not unlabeled:
                continue
            k = share_count(config.increment, s.instance.n_activities)
            scores = strategy_scores(
                config.strategy, predict(params, s), s.graph, config,
                generator=rng(seed, 'active', 'random', rnd, s.instance.name),
                centrality=centrality[s.instance.name])
            try:
                chosen = select_top(scores, unlabeled, k, strict=True)
            except BudgetExhausted as e:
                log.debug('{}: {}, revealing the rest'.format(s.instance.name, e))
                chosen = unlabeled
            s.targets.mask[[s.graph.index[a] for a in chosen]] = True
        rnd += 1
    return rows


def run_active_loop(instances: typing.Sequence[ProjectInstance],
                    val: typing.Sequence[ProjectInstance],
                    model_config: ModelConfig,
                    train_config: TrainConfig,
                    config: ActiveConfig,
                    seeds: typing.Optional[typing.Sequence[int]] = None,
                    stats: typing.Optional[PreprocessStats] = None,
                    jobs: int = 1,
                    log=None) -> pd.DataFrame:
    """
    Run the active learning loop for each seed.

    :param instances: Preprocessed, fully labeled projects; labels are revealed as the loop goes.
    :param val: Fully labeled projects for early stopping.
    :return: The learning curve with columns `strategy, seed, budget_pct, rmse`.
    """
    log = log or logging.getLogger(__name__)
    config.validate()
    seeds = list(seeds or train_config.seeds)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        results = list(pool.map(
            lambda seed: _run_seed(
                instances, val, model_config, train_config, config, seed, stats, log),
            seeds))
    return pd.DataFrame([row for rows in results for row in rows], columns=CURVE_COLUMNS)
