"""
Rolling execution of in-flight projects.

Activities of the test projects complete in the order of their earliest finish under the true
durations, a share `step` of each project per time step. After each step

1. the actual durations of the completed activities are revealed,
2. the efficiencies of their resources are back-solved and the resource beliefs updated,
3. resource features (``mu_hat``, ``sigma2_hat``) and completion status features are refreshed,
4. the model is retrained, warm-started from the previous step,

and the RMSE of the duration predictions for the remaining activities is recorded.

Three variants are compared: `static-mlp` and `static-gnn` are trained once on the historical
projects and never updated; `adaptive` is the temporal graph model which runs all four stages and
feeds the completion events into its node memory.
"""
import typing
import logging
import collections
import dataclasses
import concurrent.futures

import numpy as np
import pandas as pd

from rbpredict.bayes import ResourcePosterior, RULES, observed_efficiencies, update_posteriors
from rbpredict.errors import InvalidConfig
from rbpredict.gnn import ModelConfig, Memory, temporal_step
from rbpredict.graph import RESOURCE_FEATURES, compute_schedule
from rbpredict.ingest.preprocess import PreprocessStats, fit_preprocess, apply_preprocess
from rbpredict.instance import ProjectInstance
from rbpredict.rbm import specs_from_instance
from rbpredict.train import TrainConfig, Sample, train_model, predict
from rbpredict.experiments.active import share_count

__all__ = [
    'VARIANTS', 'STATUS_FEATURES', 'CURVE_COLUMNS', 'TemporalConfig', 'completion_order',
    'completion_batches', 'with_status', 'refresh_resources', 'initial_posteriors',
    'resource_observations', 'posterior_trace', 'variant_model_config', 'run_temporal']

VARIANTS = ('static-mlp', 'static-gnn', 'adaptive')
#: Completion features appended to the numeric activity attributes.
STATUS_FEATURES = ('status_done', 'status_pending', 'percent_complete', 'elapsed')
CURVE_COLUMNS = ['variant', 'seed', 'completion_pct', 'rmse']


@dataclasses.dataclass
class TemporalConfig:
    variant: str = 'adaptive'
    #: Share of each project's activities completing per time step.
    step: float = 0.2
    #: Retrain from the previous step's parameters (otherwise from scratch).
    warm_start: bool = True
    #: Epochs per retraining.
    retrain_epochs: int = 20
    #: Update rule of the resource beliefs.
    rule: str = 'adaptive'
    prior_variance: float = 0.25
    obs_noise: float = 0.01
    #: Weight of the constant update rule.
    alpha: float = 0.1

    def validate(self):
        if self.variant not in VARIANTS:
            raise InvalidConfig('Unknown variant {}; choose from {}'.format(
                self.variant, VARIANTS))
        if not 0 < self.step <= 1:
            raise InvalidConfig('step must be in (0, 1]')
        if self.retrain_epochs < 1:
            raise InvalidConfig('retrain_epochs must be positive')
        if self.rule not in RULES:
            raise InvalidConfig('Unknown update rule {}'.format(self.rule))
        if not self.prior_variance > 0 or self.obs_noise < 0:
            raise InvalidConfig('prior_variance must be positive, obs_noise non-negative')


def completion_order(instance: ProjectInstance) -> typing.List[int]:
    """Activity indices by earliest finish under the true durations, ties by id."""
    finish = compute_schedule(instance.graph, instance.t_true).earliest_finish
    ids = instance.graph.activity_ids
    return sorted(range(len(ids)), key=lambda i: (finish[ids[i]], ids[i]))


def completion_batches(instance: ProjectInstance, step: float) -> typing.List[typing.List[int]]:
    order = completion_order(instance)
    size = share_count(step, len(order))
    return [order[k:k + size] for k in range(0, len(order), size)]


def with_status(instance: ProjectInstance, done: np.ndarray, elapsed: float) -> ProjectInstance:
    """
    :param done: Completion mask.
    :param elapsed: Time since project start, relative to the planned makespan.
    """
    n = instance.n_activities
    done = np.asarray(done, dtype=float)
    extras = collections.OrderedDict(instance.extras)
    extras.update([
        ('status_done', done),
        ('status_pending', 1.0 - done),
        ('percent_complete', np.full(n, done.mean() if n else 0.0)),
        ('elapsed', np.full(n, float(elapsed))),
    ])
    return instance.replace(extras=extras)


def refresh_resources(instance: ProjectInstance,
                      posteriors: typing.Mapping[str, ResourcePosterior],
                      stats: typing.Optional[PreprocessStats] = None) -> ProjectInstance:
    """
    Copy posterior means and variances into the resource features, scaled like the training data
    if `stats` are given.
    """
    rf = instance.resource_features.copy()
    for name, attr in [('mu_hat', 'mean'), ('sigma2_hat', 'variance')]:
        k = RESOURCE_FEATURES.index(name)
        for j, rid in enumerate(instance.graph.resource_ids):
            if rid in posteriors:
                value = getattr(posteriors[rid], attr)
                if stats is not None:
                    value = (value - stats.resource[name]['mean']) / stats.resource[name]['std']
                rf[j, k] = value
    return instance.replace(resource_features=rf)


def initial_posteriors(instance: ProjectInstance,
                       config: TemporalConfig) -> typing.Dict[str, ResourcePosterior]:
    """Prior beliefs centred at the (raw) ``mu_hat`` resource features."""
    mu = instance.resource_features[:, RESOURCE_FEATURES.index('mu_hat')]
    return {
        rid: ResourcePosterior(
            mean=float(mu[j]) if mu[j] > 0 else 1.0,
            variance=config.prior_variance,
            obs_noise=config.obs_noise,
            rule=config.rule,
            alpha=config.alpha)
        for j, rid in enumerate(instance.graph.resource_ids)}


def resource_observations(instance: ProjectInstance,
                          batch: typing.Iterable[int],
                          specs=None) -> typing.Dict[str, typing.List[float]]:
    """Efficiencies back-solved from the true durations of the activities in `batch`."""
    specs = specs or specs_from_instance(instance)
    res = collections.defaultdict(list)
    for i in batch:
        aid = instance.graph.activity_ids[i]
        if aid in specs and instance.t_true[i] > 0:
            spec = specs[aid]
            for rid, r in zip(spec.resources, observed_efficiencies(spec, instance.t_true[i])):
                res[rid].append(float(r))
    return dict(res)


def posterior_trace(instance: ProjectInstance,
                    config: TemporalConfig,
                    log=None) -> typing.List[typing.Dict[str, ResourcePosterior]]:
    """Resource beliefs of a raw labeled instance before the first and after each time step."""
    specs = specs_from_instance(instance)
    trace = [initial_posteriors(instance, config)]
    for batch in completion_batches(instance, config.step):
        trace.append(update_posteriors(
            trace[-1], resource_observations(instance, batch, specs), log=log))
    return trace


def variant_model_config(variant: str, model_config: ModelConfig) -> ModelConfig:
    if variant == 'static-mlp':
        return dataclasses.replace(
            model_config, layers=0, head_hidden=(256, 128), temporal=False)
    return dataclasses.replace(model_config, temporal=variant == 'adaptive')


class _Project:
    """State of one in-flight project."""
    def __init__(self, raw: ProjectInstance, config: TemporalConfig, stats: PreprocessStats):
        self.raw, self.stats = raw, stats
        self.specs = specs_from_instance(raw)
        self.batches = completion_batches(raw, config.step)
        self.done = np.zeros(raw.n_activities, dtype=bool)
        self.finish = compute_schedule(raw.graph, raw.t_true).earliest_finish
        self.horizon = compute_schedule(raw.graph, raw.t_est).makespan or 1.0
        self.posteriors = initial_posteriors(raw, config)
        self.elapsed = 0.0
        self.memory = None
        self.sample = self.prepare(adaptive=False)

    def prepare(self, adaptive: bool) -> Sample:
        inst = apply_preprocess(self.stats, self.raw)
        if adaptive:
            inst = refresh_resources(inst, self.posteriors, self.stats)
        inst = with_status(inst, self.done, self.elapsed / self.horizon)
        return Sample.from_instance(inst, self.stats, mask=self.done.copy(), memory=self.memory)

    def complete(self, batch, params, adaptive: bool, log):
        if not batch:
            return
        ids = self.raw.graph.activity_ids
        self.done[batch] = True
        self.elapsed = max(self.finish[ids[i]] for i in np.flatnonzero(self.done))
        if not adaptive:
            return
        self.posteriors = update_posteriors(
            self.posteriors, resource_observations(self.raw, batch, self.specs), log=log)
        self.sample = self.prepare(adaptive=True)
        memory = self.sample.memory
        for i in batch:
            memory, _ = temporal_step(
                params, memory or Memory.zeros(self.sample.graph, params.config),
                (ids[i], float(self.finish[ids[i]])), self.sample.graph, self.sample.x,
                self.sample.rf)
        self.memory = self.sample.memory = memory

    def remaining_errors(self, params) -> np.ndarray:
        mu = predict(params, self.sample).mean('duration')
        return (mu - self.raw.t_true)[~self.done]


def _run_seed(train, val, test, stats, model_config, train_config, config, seed, log):
    adaptive = config.variant == 'adaptive'
    mcfg = variant_model_config(config.variant, model_config)

    def historical(raw):
        inst = with_status(apply_preprocess(stats, raw), np.zeros(raw.n_activities), 0.0)
        return Sample.from_instance(inst, stats)

    history, val = [historical(r) for r in train], [historical(r) for r in val]
    params, _ = train_model(history, val, mcfg, train_config, seed=seed, log=log)
    retrain = dataclasses.replace(train_config, max_epochs=config.retrain_epochs, warmup=0)
    projects = [_Project(raw, config, stats) for raw in test]
    total = sum(p.raw.n_activities for p in projects)

    rows, step = [], 0
    while True:
        remaining = sum(int((~p.done).sum()) for p in projects)
        if not remaining:
            break
        errors = np.concatenate([p.remaining_errors(params) for p in projects])
        rows.append(dict(
            variant=config.variant,
            seed=seed,
            completion_pct=100.0 * (total - remaining) / total,
            rmse=float(np.sqrt(np.mean(errors ** 2)))))
        log.info('{} seed {}: {:.1f}% complete, RMSE {:.4f}'.format(
            config.variant, seed, rows[-1]['completion_pct'], rows[-1]['rmse']))
        for p in projects:
            p.complete(p.batches[step] if step < len(p.batches) else [], params, adaptive, log)
        if adaptive and any(p.done.any() and not p.done.all() for p in projects):
            in_flight = [p.sample for p in projects if p.done.any()]
            params, _ = train_model(
                history + in_flight, val, mcfg, retrain, seed=seed,
                params=params if config.warm_start else None, log=log)
        step += 1
    return rows


def run_temporal(train: typing.Sequence[ProjectInstance],
                 val: typing.Sequence[ProjectInstance],
                 test: typing.Sequence[ProjectInstance],
                 model_config: ModelConfig,
                 train_config: TrainConfig,
                 config: TemporalConfig,
                 seeds: typing.Optional[typing.Sequence[int]] = None,
                 stats: typing.Optional[PreprocessStats] = None,
                 jobs: int = 1,
                 log=None) -> pd.DataFrame:
    """
    Run the rolling protocol for each seed.

    :param train: Raw, labeled historical projects the models are first trained on.
    :param val: Raw, labeled projects for early stopping.
    :param test: Raw, labeled in-flight projects; their actuals are revealed step by step.
    :param stats: Preprocessing statistics; fitted on `train` if `None`.
    :return: The curve with columns `variant, seed, completion_pct, rmse`.
    """
    log = log or logging.getLogger(__name__)
    config.validate()
    stats = stats or fit_preprocess(train, log=log)
    seeds = list(seeds or train_config.seeds)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        results = list(pool.map(
            lambda seed: _run_seed(
                train, val, test, stats, model_config, train_config, config, seed, log),
            seeds))
    return pd.DataFrame([row for rows in results for row in rows], columns=CURVE_COLUMNS)
