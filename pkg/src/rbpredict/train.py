"""
Training and evaluation of the graph models.

Training runs Adam with decoupled weight decay, global-norm gradient clipping, a learning rate
schedule with linear warmup and cosine decay, neighbour-sampled node mini-batches and early
stopping on the validation NLL. Each epoch shuffles instances and activities with a generator
derived from ``(seed, 'epoch', epoch)``, so a run is reproducible from its seed.

Project-level loss terms need predictions for whole projects. They are computed with a full-graph
forward pass and added to the loss of the first mini-batch of each instance in an epoch.
"""
import math
import typing
import logging
import pathlib
import dataclasses
import concurrent.futures

import numpy as np
import pandas as pd

from rbpredict import tensor as T
from rbpredict.errors import (
    InvalidConfig, NonFiniteGradient, DivergedLoss, NoLabels, EmptyTrainingSet,
)
from rbpredict.gnn import ModelConfig, ModelParams, Block, init_model, forward, Memory
from rbpredict.graph import ProjectGraph, SLOTS
from rbpredict.ingest.preprocess import PreprocessStats, feature_matrix, feature_names
from rbpredict.instance import ProjectInstance
from rbpredict.loss import LossConfig, Targets, total_loss, nll_activity, targets_from_instance
from rbpredict.metrics import MetricsBundle, metrics_bundle
from rbpredict.util import rng, config_from_dict

__all__ = [
    'TrainConfig', 'OptimizerState', 'History', 'neighbor_sample', 'clip_gradients', 'adam_step',
    'lr_at', 'train_model', 'predict', 'evaluate', 'evaluation_rows', 'Sample']

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclasses.dataclass
class TrainConfig:
    #: Peak learning rate.
    lr: float = 1e-3
    #: Epochs of linear warmup.
    warmup: int = 5
    max_epochs: int = 200
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    #: Activities per mini-batch.
    batch_size: int = 32
    #: Sampled neighbours per slot and node, from the output layer inwards.
    fanout: typing.Tuple[int, ...] = (15, 10, 5)
    #: Train on full graphs instead of sampled neighbourhoods.
    full_batch: bool = False
    patience: int = 20
    seeds: typing.Tuple[int, ...] = (13, 29, 47, 71, 101)
    loss: LossConfig = dataclasses.field(default_factory=LossConfig)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = config_from_dict(LossConfig, self.loss)

    def validate(self):
        if self.lr < 0 or self.weight_decay < 0 or self.clip_norm <= 0:
            raise InvalidConfig('lr and weight_decay must be non-negative, clip_norm positive')
        if self.max_epochs < 1 or self.warmup < 0 or self.batch_size < 1 or self.patience < 1:
            raise InvalidConfig('Epoch counts, batch size and patience must be positive')
        if any(f < 1 for f in self.fanout):
            raise InvalidConfig('Fanout must be positive')
        self.loss.validate()


@dataclasses.dataclass
class OptimizerState:
    m: typing.Dict[str, np.ndarray]
    v: typing.Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> 'OptimizerState':
        return cls(
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
            {k: np.zeros_like(a) for k, a in params.arrays.items()})


class History:
    """Per-epoch record of learning rate and losses."""
    columns = ['epoch', 'lr', 'train_loss', 'val_loss']

    def __init__(self):
        self.rows = []
        self.best_epoch = None

    def __len__(self):
        return len(self.rows)

    def append(self, **row):
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self, p: typing.Union[str, pathlib.Path]):
        self.to_frame().to_csv(p, index=False)


def neighbor_sample(graph: ProjectGraph,
                    seeds: typing.Sequence[int],
                    fanout: typing.Sequence[int],
                    generator: np.random.Generator,
                    slots: typing.Sequence[str] = SLOTS) -> typing.List[Block]:
    """
    Sample the layered computation graph for the node indices `seeds`.

    Layer ``K`` (the output layer) keeps up to ``fanout[0]`` senders per slot and node, chosen
    uniformly without replacement, layer ``K-1`` up to ``fanout[1]`` for the nodes reached so far,
    and so on.

    :return: One :class:`rbpredict.gnn.Block` per layer, input layer first.
    """
    dst = list(dict.fromkeys(int(s) for s in seeds))
    blocks = []
    for f in fanout:
        pos = {v: i for i, v in enumerate(dst)}
        src = list(dst)
        edges = {}
        for slot in slots:
            senders, receivers = [], []
            for j, v in enumerate(dst):
                nbrs = graph.neighbors(v, slot)
                if len(nbrs) > f:
                    nbrs = [nbrs[k] for k in sorted(generator.choice(len(nbrs), f, replace=False))]
                for u in nbrs:
                    if u not in pos:
                        pos[u] = len(src)
                        src.append(u)
                    senders.append(pos[u])
                    receivers.append(j)
            edges[slot] = (np.array(senders, dtype=np.int64), np.array(receivers, dtype=np.int64))
        blocks.append(Block(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), edges))
        dst = src
    return blocks[::-1]


def clip_gradients(grads: typing.Dict[str, np.ndarray],
                   clip_norm: float) -> typing.Tuple[typing.Dict[str, np.ndarray], float]:
    """
    Scale gradients to global norm at most `clip_norm`.

    :return: The clipped gradients and the global norm before clipping.
    :raises NonFiniteGradient: listing the parameters with non-finite gradients.
    """
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradient('Non-finite gradient for {}'.format(', '.join(bad)))
    norm = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if norm > clip_norm:
        grads = {k: g * (clip_norm / norm) for k, g in grads.items()}
    return grads, norm


def adam_step(arrays: typing.Dict[str, np.ndarray],
              grads: typing.Dict[str, np.ndarray],
              state: OptimizerState,
              lr: float,
              weight_decay: float = 1e-4,
              clip_norm: float = 1.0) -> typing.Dict[str, np.ndarray]:
    """
    One Adam step with global-norm clipping and decoupled weight decay. Arrays are updated in
    place and returned; `state` is updated in place.
    """
    grads, _ = clip_gradients(grads, clip_norm)
    state.step += 1
    c1, c2 = 1 - BETA1 ** state.step, 1 - BETA2 ** state.step
    for k, theta in arrays.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(theta)
        theta -= lr * weight_decay * theta
        state.m[k] = BETA1 * state.m[k] + (1 - BETA1) * g
        state.v[k] = BETA2 * state.v[k] + (1 - BETA2) * g ** 2
        theta -= lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + ADAM_EPS)
    return arrays


def lr_at(epoch: int, config: TrainConfig) -> float:
    """
    .. code-block:: python

        >>> cfg = TrainConfig(lr=1e-3, warmup=5, max_epochs=200)
        >>> lr_at(0, cfg), lr_at(5, cfg)
        (0.0, 0.001)
    """
    if epoch < config.warmup:
        return config.lr * epoch / config.warmup
    span = max(config.max_epochs - config.warmup, 1)
    progress = min((epoch - config.warmup) / span, 1.0)
    return config.lr * 0.5 * (1 + math.cos(math.pi * progress))


@dataclasses.dataclass
class Sample:
    """An instance prepared for training: model inputs, targets and labeled mask."""
    instance: ProjectInstance
    x: np.ndarray
    rf: np.ndarray
    targets: Targets
    memory: typing.Optional[Memory] = None

    @classmethod
    def from_instance(cls,
                      instance: ProjectInstance,
                      stats: typing.Optional[PreprocessStats] = None,
                      mask: typing.Optional[np.ndarray] = None,
                      memory: typing.Optional[Memory] = None) -> 'Sample':
        if not instance.labeled:
            raise NoLabels('Instance {} has no targets'.format(instance.name))
        return cls(
            instance,
            feature_matrix(instance, stats),
            instance.resource_features,
            targets_from_instance(instance, mask),
            memory)

    @property
    def graph(self) -> ProjectGraph:
        return self.instance.graph


def _as_samples(items, stats) -> typing.List[Sample]:
    return [i if isinstance(i, Sample) else Sample.from_instance(i, stats) for i in items]


def _init_heads(params: ModelParams, samples: typing.List[Sample]):
    for head, attr in [('duration', 't'), ('cost', 'c')]:
        y = np.concatenate([getattr(s.targets, attr)[s.targets.labeled()] for s in samples])
        if y.size:
            params.set_head_bias(head, float(y.mean()), math.log(max(float(y.var()), 1e-6)))


def _batch_loss(params, tensors, sample, batch, config, generator, with_project):
    cfg = params.config
    graph, targets = sample.graph, sample.targets
    if config.full_batch or not cfg.layers:
        preds = forward(params, graph, sample.x, sample.rf, train=True, generator=generator,
                        tensors=tensors, memory=sample.memory)
        mask = np.zeros(graph.n_activities, dtype=bool)
        mask[batch] = True
        batch_targets = Targets(targets.t, targets.c, mask)
    else:
        blocks = neighbor_sample(graph, batch, config.fanout[:cfg.layers], generator, cfg.slots)
        preds = forward(params, graph, sample.x, sample.rf, blocks=blocks, train=True,
                        generator=generator, tensors=tensors, memory=sample.memory)
        batch_targets = Targets(targets.t[batch], targets.c[batch])
    weights = [tensors[k] for k in params.weight_names()]
    loss, _ = total_loss(
        preds, batch_targets, graph, dataclasses.replace(config.loss, lambda_proj=0.0), weights)
    if with_project and config.loss.lambda_proj > 0:
        full = forward(params, graph, sample.x, sample.rf, train=True, generator=generator,
                       tensors=tensors, memory=sample.memory)
        ploss, _ = total_loss(
            full, targets, graph, dataclasses.replace(config.loss, lambda_act=0.0, lambda_reg=0.0))
        loss = T.add(loss, ploss)
    return loss


def validation_loss(params: ModelParams, samples: typing.Sequence[Sample],
                    config: LossConfig) -> float:
    """Mean activity NLL over `samples` in eval mode."""
    losses = [
        nll_activity(
            forward(params, s.graph, s.x, s.rf, memory=s.memory),
            s.targets, config.lambda_t, config.lambda_c).item()
        for s in samples]
    return float(np.mean(losses))


def train_model(train: typing.Sequence[typing.Union[ProjectInstance, Sample]],
                val: typing.Sequence[typing.Union[ProjectInstance, Sample]],
                model_config: ModelConfig,
                config: TrainConfig,
                seed: int = 13,
                stats: typing.Optional[PreprocessStats] = None,
                params: typing.Optional[ModelParams] = None,
                log=None) -> typing.Tuple[ModelParams, History]:
    """
    Train a model and return the parameters of the epoch with the best validation loss.

    :param train: Training instances, or prepared :class:`Sample` objects (e.g. with labeled \
    masks or memories).
    :param params: Parameters to continue training from (warm start).
    :raises EmptyTrainingSet: if a split is empty.
    :raises DivergedLoss: if the validation loss becomes non-finite.
    """
    log = log or logging.getLogger(__name__)
    if not train or not val:
        raise EmptyTrainingSet('Training and validation splits must not be empty')
    model_config.validate()
    config.validate()
    if model_config.layers and not config.full_batch \
            and len(config.fanout) != model_config.layers:
        raise InvalidConfig('fanout has {} entries for {} layers'.format(
            len(config.fanout), model_config.layers))
    train, val = _as_samples(train, stats), _as_samples(val, stats)
    if params is None:
        params = init_model(
            model_config, train[0].x.shape[1], train[0].rf.shape[1], seed=seed)
        params.feature_names = feature_names(train[0].instance, stats)
        _init_heads(params, train)
    params = params.copy()
    state = OptimizerState.zeros(params)
    history, best, best_loss, wait = History(), params.copy(), math.inf, 0

    for epoch in range(config.max_epochs):
        lr = lr_at(epoch, config)
        gen = rng(seed, 'epoch', epoch)
        losses = []
        for si in gen.permutation(len(train)):
            sample = train[si]
            labeled = sample.targets.labeled()
            if not len(labeled):
                continue
            order = labeled[gen.permutation(len(labeled))]
            for b, start in enumerate(range(0, len(order), config.batch_size)):
                batch = np.sort(order[start:start + config.batch_size])
                tensors = params.tensors()
                with T.Tape() as tape:
                    loss = _batch_loss(params, tensors, sample, batch, config, gen, b == 0)
                tape.backward(loss)
                grads = {
                    k: t.grad if t.grad is not None else np.zeros_like(t.value)
                    for k, t in tensors.items()}
                try:
                    adam_step(params.arrays, grads, state, lr, config.weight_decay,
                              config.clip_norm)
                except NonFiniteGradient as e:
                    log.error('Epoch {}, instance {}: {}'.format(
                        epoch, sample.instance.name, e))
                    raise
                losses.append(loss.item())
        val_loss = validation_loss(params, val, config.loss)
        if not math.isfinite(val_loss):
            raise DivergedLoss('Validation loss {} in epoch {}'.format(val_loss, epoch))
        train_loss = float(np.mean(losses)) if losses else math.nan
        history.append(epoch=epoch, lr=lr, train_loss=train_loss, val_loss=val_loss)
        log.debug('epoch {}: lr={:.3g} train={:.4f} val={:.4f}'.format(
            epoch, lr, train_loss, val_loss))
        if val_loss < best_loss:
            best, best_loss, wait = params.copy(), val_loss, 0
            history.best_epoch = epoch
        else:
            wait += 1
            if wait >= config.patience:
                log.info('Early stopping after epoch {}'.format(epoch))
                break
    return best, history


def predict(params: ModelParams,
            instance: typing.Union[ProjectInstance, Sample],
            stats: typing.Optional[PreprocessStats] = None):
    """
    Eval-mode predictions for all activities of an instance. `params` may also be a model with a
    ``predict(instance, stats)`` method, such as :class:`rbpredict.baselines.RidgeModel`.
    """
    if not isinstance(params, ModelParams):
        return params.predict(
            instance.instance if isinstance(instance, Sample) else instance, stats)
    if isinstance(instance, Sample):
        return forward(
            params, instance.graph, instance.x, instance.rf, memory=instance.memory)
    return forward(params, instance.graph, feature_matrix(instance, stats),
                   instance.resource_features)


def evaluate(params: ModelParams,
             instances: typing.Sequence[typing.Union[ProjectInstance, Sample]],
             stats: typing.Optional[PreprocessStats] = None,
             jobs: int = 1) -> typing.Dict[str, MetricsBundle]:
    """
    Metrics of eval-mode predictions per head (`duration`, `cost`, over all activities) and per
    project (`makespan` via CPM over predicted durations, `total_cost`).

    :raises NoLabels: if an instance has no targets.
    """
    for inst in instances:
        inst = inst.instance if isinstance(inst, Sample) else inst
        if not inst.labeled:
            raise NoLabels('Instance {} has no targets'.format(inst.name))

    def run(inst):
        preds = predict(params, inst, stats)
        return (inst.instance if isinstance(inst, Sample) else inst), preds

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        results = list(pool.map(run, instances))
    cols = {k: [] for k in ['t', 't_hat', 't_var', 'c', 'c_hat', 'c_var', 'm', 'm_hat', 'pc',
                            'pc_hat']}
    for inst, preds in results:
        cols['t'].append(inst.t_true)
        cols['t_hat'].append(preds.mean('duration'))
        cols['t_var'].append(preds.variance('duration'))
        cols['c'].append(inst.c_true)
        cols['c_hat'].append(preds.mean('cost'))
        cols['c_var'].append(preds.variance('cost'))
        cols['m'].append([inst.makespan_true()])
        cols['m_hat'].append([preds.makespan(inst.graph)])
        cols['pc'].append([inst.cost_true()])
        cols['pc_hat'].append([preds.total_cost(inst.overhead)])
    c = {k: np.concatenate(v) for k, v in cols.items()}
    return dict(
        duration=metrics_bundle(c['t'], c['t_hat'], np.sqrt(c['t_var'])),
        cost=metrics_bundle(c['c'], c['c_hat'], np.sqrt(c['c_var'])),
        makespan=metrics_bundle(c['m'], c['m_hat']),
        total_cost=metrics_bundle(c['pc'], c['pc_hat']),
    )


def evaluation_rows(evaluation: typing.Dict[str, MetricsBundle], **keys) -> typing.List[dict]:
    """One row per head, e.g. for a metrics CSV."""
    return [bundle.as_row(head=head, **keys) for head, bundle in evaluation.items()]
