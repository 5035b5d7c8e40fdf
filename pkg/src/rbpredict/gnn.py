"""
A relation-typed GraphSAGE encoder with heteroscedastic heads for activity duration and cost.

Model
-----
Activity features ``x`` (see :func:`rbpredict.graph.activity_features`) and resource features
are projected to the hidden dimension ``d`` by node-type specific linear maps. Each of the `K`
layers then computes, for every node ``v`` and message slot ``s`` (in the fixed order
``precedence_in, precedence_out, assignment, collaboration``),

    m_{v,s} = AGG_{u in N_s(v)} (W_s h_u + b_s)          (zero if N_s(v) is empty)
    h_v    <- act(W [h_v, m_{v,s_1}, ..., m_{v,s_S}] + b)

optionally followed by layer normalisation and a residual connection (``h_v <- h_v + h_v_old``).
`AGG` is the mean, the element-wise max or `pool` (max over ReLU-transformed messages).

Two heads (MLPs with hidden sizes `head_hidden`) map the final activity embeddings to
``(mu, log sigma^2)`` of duration and cost. With ``layers=0`` the heads are applied to the raw
activity features, i.e. the model is a plain MLP.

Parameter layout
----------------
With ``F`` activity and ``Fr`` resource features, ``S`` slots and heads ``[h_1, .., h_k]``:

- input projections: ``F*d + d + Fr*d + d`` (only for ``K > 0``),
- per layer: ``S*(d*d + d) + (1+S)*d*d + d``,
- per head: the dense layers ``d -> h_1 -> .. -> h_k -> 2`` (``F`` instead of ``d`` if ``K = 0``),
- temporal variant (memory dim ``M``, message dim ``d + D``): GRU ``3*((d+D)*M + M*M + M)`` and
  output map ``(M+d)*d + d``.

Temporal variant
----------------
Nodes carry a memory state ``s_v``. When an activity completes at time ``t``, the memory of the
activity and its neighbours is updated by a GRU from the message
``mean_u [h_u, phi(t - t_u)]``, where ``phi`` is a sinusoidal time encoding and ``t_u`` the last
update time of ``u``. The embedding fed to the heads is ``act(W_t [s_v, h_v] + b_t)``.
"""
import math
import typing
import pathlib
import collections
import dataclasses

import numpy as np
import pandas as pd

from rbpredict import tensor as T
from rbpredict.errors import (
    InvalidConfig, FeatureDimMismatch, TimestampRegression, UnknownActivity, VersionMismatch,
)
from rbpredict.graph import ProjectGraph, RELATIONS, SLOTS, RESOURCE_FEATURES, compute_schedule
from rbpredict.util import rng, config_from_dict, config_to_dict, dump_json, read_json

__all__ = [
    'AGGREGATORS', 'HEADS', 'ModelConfig', 'ModelParams', 'PredictionSet', 'Block', 'Memory',
    'init_model', 'param_shapes', 'parameter_count', 'full_blocks', 'encode', 'forward',
    'time_encoding', 'temporal_step', 'saliency', 'save_checkpoint', 'load_checkpoint',
    'CHECKPOINT_FORMAT']

AGGREGATORS = ('mean', 'max', 'pool')
HEADS = ('duration', 'cost')
CHECKPOINT_FORMAT = 'rbpredict-checkpoint-1'
SLOT_RELATION = {
    'precedence_in': 'precedence',
    'precedence_out': 'precedence',
    'assignment': 'assignment',
    'collaboration': 'collaboration',
}


@dataclasses.dataclass
class ModelConfig:
    #: Number of message passing layers; 0 turns the model into an MLP on activity features.
    layers: int = 3
    #: Hidden dimension.
    hidden: int = 128
    aggregator: str = 'mean'
    #: One of `relu`, `elu`, `gelu` (tanh approximation), `tanh`.
    activation: str = 'relu'
    dropout: float = 0.1
    residual: bool = True
    layer_norm: bool = True
    head_hidden: typing.Tuple[int, ...] = (128, 64)
    #: Relations passing messages.
    relations: typing.Tuple[str, ...] = RELATIONS
    temporal: bool = False
    memory_dim: int = 32
    #: Dimension of the sinusoidal time encoding (even).
    time_dim: int = 8

    def validate(self):
        if self.layers < 0 or self.hidden <= 0 or any(h <= 0 for h in self.head_hidden):
            raise InvalidConfig('Layer counts and dimensions must be positive')
        if self.aggregator not in AGGREGATORS:
            raise InvalidConfig('Unknown aggregator {}'.format(self.aggregator))
        if self.activation not in T.ACTIVATIONS:
            raise InvalidConfig('Unknown activation {}'.format(self.activation))
        if not 0 <= self.dropout < 1:
            raise InvalidConfig('dropout must be in [0, 1)')
        if not set(self.relations) <= set(RELATIONS):
            raise InvalidConfig('Unknown relations {}'.format(set(self.relations) - set(RELATIONS)))
        if self.temporal:
            if self.layers == 0:
                raise InvalidConfig('The temporal model needs at least one layer')
            if self.memory_dim <= 0 or self.time_dim <= 0 or self.time_dim % 2:
                raise InvalidConfig('memory_dim must be positive, time_dim positive and even')

    @property
    def slots(self) -> typing.Tuple[str, ...]:
        return tuple(s for s in SLOTS if SLOT_RELATION[s] in self.relations)


def param_shapes(config: ModelConfig,
                 n_features: int,
                 n_resource_features: int = len(RESOURCE_FEATURES),
                 ) -> typing.Dict[str, typing.Tuple[int, int]]:
    d, res = config.hidden, collections.OrderedDict()
    if config.layers:
        res['input.activity.W'] = (n_features, d)
        res['input.activity.b'] = (1, d)
        res['input.resource.W'] = (n_resource_features, d)
        res['input.resource.b'] = (1, d)
    for ell in range(1, config.layers + 1):
        for slot in config.slots:
            res['layer{}.{}.W'.format(ell, slot)] = (d, d)
            res['layer{}.{}.b'.format(ell, slot)] = (1, d)
        res['layer{}.W'.format(ell)] = ((1 + len(config.slots)) * d, d)
        res['layer{}.b'.format(ell)] = (1, d)
    if config.temporal:
        m, msg = config.memory_dim, d + config.time_dim
        for gate in 'zrh':
            res['temporal.gru.W{}'.format(gate)] = (msg, m)
            res['temporal.gru.U{}'.format(gate)] = (m, m)
            res['temporal.gru.b{}'.format(gate)] = (1, m)
        res['temporal.W'] = (m + d, d)
        res['temporal.b'] = (1, d)
    for head in HEADS:
        dims = [d if config.layers else n_features] + list(config.head_hidden) + [2]
        for k, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
            res['head.{}.{}.W'.format(head, k)] = (i, o)
            res['head.{}.{}.b'.format(head, k)] = (1, o)
    return res


def parameter_count(config: ModelConfig,
                    n_features: int,
                    n_resource_features: int = len(RESOURCE_FEATURES)) -> int:
    return sum(a * b for a, b in param_shapes(config, n_features, n_resource_features).values())


def _is_bias(name: str) -> bool:
    return name.split('.')[-1].startswith('b')


@dataclasses.dataclass
class ModelParams:
    config: ModelConfig
    n_features: int
    n_resource_features: int
    #: Learnable arrays, ordered as in :func:`param_shapes`.
    arrays: typing.Dict[str, np.ndarray]
    seed: int = 0
    #: Names of the activity feature columns, for reporting.
    feature_names: typing.Optional[typing.List[str]] = None

    def tensors(self, requires_grad: bool = True) -> typing.Dict[str, T.Tensor]:
        return collections.OrderedDict(
            (k, T.Tensor(v, requires_grad=requires_grad)) for k, v in self.arrays.items())

    def copy(self) -> 'ModelParams':
        return dataclasses.replace(
            self, arrays=collections.OrderedDict((k, v.copy()) for k, v in self.arrays.items()))

    def weight_names(self) -> typing.List[str]:
        """Names of the arrays subject to L2 regularisation (all but biases)."""
        return [k for k in self.arrays if not _is_bias(k)]

    def set_head_bias(self, head: str, mean: float, log_variance: float = 0.0):
        last = max(int(k.split('.')[2]) for k in self.arrays if k.startswith('head.' + head))
        self.arrays['head.{}.{}.b'.format(head, last)][0] = [mean, log_variance]


def init_model(config: ModelConfig,
               n_features: int,
               n_resource_features: int = len(RESOURCE_FEATURES),
               seed: int = 13) -> ModelParams:
    """
    Weights are drawn from ``U(-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``, biases are 0.

    :raises InvalidConfig: for an invalid `config`.
    """
    config.validate()
    gen = rng(seed, 'init')
    arrays = collections.OrderedDict()
    for name, shape in param_shapes(config, n_features, n_resource_features).items():
        if _is_bias(name):
            arrays[name] = np.zeros(shape)
        else:
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = gen.uniform(-a, a, size=shape)
    return ModelParams(config, n_features, n_resource_features, arrays, seed)


@dataclasses.dataclass
class PredictionSet:
    activity_ids: typing.Tuple[str, ...]
    mu_t: T.Tensor
    logvar_t: T.Tensor
    mu_c: T.Tensor
    logvar_c: T.Tensor

    def mean(self, head: str = 'duration') -> np.ndarray:
        return (self.mu_t if head == 'duration' else self.mu_c).value[:, 0].copy()

    def variance(self, head: str = 'duration') -> np.ndarray:
        return np.exp((self.logvar_t if head == 'duration' else self.logvar_c).value[:, 0])

    def makespan(self, graph: ProjectGraph) -> float:
        """Project makespan under the predicted durations, negative predictions read as 0."""
        return compute_schedule(graph, np.maximum(self.mean('duration'), 0.0)).makespan

    def total_cost(self, overhead: float = 0.0) -> float:
        return float(self.mean('cost').sum()) + overhead

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(collections.OrderedDict([
            ('activity', list(self.activity_ids)),
            ('mu_T', self.mean('duration')),
            ('sigma2_T', self.variance('duration')),
            ('mu_C', self.mean('cost')),
            ('sigma2_C', self.variance('cost')),
        ]))


@dataclasses.dataclass
class Block:
    """
    One message passing layer restricted to a node subset.

    `src` are the global indices of the nodes whose embeddings enter the layer, `dst` those of
    the nodes it computes; `dst` is a prefix of `src`. `edges` maps slots to (sender, receiver)
    index arrays, local to `src` and `dst` respectively.
    """
    src: np.ndarray
    dst: np.ndarray
    edges: typing.Dict[str, typing.Tuple[np.ndarray, np.ndarray]]


def full_blocks(graph: ProjectGraph, layers: int, slots=SLOTS) -> typing.List[Block]:
    nodes = np.arange(graph.n_activities + graph.n_resources)
    block = Block(nodes, nodes, {s: graph.slot_edges(s) for s in slots})
    return [block] * layers


def _dense(t, x, prefix):
    return T.add_row(T.matmul(x, t[prefix + '.W']), t[prefix + '.b'])


def _check_features(params: ModelParams, graph: ProjectGraph, x, rf):
    if x.shape != (graph.n_activities, params.n_features):
        raise FeatureDimMismatch('Activity features of shape {}, expected ({}, {})'.format(
            x.shape, graph.n_activities, params.n_features))
    if rf is not None and rf.shape != (graph.n_resources, params.n_resource_features):
        raise FeatureDimMismatch('Resource features of shape {}, expected ({}, {})'.format(
            rf.shape, graph.n_resources, params.n_resource_features))


def encode(params: ModelParams,
           graph: ProjectGraph,
           x,
           rf=None,
           blocks: typing.Optional[typing.Sequence[Block]] = None,
           train: bool = False,
           generator: typing.Optional[np.random.Generator] = None,
           tensors=None) -> T.Tensor:
    """
    Node embeddings after the last layer, one row per node of ``blocks[-1].dst``.
    """
    cfg = params.config
    t = tensors or {k: T.Tensor(v) for k, v in params.arrays.items()}
    act = T.ACTIVATIONS[cfg.activation]
    x = T.as_tensor(x)
    rf = np.zeros((graph.n_resources, params.n_resource_features)) if rf is None else rf
    h0 = _dense(t, x, 'input.activity')
    if graph.n_resources:
        h0 = T.concat_rows([h0, _dense(t, T.as_tensor(rf), 'input.resource')])
    blocks = blocks or full_blocks(graph, cfg.layers, cfg.slots)
    h = T.gather_rows(h0, blocks[0].src)
    for ell, block in enumerate(blocks, start=1):
        n_dst = len(block.dst)
        own = T.gather_rows(h, np.arange(n_dst))
        parts = [own]
        for slot in cfg.slots:
            snd, rcv = block.edges[slot]
            msg = _dense(t, T.gather_rows(h, snd), 'layer{}.{}'.format(ell, slot))
            if cfg.aggregator == 'pool':
                msg = T.relu(msg)
            parts.append(T.scatter_rows(
                msg, rcv, n_dst, reduce='mean' if cfg.aggregator == 'mean' else 'max'))
        h = act(_dense(t, T.concat_cols(parts), 'layer{}'.format(ell)))
        if cfg.layer_norm:
            h = T.layer_norm(h)
        if cfg.residual:
            h = T.add(h, own)
        if train and cfg.dropout > 0:
            keep = (generator.random(h.shape) >= cfg.dropout) / (1 - cfg.dropout)
            h = T.mul(h, keep)
    return h


def _head(t, h, head, act, n_hidden):
    for k in range(n_hidden):
        h = act(_dense(t, h, 'head.{}.{}'.format(head, k)))
    return _dense(t, h, 'head.{}.{}'.format(head, n_hidden))


def forward(params: ModelParams,
            graph: ProjectGraph,
            x,
            rf=None,
            blocks: typing.Optional[typing.Sequence[Block]] = None,
            train: bool = False,
            generator: typing.Optional[np.random.Generator] = None,
            tensors=None,
            memory: typing.Optional['Memory'] = None) -> PredictionSet:
    """
    Predict ``(mu, log sigma^2)`` of duration and cost.

    :param x: Activity features, shape `(n, n_features)`, array or :class:`Tensor`.
    :param rf: Resource features, shape `(m, n_resource_features)`; zeros if `None`.
    :param blocks: Sampled layers (see :func:`rbpredict.train.neighbor_sample`); full graph if \
    `None`. Predictions are made for the activities among ``blocks[-1].dst``.
    :param train: Apply dropout, drawing masks from `generator`.
    :param tensors: Parameter tensors to use instead of ``params.arrays`` (to record gradients).
    :param memory: Memory states of the temporal variant.
    :raises FeatureDimMismatch: if feature shapes do not match the model.
    """
    cfg = params.config
    xv = x.value if isinstance(x, T.Tensor) else np.asarray(x, dtype=float)
    _check_features(params, graph, xv, None if rf is None else np.asarray(rf))
    if train and cfg.dropout > 0 and generator is None:
        generator = rng(params.seed, 'dropout')
    t = tensors or {k: T.Tensor(v) for k, v in params.arrays.items()}
    act = T.ACTIVATIONS[cfg.activation]

    if cfg.layers:
        h = encode(params, graph, x, rf, blocks, train, generator, t)
        dst = blocks[-1].dst if blocks else np.arange(graph.n_activities + graph.n_resources)
        rows = np.flatnonzero(dst < graph.n_activities)
        h = T.gather_rows(h, rows)
        nodes = dst[rows]
        if cfg.temporal:
            memory = memory or Memory.zeros(graph, cfg)
            s = T.gather_rows(memory.states(params, t), nodes)
            h = act(_dense(t, T.concat_cols([s, h]), 'temporal'))
    else:
        h, nodes = T.as_tensor(x), np.arange(graph.n_activities)

    out = {}
    for head in HEADS:
        y = _head(t, h, head, act, len(cfg.head_hidden))
        out[head] = (T.slice_cols(y, 0, 1), T.slice_cols(y, 1, 2))
    return PredictionSet(
        tuple(graph.activity_ids[i] for i in nodes),
        out['duration'][0], out['duration'][1], out['cost'][0], out['cost'][1])


def time_encoding(dt, dim: int) -> np.ndarray:
    """
    Sinusoidal encoding ``[sin(w_0 dt), cos(w_0 dt), sin(w_1 dt), ...]`` with
    ``w_k = 10000 ** (-2k / dim)``.

    >>> time_encoding([0.0], 4).tolist()
    [[0.0, 1.0, 0.0, 1.0]]
    """
    dt = np.asarray(dt, dtype=float).reshape(-1, 1)
    w = 10000.0 ** (-2 * np.arange(dim // 2) / dim)
    res = np.zeros((dt.shape[0], dim))
    res[:, 0::2] = np.sin(dt * w)
    res[:, 1::2] = np.cos(dt * w)
    return res


def _gru(t, s, m):
    z = T.sigmoid(T.add(T.matmul(m, t['temporal.gru.Wz']),
                        T.add_row(T.matmul(s, t['temporal.gru.Uz']), t['temporal.gru.bz'])))
    r = T.sigmoid(T.add(T.matmul(m, t['temporal.gru.Wr']),
                        T.add_row(T.matmul(s, t['temporal.gru.Ur']), t['temporal.gru.br'])))
    cand = T.tanh(T.add(
        T.matmul(m, t['temporal.gru.Wh']),
        T.add_row(T.matmul(T.mul(r, s), t['temporal.gru.Uh']), t['temporal.gru.bh'])))
    # s' = s + z * (cand - s)
    return T.add(s, T.mul(z, T.sub(cand, s)))


@dataclasses.dataclass
class Memory:
    """
    Memory of the temporal variant. For every node updated so far, the state before its last
    update and the message of that update are kept, so that the last GRU step can be recomputed
    (and differentiated) with the current parameters.
    """
    prev: np.ndarray
    message: np.ndarray
    updated: np.ndarray
    last_update: np.ndarray
    time: float = 0.0

    @classmethod
    def zeros(cls, graph: ProjectGraph, config: ModelConfig) -> 'Memory':
        n = graph.n_activities + graph.n_resources
        return cls(
            prev=np.zeros((n, config.memory_dim)),
            message=np.zeros((n, config.hidden + config.time_dim)),
            updated=np.zeros(n, dtype=bool),
            last_update=np.zeros(n))

    def states(self, params: ModelParams, tensors=None) -> T.Tensor:
        t = tensors or {k: T.Tensor(v) for k, v in params.arrays.items()}
        mask = np.repeat(self.updated.astype(float)[:, None], self.prev.shape[1], axis=1)
        fresh = _gru(t, T.Tensor(self.prev), T.Tensor(self.message))
        return T.add(T.mul(fresh, mask), T.Tensor(self.prev * (1 - mask)))


def temporal_step(params: ModelParams,
                  memory: Memory,
                  event: typing.Tuple[str, float],
                  graph: ProjectGraph,
                  x,
                  rf=None) -> typing.Tuple[Memory, PredictionSet]:
    """
    Update the memory for the completion of activity ``event[0]`` at time ``event[1]``.

    :return: The new memory and the predictions for the affected activities (the completed \
    activity and its neighbours).
    :raises TimestampRegression: if the event is older than the last one.
    :raises UnknownActivity: if the activity is not part of `graph`.
    """
    aid, ts = event
    if ts < memory.time:
        raise TimestampRegression('Event at {} after event at {}'.format(ts, memory.time))
    if aid not in graph.index or graph.index[aid] >= graph.n_activities:
        raise UnknownActivity('No activity {}'.format(aid))
    cfg, v = params.config, graph.index[aid]
    h = encode(params, graph, x, rf).value
    current = memory.states(params).value

    def nbrs(node):
        return sorted({u for slot in cfg.slots for u in graph.neighbors(node, slot)})

    affected = sorted({v} | set(nbrs(v)))
    prev, message = memory.prev.copy(), memory.message.copy()
    for a in affected:
        us = nbrs(a)
        prev[a] = current[a]
        if us:
            enc = time_encoding(ts - memory.last_update[us], cfg.time_dim)
            message[a] = np.hstack([h[us], enc]).mean(axis=0)
        else:
            message[a] = 0.0
    updated = memory.updated.copy()
    updated[affected] = True
    last_update = memory.last_update.copy()
    last_update[affected] = ts
    memory = Memory(prev, message, updated, last_update, float(ts))
    preds = forward(params, graph, x, rf, memory=memory)
    rows = [i for i, a in enumerate(preds.activity_ids) if graph.index[a] in affected]
    heads = (preds.mu_t, preds.logvar_t, preds.mu_c, preds.logvar_c)
    return memory, PredictionSet(
        tuple(preds.activity_ids[i] for i in rows), *[T.gather_rows(p, rows) for p in heads])


def _receptive_field(graph: ProjectGraph, v: int, layers: int, slots) -> typing.List[int]:
    field, frontier = {v}, {v}
    for _ in range(layers):
        frontier = {u for w in frontier for s in slots for u in graph.neighbors(w, s)} - field
        field |= frontier
    return sorted(i for i in field if i < graph.n_activities)


def saliency(params: ModelParams,
             graph: ProjectGraph,
             x,
             activity: str,
             target: str = 'duration',
             rf=None,
             memory: typing.Optional[Memory] = None) -> np.ndarray:
    """
    Gradient saliency: ``|d mu_target(activity) / d x_u|`` averaged over the activities ``u`` in
    the receptive field of `activity`, one value per input feature.

    :raises UnknownActivity: if `activity` is not part of `graph`.
    """
    if activity not in graph.index or graph.index[activity] >= graph.n_activities:
        raise UnknownActivity('No activity {}'.format(activity))
    v = graph.index[activity]
    xt = T.Tensor(np.asarray(x, dtype=float), requires_grad=True)
    with T.Tape() as tape:
        preds = forward(params, graph, xt, rf, memory=memory)
        mu = preds.mu_t if target == 'duration' else preds.mu_c
        out = T.gather_rows(mu, [preds.activity_ids.index(activity)])
    tape.backward(out)
    grad = xt.grad if xt.grad is not None else np.zeros(xt.shape)
    field = _receptive_field(graph, v, params.config.layers, params.config.slots)
    return np.abs(grad[field]).mean(axis=0)


def save_checkpoint(params: ModelParams,
                    p: typing.Union[str, pathlib.Path],
                    model: str = 'graphsage',
                    preprocess=None,
                    **meta) -> pathlib.Path:
    """
    Write the model as JSON: config, seed, feature layout, preprocessing statistics and the
    arrays as shape-tagged flat lists.
    """
    p = pathlib.Path(p)
    dump_json(dict(
        format=CHECKPOINT_FORMAT,
        model=model,
        config=config_to_dict(params.config),
        seed=params.seed,
        n_features=params.n_features,
        n_resource_features=params.n_resource_features,
        feature_names=params.feature_names,
        preprocess=preprocess.to_dict() if preprocess is not None else None,
        arrays=[
            dict(name=k, shape=list(v.shape), data=v.reshape(-1).tolist())
            for k, v in params.arrays.items()],
        meta=meta,
    ), p)
    return p


def load_checkpoint(p: typing.Union[str, pathlib.Path]) -> typing.Tuple[ModelParams, dict]:
    """
    :return: The parameters and the full checkpoint document.
    :raises VersionMismatch: if the file is not a checkpoint of a known format.
    """
    doc = read_json(p)
    if doc.get('format') != CHECKPOINT_FORMAT or 'arrays' not in doc:
        raise VersionMismatch('{} is not a {} file'.format(p, CHECKPOINT_FORMAT))
    params = ModelParams(
        config=config_from_dict(ModelConfig, doc['config']),
        n_features=doc['n_features'],
        n_resource_features=doc['n_resource_features'],
        arrays=collections.OrderedDict(
            (a['name'], np.array(a['data'], dtype=float).reshape(a['shape']))
            for a in doc['arrays']),
        seed=doc['seed'],
        feature_names=doc.get('feature_names'))
    return params, doc
