"""
Synthetic project instances.

Random DAGs are sampled over a random topological order and connected by a backbone chain.
Resource demands are lognormal, true durations and costs follow linear resource-based formulas
with explicit dependence on predecessors, and planner estimates are the true values times a
uniform error factor.

Each group of draws comes from its own labeled random stream (see :func:`rbpredict.util.rng`),
so changing how one group is drawn never shifts the others.
"""
import typing
import logging
import dataclasses

import numpy as np

from rbpredict.errors import InvalidConfig, RateOutOfRange, ValidationError
from rbpredict.graph import ProjectGraph, Edge, RESOURCE_FEATURES, topological_sort
from rbpredict.instance import ProjectInstance
from rbpredict.util import rng, derive_seed, config_to_dict

__all__ = [
    'GenConfig', 'ACTIVITY_TYPES', 'PERTURBATIONS', 'generate_project', 'generate_dataset',
    'split_instances', 'perturb', 'perturb_all', 'resource_features_default', 'resource_edges']

ACTIVITY_TYPES = ('analysis', 'design', 'implementation', 'testing')
PERTURBATIONS = ('feature_noise', 'missingness', 'edge_drop', 'edge_add')
#: Bounds of resource demands.
DEMAND_RANGE = (0.1, 10.0)
T_FLOOR, C_FLOOR = 0.5, 0.1


@dataclasses.dataclass
class GenConfig:
    #: Number of activities.
    n: int = 100
    #: Probability of an edge between two activities in topological order.
    rho: float = 0.1
    #: Number of resources.
    p: int = 5
    #: Duration coefficients: own demand, predecessor demand, in-degree.
    alpha: typing.Tuple[float, float, float] = (0.7, 0.2, 0.1)
    #: Cost coefficients: duration, own demand, skill.
    beta: typing.Tuple[float, float, float] = (0.6, 0.3, 0.1)
    #: Standard deviation of the additive duration noise.
    sigma_t: float = 0.5
    #: Standard deviation of the additive cost noise.
    sigma_c: float = 0.5
    #: Range of the multiplicative planner estimate error.
    est_band: typing.Tuple[float, float] = (0.8, 1.2)
    #: Standard deviation of the log-space demand distribution.
    demand_sigma: float = 0.5
    #: Number of activity type categories.
    n_types: int = 4
    seed: int = 13

    def validate(self):
        if self.n < 2:
            raise InvalidConfig('n must be at least 2')
        if not 0 < self.rho < 1:
            raise InvalidConfig('rho must be in (0, 1)')
        if self.p < 1:
            raise InvalidConfig('p must be at least 1')
        if min(self.sigma_t, self.sigma_c, self.demand_sigma) < 0:
            raise InvalidConfig('Noise levels must be non-negative')
        if len(self.alpha) != 3 or len(self.beta) != 3:
            raise InvalidConfig('alpha and beta need three coefficients each')
        if not 0 < self.est_band[0] <= self.est_band[1]:
            raise InvalidConfig('est_band must be an interval of positive factors')
        if not 1 <= self.n_types <= len(ACTIVITY_TYPES):
            raise InvalidConfig('n_types must be in [1, {}]'.format(len(ACTIVITY_TYPES)))
        return self


def _sample_dag(n: int, rho: float, seed: int) -> typing.Tuple[list, list]:
    gen = rng(seed, 'graph')
    perm = gen.permutation(n)
    draws = gen.random((n, n))
    edges = [
        (int(perm[i]), int(perm[j]))
        for i in range(n - 1) for j in range(i + 1, n) if draws[i, j] < rho]

    succ = [[] for _ in range(n)]
    for s, d in edges:
        succ[s].append(d)

    def reachable(src, dst):
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for v in succ[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    backbone = []
    for i in range(n - 1):
        u, v = int(perm[i]), int(perm[i + 1])
        if not reachable(u, v):
            succ[u].append(v)
            backbone.append((u, v))
    return edges, backbone


def resource_features_default(demands: np.ndarray,
                              sigma2: float = 0.25,
                              skill: typing.Optional[np.ndarray] = None) -> np.ndarray:
    """
    Initial resource node features: unit efficiency belief, unit cost rate and productivity,
    utilization as share of the total demand.
    """
    p = demands.shape[1]
    total = demands.sum()
    res = np.zeros((p, len(RESOURCE_FEATURES)))
    res[:, RESOURCE_FEATURES.index('mu_hat')] = 1.0
    res[:, RESOURCE_FEATURES.index('sigma2_hat')] = sigma2
    res[:, RESOURCE_FEATURES.index('cost_rate')] = 1.0
    res[:, RESOURCE_FEATURES.index('std_productivity')] = 1.0
    res[:, RESOURCE_FEATURES.index('utilization')] = \
        demands.sum(axis=0) / total if total > 0 else 0.0
    res[:, RESOURCE_FEATURES.index('skill_level')] = \
        float(np.mean(skill)) if skill is not None and len(skill) else 1.0
    return res


def resource_edges(activity_ids, resource_ids, demands) -> typing.List[Edge]:
    """Assignment edges for positive demands, collaboration edges between co-assigned resources."""
    edges = []
    for i, aid in enumerate(activity_ids):
        for k, rid in enumerate(resource_ids):
            if demands[i, k] > 0:
                edges.append(Edge(aid, rid, 'assignment', (float(demands[i, k]),)))
    for k in range(len(resource_ids)):
        for kk in range(k + 1, len(resource_ids)):
            shared = int(((demands[:, k] > 0) & (demands[:, kk] > 0)).sum())
            if shared:
                edges.append(Edge(
                    resource_ids[k], resource_ids[kk], 'collaboration', (float(shared),)))
    return edges


def generate_project(config: GenConfig, name: typing.Optional[str] = None) -> ProjectInstance:
    """
    Generate one project instance.

    .. code-block:: python

        >>> inst = generate_project(GenConfig(n=2, rho=0.05, seed=1))
        >>> len(inst.graph.edges_of('precedence'))
        1
    """
    config.validate()
    n, p, seed = config.n, config.p, config.seed
    width = max(4, len(str(n)))
    ids = ['a{}'.format(str(i + 1).zfill(width)) for i in range(n)]
    rids = ['r{}'.format(k + 1) for k in range(p)]

    edges, backbone = _sample_dag(n, config.rho, seed)
    pairs = sorted(set(edges + backbone))

    gen = rng(seed, 'demands')
    mu = gen.uniform(0.5, 1.5, size=(n, p))
    demands = np.clip(
        np.exp(mu + config.demand_sigma * gen.standard_normal((n, p))), *DEMAND_RANGE)
    skill = rng(seed, 'skill').uniform(0.8, 1.2, size=n)
    types = rng(seed, 'types').integers(0, config.n_types, size=n)

    own = demands.sum(axis=1)
    pred_demand, in_degree = np.zeros(n), np.zeros(n)
    for s, d in pairs:
        pred_demand[d] += own[s]
        in_degree[d] += 1
    a1, a2, a3 = config.alpha
    b1, b2, b3 = config.beta
    t_true = a1 * own + a2 * pred_demand + a3 * in_degree \
        + config.sigma_t * rng(seed, 'noise_t').standard_normal(n)
    t_true = np.maximum(t_true, T_FLOOR)
    c_true = b1 * t_true + b2 * own + b3 * skill \
        + config.sigma_c * rng(seed, 'noise_c').standard_normal(n)
    c_true = np.maximum(c_true, C_FLOOR)

    est = rng(seed, 'estimates').uniform(*config.est_band, size=(2, n))

    graph = ProjectGraph(
        ids,
        rids,
        [Edge(ids[s], ids[d], 'precedence') for s, d in pairs]
        + resource_edges(ids, rids, demands))
    return ProjectInstance(
        name=name or 'synth-{}'.format(seed),
        graph=graph,
        demands=demands,
        t_est=t_true * est[0],
        c_est=c_true * est[1],
        t_true=t_true,
        c_true=c_true,
        skill=skill,
        categoricals={'type': tuple(ACTIVITY_TYPES[t] for t in types)},
        resource_features=resource_features_default(demands, skill=skill),
        meta=dict(
            source='synthgen',
            seed=seed,
            config=config_to_dict(config),
            backbone=[[ids[s], ids[d]] for s, d in backbone]),
    )


def generate_dataset(config: GenConfig, samples: int) -> typing.List[ProjectInstance]:
    """
    `samples` instances; instance `k` uses the sub-seed ``derive_seed(config.seed, 'instance', k)``.
    """
    res = []
    for k in range(samples):
        cfg = dataclasses.replace(config, seed=derive_seed(config.seed, 'instance', k) % 2 ** 32)
        res.append(generate_project(cfg, name='synth-{}-{:04d}'.format(config.seed, k)))
    return res


def split_instances(instances: typing.Sequence,
                    seed: int,
                    fractions: typing.Tuple[float, float, float] = (0.7, 0.15, 0.15)):
    """
    Shuffle and split into train, validation and test lists.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise InvalidConfig('fractions must be three non-negative numbers summing to 1')
    order = rng(seed, 'split').permutation(len(instances))
    n_train = int(round(fractions[0] * len(instances)))
    n_val = int(round(fractions[1] * len(instances)))
    items = [instances[i] for i in order]
    return items[:n_train], items[n_train:n_train + n_val], items[n_train + n_val:]


def _backbone(instance: ProjectInstance) -> typing.Set[typing.Tuple[str, str]]:
    if 'backbone' in instance.meta:
        return {tuple(e) for e in instance.meta['backbone']}
    order = topological_sort(instance.graph)
    existing = {(e.src, e.dst) for e in instance.graph.edges_of('precedence')}
    return {(u, v) for u, v in zip(order, order[1:]) if (u, v) in existing}


def perturb(instance: ProjectInstance, kind: str, value: float, seed: int,
            log=None) -> ProjectInstance:
    """
    Apply one controlled perturbation.

    - `feature_noise`: add N(0, value * std) noise to each demand column (clipped to the demand
      range),
    - `missingness`: mask each demand entry with probability `value`,
    - `edge_drop`: drop each non-backbone precedence edge with probability `value`,
    - `edge_add`: add Binomial(|E|, value) precedence edges respecting a topological order.

    True targets are left unchanged.
    """
    if kind not in PERTURBATIONS:
        raise ValidationError('Unknown perturbation {}'.format(kind))
    if not 0 <= value <= 1:
        raise RateOutOfRange('{} rate {} not in [0, 1]'.format(kind, value))
    if value == 0:
        return instance
    log = log or logging.getLogger(__name__)
    gen = rng(seed, 'perturb', kind)
    graph, n = instance.graph, instance.n_activities

    if kind == 'feature_noise':
        std = instance.demands.std(axis=0)
        noise = gen.standard_normal(instance.demands.shape) * value * std
        return instance.replace(demands=np.clip(instance.demands + noise, *DEMAND_RANGE))

    if kind == 'missingness':
        mask = gen.random(instance.demands.shape) < value
        missing = dict(instance.missing)
        missing['demands'] = mask | missing.get('demands', np.zeros(mask.shape, dtype=bool))
        log.debug('{}: masked {} demand entries'.format(instance.name, int(mask.sum())))
        return instance.replace(
            demands=np.where(missing['demands'], 0.0, instance.demands), missing=missing)

    prec = graph.edges_of('precedence')
    if kind == 'edge_drop':
        backbone = _backbone(instance)
        draws = gen.random(len(prec))
        drop = [e for e, u in zip(prec, draws) if u < value and (e.src, e.dst) not in backbone]
        log.debug('{}: dropped {} precedence edges'.format(instance.name, len(drop)))
        return instance.replace(graph=graph.subgraph_without_edges(drop))

    position = {aid: i for i, aid in enumerate(topological_sort(graph))}
    ids = sorted(graph.activity_ids, key=lambda a: position[a])
    existing = {(e.src, e.dst) for e in prec}
    candidates = [
        (ids[i], ids[j]) for i in range(n) for j in range(i + 1, n)
        if (ids[i], ids[j]) not in existing]
    k = min(int(gen.binomial(len(prec), value)), len(candidates))
    chosen = gen.choice(len(candidates), size=k, replace=False) if k else []
    added = [Edge(*candidates[c], 'precedence') for c in sorted(chosen)]
    log.debug('{}: added {} precedence edges'.format(instance.name, len(added)))
    return instance.replace(graph=graph.replace_edges(list(graph.edges) + added))


def perturb_all(instance: ProjectInstance,
                perturbations: typing.Sequence[typing.Tuple[str, float]],
                seed: int,
                log=None) -> ProjectInstance:
    """Apply perturbations in order; the i-th uses the sub-seed ``derive_seed(seed, i)``."""
    for i, (kind, value) in enumerate(perturbations):
        instance = perturb(instance, kind, value, derive_seed(seed, i), log=log)
    return instance
