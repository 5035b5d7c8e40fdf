"""
Feature preprocessing fitted on the training split.

Numeric activity features (demands ``R_k``, ``T_est``, ``C_est`` and further numeric attributes)
are

1. imputed with the training median,
2. winsorized at the training 1st and 99th percentiles (optional, on by default),
3. z-scored with the training mean and standard deviation (a zero standard deviation is
   replaced by 1, so constant features map to 0).

Categorical attributes are imputed with the training mode and one-hot encoded over the training
vocabulary plus an ``UNK`` slot. Resource node features and the structural columns of the feature
matrix (degrees, betweenness, number of assigned resources) are z-scored.

Targets are never looked at. Imputation and winsorization are idempotent; z-scoring is not, so
:func:`apply_preprocess` must be applied to raw instances only.
"""
import typing
import logging
import collections
import dataclasses

import numpy as np
import pandas as pd

from rbpredict.errors import EmptyTrainingSet, FeatureDimMismatch
from rbpredict.graph import (
    RESOURCE_FEATURES, activity_features, activity_feature_names, betweenness_centrality,
)
from rbpredict.instance import ProjectInstance

__all__ = [
    'PreprocessStats', 'fit_preprocess', 'apply_preprocess', 'feature_matrix', 'feature_names',
    'STRUCTURAL']

STRUCTURAL = ('deg_in', 'deg_out', 'betweenness', 'n_resources')
PERCENTILES = (1.0, 99.0)
INDICATOR_PREFIX = 'missing:'


@dataclasses.dataclass
class PreprocessStats:
    #: Per numeric column: median, lo, hi (winsorization cuts, `None` if disabled), mean, std.
    numeric: typing.Dict[str, typing.Dict[str, float]]
    #: Per categorical attribute: vocab (sorted) and mode.
    categorical: typing.Dict[str, typing.Dict[str, typing.Any]]
    #: Per resource feature: mean, std.
    resource: typing.Dict[str, typing.Dict[str, float]]
    #: Per structural column: mean, std.
    structural: typing.Dict[str, typing.Dict[str, float]]
    #: Numeric columns which get a missingness indicator column.
    indicators: typing.List[str] = dataclasses.field(default_factory=list)

    @property
    def n_demands(self) -> int:
        return sum(1 for k in self.numeric if k.startswith('R_'))

    @property
    def extras(self) -> typing.List[str]:
        return [k for k in self.numeric if not k.startswith('R_') and k not in {'T_est', 'C_est'}]

    @property
    def vocabularies(self) -> typing.Dict[str, typing.List[str]]:
        return collections.OrderedDict((k, v['vocab']) for k, v in self.categorical.items())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> 'PreprocessStats':
        return cls(
            numeric=collections.OrderedDict(d['numeric']),
            categorical=collections.OrderedDict(d['categorical']),
            resource=collections.OrderedDict(d['resource']),
            structural=collections.OrderedDict(d['structural']),
            indicators=list(d.get('indicators', [])))


def _numeric_columns(instance: ProjectInstance):
    """
    :return: `OrderedDict` mapping column names to pairs (values, missing mask).
    """
    n = instance.n_activities
    res = collections.OrderedDict()
    dmask = instance.missing.get('demands', np.zeros(instance.demands.shape, dtype=bool))
    for k in range(instance.demands.shape[1]):
        res['R_{}'.format(k + 1)] = (instance.demands[:, k], dmask[:, k])
    res['T_est'] = (instance.t_est, instance.missing.get('t_est', np.zeros(n, dtype=bool)))
    res['C_est'] = (instance.c_est, instance.missing.get('c_est', np.zeros(n, dtype=bool)))
    for name, values in instance.extras.items():
        res[name] = (values, instance.missing.get(name, np.zeros(n, dtype=bool)))
    return res


def _structural(instance: ProjectInstance) -> np.ndarray:
    g = instance.graph
    bc = betweenness_centrality(g)
    return np.column_stack([
        g.in_degree, g.out_degree, [bc[a] for a in g.activity_ids], g.n_assigned])


def _moments(values: np.ndarray) -> typing.Dict[str, float]:
    std = float(np.std(values)) if len(values) else 0.0
    return dict(
        mean=float(np.mean(values)) if len(values) else 0.0,
        std=std if std > 1e-12 else 1.0)


def fit_preprocess(train: typing.Sequence[ProjectInstance],
                   indicators: bool = False,
                   winsorize: bool = True,
                   log=None) -> PreprocessStats:
    """
    :param indicators: Whether to add a 0/1 indicator column for every numeric column with \
    missing values in the training data.
    :param winsorize: Whether to clip numeric features at the training percentiles.
    :raises EmptyTrainingSet: if `train` is empty.
    """
    log = log or logging.getLogger(__name__)
    if not train:
        raise EmptyTrainingSet('Cannot fit preprocessing statistics on zero instances')
    p = train[0].demands.shape[1]
    extras = list(train[0].extras)
    for inst in train[1:]:
        if inst.demands.shape[1] != p or set(inst.extras) != set(extras):
            raise FeatureDimMismatch('Instance {} has a different feature layout than {}'.format(
                inst.name, train[0].name))

    columns = collections.OrderedDict()
    for inst in train:
        for name, (values, mask) in _numeric_columns(inst).items():
            columns.setdefault(name, []).append((values, mask))

    numeric, with_missing = collections.OrderedDict(), []
    for name, parts in columns.items():
        values = np.concatenate([v for v, _ in parts])
        mask = np.concatenate([m for _, m in parts])
        observed = values[~mask]
        if mask.any():
            with_missing.append(name)
        if not len(observed):
            log.warning('No observed values for feature {}; imputing 0'.format(name))
            observed = np.zeros(1)
        median = float(np.median(observed))
        cleaned, lo, hi = np.where(mask, median, values), None, None
        if winsorize:
            lo, hi = (float(x) for x in np.percentile(observed, PERCENTILES))
            cleaned = np.clip(cleaned, lo, hi)
        numeric[name] = dict(median=median, lo=lo, hi=hi, **_moments(cleaned))

    categorical = collections.OrderedDict()
    for name in sorted({k for inst in train for k in inst.categoricals}):
        observed = []
        for inst in train:
            values = inst.categoricals.get(name, ())
            mask = inst.missing.get(name, np.zeros(len(values), dtype=bool))
            observed.extend(v for v, m in zip(values, mask) if not m)
        observed = pd.Series(observed, dtype=object)
        categorical[name] = dict(
            vocab=sorted(observed.unique().tolist()),
            mode=str(observed.mode().iloc[0]) if len(observed) else '')

    rf = np.vstack([inst.resource_features for inst in train])
    structural = np.vstack([_structural(inst) for inst in train])
    return PreprocessStats(
        numeric=numeric,
        categorical=categorical,
        resource=collections.OrderedDict(
            (name, _moments(rf[:, k])) for k, name in enumerate(RESOURCE_FEATURES)),
        structural=collections.OrderedDict(
            (name, _moments(structural[:, k])) for k, name in enumerate(STRUCTURAL)),
        indicators=with_missing if indicators else [],
    )


def _transform(values, mask, stats):
    values = np.where(mask, stats['median'], values)
    if stats['lo'] is not None:
        values = np.clip(values, stats['lo'], stats['hi'])
    return (values - stats['mean']) / stats['std']


def apply_preprocess(stats: PreprocessStats, instance: ProjectInstance) -> ProjectInstance:
    """
    Return a new instance with imputed, winsorized and z-scored features. Missing masks are
    cleared; numeric attributes are aligned to the training layout (absent ones imputed).

    :raises FeatureDimMismatch: if the number of resource demands differs from training.
    """
    n = instance.n_activities
    if instance.demands.shape[1] != stats.n_demands:
        raise FeatureDimMismatch('{} has {} resource demands, expected {}'.format(
            instance.name, instance.demands.shape[1], stats.n_demands))
    cols = _numeric_columns(instance)
    out = {}
    for name, s in stats.numeric.items():
        values, mask = cols.get(name, (np.zeros(n), np.ones(n, dtype=bool)))
        out[name] = (_transform(values, mask, s), mask)

    demands = np.column_stack(
        [out['R_{}'.format(k + 1)][0] for k in range(stats.n_demands)]) \
        if stats.n_demands else np.zeros((n, 0))
    extras = collections.OrderedDict((name, out[name][0]) for name in stats.extras)
    for name in stats.indicators:
        extras[INDICATOR_PREFIX + name] = out[name][1].astype(float)

    categoricals = {}
    for name, s in stats.categorical.items():
        values = instance.categoricals.get(name, (s['mode'],) * n)
        mask = instance.missing.get(name, np.zeros(n, dtype=bool))
        categoricals[name] = tuple(s['mode'] if m else v for v, m in zip(values, mask))

    rf = instance.resource_features.copy()
    for k, name in enumerate(RESOURCE_FEATURES):
        rf[:, k] = (rf[:, k] - stats.resource[name]['mean']) / stats.resource[name]['std']

    meta = dict(instance.meta)
    meta['preprocessed'] = True
    return instance.replace(
        demands=demands,
        t_est=out['T_est'][0],
        c_est=out['C_est'][0],
        extras=extras,
        categoricals=categoricals,
        missing={},
        resource_features=rf,
        meta=meta,
    )


def feature_matrix(instance: ProjectInstance,
                   stats: typing.Optional[PreprocessStats] = None,
                   centrality: typing.Optional[np.ndarray] = None) -> np.ndarray:
    """
    The model input matrix of a (preprocessed) instance. With `stats`, categoricals are encoded
    over the training vocabulary with `UNK` slots and structural columns are z-scored.
    """
    if stats is None:
        return instance.features(centrality=centrality)
    x = activity_features(
        instance.graph, instance, vocabularies=stats.vocabularies, unk=True, centrality=centrality)
    offset = instance.demands.shape[1] + 2
    for k, name in enumerate(STRUCTURAL):
        s = stats.structural[name]
        x[:, offset + k] = (x[:, offset + k] - s['mean']) / s['std']
    return x


def feature_names(instance: ProjectInstance,
                  stats: typing.Optional[PreprocessStats] = None) -> typing.List[str]:
    if stats is None:
        return instance.feature_names()
    return activity_feature_names(instance, vocabularies=stats.vocabularies, unk=True)
