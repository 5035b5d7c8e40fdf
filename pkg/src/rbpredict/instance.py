"""
The dataset unit: a project graph with feature matrices, estimates and (optional) true targets.
"""
import typing
import dataclasses

import numpy as np

from rbpredict.graph import (
    ProjectGraph, RESOURCE_FEATURES, compute_schedule, activity_features, activity_feature_names,
)

__all__ = ['ProjectInstance']


def _array_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(np.asarray(a), np.asarray(b))


@dataclasses.dataclass(eq=False)
class ProjectInstance:
    """
    Activity-level arrays are aligned with ``graph.activity_ids``, resource-level arrays with
    ``graph.resource_ids``.
    """
    #: Instance name, unique within a dataset.
    name: str
    graph: ProjectGraph
    #: Resource demands, shape (n, p).
    demands: np.ndarray
    t_est: np.ndarray
    c_est: np.ndarray
    #: True durations and costs; `None` for unlabeled data.
    t_true: typing.Optional[np.ndarray] = None
    c_true: typing.Optional[np.ndarray] = None
    skill: typing.Optional[np.ndarray] = None
    #: Categorical attributes per activity. The activity type is stored under the key `type`.
    categoricals: typing.Dict[str, typing.Tuple[str, ...]] = dataclasses.field(
        default_factory=dict)
    #: Further numeric attributes per activity (e.g. cost drivers of tabular data).
    extras: typing.Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    #: Boolean masks of missing values, keyed by `demands`, `t_est`, `c_est` or an `extras` name.
    missing: typing.Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    #: Resource node features, shape (m, len(RESOURCE_FEATURES)).
    resource_features: typing.Optional[np.ndarray] = None
    #: Project-level cost not attributable to activities.
    overhead: float = 0.0
    #: Provenance (source, seed, generator config, ...).
    meta: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        n = self.graph.n_activities
        demands = np.asarray(self.demands, dtype=float)
        self.demands = demands.reshape(n, demands.shape[-1] if demands.ndim == 2 else -1) \
            if demands.size else np.zeros((n, demands.shape[-1] if demands.ndim == 2 else 0))
        self.t_est = np.asarray(self.t_est, dtype=float).reshape(n)
        self.c_est = np.asarray(self.c_est, dtype=float).reshape(n)
        for attr in ['t_true', 'c_true', 'skill']:
            if getattr(self, attr) is not None:
                setattr(self, attr, np.asarray(getattr(self, attr), dtype=float).reshape(n))
        self.categoricals = {k: tuple(str(x) for x in v) for k, v in self.categoricals.items()}
        self.extras = {k: np.asarray(v, dtype=float).reshape(n) for k, v in self.extras.items()}
        self.missing = {
            k: np.asarray(v, dtype=bool) for k, v in self.missing.items() if np.any(v)}
        if self.resource_features is None:
            self.resource_features = np.zeros((self.graph.n_resources, len(RESOURCE_FEATURES)))
        self.resource_features = np.asarray(self.resource_features, dtype=float).reshape(
            self.graph.n_resources, len(RESOURCE_FEATURES))

    def __eq__(self, other):
        if not isinstance(other, ProjectInstance):
            return NotImplemented
        return self.name == other.name \
            and self.graph == other.graph \
            and all(_array_equal(getattr(self, a), getattr(other, a)) for a in [
                'demands', 't_est', 'c_est', 't_true', 'c_true', 'skill', 'resource_features']) \
            and self.categoricals == other.categoricals \
            and set(self.extras) == set(other.extras) \
            and all(_array_equal(v, other.extras[k]) for k, v in self.extras.items()) \
            and set(self.missing) == set(other.missing) \
            and all(_array_equal(v, other.missing[k]) for k, v in self.missing.items()) \
            and self.overhead == other.overhead

    def __repr__(self):
        return '<ProjectInstance {} activities={} resources={}>'.format(
            self.name, self.graph.n_activities, self.graph.n_resources)

    @property
    def n_activities(self) -> int:
        return self.graph.n_activities

    @property
    def labeled(self) -> bool:
        return self.t_true is not None and self.c_true is not None

    @property
    def activity_types(self) -> typing.Tuple[str, ...]:
        return self.categoricals.get('type', ())

    def replace(self, **kw) -> 'ProjectInstance':
        return dataclasses.replace(self, **kw)

    def makespan_true(self) -> float:
        return compute_schedule(self.graph, self.t_true).makespan

    def cost_true(self) -> float:
        return float(np.sum(self.c_true)) + self.overhead

    def features(self, vocabularies=None, unk=False, centrality=None) -> np.ndarray:
        return activity_features(
            self.graph, self, vocabularies=vocabularies, unk=unk, centrality=centrality)

    def feature_names(self, vocabularies=None, unk=False) -> typing.List[str]:
        return activity_feature_names(self, vocabularies=vocabularies, unk=unk)
