"""
Project networks as typed DAGs.

A :class:`ProjectGraph` holds activity nodes and resource nodes connected by edges of three
relation types:

- ``precedence`` (activity -> activity): the source must finish before the target starts,
- ``assignment`` (activity -> resource): the resource works on the activity,
- ``collaboration`` (resource -> resource): the resources share at least one activity.

Scheduling functions (:func:`topological_sort`, :func:`compute_schedule`, ...) only look at the
precedence sub-graph. Ties are broken by ascending node id everywhere, so all outputs are
deterministic.
"""

import typing
import functools
import collections
import dataclasses

import numpy as np
import networkx as nx

from rbpredict.errors import (
    ValidationError, CycleDetected, MissingDuration, PathBudgetExceeded, MissingFeature,
)
from rbpredict.util import log_or_raise

__all__ = [
    'RELATIONS', 'SLOTS', 'RESOURCE_FEATURES', 'Edge', 'ProjectGraph', 'Schedule',
    'topological_sort', 'topological_levels', 'compute_schedule', 'earliest_finish',
    'makespan_batch', 'enumerate_paths', 'count_paths', 'betweenness_centrality',
    'activity_feature_names', 'activity_features']

RELATIONS = ('precedence', 'assignment', 'collaboration')
#: Message slots of the graph models, in the fixed order in which relation messages are
#: concatenated.
SLOTS = ('precedence_in', 'precedence_out', 'assignment', 'collaboration')
#: Columns of the resource node feature table.
RESOURCE_FEATURES = (
    'mu_hat', 'sigma2_hat', 'cost_rate', 'std_productivity', 'utilization', 'skill_level')

Durations = typing.Union[typing.Mapping[str, float], typing.Sequence[float], np.ndarray]


@dataclasses.dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    relation: str
    features: typing.Tuple[float, ...] = ()


class ProjectGraph:
    """
    An immutable project network.

    Node indices: activities are numbered ``0..n-1`` in the order of `activity_ids`, resources
    ``n..n+m-1`` in the order of `resource_ids`.

    .. code-block:: python

        >>> g = ProjectGraph.from_edges(['A', 'B', 'C'], [('A', 'B'), ('B', 'C')])
        >>> g.predecessors('C')
        ('B',)
    """
    def __init__(self,
                 activity_ids: typing.Iterable[str],
                 resource_ids: typing.Iterable[str] = (),
                 edges: typing.Iterable[typing.Union[Edge, tuple]] = ()):
        self.activity_ids = tuple(str(a) for a in activity_ids)
        self.resource_ids = tuple(str(r) for r in resource_ids)
        ids = self.activity_ids + self.resource_ids
        if len(set(ids)) != len(ids):
            raise ValidationError('Node ids must be unique across activities and resources')
        self.index = {nid: i for i, nid in enumerate(ids)}
        self.n_activities, self.n_resources = len(self.activity_ids), len(self.resource_ids)

        edge_list, seen = [], set()
        for e in edges:
            if not isinstance(e, Edge):
                feats = e[3] if len(e) > 3 else ()
                e = Edge(str(e[0]), str(e[1]), e[2], tuple(float(x) for x in feats))
            key = (e.src, e.dst, e.relation)
            if key in seen:
                raise ValidationError('Duplicate edge {} -> {} ({})'.format(*key))
            seen.add(key)
            self._check_edge(e)
            edge_list.append(e)
        self.edges = tuple(edge_list)

        n = self.n_activities
        pred, succ = [[] for _ in range(n)], [[] for _ in range(n)]
        assigned = [[] for _ in range(n + self.n_resources)]
        collab = [[] for _ in range(n + self.n_resources)]
        for e in self.edges:
            s, d = self.index[e.src], self.index[e.dst]
            if e.relation == 'precedence':
                pred[d].append(s)
                succ[s].append(d)
            elif e.relation == 'assignment':
                assigned[s].append(d)
                assigned[d].append(s)
            else:
                collab[s].append(d)
                collab[d].append(s)

        def by_id(nodes):
            return tuple(sorted(set(nodes), key=lambda i: ids[i]))

        self._pred = tuple(by_id(p) for p in pred)
        self._succ = tuple(by_id(s) for s in succ)
        self._assigned = tuple(by_id(a) for a in assigned)
        self._collab = tuple(by_id(c) for c in collab)

        # Message passing adjacency per slot: arrays of (sender, receiver) node indices.
        slots = collections.OrderedDict((s, ([], [])) for s in SLOTS)
        for v in range(n):
            for u in self._pred[v]:
                slots['precedence_in'][0].append(u)
                slots['precedence_in'][1].append(v)
            for u in self._succ[v]:
                slots['precedence_out'][0].append(u)
                slots['precedence_out'][1].append(v)
        for v in range(n + self.n_resources):
            for u in self._assigned[v]:
                slots['assignment'][0].append(u)
                slots['assignment'][1].append(v)
            for u in self._collab[v]:
                slots['collaboration'][0].append(u)
                slots['collaboration'][1].append(v)
        self._slots = {}
        for name, (src, dst) in slots.items():
            src, dst = np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)
            src.flags.writeable = False
            dst.flags.writeable = False
            self._slots[name] = (src, dst)

    def _check_edge(self, e: Edge):
        if e.relation not in RELATIONS:
            raise ValidationError('Unknown relation {}'.format(e.relation))
        for nid in (e.src, e.dst):
            if nid not in self.index:
                raise ValidationError('Edge references unknown node {}'.format(nid))
        src_act = self.index[e.src] < self.n_activities
        dst_act = self.index[e.dst] < self.n_activities
        if e.relation == 'precedence' and not (src_act and dst_act):
            raise ValidationError('Precedence edges must connect activities')
        if e.relation == 'precedence' and e.src == e.dst:
            raise CycleDetected((e.src, e.dst))
        if e.relation == 'assignment' and not (src_act and not dst_act):
            raise ValidationError('Assignment edges must connect an activity to a resource')
        if e.relation == 'collaboration' and (src_act or dst_act or e.src == e.dst):
            raise ValidationError('Collaboration edges must connect two distinct resources')

    @classmethod
    def from_edges(cls,
                   activity_ids: typing.Iterable[str],
                   precedence: typing.Iterable[typing.Tuple[str, str]] = (),
                   resource_ids: typing.Iterable[str] = (),
                   assignment: typing.Iterable[typing.Tuple[str, str]] = (),
                   collaboration: typing.Iterable[typing.Tuple[str, str]] = ()) -> 'ProjectGraph':
        edges = [Edge(str(s), str(d), 'precedence') for s, d in precedence]
        edges.extend(Edge(str(s), str(d), 'assignment') for s, d in assignment)
        edges.extend(Edge(str(s), str(d), 'collaboration') for s, d in collaboration)
        return cls(activity_ids, resource_ids, edges)

    def replace_edges(self, edges: typing.Iterable[Edge]) -> 'ProjectGraph':
        return ProjectGraph(self.activity_ids, self.resource_ids, edges)

    def subgraph_without_edges(self, edges: typing.Iterable[Edge]) -> 'ProjectGraph':
        drop = {(e.src, e.dst, e.relation) for e in edges}
        return self.replace_edges(
            e for e in self.edges if (e.src, e.dst, e.relation) not in drop)

    def __repr__(self):
        return '<ProjectGraph activities={} resources={} edges={}>'.format(
            self.n_activities, self.n_resources, len(self.edges))

    def __eq__(self, other):
        return isinstance(other, ProjectGraph) \
            and self.activity_ids == other.activity_ids \
            and self.resource_ids == other.resource_ids \
            and set(self.edges) == set(other.edges)

    def edges_of(self, relation: str) -> typing.List[Edge]:
        return [e for e in self.edges if e.relation == relation]

    @property
    def precedence_pairs(self) -> typing.List[typing.Tuple[int, int]]:
        """Precedence edges as pairs of activity indices."""
        return [(u, v) for v in range(self.n_activities) for u in self._pred[v]]

    def predecessors(self, activity: str) -> typing.Tuple[str, ...]:
        return tuple(self.activity_ids[i] for i in self._pred[self.index[activity]])

    def successors(self, activity: str) -> typing.Tuple[str, ...]:
        return tuple(self.activity_ids[i] for i in self._succ[self.index[activity]])

    def pred_index(self, i: int) -> typing.Tuple[int, ...]:
        return self._pred[i]

    def succ_index(self, i: int) -> typing.Tuple[int, ...]:
        return self._succ[i]

    def assigned_index(self, i: int) -> typing.Tuple[int, ...]:
        return self._assigned[i]

    def slot_edges(self, slot: str) -> typing.Tuple[np.ndarray, np.ndarray]:
        """(sender, receiver) node index arrays of a message slot."""
        return self._slots[slot]

    def neighbors(self, node: int, slot: str) -> typing.Tuple[int, ...]:
        """Indices of the nodes sending messages to `node` in `slot`, ordered by id."""
        if slot == 'precedence_in':
            return self._pred[node] if node < self.n_activities else ()
        if slot == 'precedence_out':
            return self._succ[node] if node < self.n_activities else ()
        if slot == 'assignment':
            return self._assigned[node]
        return self._collab[node]

    @functools.cached_property
    def in_degree(self) -> np.ndarray:
        return np.array([len(p) for p in self._pred], dtype=float)

    @functools.cached_property
    def out_degree(self) -> np.ndarray:
        return np.array([len(s) for s in self._succ], dtype=float)

    @functools.cached_property
    def n_assigned(self) -> np.ndarray:
        return np.array(
            [len(self._assigned[i]) for i in range(self.n_activities)], dtype=float)

    def reachable(self, src: int, dst: int) -> bool:
        """Whether a precedence path leads from activity `src` to activity `dst`."""
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for v in self._succ[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    @functools.cached_property
    def digraph(self) -> nx.DiGraph:
        """The precedence sub-graph as frozen `networkx.DiGraph` over activity ids."""
        G = nx.DiGraph()
        G.add_nodes_from(self.activity_ids)
        G.add_edges_from(
            (self.activity_ids[u], self.activity_ids[v])
            for u in range(self.n_activities) for v in self._succ[u])
        return nx.freeze(G)

    @functools.cached_property
    def _order(self):
        try:
            return tuple(
                self.index[a] for a in nx.lexicographical_topological_sort(self.digraph))
        except nx.NetworkXUnfeasible:
            src, dst = nx.find_cycle(self.digraph)[-1][:2]
            return CycleDetected((src, dst))

    def order(self) -> typing.Tuple[int, ...]:
        """Topological order as activity indices; raises `CycleDetected`."""
        res = self._order
        if isinstance(res, CycleDetected):
            raise res
        return res

    @functools.cached_property
    def levels(self) -> typing.Tuple[int, ...]:
        """Longest-path depth (number of edges from a source) per activity."""
        level = [0] * self.n_activities
        for v in self.order():
            for u in self._pred[v]:
                level[v] = max(level[v], level[u] + 1)
        return tuple(level)

    def validate(self, log=None) -> bool:
        try:
            self.order()
        except CycleDetected as e:
            return log_or_raise(e, log=log)
        if log:
            log.debug('{} valid'.format(repr(self)))
        return True


@dataclasses.dataclass(frozen=True)
class Schedule:
    earliest_start: typing.Dict[str, float]
    earliest_finish: typing.Dict[str, float]
    makespan: float
    critical_activities: typing.FrozenSet[str]
    total_float: typing.Dict[str, float]


def _durations_array(graph: ProjectGraph, durations: Durations) -> np.ndarray:
    if isinstance(durations, typing.Mapping):
        res = []
        for aid in graph.activity_ids:
            if aid not in durations:
                raise MissingDuration(aid)
            res.append(float(durations[aid]))
        res = np.array(res, dtype=float)
    else:
        res = np.asarray(durations, dtype=float)
        if res.shape != (graph.n_activities,):
            raise MissingDuration(
                graph.activity_ids[len(res)] if len(res) < graph.n_activities else '?')
    if np.any(res < 0):
        raise ValidationError('Durations must be non-negative')
    return res


def topological_sort(graph: ProjectGraph) -> typing.List[str]:
    """
    Activity ids in an order respecting all precedence edges; ties by ascending id.

    .. code-block:: python

        >>> topological_sort(ProjectGraph.from_edges('BA', [('B', 'A')]))
        ['B', 'A']
    """
    return [graph.activity_ids[i] for i in graph.order()]


def topological_levels(graph: ProjectGraph) -> typing.Dict[str, int]:
    return dict(zip(graph.activity_ids, graph.levels))


def earliest_finish(graph: ProjectGraph, durations: np.ndarray) -> np.ndarray:
    """Earliest finish times for durations given as array aligned with `activity_ids`."""
    ef = np.zeros(graph.n_activities)
    for v in graph.order():
        preds = graph.pred_index(v)
        ef[v] = (max(ef[u] for u in preds) if preds else 0.0) + durations[v]
    return ef


def makespan_batch(graph: ProjectGraph, durations: np.ndarray) -> np.ndarray:
    """
    Makespans for a batch of duration vectors.

    :param durations: Array of shape `(samples, n_activities)`.
    :return: Array of shape `(samples,)`.
    """
    durations = np.asarray(durations, dtype=float)
    if graph.n_activities == 0:
        return np.zeros(durations.shape[0])
    ef = np.zeros_like(durations)
    for v in graph.order():
        preds = graph.pred_index(v)
        start = ef[:, list(preds)].max(axis=1) if preds else 0.0
        ef[:, v] = start + durations[:, v]
    return ef.max(axis=1)


def compute_schedule(graph: ProjectGraph, durations: Durations) -> Schedule:
    """
    Critical path method: forward pass for earliest start/finish, backward pass for the total
    float. Sources start at 0; no virtual source or sink is added.

    .. code-block:: python

        >>> g = ProjectGraph.from_edges('ABCD', [('A', 'B'), ('A', 'C'), ('B', 'D'), ('C', 'D')])
        >>> s = compute_schedule(g, dict(A=1, B=2, C=5, D=1))
        >>> s.makespan, sorted(s.critical_activities)
        (7.0, ['A', 'C', 'D'])
    """
    d = _durations_array(graph, durations)
    order = graph.order()
    ef = earliest_finish(graph, d)
    es = ef - d
    makespan = float(ef.max()) if graph.n_activities else 0.0

    lf = np.full(graph.n_activities, makespan)
    for v in reversed(order):
        succ = graph.succ_index(v)
        if succ:
            lf[v] = min(lf[s] - d[s] for s in succ)
    tf = lf - ef
    tol = 1e-9 * max(1.0, abs(makespan))
    ids = graph.activity_ids
    return Schedule(
        earliest_start={ids[i]: float(es[i]) for i in range(graph.n_activities)},
        earliest_finish={ids[i]: float(ef[i]) for i in range(graph.n_activities)},
        makespan=makespan,
        critical_activities=frozenset(ids[i] for i in range(graph.n_activities) if tf[i] <= tol),
        total_float={ids[i]: float(max(tf[i], 0.0)) for i in range(graph.n_activities)},
    )


def count_paths(graph: ProjectGraph) -> int:
    """Number of source-to-sink precedence paths (exact, by dynamic programming)."""
    paths_to = [0] * graph.n_activities
    for v in graph.order():
        preds = graph.pred_index(v)
        paths_to[v] = sum(paths_to[u] for u in preds) if preds else 1
    return sum(paths_to[v] for v in range(graph.n_activities) if not graph.succ_index(v))


def enumerate_paths(graph: ProjectGraph, max_paths: int = 10000) -> typing.List[typing.List[str]]:
    """
    All source-to-sink precedence paths (oracle for small graphs).

    :raises PathBudgetExceeded: if there are more than `max_paths` paths.
    """
    count = count_paths(graph)
    if count > max_paths:
        raise PathBudgetExceeded(count, max_paths)
    ids, res = graph.activity_ids, []
    sources = sorted(
        (v for v in range(graph.n_activities) if not graph.pred_index(v)), key=lambda i: ids[i])

    def walk(path):
        succ = graph.succ_index(path[-1])
        if not succ:
            res.append([ids[i] for i in path])
            return
        for s in succ:
            walk(path + [s])

    for s in sources:
        walk([s])
    return res


def betweenness_centrality(graph: ProjectGraph) -> typing.Dict[str, float]:
    """
    Unnormalised betweenness on the directed precedence graph with unit edge weights: the sum
    over ordered pairs (s, t), s != t, of the fraction of shortest s-t paths passing through a
    node, endpoints excluded.

    .. code-block:: python

        >>> betweenness_centrality(ProjectGraph.from_edges('ABC', [('A', 'B'), ('B', 'C')]))
        {'A': 0.0, 'B': 1.0, 'C': 0.0}
    """
    graph.order()  # Raises CycleDetected for cyclic input.
    bc = nx.betweenness_centrality(graph.digraph, normalized=False)
    return {a: float(bc[a]) for a in graph.activity_ids}


def activity_feature_names(context, vocabularies: typing.Optional[dict] = None,
                           unk: bool = False) -> typing.List[str]:
    """
    Names of the columns of :func:`activity_features`, in order:

    ``R_1..R_p, T_est, C_est, deg_in, deg_out, betweenness, n_resources``, one-hot columns of
    the activity type, further numeric attributes (``extras``) and one-hot columns of further
    categorical attributes.
    """
    p = context.demands.shape[1]
    names = ['R_{}'.format(k + 1) for k in range(p)]
    names.extend(['T_est', 'C_est', 'deg_in', 'deg_out', 'betweenness', 'n_resources'])
    vocabularies = _vocabularies(context, vocabularies)

    def one_hot(name):
        names.extend('{}={}'.format(name, v) for v in vocabularies[name])
        if unk:
            names.append('{}=UNK'.format(name))

    if 'type' in vocabularies:
        one_hot('type')
    names.extend(context.extras)
    for name in vocabularies:
        if name != 'type':
            one_hot(name)
    return names


def _vocabularies(context, vocabularies):
    if vocabularies is not None:
        return vocabularies
    return collections.OrderedDict(
        (name, sorted(set(values))) for name, values in context.categoricals.items())


def activity_features(graph: ProjectGraph,
                      context,
                      vocabularies: typing.Optional[dict] = None,
                      unk: bool = False,
                      centrality: typing.Optional[np.ndarray] = None) -> np.ndarray:
    """
    The activity node feature matrix, columns as listed by :func:`activity_feature_names`.

    :param context: An object with attributes ``demands`` (n, p), ``t_est``, ``c_est``, \
    ``extras`` (dict of (n,) arrays), ``categoricals`` (dict of per-activity labels) and \
    ``missing`` (dict of boolean masks), e.g. a :class:`rbpredict.instance.ProjectInstance`.
    :param vocabularies: Ordered categories per categorical attribute. Defaults to the sorted \
    distinct values found in `context`.
    :param unk: Whether to add an `UNK` column per categorical for unseen categories.
    :raises MissingFeature: if a masked value is encountered.
    """
    n, ids = graph.n_activities, graph.activity_ids
    for key, mask in (context.missing or {}).items():
        mask = np.asarray(mask)
        if mask.any():
            row = int(np.argwhere(mask)[0][0])
            name = key
            if key == 'demands':
                name = 'R_{}'.format(int(np.argwhere(mask)[0][1]) + 1)
            raise MissingFeature(ids[row], name)
    if centrality is None:
        bc = betweenness_centrality(graph)
        centrality = np.array([bc[a] for a in ids])
    cols = [
        np.asarray(context.demands, dtype=float).reshape(n, -1),
        np.asarray(context.t_est, dtype=float).reshape(n, 1),
        np.asarray(context.c_est, dtype=float).reshape(n, 1),
        graph.in_degree.reshape(n, 1),
        graph.out_degree.reshape(n, 1),
        np.asarray(centrality, dtype=float).reshape(n, 1),
        graph.n_assigned.reshape(n, 1),
    ]
    vocabularies = _vocabularies(context, vocabularies)

    def one_hot(name):
        vocab = list(vocabularies[name])
        values = context.categoricals.get(name, ('',) * n)
        m = np.zeros((n, len(vocab) + (1 if unk else 0)))
        for i, v in enumerate(values):
            if v in vocab:
                m[i, vocab.index(v)] = 1.0
            elif unk:
                m[i, -1] = 1.0
        return m

    if 'type' in vocabularies:
        cols.append(one_hot('type'))
    for name, values in context.extras.items():
        cols.append(np.asarray(values, dtype=float).reshape(n, 1))
    for name in vocabularies:
        if name != 'type':
            cols.append(one_hot(name))
    return np.hstack(cols) if cols else np.zeros((n, 0))


