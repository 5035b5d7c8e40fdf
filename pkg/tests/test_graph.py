import logging
import itertools

import numpy as np
import pytest
import networkx as nx

from rbpredict.errors import ValidationError, CycleDetected, MissingDuration, PathBudgetExceeded
from rbpredict.errors import MissingFeature
from rbpredict.graph import *
from rbpredict.instance import ProjectInstance
from rbpredict.util import rng


def random_dag(n, rho, seed):
    gen = rng(seed, 'test-dag')
    ids = ['n{:02d}'.format(i) for i in range(n)]
    perm = gen.permutation(n)
    pairs = [
        (ids[perm[i]], ids[perm[j]])
        for i in range(n) for j in range(i + 1, n) if gen.random() < rho]
    return ProjectGraph.from_edges(ids, pairs), gen.uniform(0, 10, size=n)


def test_ProjectGraph(diamond):
    assert diamond.predecessors('D') == ('B', 'C')
    assert diamond.successors('A') == ('B', 'C')
    assert list(diamond.in_degree) == [0, 1, 1, 2]
    assert diamond.reachable(0, 3) and not diamond.reachable(3, 0)
    assert diamond.levels == (0, 1, 1, 2)
    assert 'activities=4' in repr(diamond)

    g = ProjectGraph(
        ['A', 'B'], ['r1', 'r2'],
        [('A', 'B', 'precedence'), ('A', 'r1', 'assignment', [2.0]),
         ('r1', 'r2', 'collaboration')])
    assert g.neighbors(g.index['r1'], 'assignment') == (0,)
    assert g.neighbors(g.index['r1'], 'collaboration') == (g.index['r2'],)
    assert g.edges_of('assignment')[0].features == (2.0,)
    src, dst = g.slot_edges('precedence_out')
    assert list(src) == [1] and list(dst) == [0]
    assert g == g.replace_edges(g.edges)
    assert g != g.subgraph_without_edges(g.edges_of('collaboration'))


@pytest.mark.parametrize(
    'activities,resources,edges',
    [
        ('AB', '', [('A', 'B', 'precedence'), ('A', 'B', 'precedence')]),
        ('AB', '', [('A', 'B', 'unknown')]),
        ('AB', '', [('A', 'X', 'precedence')]),
        ('A', 'r', [('r', 'A', 'assignment')]),
        ('A', 'r', [('A', 'r', 'precedence')]),
        ('A', 'rs', [('r', 'r', 'collaboration')]),
        ('A', 'A', []),
    ]
)
def test_ProjectGraph_invalid(activities, resources, edges):
    with pytest.raises(ValidationError):
        ProjectGraph(activities, resources, edges)


def test_topological_sort(chain):
    assert topological_sort(chain) == ['A', 'B', 'C']
    assert topological_sort(ProjectGraph.from_edges('BA')) == ['A', 'B']
    assert topological_levels(chain) == dict(A=0, B=1, C=2)
    with pytest.raises(CycleDetected) as e:
        topological_sort(ProjectGraph.from_edges('AB', [('A', 'B'), ('B', 'A')]))
    assert set(e.value.edge) == {'A', 'B'}


def test_topological_sort_ties_and_cycles():
    g = ProjectGraph.from_edges('CAB', [('C', 'A')])
    assert topological_sort(g) == ['B', 'C', 'A']
    assert nx.is_frozen(g.digraph) and sorted(g.digraph.edges) == [('C', 'A')]

    g = ProjectGraph.from_edges(
        'ABCDE', [('A', 'B'), ('B', 'C'), ('C', 'D'), ('D', 'B'), ('D', 'E')])
    with pytest.raises(CycleDetected) as e:
        topological_sort(g)
    assert e.value.edge in {('B', 'C'), ('C', 'D'), ('D', 'B')}


def test_cycle_validate(caplog):
    g = ProjectGraph.from_edges('ABC', [('A', 'B'), ('B', 'C'), ('C', 'A')])
    assert g.validate(log=logging.getLogger(__name__)) is False
    assert caplog.records
    with pytest.raises(CycleDetected):
        g.validate()


def test_compute_schedule(chain, diamond):
    s = compute_schedule(chain, dict(A=1, B=2, C=3))
    assert s.makespan == 6
    assert s.critical_activities == {'A', 'B', 'C'}
    assert s.earliest_start == dict(A=0, B=1, C=3)

    s = compute_schedule(diamond, dict(A=1, B=2, C=5, D=1))
    assert s.makespan == 7
    assert s.critical_activities == {'A', 'C', 'D'}
    assert s.total_float['B'] == 3

    assert compute_schedule(diamond, np.zeros(4)).makespan == 0
    with pytest.raises(MissingDuration):
        compute_schedule(diamond, dict(A=1))
    with pytest.raises(ValidationError):
        compute_schedule(chain, [1, -1, 1])


def test_schedule_matches_paths():
    for seed in range(200):
        g, d = random_dag(int(rng(seed, 'size').integers(1, 13)), 0.3, seed)
        expected = max(sum(d[g.index[a]] for a in path) for path in enumerate_paths(g))
        assert abs(compute_schedule(g, d).makespan - expected) <= 1e-12
        assert compute_schedule(g, d).critical_activities


def test_makespan_monotone():
    g, d = random_dag(10, 0.3, 3)
    base = compute_schedule(g, d).makespan
    for i in range(10):
        dd = d.copy()
        dd[i] += 0.5
        assert compute_schedule(g, dd).makespan >= base


def test_makespan_batch(diamond):
    d = np.array([[1, 2, 5, 1], [1, 6, 5, 1]], dtype=float)
    assert list(makespan_batch(diamond, d)) == [7, 8]


def test_enumerate_paths(chain, diamond):
    assert enumerate_paths(chain) == [['A', 'B', 'C']]
    assert enumerate_paths(diamond) == [['A', 'B', 'D'], ['A', 'C', 'D']]
    g, _ = random_dag(30, 0.6, 1)
    assert count_paths(g) > 10 ** 4
    with pytest.raises(PathBudgetExceeded):
        enumerate_paths(g, max_paths=10 ** 4)


def test_count_paths_networkx():
    for seed in range(20):
        g, _ = random_dag(9, 0.4, seed)
        G = nx.DiGraph()
        G.add_nodes_from(g.activity_ids)
        G.add_edges_from((e.src, e.dst) for e in g.edges)
        sources = [n for n in G if G.in_degree(n) == 0]
        sinks = [n for n in G if G.out_degree(n) == 0]
        expected = sum(
            1 if s == t else len(list(nx.all_simple_paths(G, s, t)))
            for s in sources for t in sinks if s == t or nx.has_path(G, s, t))
        assert count_paths(g) == expected


def test_betweenness_centrality(chain, diamond):
    assert betweenness_centrality(chain) == dict(A=0, B=1, C=0)
    assert betweenness_centrality(ProjectGraph.from_edges('AB')) == dict(A=0, B=0)
    assert betweenness_centrality(diamond) == dict(A=0, B=0.5, C=0.5, D=0)


def _brute_force_betweenness(g):
    # Enumerate all s-t paths and share each pair's weight among the shortest ones.
    G = nx.DiGraph()
    G.add_nodes_from(g.activity_ids)
    G.add_edges_from((e.src, e.dst) for e in g.edges)
    res = dict.fromkeys(g.activity_ids, 0.0)
    for s, t in itertools.permutations(g.activity_ids, 2):
        paths = list(nx.all_simple_paths(G, s, t))
        if paths:
            shortest = [p for p in paths if len(p) == min(len(q) for q in paths)]
            for p in shortest:
                for v in p[1:-1]:
                    res[v] += 1 / len(shortest)
    return res


def test_betweenness_shortest_path_counts():
    for seed in range(20):
        g, _ = random_dag(9, 0.3, seed)
        expected = _brute_force_betweenness(g)
        for k, v in betweenness_centrality(g).items():
            assert v == pytest.approx(expected[k], abs=1e-9)


def test_betweenness_relabel():
    g, _ = random_dag(10, 0.3, 5)
    mapping = {a: 'x{}'.format(9 - i) for i, a in enumerate(g.activity_ids)}
    relabeled = ProjectGraph.from_edges(
        [mapping[a] for a in g.activity_ids],
        [(mapping[e.src], mapping[e.dst]) for e in g.edges])
    bc, bc2 = betweenness_centrality(g), betweenness_centrality(relabeled)
    assert all(bc[a] == pytest.approx(bc2[mapping[a]]) for a in g.activity_ids)


def test_activity_features():
    g = ProjectGraph.from_edges(['A', 'B', 'C', 'D'], [('A', 'B'), ('B', 'C')])
    inst = ProjectInstance(
        name='x',
        graph=g,
        demands=np.ones((4, 5)),
        t_est=[2, 1, 1, 1],
        c_est=[3, 1, 1, 1],
        categoricals=dict(type=('analysis', 'design', 'implementation', 'testing')))
    names = inst.feature_names()
    x = inst.features()
    assert x.shape == (4, 15) and len(names) == 15
    assert names[:8] == ['R_1', 'R_2', 'R_3', 'R_4', 'R_5', 'T_est', 'C_est', 'deg_in']
    row = dict(zip(names, x[0]))
    assert (row['T_est'], row['C_est'], row['deg_in'], row['deg_out']) == (2, 3, 0, 1)
    row = dict(zip(names, x[1]))
    assert (row['deg_in'], row['deg_out'], row['betweenness']) == (1, 1, 1)
    assert dict(zip(names, x[3]))['type=testing'] == 1
    assert np.array_equal(x, inst.features())

    x = inst.features(vocabularies=dict(type=['analysis']), unk=True)
    assert x.shape == (4, 13)
    assert x[1, -1] == 1

    inst = inst.replace(missing=dict(demands=np.eye(4, 5, k=2, dtype=bool)))
    with pytest.raises(MissingFeature) as e:
        inst.features()
    assert e.value.name == 'R_3' and e.value.activity == 'A'


def test_concurrent_reads(diamond):
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(4) as pool:
        results = list(pool.map(
            lambda d: compute_schedule(diamond, d).makespan,
            itertools.repeat(dict(A=1, B=2, C=5, D=1), 16)))
    assert set(results) == {7}
