import pytest

from rbpredict.errors import ParseError, UnsupportedFormat
from rbpredict.graph import topological_sort
from rbpredict.ingest import parse_psplib, read_psplib
from rbpredict.ingest.psplib import in_size_range


@pytest.fixture
def sm(fixture_dir):
    return fixture_dir / 'j30_fixture.sm'


def test_read_psplib(sm):
    inst = read_psplib(sm)
    assert inst.name == 'j30_fixture'
    assert inst.n_activities == 32
    assert len(inst.graph.edges_of('precedence')) == 49
    assert inst.graph.resource_ids == ('R1', 'R2', 'R3', 'R4')
    assert topological_sort(inst.graph)[0] == 'j01'
    source = inst.graph.index['j01']
    assert inst.t_est[source] == 0 and inst.graph.in_degree[source] == 0
    assert inst.demands.min() >= 0 and inst.demands.max() <= 1
    # Job 2: duration 5, requests 6 1 2 4 of 12 13 4 12.
    assert inst.demands[1].tolist() == pytest.approx([0.5, 1 / 13, 0.5, 1 / 3])
    assert inst.c_true[1] == (6 + 1 + 2 + 4) * 5
    assert inst.meta['horizon'] == 158 and inst.meta['availabilities'] == [12, 13, 4, 12]
    assert in_size_range(inst, 10, 150) and not in_size_range(inst, 31)


def test_missing_section(sm):
    text = sm.read_text(encoding='utf8')
    head, _, _ = text.partition('REQUESTS/DURATIONS:')
    with pytest.raises(ParseError) as e:
        parse_psplib(head)
    assert 'REQUESTS/DURATIONS' in str(e.value)


def test_malformed(sm):
    text = sm.read_text(encoding='utf8')
    with pytest.raises(ParseError) as e:
        parse_psplib(text.replace('  2        1          3          5 6 7', '  2  1  3  5 x 7'))
    assert e.value.line == 20
    with pytest.raises(ParseError):
        parse_psplib(text.replace('  2        1          3          5 6 7', '  2  1  3  5 6'))
    with pytest.raises(ParseError):
        parse_psplib(text.replace('  2        1          3          5 6 7', '  2  1  3  5 6 99'))
    with pytest.raises(ParseError):
        parse_psplib(text.replace('jobs (incl. supersource/sink ):  32', ''))


def test_multi_mode(sm):
    text = sm.read_text(encoding='utf8')
    with pytest.raises(UnsupportedFormat):
        parse_psplib(text.replace('  2        1          3', '  2        3          3'))
