import shlex
import logging
import pathlib

import pytest

from rbpredict.graph import ProjectGraph
from rbpredict.synthgen import GenConfig, generate_project, generate_dataset


@pytest.fixture
def fixture_dir():
    return pathlib.Path(__file__).parent / 'fixtures'


@pytest.fixture
def chain():
    return ProjectGraph.from_edges('ABC', [('A', 'B'), ('B', 'C')])


@pytest.fixture
def diamond():
    return ProjectGraph.from_edges('ABCD', [('A', 'B'), ('A', 'C'), ('B', 'D'), ('C', 'D')])


@pytest.fixture
def project():
    def make_one(n=12, p=3, seed=1, **kw):
        return generate_project(GenConfig(n=n, rho=0.2, p=p, seed=seed, **kw))
    return make_one


@pytest.fixture
def dataset():
    def make_one(samples=6, n=10, p=3, seed=7, **kw):
        return generate_dataset(GenConfig(n=n, rho=0.2, p=p, seed=seed, **kw), samples)
    return make_one


@pytest.fixture
def main():
    from rbpredict.__main__ import main as cli

    def f(args):
        return cli(
            shlex.split(args) if isinstance(args, str) else args, log=logging.getLogger(__name__))
    return f
