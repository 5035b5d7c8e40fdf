"""
Reader for single-mode PSPLIB `.sm` instances (J30, J60, J120).

The file consists of sections separated by lines of asterisks. We read

- the number of jobs from the header (``jobs (incl. supersource/sink ):  32``),
- the successor lists from ``PRECEDENCE RELATIONS:``,
- durations and resource requests from ``REQUESTS/DURATIONS:``,
- resource availabilities from ``RESOURCEAVAILABILITIES:``.

Activities are the jobs, including the dummy supersource and supersink. Requests are normalised
to ``[0, 1]`` by dividing by the availability. Durations are both estimate and target; costs are
``sum_k request_k * duration * RATE``.
"""
import re
import typing
import logging
import pathlib

import numpy as np

from rbpredict.errors import ParseError, UnsupportedFormat
from rbpredict.graph import ProjectGraph, Edge
from rbpredict.instance import ProjectInstance
from rbpredict.synthgen import resource_features_default, resource_edges

__all__ = ['RATE', 'parse_psplib', 'read_psplib', 'in_size_range']

#: Cost per request unit and time unit.
RATE = 1.0
SEPARATOR = re.compile(r'^\*+\s*$')
JOBS = re.compile(r'^jobs\s+\(incl\. supersource/sink\s*\)\s*:\s*(?P<n>[0-9]+)\s*$')
SECTIONS = {
    'PRECEDENCE RELATIONS:': 'precedence',
    'REQUESTS/DURATIONS:': 'requests',
    'RESOURCEAVAILABILITIES:': 'availabilities',
}


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.n_jobs = None
        self.successors = {}
        self.requests = {}
        self.durations = {}
        self.resource_names = []
        self.availabilities = None
        self.meta = {}

    def ints(self, lineno: int, expected: str) -> typing.List[int]:
        try:
            return [int(x) for x in self.lines[lineno].split()]
        except ValueError:
            raise ParseError(lineno + 1, expected)

    def parse(self):
        i, seen = 0, set()
        while i < len(self.lines):
            line = self.lines[i].strip()
            m = JOBS.match(line)
            if m:
                self.n_jobs = int(m.group('n'))
            elif line.startswith('horizon'):
                self.meta['horizon'] = int(line.split(':')[1])
            elif line.startswith('file with basedata'):
                self.meta['basedata'] = line.split(':', maxsplit=1)[1].strip()
            if line in SECTIONS:
                if self.n_jobs is None:
                    raise ParseError(i + 1, 'number of jobs before {}'.format(line))
                section = SECTIONS[line]
                seen.add(section)
                i = getattr(self, 'read_' + section)(i + 1)
                continue
            i += 1
        for line, section in SECTIONS.items():
            if section not in seen:
                raise ParseError(len(self.lines) + 1, '{} section'.format(line.rstrip(':')))

    def _rows(self, i: int, expected: str):
        """Yield line numbers of data rows until the next separator."""
        while i < len(self.lines):
            line = self.lines[i].strip()
            if SEPARATOR.match(line):
                return
            if line and not line.startswith('-'):
                yield i
            i += 1
        raise ParseError(i + 1, expected)

    def _skip_header(self, i: int, prefix: str, expected: str) -> int:
        if i >= len(self.lines) or not self.lines[i].strip().startswith(prefix):
            raise ParseError(i + 1, expected)
        return i + 1

    def read_precedence(self, i: int) -> int:
        i = self._skip_header(i, 'jobnr.', 'precedence header')
        rows = list(self._rows(i, 'end of PRECEDENCE RELATIONS section'))
        for lineno in rows:
            values = self.ints(lineno, 'jobnr. #modes #successors successors')
            if len(values) < 3:
                raise ParseError(lineno + 1, 'jobnr. #modes #successors successors')
            job, modes, count = values[:3]
            if not 1 <= job <= self.n_jobs:
                raise ParseError(lineno + 1, 'job number in 1..{}'.format(self.n_jobs))
            if modes != 1:
                raise UnsupportedFormat(
                    'Job {} has {} modes; split multi-mode instances into single-mode files '
                    'first'.format(job, modes))
            if len(values) != 3 + count:
                raise ParseError(lineno + 1, '{} successors for job {}'.format(count, job))
            if any(not 1 <= s <= self.n_jobs for s in values[3:]):
                raise ParseError(lineno + 1, 'successors in 1..{}'.format(self.n_jobs))
            self.successors[job] = values[3:]
        if len(self.successors) != self.n_jobs:
            raise ParseError(
                (rows[-1] if rows else i) + 2, '{} precedence rows'.format(self.n_jobs))
        return (rows[-1] + 1) if rows else i

    def read_requests(self, i: int) -> int:
        header = self.lines[i].split() if i < len(self.lines) else []
        i = self._skip_header(i, 'jobnr.', 'requests header')
        # Header: jobnr. mode duration R 1 R 2 ... (names are split into letter and number)
        self.resource_names = [
            '{}{}'.format(header[k], header[k + 1]) for k in range(3, len(header) - 1, 2)]
        rows = list(self._rows(i, 'end of REQUESTS/DURATIONS section'))
        for lineno in rows:
            values = self.ints(lineno, 'jobnr. mode duration requests')
            if len(values) != 3 + len(self.resource_names):
                raise ParseError(lineno + 1, '{} resource requests'.format(
                    len(self.resource_names)))
            job, _, duration = values[:3]
            if not 1 <= job <= self.n_jobs:
                raise ParseError(lineno + 1, 'job number in 1..{}'.format(self.n_jobs))
            self.durations[job] = duration
            self.requests[job] = values[3:]
        if len(self.durations) != self.n_jobs:
            raise ParseError(
                (rows[-1] if rows else i) + 2, '{} request rows'.format(self.n_jobs))
        return (rows[-1] + 1) if rows else i

    def read_availabilities(self, i: int) -> int:
        i = self._skip_header(i, 'R', 'resource availability header')
        if i >= len(self.lines):
            raise ParseError(i + 1, 'resource availabilities')
        values = self.ints(i, 'resource availabilities')
        if len(values) != len(self.resource_names):
            raise ParseError(i + 1, '{} resource availabilities'.format(len(self.resource_names)))
        self.availabilities = values
        return i + 1


def parse_psplib(text: str, name: str = 'psplib', log=None) -> ProjectInstance:
    """
    :raises ParseError: with the 1-based line number and what was expected there.
    :raises UnsupportedFormat: for multi-mode instances.
    """
    log = log or logging.getLogger(__name__)
    reader = _Reader(text)
    reader.parse()
    n = reader.n_jobs
    width = len(str(n))
    ids = ['j{}'.format(str(job).zfill(width)) for job in range(1, n + 1)]
    rids = reader.resource_names

    requests = np.array([reader.requests[job] for job in range(1, n + 1)], dtype=float)
    durations = np.array([reader.durations[job] for job in range(1, n + 1)], dtype=float)
    avail = np.array(reader.availabilities, dtype=float)
    demands = np.divide(requests, avail, out=np.zeros_like(requests), where=avail > 0)
    cost = (requests * durations[:, None]).sum(axis=1) * RATE

    edges = [
        Edge(ids[job - 1], ids[s - 1], 'precedence')
        for job, succ in sorted(reader.successors.items()) for s in succ]
    graph = ProjectGraph(ids, rids, edges + resource_edges(ids, rids, demands))
    graph.order()
    log.debug('{}: {} jobs, {} resources'.format(name, n, len(rids)))
    meta = dict(source='psplib', **reader.meta)
    meta['availabilities'] = [int(a) for a in avail]
    return ProjectInstance(
        name=name,
        graph=graph,
        demands=demands,
        t_est=durations,
        c_est=cost,
        t_true=durations.copy(),
        c_true=cost.copy(),
        resource_features=resource_features_default(demands),
        meta=meta,
    )


def read_psplib(p: typing.Union[str, pathlib.Path], log=None) -> ProjectInstance:
    p = pathlib.Path(p)
    return parse_psplib(p.read_text(encoding='utf8'), name=p.stem, log=log)


def in_size_range(instance: ProjectInstance,
                  min_activities: typing.Optional[int] = None,
                  max_activities: typing.Optional[int] = None) -> bool:
    """Size filter on the number of non-dummy jobs."""
    n = instance.n_activities - 2
    return (min_activities is None or n >= min_activities) \
        and (max_activities is None or n <= max_activities)
