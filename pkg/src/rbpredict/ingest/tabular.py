"""
Tabular effort data (COCOMO-style tables such as NASA93 or Desharnais) turned into surrogate
project graphs.

Each row of the table becomes one project. The row's total effort is distributed over a chain of
phases (or a graph of modules) according to fixed weights; phase efforts serve as both duration
and cost targets, so total effort is conserved. Cost drivers are broadcast to all activities:

- ordinal ratings ``VL, L, N, H, VH, XH`` are encoded as ``1..6``,
- other numeric columns are kept as numeric features,
- other text columns become categorical features.

Strategies:

- ``chain4``: Analysis -> Design -> Coding -> Testing, effort split equally.
- ``phase6``: Requirements -> Preliminary Design -> Detailed Design -> Code/Unit Test ->
  Integration -> System Test with weights ``.15, .20, .20, .35, .20, .10`` (renormalised).
- ``module``: a ``modules`` column lists ``name:weight:dep|dep`` items separated by ``;``. Rows
  without module information fall back to ``phase6``.
"""
import typing
import logging
import pathlib

import numpy as np
import pandas as pd

from rbpredict.errors import MissingColumn, ValidationError, UnsupportedFormat
from rbpredict.graph import ProjectGraph, Edge
from rbpredict.instance import ProjectInstance
from rbpredict.synthgen import resource_features_default

__all__ = [
    'STRATEGIES', 'ORDINAL', 'PHASES', 'read_table', 'build_surrogate_graph', 'parse_modules']

ORDINAL = {'VL': 1, 'L': 2, 'N': 3, 'H': 4, 'VH': 5, 'XH': 6}
PHASES = {
    'chain4': (
        ('analysis', 1.0), ('design', 1.0), ('coding', 1.0), ('testing', 1.0)),
    'phase6': (
        ('requirements', .15),
        ('preliminary_design', .20),
        ('detailed_design', .20),
        ('code_unit_test', .35),
        ('integration', .20),
        ('system_test', .10)),
}
STRATEGIES = ('chain4', 'phase6', 'module')
ID_COLUMNS = ('project', 'id')
MISSING_CATEGORY = 'NA'


def read_table(p: typing.Union[str, pathlib.Path]) -> pd.DataFrame:
    """Read a comma-separated table with header row, keeping rating codes as text."""
    return pd.read_csv(p, keep_default_na=True, na_values=['', '?'], skipinitialspace=True)


def parse_modules(spec: str) -> typing.List[typing.Tuple[str, float, typing.Tuple[str, ...]]]:
    """
    >>> parse_modules('ui:2:;db:1:;api:3:ui|db')
    [('ui', 2.0, ()), ('db', 1.0, ()), ('api', 3.0, ('ui', 'db'))]
    """
    res = []
    for item in spec.split(';'):
        item = item.strip()
        if not item:
            continue
        parts = item.split(':')
        if len(parts) != 3:
            raise ValidationError(
                'Invalid module spec "{}"; expected name:weight:deps'.format(item))
        name, weight, deps = parts
        try:
            weight = float(weight)
        except ValueError:
            raise ValidationError('Invalid module weight "{}"'.format(parts[1]))
        if weight <= 0:
            raise ValidationError('Module weights must be positive')
        res.append((name.strip(), weight, tuple(d.strip() for d in deps.split('|') if d.strip())))
    return res


def _encode_drivers(df: pd.DataFrame, columns: typing.List[str]):
    """Split driver columns into numeric (incl. ordinal) and categorical ones."""
    numeric, categorical = {}, {}
    for col in columns:
        series = df[col]
        if pd.api.types.is_numeric_dtype(series):
            numeric[col] = series.astype(float)
            continue
        values = series.dropna().astype(str).str.strip().str.upper()
        if len(values) and values.isin(list(ORDINAL)).all():
            numeric[col] = series.map(
                lambda v: np.nan if pd.isna(v) else float(ORDINAL[str(v).strip().upper()]))
        else:
            categorical[col] = series.map(
                lambda v: MISSING_CATEGORY if pd.isna(v) else str(v).strip())
    return numeric, categorical


def _phases(strategy: str, modules: typing.Optional[str], log):
    """
    :return: triple (ids, weights, precedence pairs)
    """
    if strategy == 'module':
        if modules:
            items = parse_modules(modules)
            ids = [name for name, _, _ in items]
            if len(set(ids)) != len(ids):
                raise ValidationError('Duplicate module names in "{}"'.format(modules))
            for _, _, deps in items:
                for dep in deps:
                    if dep not in ids:
                        raise ValidationError('Unknown module dependency "{}"'.format(dep))
            return ids, [w for _, w, _ in items], [
                (dep, name) for name, _, deps in items for dep in deps]
        log.warning('No module information; falling back to the phase6 strategy')
        strategy = 'phase6'
    phases = PHASES[strategy]
    ids = ['{}-{}'.format(i + 1, name) for i, (name, _) in enumerate(phases)]
    return ids, [w for _, w in phases], list(zip(ids[:-1], ids[1:]))


def build_surrogate_graph(records: pd.DataFrame,
                          strategy: str = 'phase6',
                          effort_column: str = 'effort',
                          modules_column: str = 'modules',
                          kloc_column: str = 'kloc',
                          name: str = 'table',
                          log=None) -> typing.List[ProjectInstance]:
    """
    Build one surrogate project per row of `records`.

    Estimates are the phase shares of the basic COCOMO organic effort ``2.4 * KLOC ** 1.05`` when
    a KLOC column is present, the bare phase shares otherwise.

    :raises MissingColumn: if the effort column is not present.
    """
    log = log or logging.getLogger(__name__)
    if strategy not in STRATEGIES:
        raise UnsupportedFormat('Unknown surrogate strategy {}'.format(strategy))
    columns = {c.lower(): c for c in records.columns}
    if effort_column.lower() not in columns:
        raise MissingColumn(effort_column)
    effort_col = columns[effort_column.lower()]
    modules_col = columns.get(modules_column.lower())
    if strategy == 'module' and modules_col is None:
        log.warning('Column {} not found; using the phase6 strategy'.format(modules_column))
        strategy = 'phase6'
    id_col = next((columns[c] for c in ID_COLUMNS if c in columns), None)
    kloc_col = columns.get(kloc_column.lower())
    drivers = [c for c in records.columns if c not in {effort_col, id_col, modules_col}]
    numeric, categorical = _encode_drivers(records, drivers)

    res = []
    for row, (_, record) in enumerate(records.iterrows()):
        effort = record[effort_col]
        if pd.isna(effort) or float(effort) < 0:
            raise ValidationError('Row {}: effort must be a non-negative number'.format(row + 1))
        effort = float(effort)
        modules = record[modules_col] if modules_col is not None else None
        ids, weights, pairs = _phases(
            strategy, None if modules is None or pd.isna(modules) else str(modules), log)
        shares = np.array(weights) / np.sum(weights)
        n = len(ids)
        kloc = record[kloc_col] if kloc_col is not None else np.nan
        scale = 2.4 * float(kloc) ** 1.05 if not pd.isna(kloc) and float(kloc) > 0 else 1.0

        extras, missing = {}, {}
        for col, series in numeric.items():
            value = series.iloc[row]
            extras[col] = np.full(n, 0.0 if pd.isna(value) else value)
            if pd.isna(value):
                missing[col] = np.ones(n, dtype=bool)
        demands = shares.reshape(n, 1)
        graph = ProjectGraph(
            ids,
            ['team'],
            [Edge(u, v, 'precedence') for u, v in pairs]
            + [Edge(aid, 'team', 'assignment', (float(s),)) for aid, s in zip(ids, shares)])
        graph.order()
        res.append(ProjectInstance(
            name=str(record[id_col]) if id_col is not None else '{}-{:04d}'.format(name, row + 1),
            graph=graph,
            demands=demands,
            t_est=shares * scale,
            c_est=shares * scale,
            t_true=shares * effort,
            c_true=shares * effort,
            categoricals={col: (series.iloc[row],) * n for col, series in categorical.items()},
            extras=extras,
            missing=missing,
            resource_features=resource_features_default(demands),
            meta=dict(source='table', strategy=strategy, row=row + 1, effort=effort),
        ))
    return res
