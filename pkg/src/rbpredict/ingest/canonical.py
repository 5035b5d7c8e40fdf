"""
The canonical JSON project format, schema version ``pnf-1``.

.. code-block:: json

    {
     "schema": "pnf-1",
     "meta": {"name": "p1", "source": "synthgen", "seed": 13},
     "feature_schema": {"names": ["R_1", "type"], "kinds": ["demand", "categorical"]},
     "activities": [
      {"id": "a1", "features": {"R_1": 0.5, "type": "design"}, "T_est": 2.0, "C_est": 3.0,
       "T": 2.1, "C": 2.9}],
     "resources": [{"id": "r1", "features": {"mu_hat": 1.0}}],
     "edges": [{"src": "a1", "dst": "r1", "relation": "assignment", "features": [0.5]}]
    }

Feature kinds are `demand` (resource demands, in order), `skill`, `numeric` and `categorical`.
Missing values are written as ``null``. Floats are written with Python's shortest round-trip
representation, so ``write(read(write(x))) == write(x)`` byte for byte.
"""
import json
import typing
import pathlib

import numpy as np

from rbpredict.errors import SchemaViolation, VersionMismatch
from rbpredict.graph import ProjectGraph, Edge, RELATIONS, RESOURCE_FEATURES
from rbpredict.instance import ProjectInstance

__all__ = [
    'SCHEMA_VERSION', 'read_canonical', 'write_canonical', 'read_instance', 'write_instance',
    'read_dataset', 'write_dataset']

SCHEMA_VERSION = 'pnf-1'
KINDS = ('demand', 'skill', 'numeric', 'categorical')


def _num(x):
    return None if x is None else float(x)


def _feature_schema(instance: ProjectInstance) -> typing.Tuple[list, list]:
    names = ['R_{}'.format(k + 1) for k in range(instance.demands.shape[1])]
    kinds = ['demand'] * len(names)
    if instance.skill is not None:
        names.append('skill')
        kinds.append('skill')
    names.extend(instance.extras)
    kinds.extend(['numeric'] * len(instance.extras))
    names.extend(instance.categoricals)
    kinds.extend(['categorical'] * len(instance.categoricals))
    return names, kinds


def write_canonical(instance: ProjectInstance) -> bytes:
    names, kinds = _feature_schema(instance)
    dmask = instance.missing.get('demands')

    def masked(key, i):
        return key in instance.missing and bool(instance.missing[key][i])

    activities = []
    for i, aid in enumerate(instance.graph.activity_ids):
        features = {}
        for name, kind in zip(names, kinds):
            if kind == 'demand':
                k = int(name[2:]) - 1
                missing = dmask is not None and bool(dmask[i, k])
                features[name] = None if missing else float(instance.demands[i, k])
            elif kind == 'skill':
                features[name] = float(instance.skill[i])
            elif kind == 'numeric':
                features[name] = None if masked(name, i) else float(instance.extras[name][i])
            else:
                features[name] = instance.categoricals[name][i]
        activity = dict(
            id=aid,
            features=features,
            T_est=None if masked('t_est', i) else float(instance.t_est[i]),
            C_est=None if masked('c_est', i) else float(instance.c_est[i]))
        if instance.t_true is not None:
            activity['T'] = _num(instance.t_true[i])
        if instance.c_true is not None:
            activity['C'] = _num(instance.c_true[i])
        activities.append(activity)

    meta = dict(instance.meta)
    meta['name'] = instance.name
    meta['overhead'] = float(instance.overhead)
    doc = dict(
        schema=SCHEMA_VERSION,
        meta=meta,
        feature_schema=dict(names=names, kinds=kinds),
        activities=activities,
        resources=[
            dict(id=rid, features=dict(zip(
                RESOURCE_FEATURES, [float(x) for x in instance.resource_features[j]])))
            for j, rid in enumerate(instance.graph.resource_ids)],
        edges=[
            dict(src=e.src, dst=e.dst, relation=e.relation, features=list(e.features))
            for e in instance.graph.edges],
    )
    return (json.dumps(doc, indent=1, ensure_ascii=False) + '\n').encode('utf8')


def _require(obj, key, path, types):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaViolation(path, 'missing key {}'.format(key))
    if not isinstance(obj[key], types):
        raise SchemaViolation('{}.{}'.format(path, key), 'wrong type')
    return obj[key]


def _number(value, path, nullable=True):
    if value is None and nullable:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(path, 'expected a number')
    return float(value)


def read_canonical(data: typing.Union[bytes, str]) -> ProjectInstance:
    """
    :raises VersionMismatch: if the document is not of schema version ``pnf-1``.
    :raises SchemaViolation: if the document does not conform to the schema.
    """
    try:
        doc = json.loads(data.decode('utf8') if isinstance(data, bytes) else data)
    except ValueError as e:
        raise SchemaViolation('$', 'invalid JSON: {}'.format(e))
    if not isinstance(doc, dict):
        raise SchemaViolation('$', 'expected an object')
    version = _require(doc, 'schema', '$', str)
    if version != SCHEMA_VERSION:
        raise VersionMismatch('Expected schema {}, got {}'.format(SCHEMA_VERSION, version))
    meta = dict(_require(doc, 'meta', '$', dict))
    schema = _require(doc, 'feature_schema', '$', dict)
    names = _require(schema, 'names', '$.feature_schema', list)
    kinds = _require(schema, 'kinds', '$.feature_schema', list)
    if len(names) != len(kinds) or len(set(names)) != len(names):
        raise SchemaViolation('$.feature_schema', 'names and kinds must align, names be unique')
    for i, kind in enumerate(kinds):
        if kind not in KINDS:
            raise SchemaViolation('$.feature_schema.kinds[{}]'.format(i), 'unknown kind')
    activities = _require(doc, 'activities', '$', list)
    resources = _require(doc, 'resources', '$', list)
    edges = _require(doc, 'edges', '$', list)

    ids, n = [], len(activities)
    demand_names = [nm for nm, k in zip(names, kinds) if k == 'demand']
    demands = np.zeros((n, len(demand_names)))
    dmask = np.zeros(demands.shape, dtype=bool)
    t_est, c_est = np.zeros(n), np.zeros(n)
    mask_t, mask_c = np.zeros(n, dtype=bool), np.zeros(n, dtype=bool)
    t_true, c_true, skill = [], [], []
    extras = {nm: np.zeros(n) for nm, k in zip(names, kinds) if k == 'numeric'}
    extra_masks = {nm: np.zeros(n, dtype=bool) for nm in extras}
    categoricals = {nm: [] for nm, k in zip(names, kinds) if k == 'categorical'}

    for i, a in enumerate(activities):
        path = '$.activities[{}]'.format(i)
        ids.append(_require(a, 'id', path, str))
        features = _require(a, 'features', path, dict)
        unknown = set(features) - set(names)
        if unknown:
            raise SchemaViolation(
                path + '.features', 'keys not in feature_schema: {}'.format(sorted(unknown)))
        for nm, kind in zip(names, kinds):
            fpath = '{}.features.{}'.format(path, nm)
            value = features.get(nm)
            if kind == 'demand':
                value = _number(value, fpath)
                k = demand_names.index(nm)
                if value is None:
                    dmask[i, k] = True
                else:
                    demands[i, k] = value
            elif kind == 'skill':
                skill.append(_number(value, fpath, nullable=False))
            elif kind == 'numeric':
                value = _number(value, fpath)
                if value is None:
                    extra_masks[nm][i] = True
                else:
                    extras[nm][i] = value
            else:
                if not isinstance(value, str):
                    raise SchemaViolation(fpath, 'expected a string')
                categoricals[nm].append(value)
        for key, arr, mask in [('T_est', t_est, mask_t), ('C_est', c_est, mask_c)]:
            value = _number(a.get(key), '{}.{}'.format(path, key))
            if value is None:
                mask[i] = True
            else:
                arr[i] = value
        if 'T' in a:
            t_true.append(_number(a['T'], path + '.T', nullable=False))
        if 'C' in a:
            c_true.append(_number(a['C'], path + '.C', nullable=False))

    for label, values in [('T', t_true), ('C', c_true)]:
        if values and len(values) != n:
            raise SchemaViolation('$.activities', '{} given for some activities only'.format(label))

    rids, rfeatures = [], np.zeros((len(resources), len(RESOURCE_FEATURES)))
    for j, r in enumerate(resources):
        path = '$.resources[{}]'.format(j)
        rids.append(_require(r, 'id', path, str))
        for k, name in enumerate(RESOURCE_FEATURES):
            value = _number(_require(r, 'features', path, dict).get(name, 0.0),
                            '{}.features.{}'.format(path, name), nullable=False)
            rfeatures[j, k] = value

    known = set(ids) | set(rids)
    if len(known) != len(ids) + len(rids):
        raise SchemaViolation('$', 'duplicate node ids')
    edge_objs = []
    for k, e in enumerate(edges):
        path = '$.edges[{}]'.format(k)
        for key in ['src', 'dst']:
            if _require(e, key, path, str) not in known:
                raise SchemaViolation('{}.{}'.format(path, key), 'unknown node id')
        relation = _require(e, 'relation', path, str)
        if relation not in RELATIONS:
            raise SchemaViolation(path + '.relation', 'unknown relation')
        feats = [_number(x, '{}.features'.format(path), nullable=False)
                 for x in _require(e, 'features', path, list)]
        edge_objs.append(Edge(e['src'], e['dst'], relation, tuple(feats)))

    name = meta.pop('name', 'project')
    overhead = float(meta.pop('overhead', 0.0))
    missing = {'demands': dmask, 't_est': mask_t, 'c_est': mask_c}
    missing.update(extra_masks)
    return ProjectInstance(
        name=name,
        graph=ProjectGraph(ids, rids, edge_objs),
        demands=demands,
        t_est=t_est,
        c_est=c_est,
        t_true=np.array(t_true) if t_true else None,
        c_true=np.array(c_true) if c_true else None,
        skill=np.array(skill) if skill else None,
        categoricals={k: tuple(v) for k, v in categoricals.items()},
        extras=extras,
        missing=missing,
        resource_features=rfeatures,
        overhead=overhead,
        meta=meta,
    )


def read_instance(p: typing.Union[str, pathlib.Path]) -> ProjectInstance:
    return read_canonical(pathlib.Path(p).read_bytes())


def write_instance(instance: ProjectInstance, p: typing.Union[str, pathlib.Path]) -> pathlib.Path:
    p = pathlib.Path(p)
    p.write_bytes(write_canonical(instance))
    return p


def read_dataset(d: typing.Union[str, pathlib.Path]) -> typing.List[ProjectInstance]:
    """Read all `*.json` instances in directory `d` (or the single file `d`), sorted by name."""
    d = pathlib.Path(d)
    if d.is_file():
        return [read_instance(d)]
    return [read_instance(p) for p in sorted(d.glob('*.json')) if p.name != 'manifest.json']


def write_dataset(instances: typing.Iterable[ProjectInstance],
                  d: typing.Union[str, pathlib.Path]) -> typing.List[pathlib.Path]:
    d = pathlib.Path(d)
    d.mkdir(parents=True, exist_ok=True)
    return [write_instance(inst, d / '{}.json'.format(inst.name)) for inst in instances]
