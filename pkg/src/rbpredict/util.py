"""
Utility functions
"""
import json
import typing
import hashlib
import pathlib
import dataclasses

import numpy as np

from rbpredict.errors import InvalidConfig

__all__ = [
    'log_or_raise', 'derive_seed', 'rng', 'config_from_dict', 'config_to_dict', 'dump_json',
    'read_json']


def log_or_raise(msg, log=None, level='error', exc=ValueError):
    """
    Log `msg` and return `False` if a logger is given, raise otherwise. `msg` may be an exception
    instance, which is then raised as is.
    """
    if log:
        getattr(log, level)(str(msg))
        return False
    raise msg if isinstance(msg, Exception) else exc(msg)


def derive_seed(seed: int, *labels) -> int:
    """
    Derive a sub-seed from a run seed and a sequence of labels.

    All randomness of a run flows from one seed; components request their own stream by label,
    so adding a draw in one component never shifts the draws of another.

    .. code-block:: python

        >>> derive_seed(13, 'mc', 0) == derive_seed(13, 'mc', 0)
        True
        >>> derive_seed(13, 'mc', 0) == derive_seed(13, 'mc', 1)
        False
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode('utf8'))
    for label in labels:
        h.update(b'\x1f')
        h.update(str(label).encode('utf8'))
    return int.from_bytes(h.digest(), 'little')


def rng(seed: int, *labels) -> np.random.Generator:
    """
    A counter-based (Philox) random generator for the stream identified by `seed` and `labels`.
    """
    return np.random.Generator(np.random.Philox(derive_seed(seed, *labels)))


def config_from_dict(cls, data: typing.Optional[dict]):
    """
    Instantiate the config dataclass `cls` from a `dict`, rejecting unknown keys.
    """
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidConfig('Unknown {} option(s): {}'.format(cls.__name__, sorted(unknown)))
    for f in dataclasses.fields(cls):
        # JSON has no tuples.
        if f.name in data and isinstance(data[f.name], list) \
                and isinstance(f.default, tuple):
            data[f.name] = tuple(data[f.name])
    res = cls(**data)
    if hasattr(res, 'validate'):
        res.validate()
    return res


def config_to_dict(cfg) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(cfg).items()}


def dump_json(obj, p: typing.Optional[typing.Union[str, pathlib.Path]] = None) -> str:
    """
    Serialise `obj` as JSON with sorted keys; writes to `p` if given.

    Python's float ``repr`` is the shortest string that round-trips, so values survive
    write-read cycles bit-exactly.
    """
    text = json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False)
    if p:
        pathlib.Path(p).write_text(text + '\n', encoding='utf8')
    return text


def read_json(p: typing.Union[str, pathlib.Path]):
    return json.loads(pathlib.Path(p).read_text(encoding='utf8'))
