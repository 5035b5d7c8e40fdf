"""
Utility functions used to implement `rbpredict` subcommands.
"""
import typing
import pathlib
import argparse
import dataclasses

from rbpredict.errors import InvalidConfig, ValidationError
from rbpredict.gnn import ModelConfig
from rbpredict.experiments.active import ActiveConfig
from rbpredict.experiments.temporal import TemporalConfig
from rbpredict.ingest import read_dataset, fit_preprocess
from rbpredict.instance import ProjectInstance
from rbpredict.synthgen import GenConfig, split_instances
from rbpredict.train import TrainConfig
from rbpredict.util import config_from_dict, config_to_dict, dump_json, read_json

MANIFEST = 'manifest.json'
SPLITS = ('train', 'val', 'test')
PREPROCESS_OPTIONS = ('indicators', 'winsorize')


class ParserError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    """
    The typed configs of a run, read from a JSON object with optional sections `gen`, `model`,
    `loss`, `train`, `active`, `temporal` and `preprocess`.
    """
    gen: GenConfig = dataclasses.field(default_factory=GenConfig)
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    active: ActiveConfig = dataclasses.field(default_factory=ActiveConfig)
    temporal: TemporalConfig = dataclasses.field(default_factory=TemporalConfig)
    #: Keyword arguments of :func:`rbpredict.ingest.fit_preprocess`: `indicators`, `winsorize`.
    preprocess: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)

    def to_dict(self) -> dict:
        res = {
            name: config_to_dict(getattr(self, name))
            for name in ['gen', 'model', 'train', 'active', 'temporal']}
        res['preprocess'] = dict(self.preprocess)
        return res


def load_run_config(p: typing.Optional[typing.Union[str, pathlib.Path]] = None) -> RunConfig:
    """
    :raises InvalidConfig: for unknown sections or options.
    """
    if p and not pathlib.Path(p).is_file():
        raise InvalidConfig('Config file {} does not exist'.format(p))
    data = read_json(p) if p else {}
    if not isinstance(data, dict):
        raise InvalidConfig('Config must be a JSON object')
    unknown = set(data) - {'gen', 'model', 'loss', 'train', 'active', 'temporal', 'preprocess'}
    if unknown:
        raise InvalidConfig('Unknown config section(s): {}'.format(sorted(unknown)))
    train = dict(data.get('train') or {})
    if 'loss' in data:
        train['loss'] = data['loss']
    preprocess = dict(data.get('preprocess') or {})
    if set(preprocess) - set(PREPROCESS_OPTIONS):
        raise InvalidConfig('Unknown preprocess option(s): {}'.format(
            sorted(set(preprocess) - set(PREPROCESS_OPTIONS))))
    return RunConfig(
        gen=config_from_dict(GenConfig, data.get('gen')),
        model=config_from_dict(ModelConfig, data.get('model')),
        train=config_from_dict(TrainConfig, train),
        active=config_from_dict(ActiveConfig, data.get('active')),
        temporal=config_from_dict(TemporalConfig, data.get('temporal')),
        preprocess=preprocess,
    )


class Dataset(list):
    """A list of instances remembering where it was read from."""
    def __init__(self, instances, path):
        super().__init__(instances)
        self.path = pathlib.Path(path)

    @property
    def name(self) -> str:
        return self.path.stem if self.path.is_file() else self.path.name


class DatasetType:
    """
    A dataset of canonical JSON instances as `Argument type
    <https://docs.python.org/3/library/argparse.html#type>`_, specified as directory or single
    file.
    """
    def __call__(self, string) -> Dataset:
        p = pathlib.Path(string)
        if not p.exists():
            raise argparse.ArgumentTypeError('{} does not exist'.format(string))
        try:
            instances = read_dataset(p)
        except ValidationError as e:
            raise argparse.ArgumentTypeError('{}: {}'.format(type(e).__name__, e))
        if not instances:
            raise argparse.ArgumentTypeError('No instances found in {}'.format(string))
        return Dataset(instances, p)


def add_data(parser, help='Dataset: directory of canonical JSON instances or a single file.'):
    parser.add_argument('--data', type=DatasetType(), required=True, help=help)


def _config_type(string) -> RunConfig:
    try:
        return load_run_config(string)
    except InvalidConfig as e:
        raise argparse.ArgumentTypeError(str(e))


def add_config(parser):
    parser.add_argument(
        '--config',
        type=_config_type,
        default=RunConfig(),
        help='JSON config file with sections gen, model, loss, train, active, temporal, '
             'preprocess. Omitted sections and options take their defaults.')


def add_seed(parser, default=13):
    parser.add_argument(
        '--seed', type=int, default=default, help='Run seed; all randomness derives from it.')


def add_jobs(parser):
    parser.add_argument(
        '--jobs', type=int, default=1, help='Number of threads across seeds or instances.')


def add_out(parser, help='Output file.'):
    parser.add_argument('--out', type=pathlib.Path, required=True, help=help)


def add_seeds(parser):
    parser.add_argument(
        '--seeds',
        type=lambda s: [int(x) for x in s.split(',')],
        default=None,
        help='Comma-separated seeds, defaulting to the seeds of the train config.')


def splits(instances: typing.List[ProjectInstance], seed: int) -> typing.Dict[str, list]:
    """
    The train, validation and test split of a dataset. Datasets whose instances carry a `split`
    entry in their metadata are split accordingly; all others are shuffled with `seed` and split
    70/15/15.
    """
    if instances and all(i.meta.get('split') in SPLITS for i in instances):
        return {s: [i for i in instances if i.meta['split'] == s] for s in SPLITS}
    return dict(zip(SPLITS, split_instances(instances, seed)))


def _plain(value):
    if isinstance(value, pathlib.Path):
        return str(value)
    if isinstance(value, RunConfig):
        return value.to_dict()
    if isinstance(value, Dataset):
        return str(value.path)
    if isinstance(value, (str, int, float, bool, type(None), list, tuple, dict)):
        return value
    return None


def write_manifest(args, out_dir: typing.Union[str, pathlib.Path], **extra) -> pathlib.Path:
    """
    Write `manifest.json` with the command, the resolved arguments and config, the seed and the
    package version to `out_dir`.
    """
    from rbpredict import __version__

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arguments = {
        k: _plain(v) for k, v in sorted(vars(args).items())
        if not k.startswith('_') and k not in {'log', 'main', 'config', 'log_level'}}
    config = getattr(args, 'config', None)
    res = dict(
        command=getattr(args, '_command', None),
        arguments=arguments,
        config=config.to_dict() if isinstance(config, RunConfig) else None,
        seed=getattr(args, 'seed', None),
        version=__version__,
    )
    res.update(extra)
    p = out_dir / MANIFEST
    dump_json(res, p)
    return p


def fit_stats(instances, config: RunConfig, log=None):
    """Preprocessing statistics of the training instances, with the options of `config`."""
    return fit_preprocess(
        instances, log=log, **{k: bool(v) for k, v in config.preprocess.items()})
