"""
Generate synthetic project instances.

Instances are written as canonical JSON files `<name>.json` to the output directory. Each
instance is tagged with its split (70% train, 15% val, 15% test), which later commands use.
"""
import dataclasses

from rbpredict.cli_util import add_seed, add_config, add_out, write_manifest
from rbpredict.ingest import write_dataset
from rbpredict.synthgen import generate_dataset, split_instances


def register(parser):
    parser.add_argument(
        '--size', type=int, default=None, help='Number of activities per project.')
    parser.add_argument(
        '--density', type=float, default=None, help='Edge probability of the random DAG.')
    parser.add_argument('--samples', type=int, default=1, help='Number of projects.')
    add_seed(parser)
    add_config(parser)
    add_out(parser, help='Output directory.')


def run(args):
    overrides = {k: v for k, v in dict(n=args.size, rho=args.density).items() if v is not None}
    cfg = dataclasses.replace(args.config.gen, seed=args.seed, **overrides).validate()
    instances = generate_dataset(cfg, args.samples)
    for split, part in zip(['train', 'val', 'test'], split_instances(instances, args.seed)):
        for inst in part:
            inst.meta['split'] = split
    write_dataset(instances, args.out)
    write_manifest(args, args.out, gen=dataclasses.asdict(cfg))
    args.log.info('{} instances written to {}'.format(len(instances), args.out))
